"""Exact joint distributions over finitely many named variables.

Probability tables are the verification backbone of this package: every
formal claim that can be checked at all is checked here in exact
double-precision arithmetic, with tolerances around 1e-9..1e-12 rather than
sampling error. Tables are immutable numpy arrays; all operations return
new values.

Zero-probability conditioning contexts are never fabricated: conditional
tables flag them as undefined, and factor-change detection skips contexts
that are unreachable under both distributions being compared.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .graphs import Dag, GraphError, d_separated

__all__ = [
    "DiscreteJoint",
    "ConditionalTable",
    "TableError",
    "factorize",
    "product_joint",
    "is_markov",
    "markov_report",
    "ci_residual",
    "hard_intervention",
    "soft_intervention",
    "changed_factors",
    "tv_distance",
    "MAX_TABLE_ENTRIES",
]

# Exact tables are an oracle, not a scalability claim.
MAX_TABLE_ENTRIES = 1 << 20

_SUM_TOL = 1e-12


class TableError(ValueError):
    """Malformed probability table or mismatched table arguments."""


@dataclass(frozen=True)
class DiscreteJoint:
    """Exact joint distribution, one axis per variable.

    ``names`` orders the variables; ``probs`` has shape equal to the
    variable cardinalities, entries nonnegative and summing to one within
    1e-12.
    """

    names: tuple[str, ...]
    probs: np.ndarray

    def __init__(self, names: Iterable[str], probs: np.ndarray,
                 max_entries: int = MAX_TABLE_ENTRIES):
        names = tuple(names)
        probs = np.asarray(probs, dtype=float)
        if len(set(names)) != len(names):
            raise TableError(f"duplicate variable names in {names}")
        if probs.ndim != len(names):
            raise TableError(
                f"table has {probs.ndim} axes for {len(names)} variables")
        if probs.size > max_entries:
            raise TableError(
                f"table with {probs.size} entries exceeds cap {max_entries}")
        if probs.size and probs.min() < -1e-15:
            raise TableError(f"negative entry {probs.min()}")
        total = float(probs.sum())
        if abs(total - 1.0) > _SUM_TOL:
            raise TableError(f"entries sum to {total!r}, not 1 within {_SUM_TOL}")
        probs = np.where(probs < 0.0, 0.0, probs)
        probs.flags.writeable = False
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "probs", probs)

    @property
    def cards(self) -> tuple[int, ...]:
        return self.probs.shape

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise TableError(f"unknown variable {name!r}; have {list(self.names)}")

    def marginal(self, names: Iterable[str]) -> "DiscreteJoint":
        """Marginal over ``names`` (kept in this joint's variable order)."""
        keep = [n for n in self.names if n in set(names)]
        missing = set(names) - set(keep)
        if missing:
            raise TableError(f"unknown variable(s) {sorted(missing)}")
        drop = tuple(i for i, n in enumerate(self.names) if n not in keep)
        return DiscreteJoint(keep, self.probs.sum(axis=drop) if drop else self.probs)

    def permute(self, names: Sequence[str]) -> "DiscreteJoint":
        if set(names) != set(self.names) or len(names) != len(self.names):
            raise TableError("permute requires the same variable set")
        order = [self.axis(n) for n in names]
        return DiscreteJoint(names, np.transpose(self.probs, order))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` rows of value indices, shape (n, len(names))."""
        flat = self.probs.reshape(-1)
        idx = rng.choice(flat.size, size=n, p=flat)
        return np.stack(np.unravel_index(idx, self.probs.shape), axis=1)

    def to_json(self) -> str:
        return json.dumps(
            {
                "variables": [
                    {"name": n, "cardinality": int(c)}
                    for n, c in zip(self.names, self.cards)
                ],
                "probs": [float(v) for v in self.probs.reshape(-1)],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "DiscreteJoint":
        obj = json.loads(text)
        names = [v["name"] for v in obj["variables"]]
        cards = [v["cardinality"] for v in obj["variables"]]
        probs = np.asarray(obj["probs"], dtype=float).reshape(cards)
        return cls(names, probs)


@dataclass(frozen=True)
class ConditionalTable:
    """p(target | given), stored with the conditioning axes first.

    ``table`` has shape (*given_cards, target_card); each defined slice sums
    to one within 1e-12. Slices whose conditioning context has probability
    zero are flagged in ``defined`` (False) and hold NaN rather than an
    invented distribution.
    """

    target: str
    given: tuple[str, ...]
    table: np.ndarray
    defined: np.ndarray

    def __init__(self, target: str, given: Iterable[str], table: np.ndarray,
                 defined: np.ndarray | None = None):
        given = tuple(given)
        table = np.asarray(table, dtype=float)
        if table.ndim != len(given) + 1:
            raise TableError(
                f"table has {table.ndim} axes; expected {len(given) + 1}")
        if defined is None:
            defined = np.ones(table.shape[:-1], dtype=bool)
        defined = np.asarray(defined, dtype=bool)
        if defined.shape != table.shape[:-1]:
            raise TableError("defined mask shape mismatch")
        sums = table.sum(axis=-1)
        bad = defined & (np.abs(sums - 1.0) > _SUM_TOL)
        if bad.any():
            raise TableError("a defined conditional slice does not sum to 1")
        table = table.copy()
        table[~defined] = np.nan
        table.flags.writeable = False
        defined = defined.copy()
        defined.flags.writeable = False
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "given", given)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "defined", defined)

    def to_json(self) -> str:
        return json.dumps(
            {
                "target": self.target,
                "given": list(self.given),
                "shape": [int(s) for s in self.table.shape],
                "table": [None if math.isnan(v) else float(v)
                          for v in self.table.reshape(-1)],
            },
            sort_keys=True,
        )


# ---------------------------------------------------------------------------
# Factorization
# ---------------------------------------------------------------------------


def _check_same_variables(p: DiscreteJoint, g: Dag) -> None:
    if set(p.names) != set(g.nodes):
        raise TableError(
            f"variable mismatch: table has {sorted(p.names)}, graph has "
            f"{sorted(g.nodes)}")


def factorize(p: DiscreteJoint, g: Dag) -> list[ConditionalTable]:
    """One conditional table per node, conditioned on its parents in ``g``.

    Returned in ``g``'s node order; on strictly positive joints the product
    of the tables reconstructs ``p`` entrywise.
    """
    _check_same_variables(p, g)
    out = []
    for node in g.nodes:
        out.append(conditional(p, node, g.parents(node)))
    return out


def conditional(p: DiscreteJoint, target: str, given: Iterable[str]) -> ConditionalTable:
    given = tuple(given)
    sub = p.marginal((*given, target)).permute((*given, target))
    ctx = sub.probs.sum(axis=-1)
    defined = ctx > 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        table = sub.probs / ctx[..., None]
    table[~defined] = np.nan
    return ConditionalTable(target, given, np.where(defined[..., None], table, np.nan),
                            defined)


def product_joint(g: Dag, factors: Sequence[ConditionalTable]) -> DiscreteJoint:
    """Multiply per-node factors into the joint over ``g``'s node order.

    Undefined slices of a factor are treated as zero mass (their context is
    unreachable, so no mass is lost).
    """
    by_target = {f.target: f for f in factors}
    if set(by_target) != set(g.nodes):
        raise TableError("factors must cover exactly the graph's nodes")
    cards: dict[str, int] = {}
    for f in factors:
        cards[f.target] = f.table.shape[-1]
    n = len(g.nodes)
    shape = tuple(cards[v] for v in g.nodes)
    result = np.ones(shape)
    for f in factors:
        if tuple(f.given) != g.parents(f.target):
            raise TableError(
                f"factor for {f.target!r} conditions on {f.given}, graph parents "
                f"are {g.parents(f.target)}")
        tab = np.nan_to_num(f.table, nan=0.0)
        axes = [g.nodes.index(v) for v in (*f.given, f.target)]
        # transpose the factor so its axes are in ascending destination
        # order, then pad singleton axes for broadcasting
        order = np.argsort(axes)
        axis_set = set(axes)
        view = np.transpose(tab, order).reshape(
            [shape[i] if i in axis_set else 1 for i in range(n)])
        result = result * view
    return DiscreteJoint(g.nodes, result)


# ---------------------------------------------------------------------------
# Conditional independence and the Markov condition
# ---------------------------------------------------------------------------


def ci_residual(p: DiscreteJoint, a: Iterable[str], b: Iterable[str],
                c: Iterable[str] = ()) -> float:
    """Deviation of ``p`` from (a independent of b given c).

    Maximum over positive-probability c-contexts of the total-variation
    distance between p(a, b | c) and p(a | c) p(b | c). Zero means the
    independence holds exactly.
    """
    a, b, c = tuple(a), tuple(b), tuple(c)
    sub = p.marginal((*c, *a, *b)).permute((*c, *a, *b))
    nc, na, nb = len(c), len(a), len(b)
    t = sub.probs
    c_shape = t.shape[:nc]
    a_shape = t.shape[nc:nc + na]
    b_shape = t.shape[nc + na:]
    t = t.reshape(int(np.prod(c_shape or (1,))), int(np.prod(a_shape or (1,))),
                  int(np.prod(b_shape or (1,))))
    ctx = t.sum(axis=(1, 2))
    worst = 0.0
    for k in range(t.shape[0]):
        if ctx[k] <= 0.0:
            continue
        joint = t[k] / ctx[k]
        prod = joint.sum(axis=1, keepdims=True) * joint.sum(axis=0, keepdims=True)
        worst = max(worst, 0.5 * float(np.abs(joint - prod).sum()))
    return worst


def markov_report(p: DiscreteJoint, g: Dag, eps: float = 1e-9,
                  mode: str = "local") -> tuple[bool, tuple | None, float]:
    """Check the Markov condition; return (ok, worst triple, worst residual).

    ``mode="local"`` checks each node against its non-descendants given its
    parents, which is equivalent to the full set of d-separation constraints
    at eps=0 and is what the exact suites use. ``mode="all"`` enumerates
    every disjoint (a, b, c) assignment (exponential; small graphs only) and
    checks each implied separation.
    """
    _check_same_variables(p, g)
    worst = 0.0
    worst_triple: tuple | None = None
    if mode == "local":
        for node in g.nodes:
            pa = g.parents(node)
            nondesc = [n for n in g.nodes
                       if n != node and n not in g.descendants(node) and n not in pa]
            if not nondesc:
                continue
            r = ci_residual(p, (node,), nondesc, pa)
            if r > worst:
                worst, worst_triple = r, ((node,), tuple(nondesc), pa)
    elif mode == "all":
        n = len(g.nodes)
        if n > 7:
            raise GraphError("mode='all' is exhaustive; refusing above 7 nodes")
        for assign in np.ndindex(*(4,) * n):
            a = tuple(v for v, k in zip(g.nodes, assign) if k == 0)
            b = tuple(v for v, k in zip(g.nodes, assign) if k == 1)
            c = tuple(v for v, k in zip(g.nodes, assign) if k == 2)
            if not a or not b:
                continue
            if not d_separated(g, a, b, c):
                continue
            r = ci_residual(p, a, b, c)
            if r > worst:
                worst, worst_triple = r, (a, b, c)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return worst <= eps, worst_triple, worst


def is_markov(p: DiscreteJoint, g: Dag, eps: float = 1e-9, mode: str = "local") -> bool:
    """True iff every conditional independence implied by ``g`` holds in
    ``p`` with residual at most ``eps``."""
    ok, _, _ = markov_report(p, g, eps, mode)
    return ok


# ---------------------------------------------------------------------------
# Interventions
# ---------------------------------------------------------------------------


def hard_intervention(p: DiscreteJoint, g: Dag, j: str, v: int) -> DiscreteJoint:
    """Truncated factorization for do(X_j = v)."""
    _check_same_variables(p, g)
    card = p.cards[p.axis(j)]
    if not 0 <= v < card:
        raise TableError(f"value {v} out of range for {j!r} (cardinality {card})")
    factors = []
    for f in factorize(p, g):
        if f.target == j:
            point = np.zeros(f.table.shape)
            point[..., v] = 1.0
            factors.append(ConditionalTable(j, f.given, point))
        else:
            factors.append(f)
    return product_joint(g, factors).permute(p.names)


def soft_intervention(p: DiscreteJoint, g: Dag, j: str,
                      t: ConditionalTable) -> DiscreteJoint:
    """Replace the factor of ``j`` by ``t``; all other factors unchanged."""
    _check_same_variables(p, g)
    if t.target != j:
        raise TableError(f"replacement targets {t.target!r}, expected {j!r}")
    if tuple(t.given) != g.parents(j):
        raise TableError(
            f"replacement conditions on {t.given}, but parents of {j!r} are "
            f"{g.parents(j)}")
    factors = [t if f.target == j else f for f in factorize(p, g)]
    return product_joint(g, factors).permute(p.names)


# ---------------------------------------------------------------------------
# Factor-change detection and distances
# ---------------------------------------------------------------------------


def factor_distance(p: DiscreteJoint, q: DiscreteJoint, g: Dag, node: str) -> float:
    """Max-over-context total variation between the ``node`` conditionals of
    ``p`` and ``q`` given the node's parents in ``g``.

    Contexts with zero probability under both joints are skipped; a context
    positive under exactly one counts as a full difference (1.0).
    """
    pa = g.parents(node)
    fp = conditional(p, node, pa)
    fq = conditional(q, node, pa)
    flat_p = fp.table.reshape(-1, fp.table.shape[-1])
    flat_q = fq.table.reshape(-1, fq.table.shape[-1])
    def_p = fp.defined.reshape(-1)
    def_q = fq.defined.reshape(-1)
    worst = 0.0
    for k in range(flat_p.shape[0]):
        if not def_p[k] and not def_q[k]:
            continue
        if def_p[k] != def_q[k]:
            return 1.0
        worst = max(worst, 0.5 * float(np.abs(flat_p[k] - flat_q[k]).sum()))
    return worst


def changed_factors(p: DiscreteJoint, q: DiscreteJoint, g: Dag,
                    eps: float = 1e-9) -> tuple[str, ...]:
    """Nodes whose causal conditional (w.r.t. ``g``) differs between ``p``
    and ``q`` by more than ``eps`` in max-over-context total variation."""
    if set(p.names) != set(q.names):
        raise TableError("distributions must share variables")
    _check_same_variables(p, g)
    return g.sorted_tuple(
        n for n in g.nodes if factor_distance(p, q, g, n) > eps)


def tv_distance(p: DiscreteJoint, q: DiscreteJoint) -> float:
    """Total variation distance, 0.5 * sum |p - q|, in [0, 1]."""
    if p.names != q.names or p.cards != q.cards:
        q = q.permute(p.names) if set(p.names) == set(q.names) else q
        if p.cards != q.cards:
            raise TableError("shape mismatch")
    return 0.5 * float(np.abs(p.probs - q.probs).sum())
