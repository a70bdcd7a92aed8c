"""Worked example systems: urns, bundles, rabbits, macro averages, the ball
track and the farmers' countertrade.

Each constructor returns an :class:`Exemplar` bundling the system (a
general SCM, a linear idealization, and/or an exact joint), an action suite
in unit and/or statistical encoding, and the declared ground-truth graph.
The urn-family exemplars also expose the bounded ball-moving process
itself, which agrees with the linear idealization exactly on every run
that never empties a ball type.

Conventions: urn nodes are listed cause-first, so the chain over n types
is ("Kn", ..., "K1") and the mixing matrix S is the lower-bidiagonal
Toeplitz form (diagonal 1, first sub-diagonal -1) whose structure matrix
I - S^{-1} is strictly lower triangular with every entry -1. Within each
simulated round the action coins are applied in a fixed order (descending
type, + before -); outside boundary states the order is immaterial.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .actions import StatisticalAction, UnitAction, unit_action_from_spec
from .graphs import Dag
from .scm import Dataset, GeneralScm, LinearScm, NoiseSpec, ScmError
from .tables import DiscreteJoint

__all__ = [
    "Exemplar",
    "urn_bivariate",
    "urn_chain",
    "bundles_chain",
    "rabbits",
    "macro_pair",
    "ball_track",
    "farmers",
    "EXEMPLARS",
    "build_exemplar",
    "urn_toeplitz_mixing",
    "bundles_mixing",
    "exact_urn2_joint",
]


@dataclass(frozen=True)
class Exemplar:
    """A system, its elementary actions, and the declared causal graph."""

    name: str
    ground_truth: Dag
    scm: GeneralScm | None = None
    unit_actions: tuple[UnitAction, ...] = ()
    baseline: DiscreteJoint | None = None
    statistical_actions: tuple[StatisticalAction, ...] = ()
    linear: LinearScm | None = None
    sampler: Callable[[int, int], Dataset] | None = None
    notes: dict = field(default_factory=dict)

    def sample(self, n: int, seed: int) -> Dataset:
        if self.sampler is None:
            raise ScmError(f"exemplar {self.name!r} has no dataset sampler")
        return self.sampler(n, seed)

    def to_json_obj(self) -> dict:
        obj = {
            "name": self.name,
            "ground_truth": json.loads(self.ground_truth.to_json()),
            "unit_actions": [a.to_json_obj() for a in self.unit_actions],
            "statistical_actions": [a.label for a in self.statistical_actions],
            "notes": {k: v for k, v in self.notes.items()
                      if isinstance(v, (int, float, str, bool, list, dict))},
        }
        if self.baseline is not None:
            obj["baseline"] = json.loads(self.baseline.to_json())
        if self.linear is not None:
            obj["linear"] = self.linear.to_json_obj()
        return obj


# ---------------------------------------------------------------------------
# Bounded urn process: shared simulator and exact bivariate joint
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Move:
    label: str
    deltas: tuple[int, ...]
    requires: tuple[int, ...]   # column indices that must be > 0 beforehand
    prob: float


def _simulate_process(k0: Sequence[int], moves: Sequence[_Move], rounds: int,
                      n: int, seed: int, columns: Sequence[str]) -> tuple[Dataset, np.ndarray]:
    """Vectorized bounded process; returns the dataset and per-row flags
    marking runs in which at least one action was refused."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    state = np.tile(np.asarray(k0, dtype=float), (n, 1))
    refused = np.zeros(n, dtype=bool)
    for _ in range(rounds):
        for mv in moves:
            fire = rng.random(n) < mv.prob
            ok = np.ones(n, dtype=bool)
            for idx in mv.requires:
                ok &= state[:, idx] > 0
            refused |= fire & ~ok
            hit = fire & ok
            if hit.any():
                state[hit] += np.asarray(mv.deltas, dtype=float)
    return Dataset(tuple(columns), state, seed), refused


def _shift2(arr: np.ndarray, db: int, dr: int) -> np.ndarray:
    out = np.zeros_like(arr)
    sb = slice(max(0, -db), arr.shape[0] - max(0, db))
    tb = slice(max(0, db), arr.shape[0] - max(0, -db))
    sr = slice(max(0, -dr), arr.shape[1] - max(0, dr))
    tr = slice(max(0, dr), arr.shape[1] - max(0, -dr))
    out[tb, tr] = arr[sb, sr]
    return out


def exact_urn2_joint(kb0: int, kr0: int, rounds: int,
                     biases: Sequence[float]) -> tuple[DiscreteJoint, dict]:
    """Exact distribution of the bounded two-ball process after ``rounds``.

    Computed by dynamic programming over the lattice of reachable counts,
    including refusal behaviour at empty types; with kb0 > rounds and
    kr0 > 2 * rounds no refusal can occur and the result coincides with the
    linear idealization.
    """
    p1p, p1m, p2p, p2m = biases
    kb_lo, kb_hi = max(0, kb0 - rounds), kb0 + rounds
    kr_lo, kr_hi = max(0, kr0 - 2 * rounds), kr0 + 2 * rounds
    kb_levels = np.arange(kb_lo, kb_hi + 1)
    kr_levels = np.arange(kr_lo, kr_hi + 1)
    pmf = np.zeros((kb_levels.size, kr_levels.size))
    pmf[kb0 - kb_lo, kr0 - kr_lo] = 1.0
    kb_pos = kb_levels > 0
    kr_pos = kr_levels > 0
    moves = (
        ((+1, -1), np.outer(np.ones_like(kb_pos), kr_pos), p1p),   # A1+: needs red
        ((-1, +1), np.outer(kb_pos, np.ones_like(kr_pos)), p1m),   # A1-: needs blue
        ((0, +1), np.ones(pmf.shape, dtype=bool), p2p),            # A2+
        ((0, -1), np.outer(np.ones_like(kb_pos), kr_pos), p2m),    # A2-: needs red
    )
    for _ in range(rounds):
        for (db, dr), ok, p in moves:
            stay = pmf * (1.0 - p) + pmf * p * (~ok)
            pmf = stay + _shift2(pmf * p * ok, db, dr)
    joint = DiscreteJoint(("Kb", "Kr"), pmf)
    levels = {"Kb": [int(v) for v in kb_levels], "Kr": [int(v) for v in kr_levels]}
    return joint, levels


# ---------------------------------------------------------------------------
# Example: two-ball urn
# ---------------------------------------------------------------------------


def urn_bivariate(kb0: int = 50, kr0: int = 50, rounds: int = 5,
                  coin_biases: Sequence[float] = (0.5, 0.5, 0.5, 0.5),
                  seed: int = 0, bias_shift: float = 0.2) -> Exemplar:
    """Urn with blue and red balls; ground truth Kb -> Kr.

    Elementary actions: A1+/- replace a red ball by a blue one or back,
    A2+/- add or remove a red ball. Statistical actions shift the A1 or A2
    coin biases by ``bias_shift`` and replace the exact process joint.
    """
    if rounds >= min(kb0, kr0):
        raise ScmError("need rounds < min(kb0, kr0)")
    if rounds < 1:
        raise ScmError("need at least one round")
    p1p, p1m, p2p, p2m = (float(b) for b in coin_biases)
    truth = Dag(("Kb", "Kr"), [("Kb", "Kr")])

    unit_actions = (
        unit_action_from_spec("A1+", {"kind": "add-constant",
                                      "deltas": {"Kb": 1, "Kr": -1},
                                      "requires_positive": ["Kr"]}),
        unit_action_from_spec("A1-", {"kind": "add-constant",
                                      "deltas": {"Kb": -1, "Kr": 1},
                                      "requires_positive": ["Kb"]}),
        unit_action_from_spec("A2+", {"kind": "add-constant",
                                      "deltas": {"Kr": 1}}),
        unit_action_from_spec("A2-", {"kind": "add-constant",
                                      "deltas": {"Kr": -1},
                                      "requires_positive": ["Kr"]}),
    )

    scm = GeneralScm(
        nodes=("Kb", "Kr"),
        parents={"Kb": (), "Kr": ("Kb",)},
        mechanisms={
            "Kb": lambda pa, n1: kb0 + n1,
            "Kr": lambda pa, n2: kr0 + kb0 - pa["Kb"] + n2,
        },
        noises={
            "Kb": NoiseSpec.binomdiff(rounds, p1p, p1m),
            "Kr": NoiseSpec.binomdiff(rounds, p2p, p2m),
        },
    )

    linear = LinearScm(
        nodes=("Kb", "Kr"),
        a=np.array([[0.0, 0.0], [-1.0, 0.0]]),
        offsets=np.array([float(kb0), float(kr0 + kb0)]),
        noises=(NoiseSpec.binomdiff(rounds, p1p, p1m),
                NoiseSpec.binomdiff(rounds, p2p, p2m)),
    )

    baseline, levels = exact_urn2_joint(kb0, kr0, rounds, (p1p, p1m, p2p, p2m))

    def shifted(b: float) -> float:
        return min(0.95, max(0.05, b + bias_shift))

    stat_actions = (
        StatisticalAction(
            "A1-bias-shift",
            exact_urn2_joint(kb0, kr0, rounds,
                             (shifted(p1p), p1m, p2p, p2m))[0]),
        StatisticalAction(
            "A2-bias-shift",
            exact_urn2_joint(kb0, kr0, rounds,
                             (p1p, p1m, shifted(p2p), p2m))[0]),
    )

    moves = (
        _Move("A1+", (1, -1), (1,), p1p),
        _Move("A1-", (-1, 1), (0,), p1m),
        _Move("A2+", (0, 1), (), p2p),
        _Move("A2-", (0, -1), (1,), p2m),
    )

    def sampler(n: int, smp_seed: int) -> Dataset:
        ds, _ = _simulate_process((kb0, kr0), moves, rounds, n, smp_seed,
                                  ("Kb", "Kr"))
        return ds

    def sampler_with_flags(n: int, smp_seed: int):
        return _simulate_process((kb0, kr0), moves, rounds, n, smp_seed,
                                 ("Kb", "Kr"))

    return Exemplar(
        name="urn2",
        ground_truth=truth,
        scm=scm,
        unit_actions=unit_actions,
        baseline=baseline,
        statistical_actions=stat_actions,
        linear=linear,
        sampler=sampler,
        notes={
            "kb0": kb0, "kr0": kr0, "rounds": rounds,
            "coin_biases": [p1p, p1m, p2p, p2m],
            "bias_shift": bias_shift,
            "levels": levels,
            "class_nodes": {"A1": "Kb", "A2": "Kr"},
            "sampler_with_flags": sampler_with_flags,
            "seed": seed,
        },
    )


# ---------------------------------------------------------------------------
# Example: n ball types in a row
# ---------------------------------------------------------------------------


def urn_toeplitz_mixing(n: int) -> np.ndarray:
    """Lower-bidiagonal Toeplitz S (diagonal 1, first sub-diagonal -1)."""
    s = np.eye(n)
    for i in range(1, n):
        s[i, i - 1] = -1.0
    return s


def _chain_nodes(n: int) -> tuple[str, ...]:
    return tuple(f"K{j}" for j in range(n, 0, -1))


def urn_chain(n: int = 4, k0: Sequence[int] | None = None, rounds: int = 5,
              coin_biases: Sequence[float] | None = None, seed: int = 0,
              endpoint: str = "low") -> Exemplar:
    """Urn with n ball types; A_j+/- convert type j-1 into type j and back,
    and the endpoint actions add or remove balls of type 1.

    Ground truth is the complete DAG pointing from high type labels toward
    low ones (every intervention propagates one step and is cancelled at
    the grandchild). ``endpoint="high"`` moves the free add/remove actions
    to type n, which reverses every edge.
    """
    if n < 2:
        raise ScmError("need n >= 2 ball types")
    if k0 is None:
        k0 = (50,) * n
    k0 = tuple(int(v) for v in k0)
    if rounds >= min(k0) or rounds < 1:
        raise ScmError("need 1 <= rounds < min(k0)")
    if coin_biases is None:
        coin_biases = (0.5,) * (2 * n)
    biases = tuple(float(b) for b in coin_biases)  # (p1+, p1-, ..., pn+, pn-)
    if len(biases) != 2 * n:
        raise ScmError(f"need 2*{n} coin biases")
    if endpoint not in ("low", "high"):
        raise ScmError("endpoint must be 'low' or 'high'")

    nodes = _chain_nodes(n)
    k0_by_type = {f"K{j}": k0[j - 1] for j in range(1, n + 1)}

    if endpoint == "low":
        truth = Dag(nodes, [(f"K{i}", f"K{j}")
                            for i in range(n, 0, -1) for j in range(i - 1, 0, -1)])
        class_nodes = {f"A{j}": f"K{j}" for j in range(1, n + 1)}
    else:
        truth = Dag(nodes, [(f"K{i}", f"K{j}")
                            for i in range(1, n + 1) for j in range(i + 1, n + 1)])
        class_nodes = {f"A{j}": f"K{j-1}" for j in range(2, n + 1)}
        class_nodes["A1"] = f"K{n}"

    unit_actions = []
    moves = []
    col = {name: i for i, name in enumerate(nodes)}
    for j in range(n, 1, -1):
        pj, mj = biases[2 * (j - 1)], biases[2 * (j - 1) + 1]
        unit_actions.append(unit_action_from_spec(
            f"A{j}+", {"kind": "add-constant",
                       "deltas": {f"K{j}": 1, f"K{j-1}": -1},
                       "requires_positive": [f"K{j-1}"]}))
        unit_actions.append(unit_action_from_spec(
            f"A{j}-", {"kind": "add-constant",
                       "deltas": {f"K{j}": -1, f"K{j-1}": 1},
                       "requires_positive": [f"K{j}"]}))
        for sign, prob, req in ((+1, pj, f"K{j-1}"), (-1, mj, f"K{j}")):
            deltas = [0] * n
            deltas[col[f"K{j}"]] = sign
            deltas[col[f"K{j-1}"]] = -sign
            moves.append(_Move(f"A{j}{'+' if sign > 0 else '-'}",
                               tuple(deltas), (col[req],), prob))
    end_type = 1 if endpoint == "low" else n
    p1, m1 = biases[0], biases[1]
    unit_actions.append(unit_action_from_spec(
        "A1+", {"kind": "add-constant", "deltas": {f"K{end_type}": 1}}))
    unit_actions.append(unit_action_from_spec(
        "A1-", {"kind": "add-constant", "deltas": {f"K{end_type}": -1},
                "requires_positive": [f"K{end_type}"]}))
    for sign, prob in ((+1, p1), (-1, m1)):
        deltas = [0] * n
        deltas[col[f"K{end_type}"]] = sign
        req = (col[f"K{end_type}"],) if sign < 0 else ()
        moves.append(_Move(f"A1{'+' if sign > 0 else '-'}",
                           tuple(deltas), req, prob))
    unit_actions = tuple(unit_actions)

    # FCM in the truth orientation: each node absorbs the cumulative count
    # of its ancestors, leaving exactly its own action tally as noise.
    parents = {v: truth.parents(v) for v in nodes}
    mechanisms = {}
    noises = {}
    for v in nodes:
        j = int(v[1:])
        anchor = k0_by_type[v]

        def mech(pa: Mapping[str, float], nj: float, anchor=anchor,
                 pset=parents[v]) -> float:
            drift = sum(pa[p] - k0_by_type[p] for p in pset)
            return anchor - drift + nj

        mechanisms[v] = mech
        if endpoint == "low":
            pj, mj = biases[2 * (j - 1)], biases[2 * (j - 1) + 1]
            noises[v] = NoiseSpec.binomdiff(rounds, pj, mj)
        else:
            # class A_{j+1} intervenes on K_j; its tally enters negated
            if j < n:
                pj, mj = biases[2 * j], biases[2 * j + 1]
                noises[v] = NoiseSpec.binomdiff(rounds, mj, pj)
            else:
                noises[v] = NoiseSpec.binomdiff(rounds, p1, m1)
    scm = GeneralScm(nodes=nodes, parents=parents, mechanisms=mechanisms,
                     noises=noises)

    linear = None
    if endpoint == "low":
        a = np.zeros((n, n))
        a[np.tril_indices(n, -1)] = -1.0
        offsets = np.cumsum([k0_by_type[v] for v in nodes]).astype(float)
        linear = LinearScm(
            nodes=nodes, a=a, offsets=offsets,
            noises=tuple(
                NoiseSpec.binomdiff(rounds, biases[2 * (int(v[1:]) - 1)],
                                    biases[2 * (int(v[1:]) - 1) + 1])
                for v in nodes),
        )

    def sampler(m: int, smp_seed: int) -> Dataset:
        ds, _ = _simulate_process([k0_by_type[v] for v in nodes], moves,
                                  rounds, m, smp_seed, nodes)
        return ds

    def sampler_with_flags(m: int, smp_seed: int):
        return _simulate_process([k0_by_type[v] for v in nodes], moves,
                                 rounds, m, smp_seed, nodes)

    return Exemplar(
        name="urnN",
        ground_truth=truth,
        scm=scm,
        unit_actions=unit_actions,
        linear=linear,
        sampler=sampler,
        notes={
            "n": n, "k0": list(k0), "rounds": rounds,
            "coin_biases": list(biases), "endpoint": endpoint,
            "mixing": urn_toeplitz_mixing(n).tolist(),
            "class_nodes": class_nodes,
            "sampler_with_flags": sampler_with_flags,
            "seed": seed,
        },
    )


# ---------------------------------------------------------------------------
# Example: bundled packages
# ---------------------------------------------------------------------------


def bundles_mixing(n: int) -> np.ndarray:
    """Lower-triangular all-ones S of the package urn."""
    return np.tril(np.ones((n, n)))


def bundles_chain(n: int = 4, rounds: int = 5,
                  coin_biases: Sequence[float] | None = None, seed: int = 0,
                  initial_packages: int | None = None) -> Exemplar:
    """Package urn: A_j+ drops one package containing one ball of each type
    1..j, A_j- wraps such a package back. Ground truth is the simple chain
    Kn -> ... -> K1.

    Simulated runs start from ``initial_packages`` packages of every type
    (default rounds + 1) so that no wrap-back is ever refused and the
    process matches the linear form K_j = K_{j+1} + N_j exactly.
    """
    if n < 2:
        raise ScmError("need n >= 2 package types")
    if rounds < 1:
        raise ScmError("need at least one round")
    if coin_biases is None:
        coin_biases = (0.5,) * (2 * n)
    biases = tuple(float(b) for b in coin_biases)
    if len(biases) != 2 * n:
        raise ScmError(f"need 2*{n} coin biases")
    r0 = int(initial_packages) if initial_packages is not None else rounds + 1
    if r0 <= rounds:
        raise ScmError("need initial_packages > rounds")

    nodes = _chain_nodes(n)
    truth = Dag(nodes, [(nodes[i], nodes[i + 1]) for i in range(n - 1)])
    col = {name: i for i, name in enumerate(nodes)}
    k0_by_type = {f"K{j}": r0 * (n - j + 1) for j in range(1, n + 1)}

    unit_actions = []
    moves = []
    for j in range(n, 0, -1):
        pj, mj = biases[2 * (j - 1)], biases[2 * (j - 1) + 1]
        plus = {f"K{i}": 1 for i in range(1, j + 1)}
        minus = {f"K{i}": -1 for i in range(1, j + 1)}
        unit_actions.append(unit_action_from_spec(
            f"A{j}+", {"kind": "add-constant", "deltas": plus}))
        unit_actions.append(unit_action_from_spec(
            f"A{j}-", {"kind": "add-constant", "deltas": minus,
                       "requires_positive": [f"K{i}" for i in range(1, j + 1)]}))
        for sign, prob in ((+1, pj), (-1, mj)):
            deltas = [0] * n
            for i in range(1, j + 1):
                deltas[col[f"K{i}"]] = sign
            req = tuple(col[f"K{i}"] for i in range(1, j + 1)) if sign < 0 else ()
            moves.append(_Move(f"A{j}{'+' if sign > 0 else '-'}",
                               tuple(deltas), req, prob))
    unit_actions = tuple(unit_actions)

    parents = {v: truth.parents(v) for v in nodes}
    mechanisms = {}
    noises = {}
    for v in nodes:
        j = int(v[1:])

        def mech(pa: Mapping[str, float], nj: float, r0=r0,
                 pset=parents[v]) -> float:
            return (pa[pset[0]] if pset else 0.0) + r0 + nj

        mechanisms[v] = mech
        noises[v] = NoiseSpec.binomdiff(rounds, biases[2 * (j - 1)],
                                        biases[2 * (j - 1) + 1])
    scm = GeneralScm(nodes=nodes, parents=parents, mechanisms=mechanisms,
                     noises=noises)

    a = np.zeros((n, n))
    for i in range(1, n):
        a[i, i - 1] = 1.0
    linear = LinearScm(
        nodes=nodes, a=a, offsets=np.full(n, float(r0)),
        noises=tuple(
            NoiseSpec.binomdiff(rounds, biases[2 * (int(v[1:]) - 1)],
                                biases[2 * (int(v[1:]) - 1) + 1])
            for v in nodes),
    )

    def sampler(m: int, smp_seed: int) -> Dataset:
        ds, _ = _simulate_process([k0_by_type[v] for v in nodes], moves,
                                  rounds, m, smp_seed, nodes)
        return ds

    def sampler_with_flags(m: int, smp_seed: int):
        return _simulate_process([k0_by_type[v] for v in nodes], moves,
                                 rounds, m, smp_seed, nodes)

    return Exemplar(
        name="bundles",
        ground_truth=truth,
        scm=scm,
        unit_actions=unit_actions,
        linear=linear,
        sampler=sampler,
        notes={
            "n": n, "rounds": rounds, "coin_biases": list(biases),
            "initial_packages": r0,
            "k0": [k0_by_type[v] for v in nodes],
            "mixing": bundles_mixing(n).tolist(),
            "class_nodes": {f"A{j}": f"K{j}" for j in range(1, n + 1)},
            "sampler_with_flags": sampler_with_flags,
            "seed": seed,
        },
    )


# ---------------------------------------------------------------------------
# Example: rabbits
# ---------------------------------------------------------------------------


def rabbits(n_rabbits: int = 5, food_supply: float | None = None,
            demand_per_rabbit: float = 2.0, scenario: int = 1,
            appetite_factor: float = 1.25) -> Exemplar:
    """Food consumption: X is the total amount eaten per day, Y the amount
    per rabbit, X = min(food, n * demand) and Y = X / n.

    Scenario 1 (plenty of food) makes Y the cause of X; scenario 2 (food
    shortage) makes X the cause of Y. Demand varies by 20 percent across
    days (the statistical units); the appetizer scales demand by
    ``appetite_factor``.
    """
    if n_rabbits <= 0:
        raise ScmError("need at least one rabbit")
    if demand_per_rabbit <= 0 or appetite_factor <= 1.0:
        raise ScmError("need positive demand and appetite_factor > 1")
    if scenario not in (1, 2):
        raise ScmError("scenario must be 1 or 2")
    n = n_rabbits
    d = demand_per_rabbit
    d_lo, d_hi = 0.8 * d, 1.2 * d
    if food_supply is None:
        food_supply = 4.0 * n * d_hi if scenario == 1 else 0.5 * n * d_lo
    f = float(food_supply)
    if scenario == 1 and f < appetite_factor * n * d_hi:
        raise ScmError("scenario 1 needs food_supply >= appetite * n * max demand")
    if scenario == 2 and f >= n * d_lo:
        raise ScmError("scenario 2 needs food_supply < n * min demand")

    demand_noise = NoiseSpec.finite((d_lo, d, d_hi), (1 / 3, 1 / 3, 1 / 3))
    if scenario == 1:
        truth = Dag(("X", "Y"), [("Y", "X")])
        scm = GeneralScm(
            nodes=("X", "Y"),
            parents={"X": ("Y",), "Y": ()},
            mechanisms={"Y": lambda pa, dv: dv,
                        "X": lambda pa, _n: n * pa["Y"]},
            noises={"Y": demand_noise, "X": NoiseSpec.degenerate(0.0)},
        )
        # In the plenty regime X = n * d, so d is recoverable from the state.
        actions = (
            UnitAction("add-rabbit",
                       lambda s: {"X": s["X"] + s["Y"], "Y": s["Y"]},
                       {"kind": "opaque", "family": "rabbit-count"}),
            UnitAction("more-food", lambda s: dict(s),
                       {"kind": "opaque", "family": "food-supply"}),
            unit_action_from_spec(
                "appetizer", {"kind": "scale",
                              "factors": {"X": appetite_factor,
                                          "Y": appetite_factor}}),
        )
    else:
        truth = Dag(("X", "Y"), [("X", "Y")])
        scm = GeneralScm(
            nodes=("X", "Y"),
            parents={"X": (), "Y": ("X",)},
            mechanisms={"X": lambda pa, fv: fv,
                        "Y": lambda pa, _n: pa["X"] / n},
            noises={"X": NoiseSpec.degenerate(f), "Y": NoiseSpec.degenerate(0.0)},
        )
        food_factor = 0.8
        actions = (
            UnitAction("add-rabbit",
                       lambda s: {"X": s["X"], "Y": s["X"] / (n + 1)},
                       {"kind": "opaque", "family": "rabbit-count"}),
            unit_action_from_spec(
                "more-food", {"kind": "scale",
                              "factors": {"X": food_factor, "Y": food_factor}}),
            UnitAction("appetizer", lambda s: dict(s),
                       {"kind": "opaque", "family": "appetizer"}),
        )

    return Exemplar(
        name=f"rabbits{scenario}",
        ground_truth=truth,
        scm=scm,
        unit_actions=actions,
        sampler=lambda m, s: scm.simulate(m, s),
        notes={"n_rabbits": n, "food_supply": f,
               "demand_per_rabbit": d, "scenario": scenario,
               "appetite_factor": appetite_factor},
    )


# ---------------------------------------------------------------------------
# Example: macro averages of a split micro system
# ---------------------------------------------------------------------------


def macro_pair(action_choice: str = "act-on-1s", shift: float = 1.0) -> Exemplar:
    """Averages Xbar = (X1+X2)/2, Ybar = (Y1+Y2)/2 over the micro model
    Y1 = X1, X2 = Y2.

    Whoever moves the averages through the index-1 variables concludes
    Xbar -> Ybar; acting through the index-2 variables yields the opposite
    direction. Identically, Xbar = Ybar holds in every state.
    """
    if action_choice not in ("act-on-1s", "act-on-2s"):
        raise ScmError("action_choice must be 'act-on-1s' or 'act-on-2s'")
    grid = NoiseSpec.finite((0.0, 1.0, 2.0, 3.0), (0.25,) * 4)
    micro = GeneralScm(
        nodes=("X1", "X2", "Y1", "Y2"),
        parents={"X1": (), "Y2": (), "Y1": ("X1",), "X2": ("Y2",)},
        mechanisms={
            "X1": lambda pa, u: u,
            "Y2": lambda pa, u: u,
            "Y1": lambda pa, _n: pa["X1"],
            "X2": lambda pa, _n: pa["Y2"],
        },
        noises={"X1": grid, "Y2": grid,
                "Y1": NoiseSpec.degenerate(0.0), "X2": NoiseSpec.degenerate(0.0)},
    )

    def aggregate(state: Mapping[str, float]) -> dict[str, float]:
        return {"Xbar": (state["X1"] + state["X2"]) / 2.0,
                "Ybar": (state["Y1"] + state["Y2"]) / 2.0}

    # Macro-level law: the two averages coincide, value (X1 + Y2) / 2.
    pair_sum = NoiseSpec.finite(
        tuple((a + b) / 2.0 for a in grid.atoms for b in grid.atoms),
        tuple(pa * pb for pa in grid.probs for pb in grid.probs))
    if action_choice == "act-on-1s":
        truth = Dag(("Xbar", "Ybar"), [("Xbar", "Ybar")])
        scm = GeneralScm(
            nodes=("Xbar", "Ybar"),
            parents={"Xbar": (), "Ybar": ("Xbar",)},
            mechanisms={"Xbar": lambda pa, u: u,
                        "Ybar": lambda pa, _n: pa["Xbar"]},
            noises={"Xbar": pair_sum, "Ybar": NoiseSpec.degenerate(0.0)},
        )
        actions = (
            unit_action_from_spec("shift-X1", {
                "kind": "add-constant",
                "deltas": {"Xbar": shift / 2.0, "Ybar": shift / 2.0}}),
            unit_action_from_spec("shift-Y1", {
                "kind": "add-constant", "deltas": {"Ybar": shift / 2.0}}),
        )
    else:
        truth = Dag(("Xbar", "Ybar"), [("Ybar", "Xbar")])
        scm = GeneralScm(
            nodes=("Xbar", "Ybar"),
            parents={"Ybar": (), "Xbar": ("Ybar",)},
            mechanisms={"Ybar": lambda pa, u: u,
                        "Xbar": lambda pa, _n: pa["Ybar"]},
            noises={"Ybar": pair_sum, "Xbar": NoiseSpec.degenerate(0.0)},
        )
        actions = (
            unit_action_from_spec("shift-Y2", {
                "kind": "add-constant",
                "deltas": {"Xbar": shift / 2.0, "Ybar": shift / 2.0}}),
            unit_action_from_spec("shift-X2", {
                "kind": "add-constant", "deltas": {"Xbar": shift / 2.0}}),
        )

    name = "macro1" if action_choice == "act-on-1s" else "macro2"
    return Exemplar(
        name=name,
        ground_truth=truth,
        scm=scm,
        unit_actions=actions,
        sampler=lambda m, s: scm.simulate(m, s),
        notes={"action_choice": action_choice, "shift": shift,
               "micro_scm": micro, "aggregate": aggregate},
    )


# ---------------------------------------------------------------------------
# Example: ball track
# ---------------------------------------------------------------------------


def ball_track(start_distribution_param: float = 0.6, barrier_offset: int = 0,
               seed: int = 0) -> Exemplar:
    """Ball on a track: start position X, measured speed Y; truth X -> Y.

    Speeds live on a quarter-unit lattice: the height-to-speed map is an
    increasing square-root law quantized by the sensor, the barrier offset
    subtracts lattice steps, and measurement jitter is one lattice step.
    The statistical actions change the start-position distribution (older
    children start higher) or move the light barrier one step.
    """
    theta = float(start_distribution_param)
    if theta <= 0:
        raise ScmError("start_distribution_param must be positive")
    positions = np.arange(4)
    # sqrt speed law in quarter units, sensor-quantized
    speed_units = np.array([round(4 * math.sqrt(x + 1)) for x in positions])
    noise_units = np.array([-1, 0, 1])
    noise_probs = np.array([0.25, 0.5, 0.25])
    offsets = (int(barrier_offset), int(barrier_offset) + 1)
    if np.any(np.diff(speed_units) <= 0):
        raise ScmError("speed map must be strictly increasing in position")

    y_units = sorted({int(speed_units[x] + nz - 2 * o)
                      for x in positions for nz in noise_units for o in offsets})
    y_index = {u: i for i, u in enumerate(y_units)}

    def start_probs(t: float) -> np.ndarray:
        w = t ** positions.astype(float)
        return w / w.sum()

    def joint_at(t: float, o: int) -> DiscreteJoint:
        probs = np.zeros((positions.size, len(y_units)))
        px = start_probs(t)
        for x in positions:
            for nz, pn in zip(noise_units, noise_probs):
                u = int(speed_units[x] + nz - 2 * o)
                probs[x, y_index[u]] += px[x] * pn
        return DiscreteJoint(("X", "Y"), probs)

    baseline = joint_at(theta, offsets[0])
    stat_actions = (
        StatisticalAction("older-children", joint_at(1.0 / theta, offsets[0])),
        StatisticalAction("move-barrier", joint_at(theta, offsets[1])),
    )
    truth = Dag(("X", "Y"), [("X", "Y")])

    def sampler(m: int, smp_seed: int) -> Dataset:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(smp_seed)))
        idx = baseline.sample(m, rng)
        rows = np.column_stack([
            positions[idx[:, 0]].astype(float),
            np.asarray([y_units[i] for i in idx[:, 1]], dtype=float) * 0.25,
        ])
        return Dataset(("X", "Y"), rows, smp_seed)

    return Exemplar(
        name="balltrack",
        ground_truth=truth,
        baseline=baseline,
        statistical_actions=stat_actions,
        sampler=sampler,
        notes={
            "start_distribution_param": theta,
            "barrier_offset": int(barrier_offset),
            "levels": {"X": [int(x) for x in positions],
                       "Y": [u * 0.25 for u in y_units]},
        },
    )


# ---------------------------------------------------------------------------
# Example: farmers' countertrade
# ---------------------------------------------------------------------------


def farmers(exchange_factor: float = 2.0, potato_elasticity: float = 0.0,
            factor_change: float = 1.5) -> Exemplar:
    """Potatoes against eggs: KE = KP * F with negotiated factor F.

    Potato demand follows a constant-elasticity law KP = B * F^(-e) with a
    random base quantity B. The single action family renegotiates F. With
    elasticity 0, KP is robust to the change and the verdict is KP -> KE;
    at the egg-invariance elasticity 1 the direction flips; anything in
    between is a declared grey zone.
    """
    if exchange_factor <= 0 or factor_change <= 0 or factor_change == 1.0:
        raise ScmError("need positive exchange_factor and factor_change != 1")
    e = float(potato_elasticity)
    f0 = float(exchange_factor)
    f1 = f0 * float(factor_change)
    base = np.array([80.0, 90.0, 100.0, 110.0, 120.0])
    base_probs = np.array([0.1, 0.2, 0.4, 0.2, 0.1])

    def values_at(f: float) -> tuple[np.ndarray, np.ndarray]:
        kp = base * f ** (-e)
        return np.round(kp, 9), np.round(kp * f, 9)

    kp0, ke0 = values_at(f0)
    kp1, ke1 = values_at(f1)
    kp_levels = sorted(set(kp0) | set(kp1))
    ke_levels = sorted(set(ke0) | set(ke1))
    kp_index = {v: i for i, v in enumerate(kp_levels)}
    ke_index = {v: i for i, v in enumerate(ke_levels)}

    def joint_at(kp: np.ndarray, ke: np.ndarray) -> DiscreteJoint:
        probs = np.zeros((len(kp_levels), len(ke_levels)))
        for b in range(base.size):
            probs[kp_index[kp[b]], ke_index[ke[b]]] += base_probs[b]
        return DiscreteJoint(("KP", "KE"), probs)

    baseline = joint_at(kp0, ke0)
    stat_actions = (StatisticalAction("change-F", joint_at(kp1, ke1)),)
    if e < 0.5:
        truth = Dag(("KP", "KE"), [("KP", "KE")])
    else:
        truth = Dag(("KP", "KE"), [("KE", "KP")])

    def sampler(m: int, smp_seed: int) -> Dataset:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(smp_seed)))
        idx = baseline.sample(m, rng)
        rows = np.column_stack([
            np.asarray([kp_levels[i] for i in idx[:, 0]]),
            np.asarray([ke_levels[i] for i in idx[:, 1]]),
        ])
        return Dataset(("KP", "KE"), rows, smp_seed)

    return Exemplar(
        name="farmers",
        ground_truth=truth,
        baseline=baseline,
        statistical_actions=stat_actions,
        sampler=sampler,
        notes={
            "exchange_factor": f0, "potato_elasticity": e,
            "factor_change": float(factor_change),
            "grey_zone": e not in (0.0, 1.0),
            "levels": {"KP": list(kp_levels), "KE": list(ke_levels)},
        },
    )


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

EXEMPLARS: dict[str, Callable[..., Exemplar]] = {
    "urn2": urn_bivariate,
    "urnN": urn_chain,
    "bundles": bundles_chain,
    "rabbits1": lambda **kw: rabbits(scenario=1, **kw),
    "rabbits2": lambda **kw: rabbits(scenario=2, **kw),
    "macro1": lambda **kw: macro_pair(action_choice="act-on-1s", **kw),
    "macro2": lambda **kw: macro_pair(action_choice="act-on-2s", **kw),
    "balltrack": ball_track,
    "farmers": farmers,
}


def build_exemplar(name: str, **params) -> Exemplar:
    if name not in EXEMPLARS:
        raise KeyError(f"unknown exemplar {name!r}; known: {sorted(EXEMPLARS)}")
    return EXEMPLARS[name](**params)
