"""Structural causal models: linear structure-matrix algebra and general
finite-state mechanisms.

Linear models are stored through their structure matrix A, where A[j, i] is
the coefficient of variable i in the equation for variable j, so that
X = A X + offsets + N and X = (I - A)^{-1} (offsets + N). General models
carry one deterministic mechanism per node plus an independent noise term.

Random draws use counter-based Philox generators keyed by
(seed, node index, stream, chunk), so per-node noise columns are
reproducible independently of each other and chunks can be filled in any
order (or in parallel) with identical output.
"""

from __future__ import annotations

import csv
import io
import itertools
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.stats

from .graphs import Dag, CycleError

__all__ = [
    "NoiseSpec",
    "Dataset",
    "LinearScm",
    "GeneralScm",
    "ScmError",
    "SingularStructureError",
    "StructureSolution",
    "solve_structure",
    "total_effect",
    "unit_map",
    "structure_preserving_intervention",
    "exact_joint",
]

_CHUNK = 8192  # fixed chunk size; defines the reproducible parallel layout
_EDGE_TOL = 1e-12


class ScmError(ValueError):
    """Malformed structural model or invalid simulation request."""


class SingularStructureError(ScmError):
    """The mixing matrix S is numerically singular."""


# ---------------------------------------------------------------------------
# Noise specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    """Noise distribution given as a family name plus parameters.

    Families:

    * ``binomdiff(rounds, p_plus, p_minus)`` -- difference of two
      independent binomial counts, the law of a coin-controlled action
      tally. Finite support {-rounds, ..., rounds}.
    * ``discrete_uniform(lo, hi)`` -- uniform on the integers lo..hi.
    * ``uniform(lo, hi)`` -- continuous uniform.
    * ``gaussian(mu, sigma)`` -- normal; note that linear models with all
      Gaussian noises are not identifiable by LiNGAM-style discovery.
    * ``degenerate(value)`` -- point mass.
    * ``finite(atoms, probs)`` -- explicit atoms (any hashable values,
      tuples allowed) with probabilities.
    """

    family: str
    params: tuple = ()
    atoms: tuple = ()
    probs: tuple = ()

    @classmethod
    def binomdiff(cls, rounds: int, p_plus: float, p_minus: float) -> "NoiseSpec":
        return cls("binomdiff", (int(rounds), float(p_plus), float(p_minus)))

    @classmethod
    def discrete_uniform(cls, lo: int, hi: int) -> "NoiseSpec":
        return cls("discrete_uniform", (int(lo), int(hi)))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "NoiseSpec":
        return cls("uniform", (float(lo), float(hi)))

    @classmethod
    def gaussian(cls, mu: float, sigma: float) -> "NoiseSpec":
        return cls("gaussian", (float(mu), float(sigma)))

    @classmethod
    def degenerate(cls, value: float) -> "NoiseSpec":
        return cls("degenerate", (value,))

    @classmethod
    def finite(cls, atoms: Sequence, probs: Sequence[float]) -> "NoiseSpec":
        probs = tuple(float(p) for p in probs)
        if len(atoms) != len(probs):
            raise ScmError("atoms and probs must have equal length")
        if abs(sum(probs) - 1.0) > 1e-12 or min(probs) < 0:
            raise ScmError("probs must be a probability vector")
        return cls("finite", (), tuple(atoms), probs)

    # -- law ----------------------------------------------------------------

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.family == "binomdiff":
            r, pp, pm = self.params
            return (rng.binomial(r, pp, size) - rng.binomial(r, pm, size)).astype(float)
        if self.family == "discrete_uniform":
            lo, hi = self.params
            return rng.integers(lo, hi + 1, size).astype(float)
        if self.family == "uniform":
            lo, hi = self.params
            return rng.uniform(lo, hi, size)
        if self.family == "gaussian":
            mu, sigma = self.params
            return rng.normal(mu, sigma, size)
        if self.family == "degenerate":
            return np.full(size, float(self.params[0]))
        if self.family == "finite":
            idx = rng.choice(len(self.atoms), size=size, p=np.asarray(self.probs))
            try:
                return np.asarray([self.atoms[i] for i in idx], dtype=float)
            except (TypeError, ValueError):
                return np.asarray([self.atoms[i] for i in idx], dtype=object)
        raise ScmError(f"unknown noise family {self.family!r}")

    def support(self) -> tuple[tuple, tuple[float, ...]]:
        """(atoms, probabilities) for finite families; error otherwise."""
        if self.family == "binomdiff":
            r, pp, pm = self.params
            plus = scipy.stats.binom.pmf(np.arange(r + 1), r, pp)
            minus = scipy.stats.binom.pmf(np.arange(r + 1), r, pm)
            pmf = np.convolve(plus, minus[::-1])
            values = np.arange(-r, r + 1, dtype=float)
            return tuple(values), tuple(float(v) for v in pmf)
        if self.family == "discrete_uniform":
            lo, hi = self.params
            k = hi - lo + 1
            return tuple(float(v) for v in range(lo, hi + 1)), (1.0 / k,) * k
        if self.family == "degenerate":
            return (float(self.params[0]),), (1.0,)
        if self.family == "finite":
            return self.atoms, self.probs
        raise ScmError(f"noise family {self.family!r} has no finite support")

    def mean(self) -> float:
        if self.family == "binomdiff":
            r, pp, pm = self.params
            return r * (pp - pm)
        if self.family == "discrete_uniform":
            lo, hi = self.params
            return (lo + hi) / 2.0
        if self.family == "uniform":
            lo, hi = self.params
            return (lo + hi) / 2.0
        if self.family == "gaussian":
            return self.params[0]
        if self.family == "degenerate":
            return float(self.params[0])
        atoms, probs = self.support()
        return float(np.dot(np.asarray(atoms, dtype=float), probs))

    def var(self) -> float:
        if self.family == "binomdiff":
            r, pp, pm = self.params
            return r * (pp * (1 - pp) + pm * (1 - pm))
        if self.family == "discrete_uniform":
            lo, hi = self.params
            k = hi - lo + 1
            return (k * k - 1) / 12.0
        if self.family == "uniform":
            lo, hi = self.params
            return (hi - lo) ** 2 / 12.0
        if self.family == "gaussian":
            return self.params[1] ** 2
        if self.family == "degenerate":
            return 0.0
        atoms, probs = self.support()
        values = np.asarray(atoms, dtype=float)
        return float(np.dot(values**2, probs) - np.dot(values, probs) ** 2)

    def to_json_obj(self) -> dict:
        if self.family == "finite":
            return {"family": "finite", "atoms": list(self.atoms),
                    "probs": list(self.probs)}
        return {"family": self.family, "params": list(self.params)}


def _node_rng(seed: int, node_index: int, stream: int, chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(node_index, stream, chunk))
    return np.random.Generator(np.random.Philox(ss))


def _noise_column(spec: NoiseSpec, n: int, seed: int, node_index: int,
                  stream: int) -> np.ndarray:
    parts = []
    for chunk, start in enumerate(range(0, n, _CHUNK)):
        size = min(_CHUNK, n - start)
        parts.append(spec.sample(_node_rng(seed, node_index, stream, chunk), size))
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Rectangular numeric data with its generation seed recorded."""

    columns: tuple[str, ...]
    rows: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != len(self.columns):
            raise ScmError(
                f"rows shape {rows.shape} does not match {len(self.columns)} columns")
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "columns", tuple(self.columns))

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_format_number(v) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, seed: int | None = None) -> "Dataset":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
        return cls(tuple(header), np.asarray(rows, dtype=float), seed)


def _format_number(v: float) -> str:
    return repr(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(float(v))


# ---------------------------------------------------------------------------
# Linear SCM
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearScm:
    """X = A X + offsets + N with mutually independent noises.

    ``a[j, i]`` is the coefficient of node i in the equation of node j. The
    support of A must be acyclic (strictly lower triangular under some node
    permutation); this is validated at construction.
    """

    nodes: tuple[str, ...]
    a: np.ndarray
    offsets: np.ndarray
    noises: tuple[NoiseSpec, ...]
    noise_streams: tuple[int, ...] = ()

    def __post_init__(self):
        nodes = tuple(self.nodes)
        a = np.asarray(self.a, dtype=float)
        offsets = np.asarray(self.offsets, dtype=float)
        d = len(nodes)
        if a.shape != (d, d):
            raise ScmError(f"structure matrix shape {a.shape}, expected {(d, d)}")
        if offsets.shape != (d,):
            raise ScmError("offsets must be one per node")
        if len(self.noises) != d:
            raise ScmError("need one noise spec per node")
        streams = self.noise_streams or (0,) * d
        if len(streams) != d:
            raise ScmError("need one stream index per node")
        a.flags.writeable = False
        offsets.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "noises", tuple(self.noises))
        object.__setattr__(self, "noise_streams", tuple(streams))
        self.graph()  # acyclicity check

    def graph(self) -> Dag:
        d = len(self.nodes)
        edges = [
            (self.nodes[i], self.nodes[j])
            for j in range(d) for i in range(d)
            if i != j and abs(self.a[j, i]) > _EDGE_TOL
        ]
        try:
            return Dag(self.nodes, edges)
        except CycleError as exc:
            raise ScmError(f"structure matrix support is cyclic: {exc}") from exc

    def mixing(self) -> np.ndarray:
        """S = (I - A)^{-1}, mapping offsets + noise to node values."""
        d = len(self.nodes)
        return np.linalg.solve(np.eye(d) - self.a, np.eye(d))

    def simulate(self, n: int, seed: int,
                 return_noise: bool = False) -> Dataset | tuple[Dataset, np.ndarray]:
        if n < 1:
            raise ScmError("need n >= 1 samples")
        noise = np.column_stack([
            _noise_column(spec, n, seed, k, self.noise_streams[k])
            for k, spec in enumerate(self.noises)
        ])
        x = (noise + self.offsets) @ self.mixing().T
        ds = Dataset(self.nodes, x, seed)
        return (ds, noise) if return_noise else ds

    def to_json_obj(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "a": [[float(v) for v in row] for row in self.a],
            "offsets": [float(v) for v in self.offsets],
            "noises": [s.to_json_obj() for s in self.noises],
        }


@dataclass(frozen=True)
class StructureSolution:
    """Result of deriving the structure matrix from a mixing matrix."""

    a: np.ndarray
    dag: Dag | None


def solve_structure(s: np.ndarray,
                    nodes: Sequence[str] | None = None) -> StructureSolution:
    """Derive A = I - S^{-1} from an invertible mixing matrix S.

    If the support of A is acyclic the implied DAG is returned alongside
    (nodes default to x1..xd). Singularity is detected from the LU pivots.
    """
    s = np.asarray(s, dtype=float)
    d = s.shape[0]
    if s.shape != (d, d):
        raise ScmError("S must be square")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(s)
    if np.abs(np.diag(lu)).min() < 1e-10:
        raise SingularStructureError("mixing matrix is singular (pivot < 1e-10)")
    a = np.eye(d) - scipy.linalg.lu_solve((lu, piv), np.eye(d))
    a[np.abs(a) < _EDGE_TOL] = 0.0
    names = tuple(nodes) if nodes is not None else tuple(f"x{i+1}" for i in range(d))
    edges = [(names[i], names[j]) for j in range(d) for i in range(d)
             if i != j and abs(a[j, i]) > _EDGE_TOL]
    try:
        dag = Dag(names, edges)
    except CycleError:
        dag = None
    return StructureSolution(a, dag)


def total_effect(scm: LinearScm, i: str, j: str) -> float:
    """Total causal effect of a unit shift of node ``i`` on node ``j``:
    entry [j, i] of (I - A)^{-1}, with the diagonal convention S[i, i] = 1."""
    s = scm.mixing()
    ji = scm.nodes.index(j), scm.nodes.index(i)
    return float(s[ji])


# ---------------------------------------------------------------------------
# General SCM
# ---------------------------------------------------------------------------


Mechanism = Callable[[Mapping[str, float], object], float]


@dataclass(frozen=True)
class GeneralScm:
    """Per-node deterministic mechanisms driven by independent noises.

    ``mechanisms[v]`` is called as f(parent_values, noise_value) where
    parent_values maps each declared parent name to its value.
    """

    nodes: tuple[str, ...]
    parents: dict[str, tuple[str, ...]]
    mechanisms: dict[str, Mechanism]
    noises: dict[str, NoiseSpec]
    noise_streams: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        parents = {v: tuple(ps) for v, ps in self.parents.items()}
        for v in self.nodes:
            parents.setdefault(v, ())
        object.__setattr__(self, "parents", parents)
        missing = [v for v in self.nodes
                   if v not in self.mechanisms or v not in self.noises]
        if missing:
            raise ScmError(f"missing mechanism or noise for {missing}")
        self.graph()  # validates acyclicity and parent names

    def graph(self) -> Dag:
        edges = [(p, v) for v in self.nodes for p in self.parents[v]]
        return Dag(self.nodes, edges)

    def _stream(self, node: str) -> int:
        return self.noise_streams.get(node, 0)

    def sample_noise(self, n: int, seed: int) -> dict[str, np.ndarray]:
        return {
            v: _noise_column(self.noises[v], n, seed, k, self._stream(v))
            for k, v in enumerate(self.nodes)
        }

    def evaluate(self, noise_row: Mapping[str, object]) -> dict[str, float]:
        """Deterministic state implied by one full noise assignment."""
        state: dict[str, float] = {}
        for v in self.graph().topological_order():
            pa = {p: state[p] for p in self.parents[v]}
            state[v] = self.mechanisms[v](pa, noise_row[v])
        return state

    def simulate(self, n: int, seed: int, return_noise: bool = False):
        if n < 1:
            raise ScmError("need n >= 1 samples")
        noise = self.sample_noise(n, seed)
        order = self.graph().topological_order()
        rows = np.empty((n, len(self.nodes)))
        for r in range(n):
            state: dict[str, float] = {}
            for v in order:
                pa = {p: state[p] for p in self.parents[v]}
                state[v] = self.mechanisms[v](pa, noise[v][r])
            rows[r] = [state[v] for v in self.nodes]
        ds = Dataset(self.nodes, rows, seed)
        return (ds, noise) if return_noise else ds


def unit_map(scm: GeneralScm, j: str, noise_value) -> Callable[[Mapping[str, float]], float]:
    """The deterministic section of node ``j``'s mechanism at a fixed noise
    value: a map from parent values to the value of ``j``."""
    if j not in scm.mechanisms:
        raise ScmError(f"unknown node {j!r}")
    mech = scm.mechanisms[j]

    def section(parent_values: Mapping[str, float]) -> float:
        return mech(parent_values, noise_value)

    return section


def structure_preserving_intervention(scm, j: str, fresh_seed: int):
    """Replace node ``j``'s noise by an independent copy with the same law.

    The mechanism is untouched, so all dependences on the parents are
    preserved; only the noise stream index changes.
    """
    if isinstance(scm, LinearScm):
        k = scm.nodes.index(j)
        streams = list(scm.noise_streams)
        streams[k] = int(fresh_seed)
        return replace(scm, noise_streams=tuple(streams))
    if isinstance(scm, GeneralScm):
        if j not in scm.nodes:
            raise ScmError(f"unknown node {j!r}")
        streams = dict(scm.noise_streams)
        streams[j] = int(fresh_seed)
        return replace(scm, noise_streams=streams)
    raise ScmError(f"unsupported model type {type(scm).__name__}")


def exact_joint(scm: GeneralScm, max_combos: int = 1 << 16):
    """Exact joint of a finite general SCM by enumerating noise assignments.

    Returns (joint over value indices, levels) where levels maps each node
    to its sorted tuple of attainable values. Requires every noise to have
    finite support and the support product to stay at or below
    ``max_combos``.
    """
    supports = {}
    combos = 1
    for v in scm.nodes:
        atoms, probs = scm.noises[v].support()
        supports[v] = (atoms, probs)
        combos *= len(atoms)
    if combos > max_combos:
        raise ScmError(
            f"noise support product {combos} exceeds enumeration cap {max_combos}")
    order = scm.graph().topological_order()
    weights: dict[tuple, float] = {}
    atom_lists = [supports[v][0] for v in scm.nodes]
    prob_lists = [supports[v][1] for v in scm.nodes]
    for combo in itertools.product(*(range(len(a)) for a in atom_lists)):
        w = 1.0
        for k, idx in enumerate(combo):
            w *= prob_lists[k][idx]
        if w == 0.0:
            continue
        noise_row = {v: atom_lists[k][combo[k]] for k, v in enumerate(scm.nodes)}
        state: dict[str, float] = {}
        for v in order:
            pa = {p: state[p] for p in scm.parents[v]}
            state[v] = scm.mechanisms[v](pa, noise_row[v])
        key = tuple(state[v] for v in scm.nodes)
        weights[key] = weights.get(key, 0.0) + w
    levels = {
        v: tuple(sorted({key[k] for key in weights}))
        for k, v in enumerate(scm.nodes)
    }
    from .tables import DiscreteJoint  # local import to avoid a cycle

    shape = tuple(len(levels[v]) for v in scm.nodes)
    table = np.zeros(shape)
    index = {v: {val: i for i, val in enumerate(levels[v])} for v in scm.nodes}
    for key, w in weights.items():
        table[tuple(index[v][key[k]] for k, v in enumerate(scm.nodes))] += w
    return DiscreteJoint(scm.nodes, table), levels
