"""Machine checks of the package's formal guarantees on randomized exact
instances.

Three verifiers are provided, each producing replayable trial records:

* identifiability -- for a full-rank strictly positive p(x, y), replacing
  the marginal of x while keeping p(y|x) must change both the marginal of
  y and the backward conditional p(x|y).
* embedding Markov -- when elementary actions are driven by controller
  variables, the exact joint over (controllers, system) must satisfy the
  Markov condition of the combined graph.
* boundary consistency -- a single-factor perturbation, pushed through
  marginalization onto a graphically causally sufficient subset, changes
  at most one factor of the marginal model; on the side, backdoor sets of
  the marginal graph must reproduce interventional marginals computed by
  truncated factorization in the full graph.

Failures are treated as implementation bugs (the statements are theorems);
every record carries the integer seed that regenerates its instance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exemplars import Exemplar
from .graphs import (Dag, CycleError, backdoor_admissible,
                     is_graphically_causally_sufficient, marginal_dag,
                     random_dag)
from .scm import GeneralScm, NoiseSpec, exact_joint
from .tables import (ConditionalTable, DiscreteJoint, changed_factors,
                     hard_intervention, markov_report, product_joint,
                     soft_intervention, tv_distance)

__all__ = [
    "TrialRecord",
    "VerificationReport",
    "verify_identifiability",
    "ControllerSpec",
    "build_embedding",
    "urn2_controllers",
    "verify_embedding_markov",
    "verify_boundary_consistency",
    "random_markov_joint",
    "random_conditional",
    "random_sufficient_subset",
    "SuiteConfig",
    "randomized_suite",
    "proposition_trial",
    "boundary_trial",
    "embedding_trial",
]


@dataclass(frozen=True)
class TrialRecord:
    kind: str
    index: int
    seed: int
    ok: bool
    details: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {"kind": self.kind, "index": self.index, "seed": self.seed,
                "ok": self.ok, "details": self.details}


@dataclass(frozen=True)
class VerificationReport:
    name: str
    records: tuple[TrialRecord, ...]
    extras: dict = field(default_factory=dict)

    @property
    def trials(self) -> int:
        return len(self.records)

    @property
    def failures(self) -> tuple[TrialRecord, ...]:
        return tuple(r for r in self.records if not r.ok)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_json_obj(self) -> dict:
        return {
            "name": self.name,
            "trials": self.trials,
            "passed": self.passed,
            "failures": [r.to_json_obj() for r in self.failures],
            "records": [r.to_json_obj() for r in self.records],
            "extras": self.extras,
        }

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: {self.trials} trials, "
                f"{len(self.failures)} failures")


# ---------------------------------------------------------------------------
# Identifiability via changes
# ---------------------------------------------------------------------------


def verify_identifiability(p_xy: DiscreteJoint, new_marginal: np.ndarray,
                           tol: float = 1e-3, floor: float = 1e-12,
                           index: int = 0, seed: int = 0) -> TrialRecord:
    """Check that replacing p(x) (keeping p(y|x)) moves p(y) and p(x|y).

    Precondition failures (non-square, non-positive, rank-deficient) yield
    an ok record of kind "identifiability-rejected" rather than a result.
    """
    if len(p_xy.names) != 2 or p_xy.cards[0] != p_xy.cards[1]:
        return TrialRecord("identifiability-rejected", index, seed, True,
                           {"reason": "needs a square two-variable table"})
    m = p_xy.probs
    if m.min() <= 0.0:
        return TrialRecord("identifiability-rejected", index, seed, True,
                           {"reason": "not strictly positive"})
    sv = np.linalg.svd(m, compute_uv=False)
    if sv.min() <= 1e-10:
        return TrialRecord("identifiability-rejected", index, seed, True,
                           {"reason": "rank-deficient", "min_sv": float(sv.min())})
    new_marginal = np.asarray(new_marginal, dtype=float)
    px = m.sum(axis=1)
    tv_x = 0.5 * float(np.abs(new_marginal - px).sum())
    # tilde p(x, y) = tilde p(x) p(y | x)
    tilde = new_marginal[:, None] * (m / px[:, None])
    tv_y = 0.5 * float(np.abs(tilde.sum(axis=0) - m.sum(axis=0)).sum())
    back_old = m / m.sum(axis=0, keepdims=True)
    back_new = tilde / tilde.sum(axis=0, keepdims=True)
    tv_back = 0.5 * float(np.abs(back_new - back_old).sum(axis=0).max())
    ok = True
    if tv_x > tol:
        ok = tv_y > floor and tv_back > floor
    return TrialRecord("identifiability", index, seed, ok,
                       {"tv_x": tv_x, "tv_y": tv_y, "tv_x_given_y": tv_back})


# ---------------------------------------------------------------------------
# Embedding construction (actions driven by controller variables)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControllerSpec:
    """Controller variables and which action classes they drive.

    ``controls`` maps an action-class label to (controller parents, fn)
    where fn maps the tuple of controller values to the NoiseSpec of the
    class tally under that setting. ``observers`` adds downstream variables
    influenced by system nodes.
    """

    dag: Dag
    noises: dict[str, NoiseSpec]
    mechanisms: dict[str, Callable] = field(default_factory=dict)
    controls: dict[str, tuple[tuple[str, ...], Callable]] = field(default_factory=dict)
    observers: dict[str, tuple[tuple[str, ...], Callable, NoiseSpec]] = field(
        default_factory=dict)


def _controller_ranges(spec: ControllerSpec) -> dict[str, tuple]:
    ranges: dict[str, tuple] = {}
    for y in spec.dag.topological_order():
        mech = spec.mechanisms.get(y, lambda pa, nz: nz)
        atoms, _ = spec.noises[y].support()
        values = set()
        parent_ranges = [ranges[p] for p in spec.dag.parents(y)]
        for combo in itertools.product(*parent_ranges) if parent_ranges else [()]:
            pa = dict(zip(spec.dag.parents(y), combo))
            for a in atoms:
                values.add(mech(pa, a))
        ranges[y] = tuple(sorted(values))
    return ranges


def build_embedding(exemplar: Exemplar,
                    controllers: ControllerSpec) -> tuple[GeneralScm, Dag]:
    """Joint SCM over (controllers, system) plus the combined graph.

    An edge runs from a controller to the node whose action class it
    drives; the class tally of a controlled node becomes a vector noise
    with one independent component per controller context, and the
    mechanism picks the component matching its controller parents. The
    combined edge set must be acyclic.
    """
    base = exemplar.scm
    if base is None:
        raise ValueError(f"exemplar {exemplar.name!r} has no unit-level system")
    class_nodes: dict[str, str] = exemplar.notes["class_nodes"]

    # assemble the combined edge set first so that cyclic wiring is
    # reported as such before any range enumeration
    edges = list(controllers.dag.edges) + list(exemplar.ground_truth.edges)
    extra_parents: dict[str, tuple[str, ...]] = {}
    for label, (ctrl_parents, _fn) in controllers.controls.items():
        if label not in class_nodes:
            raise ValueError(f"unknown action class {label!r}")
        target = class_nodes[label]
        if target in extra_parents:
            raise ValueError(f"node {target!r} controlled by two classes")
        edges.extend((y, target) for y in ctrl_parents)
        extra_parents[target] = tuple(ctrl_parents)
    for obs, (x_parents, _mech, _noise) in controllers.observers.items():
        edges.extend((x, obs) for x in x_parents)

    nodes = (tuple(controllers.dag.nodes) + tuple(base.nodes)
             + tuple(controllers.observers))
    try:
        gtilde = Dag(nodes, set(edges))
    except CycleError as exc:
        raise CycleError(f"combined controller/system graph is cyclic: {exc}")

    ranges = _controller_ranges(controllers)
    context_specs: dict[str, tuple[tuple, tuple[NoiseSpec, ...]]] = {}
    for label, (ctrl_parents, fn) in controllers.controls.items():
        outside = [y for y in ctrl_parents if y not in ranges]
        if outside:
            raise ValueError(
                f"class {label!r} is driven by {outside}, which are not pure "
                "controller variables with enumerable ranges")
        contexts = tuple(itertools.product(*(ranges[y] for y in ctrl_parents)))
        context_specs[class_nodes[label]] = (
            contexts, tuple(fn(*ctx) for ctx in contexts))

    parents: dict[str, tuple[str, ...]] = {}
    mechanisms: dict[str, Callable] = {}
    noises: dict[str, NoiseSpec] = {}
    for y in controllers.dag.nodes:
        parents[y] = controllers.dag.parents(y)
        mechanisms[y] = controllers.mechanisms.get(y, lambda pa, nz: nz)
        noises[y] = controllers.noises[y]
    for v in base.nodes:
        base_parents = base.parents[v]
        if v in extra_parents:
            ctrl = extra_parents[v]
            contexts, specs = context_specs[v]
            atom_sets = [spec.support() for spec in specs]
            atoms = tuple(itertools.product(*(s[0] for s in atom_sets)))
            probs = tuple(
                float(np.prod(combo))
                for combo in itertools.product(*(s[1] for s in atom_sets)))
            ctx_index = {ctx: i for i, ctx in enumerate(contexts)}
            parents[v] = base_parents + ctrl

            def mech(pa, atom, base_mech=base.mechanisms[v], ctrl=ctrl,
                     ctx_index=ctx_index, base_parents=base_parents):
                ctx = tuple(pa[y] for y in ctrl)
                noise = atom[ctx_index[ctx]]
                return base_mech({p: pa[p] for p in base_parents}, noise)

            mechanisms[v] = mech
            noises[v] = NoiseSpec.finite(atoms, probs)
        else:
            parents[v] = base_parents
            mechanisms[v] = base.mechanisms[v]
            noises[v] = base.noises[v]
    for obs, (x_parents, mech, noise) in controllers.observers.items():
        parents[obs] = tuple(x_parents)
        mechanisms[obs] = mech
        noises[obs] = noise

    scm = GeneralScm(nodes=nodes, parents=parents, mechanisms=mechanisms,
                     noises=noises)
    return scm, gtilde


def urn2_controllers(rounds: int, base_biases: Sequence[float],
                     shifted_biases: Sequence[float],
                     p_y1: float = 0.5, p_y2: float = 0.5) -> ControllerSpec:
    """Two independent binary controllers: Y1 switches the A1 coin biases,
    Y2 the A2 coin biases, between the base and shifted settings."""
    b = tuple(float(v) for v in base_biases)
    s = tuple(float(v) for v in shifted_biases)

    def a1_spec(y1):
        pp, pm = (b[0], b[1]) if y1 == 0 else (s[0], s[1])
        return NoiseSpec.binomdiff(rounds, pp, pm)

    def a2_spec(y2):
        pp, pm = (b[2], b[3]) if y2 == 0 else (s[2], s[3])
        return NoiseSpec.binomdiff(rounds, pp, pm)

    return ControllerSpec(
        dag=Dag(("Y1", "Y2")),
        noises={"Y1": NoiseSpec.finite((0.0, 1.0), (1 - p_y1, p_y1)),
                "Y2": NoiseSpec.finite((0.0, 1.0), (1 - p_y2, p_y2))},
        controls={"A1": (("Y1",), a1_spec), "A2": (("Y2",), a2_spec)},
    )


def verify_embedding_markov(scm: GeneralScm, gtilde: Dag, eps: float = 1e-12,
                            max_combos: int = 1 << 16, index: int = 0,
                            seed: int = 0) -> TrialRecord:
    """Exactly enumerate the embedding's joint and check Markovness."""
    joint, _levels = exact_joint(scm, max_combos=max_combos)
    ok, triple, worst = markov_report(joint, gtilde, eps=eps)
    details = {"worst_residual": worst, "states": int(joint.probs.size)}
    if triple is not None:
        a, bt, c = triple
        details["worst_independence"] = f"{list(a)} _||_ {list(bt)} | {list(c)}"
    return TrialRecord("embedding-markov", index, seed, ok, details)


# ---------------------------------------------------------------------------
# Boundary consistency
# ---------------------------------------------------------------------------


def blocking_descendants(g: Dag, j: str, s: Sequence[str]) -> tuple[str, ...]:
    """Members of ``s`` reachable from ``j`` by directed paths avoiding
    ``s`` internally; for sufficient ``s`` and j outside it there is at
    most one, and it blocks every path from j into ``s``."""
    s_set = set(s)
    hits = set()
    stack = [j]
    seen = {j}
    while stack:
        for ch in g.children(stack.pop()):
            if ch in s_set:
                hits.add(ch)
            elif ch not in seen:
                seen.add(ch)
                stack.append(ch)
    return g.sorted_tuple(hits)


def verify_boundary_consistency(g: Dag, p: DiscreteJoint, j_perturbed: str,
                                new_factor: ConditionalTable, s: Sequence[str],
                                eps: float = 1e-9, index: int = 0,
                                seed: int = 0) -> TrialRecord:
    """Perturb one factor, marginalize onto a sufficient subset, and check
    that at most one marginal factor changed -- the perturbed node itself
    when it survives marginalization, otherwise its unique blocking
    descendant inside the subset."""
    if not is_graphically_causally_sufficient(g, s):
        return TrialRecord("boundary-rejected", index, seed, True,
                           {"reason": "subset not causally sufficient"})
    p_tilde = soft_intervention(p, g, j_perturbed, new_factor)
    s_nodes = g.sorted_tuple(s)
    gs = marginal_dag(g, s_nodes)
    ps = p.marginal(s_nodes)
    ps_tilde = p_tilde.marginal(s_nodes)
    changed = changed_factors(ps, ps_tilde, gs, eps)
    if j_perturbed in s_nodes:
        expected: tuple[str, ...] = (j_perturbed,)
        unique_blocker = True
    else:
        expected = blocking_descendants(g, j_perturbed, s_nodes)
        unique_blocker = len(expected) <= 1
    ok = len(changed) <= 1 and set(changed) <= set(expected) and unique_blocker
    details = {
        "perturbed": j_perturbed,
        "subset": list(s_nodes),
        "changed": list(changed),
        "expected_at_most": list(expected),
        "unique_blocker": unique_blocker,
        "tv_full": tv_distance(p, p_tilde),
        "tv_marginal": tv_distance(ps, ps_tilde),
    }
    return TrialRecord("boundary", index, seed, ok, details)


def check_backdoor_preservation(g: Dag, p: DiscreteJoint, s: Sequence[str],
                                x: str, y: str, z: Sequence[str],
                                eps: float = 1e-9) -> tuple[bool, dict]:
    """If z is backdoor-admissible for (x, y) in the marginal graph, it must
    be admissible in the full graph and the adjustment on the marginal
    distribution must match truncated factorization in the full model."""
    s_nodes = g.sorted_tuple(s)
    gs = marginal_dag(g, s_nodes)
    z = gs.sorted_tuple(z)
    if not backdoor_admissible(gs, x, y, z):
        return True, {"skipped": "z not admissible in marginal graph"}
    inherited = backdoor_admissible(g, x, y, z)
    ps = p.marginal(s_nodes)
    x_card = ps.cards[ps.axis(x)]
    worst = 0.0
    for v in range(x_card):
        do_full = hard_intervention(p, g, x, v).marginal((y,)).probs
        adj = _adjustment(ps, x, y, z, v)
        worst = max(worst, float(np.abs(do_full - adj).max()))
    ok = inherited and worst <= eps
    return ok, {"x": x, "y": y, "z": list(z), "admissible_in_full": inherited,
                "max_dev": worst}


def _adjustment(ps: DiscreteJoint, x: str, y: str, z: Sequence[str],
                v: int) -> np.ndarray:
    """Backdoor adjustment sum_z p(y | x=v, z) p(z) on an exact table."""
    names = (x, *z, y)
    sub = ps.marginal(names).permute(names)
    t = sub.probs[v]  # axes: (*z, y)
    if z:
        pz = ps.marginal(z).permute(tuple(z)).probs
        ctx = t.sum(axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(ctx[..., None] > 0, t / ctx[..., None], 0.0)
        return (cond * pz[..., None]).reshape(-1, t.shape[-1]).sum(axis=0)
    total = t.sum()
    return t / total if total > 0 else t


# ---------------------------------------------------------------------------
# Random instance generators
# ---------------------------------------------------------------------------


def random_conditional(g: Dag, node: str, cards: dict[str, int],
                       rng: np.random.Generator,
                       uniform_mix: float = 1e-3) -> ConditionalTable:
    """Random strictly positive conditional table for ``node`` given its
    parents: uniform-mixed so every entry is bounded away from zero."""
    pa = g.parents(node)
    shape = tuple(cards[p] for p in pa) + (cards[node],)
    raw = rng.random(shape) + 0.05
    raw = raw / raw.sum(axis=-1, keepdims=True)
    table = (1.0 - uniform_mix) * raw + uniform_mix / cards[node]
    return ConditionalTable(node, pa, table)


def random_markov_joint(g: Dag, cards: dict[str, int],
                        rng: np.random.Generator,
                        uniform_mix: float = 1e-3) -> DiscreteJoint:
    """Strictly positive joint that factorizes exactly over ``g``.

    Positivity is enforced factor by factor (mixing each conditional with
    the uniform one), which keeps the product exactly Markov.
    """
    factors = [random_conditional(g, v, cards, rng, uniform_mix) for v in g.nodes]
    return product_joint(g, factors)


def random_sufficient_subset(g: Dag, rng: np.random.Generator,
                             max_tries: int = 200) -> tuple[str, ...]:
    """Rejection-sample a proper graphically causally sufficient subset;
    falls back to the full node set (always sufficient)."""
    nodes = list(g.nodes)
    for _ in range(max_tries):
        keep = [v for v in nodes if rng.random() < 0.6]
        if not keep or len(keep) == len(nodes):
            continue
        if is_graphically_causally_sufficient(g, keep):
            return g.sorted_tuple(keep)
    return tuple(nodes)


# ---------------------------------------------------------------------------
# Randomized suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SuiteConfig:
    proposition_trials: int = 1000
    boundary_trials: int = 500
    embedding_trials: int = 3
    max_nodes: int = 6
    marginal_tv_min: float = 1e-3
    floor: float = 1e-12
    eps: float = 1e-9
    urn_rounds: int = 3
    max_combos: int = 1 << 16


def _spawn_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])


def proposition_trial(trial_seed: int, tol: float = 1e-3,
                      floor: float = 1e-12, index: int = 0) -> TrialRecord:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(trial_seed)))
    k = int(rng.integers(2, 5))
    for _ in range(100):
        m = rng.random((k, k)) + 0.05
        m = m / m.sum()
        if m.min() > 0 and np.linalg.svd(m, compute_uv=False).min() > 1e-10:
            break
    p = DiscreteJoint(("X", "Y"), m)
    px = m.sum(axis=1)
    for _ in range(100):
        raw = rng.random(k) + 0.05
        new_marginal = raw / raw.sum()
        if 0.5 * np.abs(new_marginal - px).sum() > tol:
            break
    return verify_identifiability(p, new_marginal, tol=tol, floor=floor,
                                  index=index, seed=trial_seed)


def boundary_trial(trial_seed: int, max_nodes: int = 6, eps: float = 1e-9,
                   index: int = 0) -> TrialRecord:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(trial_seed)))
    n = int(rng.integers(3, max_nodes + 1))
    g = random_dag([f"X{i+1}" for i in range(n)], rng, edge_prob=0.5)
    cards = {v: 2 for v in g.nodes}
    p = random_markov_joint(g, cards, rng)
    j = g.nodes[int(rng.integers(n))]
    new_factor = random_conditional(g, j, cards, rng)
    s = random_sufficient_subset(g, rng)
    record = verify_boundary_consistency(g, p, j, new_factor, s, eps=eps,
                                         index=index, seed=trial_seed)
    # Backdoor preservation side check on the same instance.
    s_nodes = g.sorted_tuple(s)
    if len(s_nodes) >= 2 and record.ok:
        idx = rng.permutation(len(s_nodes))[:2]
        x, y = s_nodes[idx[0]], s_nodes[idx[1]]
        rest = [v for v in s_nodes if v not in (x, y)]
        z = tuple(v for v in rest if rng.random() < 0.5)
        ok_bd, bd = check_backdoor_preservation(g, p, s_nodes, x, y, z, eps=eps)
        details = dict(record.details)
        details["backdoor"] = bd
        record = TrialRecord(record.kind, record.index, record.seed,
                             record.ok and ok_bd, details)
    return record


def embedding_trial(trial_seed: int, rounds: int = 3,
                    max_combos: int = 1 << 16, index: int = 0) -> TrialRecord:
    from .exemplars import urn_bivariate

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(trial_seed)))
    base = tuple(rng.uniform(0.2, 0.8, size=4))
    shifted = tuple(np.clip(np.asarray(base) + rng.uniform(-0.15, 0.15, size=4),
                            0.05, 0.95))
    ex = urn_bivariate(kb0=4 * rounds, kr0=4 * rounds, rounds=rounds,
                       coin_biases=base)
    spec = urn2_controllers(rounds, base, shifted,
                            p_y1=float(rng.uniform(0.3, 0.7)),
                            p_y2=float(rng.uniform(0.3, 0.7)))
    scm, gtilde = build_embedding(ex, spec)
    return verify_embedding_markov(scm, gtilde, eps=1e-12,
                                   max_combos=max_combos, index=index,
                                   seed=trial_seed)


def _run_trials(fn: Callable, args: list[tuple], jobs: int) -> list[TrialRecord]:
    if jobs <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    import concurrent.futures

    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        records = list(pool.map(_TrialCall(fn), args, chunksize=8))
    return sorted(records, key=lambda r: r.index)


class _TrialCall:
    """Picklable wrapper so trial functions can run in worker processes."""

    def __init__(self, fn: Callable):
        self.fn = fn

    def __call__(self, args: tuple) -> TrialRecord:
        return self.fn(*args)


def randomized_suite(config: SuiteConfig = SuiteConfig(),
                     seed: int = 0,
                     which: str = "all",
                     jobs: int = 1) -> dict[str, VerificationReport]:
    """Run the selected verifier suites; every record replays from its seed.

    ``jobs > 1`` distributes trials over worker processes; trials are pure
    functions of their spawned seeds, so the aggregated report is identical
    to the serial one.
    """
    out: dict[str, VerificationReport] = {}
    if which in ("prop1", "all"):
        records = _run_trials(
            proposition_trial,
            [(_spawn_seed(seed, 0, i), config.marginal_tv_min, config.floor, i)
             for i in range(config.proposition_trials)], jobs)
        out["prop1"] = VerificationReport("identifiability-via-changes",
                                          tuple(records))
    if which in ("boundary", "all"):
        records = _run_trials(
            boundary_trial,
            [(_spawn_seed(seed, 1, i), config.max_nodes, config.eps, i)
             for i in range(config.boundary_trials)], jobs)
        out["boundary"] = VerificationReport("boundary-consistency",
                                             tuple(records))
    if which in ("embedding", "all"):
        records = _run_trials(
            embedding_trial,
            [(_spawn_seed(seed, 2, i), config.urn_rounds, config.max_combos, i)
             for i in range(config.embedding_trials)], jobs)
        out["embedding"] = VerificationReport("embedding-markov", tuple(records))
    if not out:
        raise ValueError(f"unknown suite selector {which!r}")
    return out
