"""Statistical structure recovery for linear non-Gaussian data.

Direction decisions follow the regression-residual independence principle:
in the true direction the residual is independent of the regressor, in the
reversed direction it is not (unless the noise is Gaussian). Independence
is measured by distance correlation on standardized values; thresholds,
when needed, come from a permutation null. Multivariate recovery is a
DirectLiNGAM-style ordering (iteratively extract the most exogenous
variable, regress it out, recurse) followed by coefficient pruning.

Mechanism-shift localization compares per-environment plug-in conditional
tables against the pooled ones; on exact joint inputs this reduces to the
exact factor-change computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.stats

from .graphs import Dag
from .scm import Dataset
from .tables import DiscreteJoint, changed_factors, factor_distance

__all__ = [
    "DiscoveryError",
    "independence_statistic",
    "permutation_threshold",
    "BivariateResult",
    "lingam_bivariate",
    "DiscoveryResult",
    "lingam_multivariate",
    "LocalizationResult",
    "localize_mechanism_change",
]

_MAX_DCOR_POINTS = 2000


class DiscoveryError(ValueError):
    """Invalid discovery request (too few samples, bad columns)."""


# ---------------------------------------------------------------------------
# Independence statistic
# ---------------------------------------------------------------------------


def _subsample(u: np.ndarray, max_points: int) -> np.ndarray:
    if u.shape[0] <= max_points:
        return u
    idx = np.linspace(0, u.shape[0] - 1, max_points).astype(int)
    return u[idx]


def _center_distances(x: np.ndarray) -> np.ndarray:
    d = np.abs(x[:, None] - x[None, :])
    return d - d.mean(axis=0, keepdims=True) - d.mean(axis=1, keepdims=True) + d.mean()


def independence_statistic(u: np.ndarray, v: np.ndarray,
                           max_points: int = _MAX_DCOR_POINTS) -> float:
    """Distance correlation between two columns, in [0, 1].

    Zero iff the (sub)sample is empirically independent under the distance
    covariance functional. Columns are standardized first, so the statistic
    is invariant under affine rescaling; constant columns yield 0. Long
    columns are strided down to ``max_points`` for the O(m^2) computation.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    if u.shape != v.shape:
        raise DiscoveryError("columns must have equal length")
    if u.size < 20:
        raise DiscoveryError("need at least 20 points")
    if u.std() == 0.0 or v.std() == 0.0:
        return 0.0
    u = _subsample((u - u.mean()) / u.std(), max_points)
    v = _subsample((v - v.mean()) / v.std(), max_points)
    a = _center_distances(u)
    b = _center_distances(v)
    dcov2 = float((a * b).mean())
    dvar_u = float((a * a).mean())
    dvar_v = float((b * b).mean())
    denom = np.sqrt(dvar_u * dvar_v)
    if denom <= 0.0:
        return 0.0
    return float(np.sqrt(max(dcov2, 0.0) / denom))


def permutation_threshold(u: np.ndarray, v: np.ndarray, n_perm: int = 199,
                          quantile: float = 0.95, seed: int = 0,
                          max_points: int = _MAX_DCOR_POINTS) -> float:
    """Null quantile of the statistic under random pairing of u and v."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    u = np.asarray(u, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    stats = [
        independence_statistic(u, rng.permutation(v), max_points=max_points)
        for _ in range(n_perm)
    ]
    return float(np.quantile(stats, quantile))


# ---------------------------------------------------------------------------
# Bivariate LiNGAM
# ---------------------------------------------------------------------------


def _ols(y: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Regress y on columns of x plus intercept; return (coefs, residual)."""
    design = np.column_stack([np.ones(x.shape[0]), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef[1:], y - design @ coef


@dataclass(frozen=True)
class BivariateResult:
    direction: str            # "x->y", "y->x", "undetermined", "degenerate"
    x: str
    y: str
    slope: float              # fitted slope of the winning direction
    confidence: float         # gap between the two dependence statistics
    diagnostics: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {"direction": self.direction, "x": self.x, "y": self.y,
                "slope": self.slope, "confidence": self.confidence,
                "diagnostics": self.diagnostics}


def lingam_bivariate(data: Dataset, x: str | None = None, y: str | None = None,
                     alpha: float = 0.05,
                     max_points: int = _MAX_DCOR_POINTS) -> BivariateResult:
    """Decide between x -> y and y -> x for a linear non-Gaussian pair.

    Both regressions are fitted; the winning direction is the one whose
    residual is more independent of its regressor. Near-Gaussian pairs
    (both residuals pass a normality test at ``alpha``) are reported as
    undetermined; an exact functional fit is reported as degenerate.
    """
    if len(data.columns) < 2:
        raise DiscoveryError("need at least two columns")
    x = x or data.columns[0]
    y = y or data.columns[1]
    u = data.column(x)
    v = data.column(y)
    if u.size < 100:
        raise DiscoveryError("need at least 100 samples")
    if u.std() == 0.0 or v.std() == 0.0:
        return BivariateResult("degenerate", x, y, 0.0, 0.0,
                               {"reason": "constant column"})
    slope_xy, resid_xy = _ols(v, u[:, None])   # y on x
    slope_yx, resid_yx = _ols(u, v[:, None])   # x on y
    tiny = 1e-12
    if resid_xy.std() <= tiny * v.std() or resid_yx.std() <= tiny * u.std():
        return BivariateResult(
            "degenerate", x, y, float(slope_xy[0]), 0.0,
            {"reason": "zero-noise functional relation"})
    stat_xy = independence_statistic(u, resid_xy, max_points=max_points)
    stat_yx = independence_statistic(v, resid_yx, max_points=max_points)
    p_norm_xy = float(scipy.stats.normaltest(resid_xy).pvalue)
    p_norm_yx = float(scipy.stats.normaltest(resid_yx).pvalue)
    diagnostics = {
        "stat_x_to_y": stat_xy, "stat_y_to_x": stat_yx,
        "normality_p_forward": p_norm_xy, "normality_p_backward": p_norm_yx,
        "n": int(u.size),
    }
    if p_norm_xy > alpha and p_norm_yx > alpha:
        return BivariateResult("undetermined", x, y, float(slope_xy[0]),
                               abs(stat_xy - stat_yx), diagnostics)
    if stat_xy <= stat_yx:
        return BivariateResult("x->y", x, y, float(slope_xy[0]),
                               stat_yx - stat_xy, diagnostics)
    return BivariateResult("y->x", x, y, float(slope_yx[0]),
                           stat_xy - stat_yx, diagnostics)


# ---------------------------------------------------------------------------
# Multivariate DirectLiNGAM
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscoveryResult:
    dag: Dag
    matrix: np.ndarray        # [j, i] = coefficient of column i in equation j
    order: tuple[str, ...]    # estimated causal order, sources first
    scores: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        import json as _json
        return {
            "dag": _json.loads(self.dag.to_json()),
            "matrix": [[float(v) for v in row] for row in self.matrix],
            "order": list(self.order),
            "scores": self.scores,
            "metadata": self.metadata,
        }


def lingam_multivariate(data: Dataset, prune_threshold: float = 0.05,
                        alpha: float = 0.05,
                        max_points: int = _MAX_DCOR_POINTS) -> DiscoveryResult:
    """DirectLiNGAM-style recovery of a linear non-Gaussian DAG.

    Repeatedly picks the variable whose pairwise regression residuals are
    most independent of it, regresses it out of the rest, and recurses.
    Edges are then estimated by regressing each variable on all its
    predecessors and pruning standardized coefficients below
    ``prune_threshold``.
    """
    cols = data.columns
    d = len(cols)
    n = data.rows.shape[0]
    if n < 100 * d:
        raise DiscoveryError(f"need at least {100 * d} samples for {d} columns")
    work = {c: data.column(c).astype(float).copy() for c in cols}
    active = list(cols)
    order: list[str] = []
    exo_scores: dict[str, float] = {}
    while len(active) > 1:
        best, best_total = None, None
        for cand in active:
            total = 0.0
            for other in active:
                if other == cand:
                    continue
                _, resid = _ols(work[other], work[cand][:, None])
                total += independence_statistic(work[cand], resid,
                                                max_points=max_points) ** 2
            if best_total is None or total < best_total:
                best, best_total = cand, total
        order.append(best)
        exo_scores[best] = float(best_total)
        active.remove(best)
        for other in active:
            _, resid = _ols(work[other], work[best][:, None])
            work[other] = resid
    order.append(active[0])
    exo_scores[active[0]] = 0.0

    matrix = np.zeros((d, d))
    stds = {c: data.column(c).std() for c in cols}
    edges = []
    edge_scores: dict[str, float] = {}
    normality = {}
    for pos, node in enumerate(order):
        preds = order[:pos]
        yv = data.column(node)
        if preds:
            xv = np.column_stack([data.column(p) for p in preds])
            coefs, resid = _ols(yv, xv)
        else:
            coefs, resid = np.zeros(0), yv - yv.mean()
        if resid.std() > 0 and resid.size >= 20:
            normality[node] = float(scipy.stats.normaltest(resid).pvalue)
        for p, c in zip(preds, coefs):
            scale = stds[p] / stds[node] if stds[node] > 0 else 1.0
            standardized = abs(c) * scale
            if standardized >= prune_threshold:
                matrix[cols.index(node), cols.index(p)] = c
                edges.append((p, node))
                edge_scores[f"{p}->{node}"] = float(standardized)
    dag = Dag(cols, edges)
    near_gaussian = bool(normality) and all(p > alpha for p in normality.values())
    return DiscoveryResult(
        dag=dag, matrix=matrix, order=tuple(order), scores=edge_scores,
        metadata={
            "method": "direct-lingam",
            "statistic": "distance-correlation",
            "prune_threshold": prune_threshold,
            "max_points": max_points,
            "exogeneity_scores": exo_scores,
            "residual_normality_p": normality,
            "near_gaussian": near_gaussian,
            "seed": data.seed,
            "n": int(n),
        },
    )


# ---------------------------------------------------------------------------
# Mechanism-shift localization across environments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalizationResult:
    changed: tuple[str, ...]
    inconclusive: tuple[str, ...]
    distances: dict

    def to_json_obj(self) -> dict:
        return {"changed": list(self.changed),
                "inconclusive": list(self.inconclusive),
                "distances": self.distances}


def _dataset_joint(rows: np.ndarray, level_maps: list[dict]) -> DiscreteJoint:
    shape = tuple(len(m) for m in level_maps)
    counts = np.zeros(shape)
    idx = np.column_stack([
        np.asarray([m[v] for v in rows[:, k]]) for k, m in enumerate(level_maps)
    ])
    np.add.at(counts, tuple(idx.T), 1.0)
    return DiscreteJoint([f"c{k}" for k in range(len(level_maps))],
                         counts / counts.sum())


def _discretize(env_rows: list[np.ndarray], bins: int | None) -> list[np.ndarray]:
    pooled = np.vstack(env_rows)
    out = [r.copy() for r in env_rows]
    for k in range(pooled.shape[1]):
        uniques = np.unique(pooled[:, k])
        if bins is None and uniques.size <= 32:
            continue
        nbins = bins or 5
        edges = np.quantile(pooled[:, k], np.linspace(0, 1, nbins + 1)[1:-1])
        for r in out:
            r[:, k] = np.searchsorted(edges, r[:, k])
    return out


def localize_mechanism_change(environments: Sequence, g: Dag,
                              eps: float | None = None, bins: int | None = None,
                              n_perm: int = 60, quantile: float = 0.95,
                              seed: int = 0, min_effect: float = 0.02,
                              min_context_count: int = 5) -> list[LocalizationResult]:
    """Per environment, the nodes whose causal conditional differs from the
    pooled one beyond a threshold.

    Environments are Datasets sharing columns (values are discretized when
    a column takes more than 32 distinct values) or exact DiscreteJoints,
    in which case the computation is the exact factor-change one. With
    ``eps=None`` a per-node threshold is calibrated by permuting
    environment labels ``n_perm`` times and taking a Bonferroni-adjusted
    ``quantile`` of the max-over-environment factor distances; shifts
    below ``min_effect`` are additionally treated as sampling noise
    (set it to 0 to disable the floor).
    """
    if len(environments) < 2:
        raise DiscoveryError("need at least two environments")
    if all(isinstance(e, DiscreteJoint) for e in environments):
        pooled_probs = sum(e.permute(environments[0].names).probs
                           for e in environments) / len(environments)
        pooled = DiscreteJoint(environments[0].names, pooled_probs)
        thr = eps if eps is not None else 1e-9
        out = []
        for env in environments:
            changed = changed_factors(pooled, env.permute(pooled.names), g, thr)
            dists = {v: factor_distance(pooled, env.permute(pooled.names), g, v)
                     for v in g.nodes}
            out.append(LocalizationResult(changed, (), dists))
        return out

    if not all(isinstance(e, Dataset) for e in environments):
        raise DiscoveryError("environments must be all Datasets or all joints")
    columns = environments[0].columns
    if any(e.columns != columns for e in environments):
        raise DiscoveryError("environments must share columns")
    if tuple(sorted(columns)) != tuple(sorted(g.nodes)):
        raise DiscoveryError("graph nodes must match the data columns")

    env_rows = _discretize([e.rows.copy() for e in environments], bins)
    pooled_rows = np.vstack(env_rows)
    level_maps = [
        {v: i for i, v in enumerate(np.unique(pooled_rows[:, k]))}
        for k in range(pooled_rows.shape[1])
    ]

    def joint_of(rows: np.ndarray) -> DiscreteJoint:
        return DiscreteJoint(columns, _dataset_joint(rows, level_maps).probs)

    pooled = joint_of(pooled_rows)
    env_joints = [joint_of(r) for r in env_rows]

    if eps is None:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        sizes = [r.shape[0] for r in env_rows]
        null_stats = {v: [] for v in g.nodes}
        for _ in range(n_perm):
            perm = rng.permutation(pooled_rows.shape[0])
            start = 0
            worst = {v: 0.0 for v in g.nodes}
            for size in sizes:
                fake = joint_of(pooled_rows[perm[start:start + size]])
                start += size
                for v in g.nodes:
                    worst[v] = max(worst[v], factor_distance(pooled, fake, g, v))
            for v in g.nodes:
                null_stats[v].append(worst[v])
        # Bonferroni across nodes, conservative order statistic
        q_eff = 1.0 - (1.0 - quantile) / max(1, len(g.nodes))
        k = min(n_perm - 1, max(0, int(np.ceil((n_perm + 1) * q_eff)) - 1))
        thresholds = {
            v: max(float(np.sort(null_stats[v])[k]), float(min_effect))
            for v in g.nodes
        }
    else:
        thresholds = {v: float(eps) for v in g.nodes}

    out = []
    for env_joint, rows in zip(env_joints, env_rows):
        changed, inconclusive = [], []
        dists = {}
        for v in g.nodes:
            dist = factor_distance(pooled, env_joint, g, v)
            dists[v] = dist
            if dist > thresholds[v]:
                if _has_thin_context(rows, columns, g, v, level_maps,
                                     min_context_count):
                    inconclusive.append(v)
                else:
                    changed.append(v)
        out.append(LocalizationResult(tuple(changed), tuple(inconclusive),
                                      {"distances": dists,
                                       "thresholds": thresholds}))
    return out


def _has_thin_context(rows: np.ndarray, columns: tuple[str, ...], g: Dag,
                      node: str, level_maps: list[dict],
                      min_count: int) -> bool:
    pa = g.parents(node)
    if not pa:
        return rows.shape[0] < min_count
    pa_idx = [columns.index(p) for p in pa]
    combos, counts = np.unique(rows[:, pa_idx], axis=0, return_counts=True)
    # a context that appears at all but is thinly sampled
    return bool((counts < min_count).any())
