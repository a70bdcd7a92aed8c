"""Consistency-verifier tests: the identifiability statement, embedding
Markovness, boundary consistency, backdoor preservation, and suite replay
determinism."""

from __future__ import annotations

import numpy as np
import pytest

from phenocausal import (
    Dag,
    DiscreteJoint,
    NoiseSpec,
    SuiteConfig,
    build_embedding,
    random_conditional,
    random_dag,
    random_markov_joint,
    random_sufficient_subset,
    randomized_suite,
    urn2_controllers,
    urn_bivariate,
    verify_boundary_consistency,
    verify_embedding_markov,
    verify_identifiability,
)
from phenocausal.graphs import CycleError
from phenocausal.verify import (
    boundary_trial,
    check_backdoor_preservation,
    embedding_trial,
    proposition_trial,
)


# ---------------------------------------------------------------------------
# Identifiability via changes
# ---------------------------------------------------------------------------


def test_worked_example_changes_both_objects():
    p = DiscreteJoint(("X", "Y"), np.array([[0.3, 0.2], [0.1, 0.4]]))
    rec = verify_identifiability(p, np.array([0.6, 0.4]), tol=1e-3)
    assert rec.ok
    # oracle: direct Bayes-rule recomputation
    assert rec.details["tv_y"] == pytest.approx(0.04, abs=1e-12)
    assert rec.details["tv_x_given_y"] == pytest.approx(2 / 21, abs=1e-12)


def test_identity_marginal_changes_nothing():
    p = DiscreteJoint(("X", "Y"), np.array([[0.3, 0.2], [0.1, 0.4]]))
    rec = verify_identifiability(p, np.array([0.5, 0.5]), tol=1e-3)
    assert rec.ok
    assert rec.details["tv_x"] == 0.0
    assert rec.details["tv_y"] == 0.0


def test_rank_deficient_instance_rejected():
    p = DiscreteJoint(("X", "Y"), np.full((2, 2), 0.25))
    rec = verify_identifiability(p, np.array([0.7, 0.3]))
    assert rec.kind == "identifiability-rejected"
    assert rec.details["reason"] == "rank-deficient"


def test_nonpositive_instance_rejected():
    p = DiscreteJoint(("X", "Y"), np.array([[0.5, 0.0], [0.1, 0.4]]))
    rec = verify_identifiability(p, np.array([0.7, 0.3]))
    assert rec.kind == "identifiability-rejected"


def test_proposition_trials_never_fail():
    for i in range(300):
        rec = proposition_trial(4242 + i, index=i)
        assert rec.ok, rec.details


# ---------------------------------------------------------------------------
# Embedding construction and Markov check
# ---------------------------------------------------------------------------


def _embedding(rounds=3):
    base = (0.5, 0.5, 0.5, 0.5)
    shifted = (0.8, 0.2, 0.7, 0.3)
    ex = urn_bivariate(kb0=4 * rounds, kr0=4 * rounds, rounds=rounds,
                       coin_biases=base)
    return ex, urn2_controllers(rounds, base, shifted)


def test_embedding_graph_edges():
    ex, spec = _embedding()
    scm, gtilde = build_embedding(ex, spec)
    assert set(gtilde.edges) == {("Y1", "Kb"), ("Y2", "Kr"), ("Kb", "Kr")}
    assert scm.nodes == ("Y1", "Y2", "Kb", "Kr")


def test_embedding_exact_joint_markov():
    ex, spec = _embedding()
    scm, gtilde = build_embedding(ex, spec)
    rec = verify_embedding_markov(scm, gtilde, eps=1e-12)
    assert rec.ok
    assert rec.details["worst_residual"] <= 1e-12


def test_embedding_wrong_graph_fails_with_named_independence():
    ex, spec = _embedding()
    scm, gtilde = build_embedding(ex, spec)
    wrong = Dag(gtilde.nodes, [e for e in gtilde.edges if e != ("Y1", "Kb")])
    rec = verify_embedding_markov(scm, wrong, eps=1e-12)
    assert not rec.ok
    assert "Y1" in rec.details["worst_independence"]


def test_no_controllers_reduces_to_ground_truth():
    ex, _ = _embedding()
    spec = urn2_controllers(3, (0.5,) * 4, (0.5,) * 4)
    empty = type(spec)(dag=Dag(()), noises={}, controls={})
    scm, gtilde = build_embedding(ex, empty)
    assert set(gtilde.edges) == set(ex.ground_truth.edges)
    assert scm.nodes == ex.scm.nodes


def test_constant_controllers_reduce_to_exemplar_check():
    ex, _ = _embedding()
    rounds = 3
    spec = urn2_controllers(rounds, (0.5,) * 4, (0.8, 0.2, 0.7, 0.3),
                            p_y1=0.0, p_y2=0.0)  # controllers pinned to 0
    scm, gtilde = build_embedding(ex, spec)
    rec = verify_embedding_markov(scm, gtilde, eps=1e-12)
    assert rec.ok


def test_controller_chain_edge_rule():
    ex, _ = _embedding()
    spec = urn2_controllers(3, (0.5,) * 4, (0.5,) * 4)
    chained = type(spec)(
        dag=Dag(("Y1", "Y2"), [("Y1", "Y2")]),
        noises={"Y1": NoiseSpec.finite((0.0, 1.0), (0.5, 0.5)),
                "Y2": NoiseSpec.finite((0.0, 1.0), (0.5, 0.5))},
        mechanisms={"Y2": lambda pa, nz: (pa["Y1"] + nz) % 2},
        controls={"A2": (("Y1", "Y2"),
                         lambda y1, y2: NoiseSpec.binomdiff(3, 0.5, 0.5))},
    )
    _, gtilde = build_embedding(ex, chained)
    assert set(gtilde.edges) == {("Y1", "Y2"), ("Y1", "Kr"), ("Y2", "Kr"),
                                 ("Kb", "Kr")}


def test_observer_edges_and_cycle_detection():
    ex, spec = _embedding()
    with_observer = type(spec)(
        dag=spec.dag, noises=spec.noises, controls=spec.controls,
        observers={"Z": (("Kr",), lambda pa, nz: pa["Kr"] + nz,
                         NoiseSpec.finite((0.0, 1.0), (0.5, 0.5)))},
    )
    scm, gtilde = build_embedding(ex, with_observer)
    assert ("Kr", "Z") in gtilde.edges
    rec = verify_embedding_markov(scm, gtilde, eps=1e-12, max_combos=1 << 17)
    assert rec.ok
    # an observer feeding back into a controller's class makes a cycle
    cyclic = type(spec)(
        dag=spec.dag, noises=spec.noises,
        controls={"A1": (("Y1",), lambda y: NoiseSpec.binomdiff(3, 0.5, 0.5)),
                  "A2": (("Z",), lambda z: NoiseSpec.binomdiff(3, 0.5, 0.5))},
        observers={"Z": (("Kr",), lambda pa, nz: pa["Kr"], NoiseSpec.degenerate(0.0))},
    )
    with pytest.raises(CycleError):
        build_embedding(ex, cyclic)


def test_embedding_trials_pass():
    for i in range(3):
        assert embedding_trial(900 + i, index=i).ok


# ---------------------------------------------------------------------------
# Boundary consistency
# ---------------------------------------------------------------------------


def test_figure9_instance_changed_factor_is_x3():
    g = Dag(("X1", "X2", "X3"), [("X1", "X2"), ("X2", "X3")])
    rng = np.random.default_rng(0)
    cards = {v: 2 for v in g.nodes}
    p = random_markov_joint(g, cards, rng)
    new_factor = random_conditional(g, "X2", cards, rng)
    rec = verify_boundary_consistency(g, p, "X2", new_factor, ("X1", "X3"))
    assert rec.ok
    assert rec.details["changed"] == ["X3"]
    assert rec.details["expected_at_most"] == ["X3"]


def test_perturbing_member_of_subset_changes_its_own_factor():
    rng = np.random.default_rng(1)
    for _ in range(10):
        g = random_dag(["a", "b", "c", "d"], rng, edge_prob=0.5)
        cards = {v: 2 for v in g.nodes}
        p = random_markov_joint(g, cards, rng)
        s = random_sufficient_subset(g, rng)
        j = s[int(rng.integers(len(s)))]
        rec = verify_boundary_consistency(
            g, p, j, random_conditional(g, j, cards, rng), s)
        assert rec.ok
        assert set(rec.details["changed"]) <= {j}


def test_boundary_trials_random_batch():
    for i in range(120):
        rec = boundary_trial(31_000 + i, index=i)
        assert rec.ok, rec.details


def test_insufficient_subset_rejected_record():
    g = Dag(("X", "C", "Y"), [("C", "X"), ("C", "Y")])
    rng = np.random.default_rng(2)
    cards = {v: 2 for v in g.nodes}
    p = random_markov_joint(g, cards, rng)
    rec = verify_boundary_consistency(
        g, p, "C", random_conditional(g, "C", cards, rng), ("X", "Y"))
    assert rec.kind == "boundary-rejected"


# ---------------------------------------------------------------------------
# Backdoor preservation
# ---------------------------------------------------------------------------


def test_backdoor_adjustment_matches_truncated_factorization():
    g = Dag(("C", "X", "Y"), [("C", "X"), ("C", "Y"), ("X", "Y")])
    rng = np.random.default_rng(3)
    p = random_markov_joint(g, {v: 2 for v in g.nodes}, rng)
    ok, details = check_backdoor_preservation(g, p, g.nodes, "X", "Y", ("C",))
    assert ok
    assert details["admissible_in_full"]
    assert details["max_dev"] <= 1e-9


def test_backdoor_preservation_random_instances():
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 25:
        g = random_dag([f"v{i}" for i in range(5)], rng, edge_prob=0.5)
        p = random_markov_joint(g, {v: 2 for v in g.nodes}, rng)
        s = random_sufficient_subset(g, rng)
        if len(s) < 2:
            continue
        nodes = list(s)
        rng.shuffle(nodes)
        x, y = nodes[0], nodes[1]
        z = tuple(v for v in nodes[2:] if rng.random() < 0.5)
        ok, details = check_backdoor_preservation(g, p, s, x, y, z)
        assert ok, details
        checked += 1


# ---------------------------------------------------------------------------
# Suite aggregation and replay
# ---------------------------------------------------------------------------


def test_zero_trial_suite_is_empty_pass():
    reports = randomized_suite(SuiteConfig(proposition_trials=0,
                                           boundary_trials=0,
                                           embedding_trials=0), seed=1)
    assert all(r.passed and r.trials == 0 for r in reports.values())


def test_suite_records_replay_identically():
    config = SuiteConfig(proposition_trials=5, boundary_trials=5,
                         embedding_trials=1)
    reports = randomized_suite(config, seed=77)
    for rec in reports["boundary"].records:
        replay = boundary_trial(rec.seed, index=rec.index)
        assert replay == rec
    for rec in reports["prop1"].records:
        assert proposition_trial(rec.seed, index=rec.index) == rec


def test_suite_selector():
    out = randomized_suite(SuiteConfig(proposition_trials=3), seed=1,
                           which="prop1")
    assert set(out) == {"prop1"}
    with pytest.raises(ValueError):
        randomized_suite(SuiteConfig(), seed=1, which="nope")


def test_report_json_shape():
    reports = randomized_suite(SuiteConfig(proposition_trials=2,
                                           boundary_trials=2,
                                           embedding_trials=1), seed=5)
    obj = reports["boundary"].to_json_obj()
    assert obj["passed"] and obj["trials"] == 2
    assert len(obj["records"]) == 2
