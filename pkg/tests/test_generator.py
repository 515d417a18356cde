import json

import numpy as np
import pytest

from compass import data
from compass.errors import QueryError
from compass.generator import (
    Objective,
    Query,
    ResolvedClass,
    diversity_score,
    generate,
    objective_to_range,
    proximity_loss,
    validity_loss,
)
from conftest import JOBS_HINTS, fast_config


# -- loss-term identities --------------------------------------------------------


def test_hinge_inside_range_is_zero():
    assert validity_loss(5.0, Objective("range", 4.0, 6.0)) == 0.0


def test_hinge_above_range():
    assert validity_loss(7.0, Objective("range", 4.0, 6.0)) == 1.0


def test_hinge_below_range():
    assert validity_loss(2.5, Objective("range", 4.0, 6.0)) == pytest.approx(1.5)


def test_hinge_one_sided():
    assert validity_loss(3.0, Objective("range", None, 10.0)) == 0.0
    assert validity_loss(12.0, Objective("range", None, 10.0)) == pytest.approx(2.0)
    assert validity_loss(3.0, Objective("range", 5.0, None)) == pytest.approx(2.0)


def test_class_margin_zero_when_target_ranked_first():
    scores = np.array([0.3, 0.7])
    assert validity_loss(scores, ResolvedClass("class", label="b", class_index=1)) == 0.0


def test_class_margin_positive_when_beaten():
    scores = np.array([0.6, 0.4])
    assert validity_loss(scores, ResolvedClass("class", label="b", class_index=1)) == pytest.approx(0.2)


def test_proximity_identity():
    num = np.array([True, True, False])
    z = np.array([0.5, -1.0, 2.0])
    assert proximity_loss(z, z, np.ones(3), num) == 0.0


def test_proximity_two_std_move():
    num = np.array([True, True, False])
    a = np.array([0.0, 0.0, 1.0])
    b = np.array([2.0, 0.0, 1.0])
    assert proximity_loss(a, b, np.ones(3), num) == pytest.approx(2.0)


def test_proximity_categorical_flip_counts_one():
    num = np.array([True, False])
    a = np.array([0.0, 0.0])
    b = np.array([0.0, 1.0])
    assert proximity_loss(a, b, np.ones(2), num) == 1.0


def test_proximity_weights_apply():
    num = np.array([True])
    assert proximity_loss(np.array([1.0]), np.array([0.0]), np.array([3.0]), num) == 3.0


def test_diversity_identical_candidates():
    num = np.array([True, True])
    Z = np.zeros((4, 2))
    assert diversity_score(Z, num) == 0.0


def test_diversity_single_pair():
    num = np.array([True, True])
    Z = np.array([[0.0, 0.0], [3.0, 0.0]])
    assert diversity_score(Z, num) == pytest.approx(3.0)


def test_diversity_mean_of_pairs():
    # three points on a line at 0, 1, 3: pairwise distances 1, 3, 2 -> mean 2
    num = np.array([True])
    Z = np.array([[0.0], [1.0], [3.0]])
    assert diversity_score(Z, num) == pytest.approx(2.0)


def test_diversity_single_candidate_zero():
    assert diversity_score(np.array([[1.0, 2.0]]), np.array([True, True])) == 0.0


# -- objective resolution ---------------------------------------------------------


def test_range_passthrough():
    obj = objective_to_range(Objective("range", 4.0, 6.0))
    assert (obj.lo, obj.hi) == (4.0, 6.0)


def test_minimize_resolves_to_low_quantile():
    observed = np.arange(1.0, 101.0)
    obj = objective_to_range(Objective("minimize"), observed, percentile=0.05)
    expected = float(np.quantile(observed, 0.05))  # sorting-based oracle
    assert obj.lo is None
    assert obj.hi == expected


def test_maximize_resolves_to_high_quantile():
    observed = np.arange(1.0, 101.0)
    obj = objective_to_range(Objective("maximize"), observed, percentile=0.05)
    assert obj.hi is None
    assert obj.lo == float(np.quantile(observed, 0.95))


def test_reduce_by_ten_percent_range():
    # "reduce the baseline's 200 by 10%" expressed as a one-sided range
    baseline_value = 200.0
    obj = Objective("range", None, baseline_value * 0.9)
    assert validity_loss(180.0, obj) == 0.0
    assert validity_loss(185.0, obj) == pytest.approx(5.0)


# -- query validation -------------------------------------------------------------


def q_doc(**over):
    doc = {
        "kind": "recommend",
        "targets": [{"target": "runtime", "objective": "minimize"}],
        "assignments": {"num_gpus": "?"},
        "gamma": 2,
        "n": 20,
        "seed": 3,
    }
    doc.update(over)
    return doc


def test_recommend_forbids_baseline(jobs_handle):
    with pytest.raises(QueryError, match="baseline"):
        Query.from_json(q_doc(baseline_row=1), jobs_handle.schema)


def test_reconfigure_requires_baseline(jobs_handle):
    with pytest.raises(QueryError, match="baseline"):
        Query.from_json(q_doc(kind="reconfigure"), jobs_handle.schema)


def test_what_if_requires_concrete_transition(jobs_handle):
    doc = q_doc(kind="what_if", baseline_row=0, assignments={"num_gpus": "?"}, targets=[])
    with pytest.raises(QueryError, match="transition"):
        Query.from_json(doc, jobs_handle.schema)


def test_unknown_target_rejected(jobs_handle):
    with pytest.raises(QueryError, match="target"):
        Query.from_json(q_doc(targets=[{"target": "nope", "objective": "minimize"}]), jobs_handle.schema)


def test_assignment_must_name_feature(jobs_handle):
    with pytest.raises(QueryError, match="assignment"):
        Query.from_json(q_doc(assignments={"runtime": "?"}), jobs_handle.schema)


def test_query_json_roundtrip(jobs_handle):
    doc = q_doc(
        kind="reconfigure",
        baseline_row=4,
        assignments={"num_gpus": {"from": 4, "to": "?"}, "num_nodes": {"value": 2}},
        constraints=[{"feature": "num_gpus", "op": "<=", "coef": 4, "rhs_feature": "num_nodes"}],
    )
    q = Query.from_json(doc, jobs_handle.schema)
    again = Query.from_json(q.to_json(), jobs_handle.schema)
    assert again == q


# -- generate: recommend -----------------------------------------------------------


@pytest.fixture(scope="module")
def env():
    cfg = fast_config()
    handle = data.ingest(__import__("conftest").jobs_csv(), JOBS_HINTS, seed=11)
    from compass.surrogate import train_select
    from compass.trust import build_index

    bundle = train_select(handle, seed=11, config=cfg)
    index = build_index(handle, bundle, cfg)
    return cfg, handle, bundle, index


def test_recommend_end_to_end(env):
    cfg, handle, bundle, index = env
    doc = q_doc(targets=[{"target": "runtime", "objective": {"range": [5.0, 9.0]}}],
                assignments={"num_gpus": "?", "num_nodes": "?"})
    result = generate(Query.from_json(doc, handle.schema), handle, bundle, cfg, trust_index=index)
    assert not result.target_unmet
    assert len(result.top) == 2
    top = result.top[0]
    assert top.loss_terms["valid"] == 0.0
    assert 5.0 <= top.prediction[0] <= 9.0
    assert top.trust is not None and top.trust.label in ("trusted", "caution", "unsupported")


def test_loss_decomposition_identity(env):
    cfg, handle, bundle, index = env
    doc = q_doc(targets=[{"target": "runtime", "objective": {"range": [5.0, 9.0]}}],
                assignments={"num_gpus": "?", "num_nodes": "?"},
                lambdas={"valid": 2.0, "prox": 0.5, "cons": 1.5, "div": 0.25})
    result = generate(Query.from_json(doc, handle.schema), handle, bundle, cfg, trust_index=index)
    for cand in result.candidates:
        t = cand.loss_terms
        expected = 2.0 * t["valid"] + 0.5 * t["prox"] + 1.5 * t["cons"] - 0.25 * t["div"]
        assert cand.total_loss == pytest.approx(expected, abs=1e-9)


def test_fixed_features_bit_identical(env):
    cfg, handle, bundle, index = env
    doc = q_doc(assignments={"num_gpus": "?"})  # num_nodes and job_state stay baseline
    result = generate(Query.from_json(doc, handle.schema), handle, bundle, cfg, trust_index=index)
    for cand in result.candidates:
        assert cand.config["num_nodes"] == result.baseline["num_nodes"]
        assert cand.config["job_state"] == result.baseline["job_state"]


def test_pinned_value_respected(env):
    cfg, handle, bundle, index = env
    doc = q_doc(assignments={"num_gpus": "?", "num_nodes": {"value": 5}})
    result = generate(Query.from_json(doc, handle.schema), handle, bundle, cfg, trust_index=index)
    for cand in result.candidates:
        assert cand.config["num_nodes"] == pytest.approx(5.0)


def test_seed_determinism_and_worker_order_independence(env):
    cfg, handle, bundle, index = env
    import copy

    doc = q_doc(targets=[{"target": "runtime", "objective": {"range": [5.0, 9.0]}}],
                assignments={"num_gpus": "?", "num_nodes": "?"})
    a = generate(Query.from_json(doc, handle.schema), handle, bundle, cfg, trust_index=index)
    b = generate(Query.from_json(doc, handle.schema), handle, bundle, cfg, trust_index=index)
    serial_cfg = copy.deepcopy(cfg)
    serial_cfg.generator.parallel = False
    c = generate(Query.from_json(doc, handle.schema), handle, bundle, serial_cfg, trust_index=index)
    ja = json.dumps(a.to_json(include_all=True), sort_keys=True)
    assert ja == json.dumps(b.to_json(include_all=True), sort_keys=True)
    assert ja == json.dumps(c.to_json(include_all=True), sort_keys=True)
    doc2 = dict(doc, seed=4)
    d = generate(Query.from_json(doc2, handle.schema), handle, bundle, cfg, trust_index=index)
    assert json.dumps(d.to_json(), sort_keys=True) != json.dumps(a.to_json(), sort_keys=True)


def test_candidates_unique_after_dedup(env):
    cfg, handle, bundle, index = env
    doc = q_doc(assignments={"num_gpus": "?", "num_nodes": "?"}, n=50)
    result = generate(Query.from_json(doc, handle.schema), handle, bundle, cfg, trust_index=index)
    keys = [tuple(sorted(c.config.items())) for c in result.candidates]
    assert len(keys) == len(set(keys))


def test_recommend_baseline_satisfies_constraints(env):
    cfg, handle, bundle, index = env
    doc = q_doc(constraints=[{"feature": "job_state", "op": "==", "value": "completed"}])
    result = generate(Query.from_json(doc, handle.schema), handle, bundle, cfg, trust_index=index)
    assert result.baseline["job_state"] == "completed"
    train_ids = set(int(r) for r in handle.train.row_ids)
    assert result.baseline_row in train_ids


def test_impossible_target_flags_unmet(env):
    cfg, handle, bundle, index = env
    doc = q_doc(targets=[{"target": "runtime", "objective": {"range": [-500.0, -400.0]}}],
                assignments={"num_gpus": "?", "num_nodes": "?"})
    result = generate(Query.from_json(doc, handle.schema), handle, bundle, cfg, trust_index=index)
    assert result.target_unmet
    assert len(result.candidates) > 0  # best-effort set, not a failure


def test_constraint_dominance_in_answer(env):
    cfg, handle, bundle, index = env
    doc = q_doc(
        targets=[{"target": "runtime", "objective": {"range": [5.0, 12.0]}}],
        assignments={"num_gpus": "?", "num_nodes": "?"},
        constraints=[{"feature": "num_gpus", "op": "<=", "coef": 4, "rhs_feature": "num_nodes"}],
        gamma=3,
    )
    result = generate(Query.from_json(doc, handle.schema), handle, bundle, cfg, trust_index=index)
    feasible_valid_exists = any(
        c.loss_terms["valid"] == 0.0 and c.loss_terms["cons"] == 0.0 for c in result.candidates
    )
    assert feasible_valid_exists
    for cand in result.top:
        assert cand.loss_terms["cons"] == 0.0
        assert cand.config["num_gpus"] <= 4 * cand.config["num_nodes"] + 1e-9


# -- generate: reconfigure / what_if ------------------------------------------------


def _a_baseline_row(handle):
    return int(handle.train.row_ids[0])


def test_reconfigure_moves_only_searched_fields(env):
    cfg, handle, bundle, index = env
    row_id = _a_baseline_row(handle)
    base = handle.raw_row(row_id)
    doc = q_doc(
        kind="reconfigure",
        baseline_row=row_id,
        targets=[{"target": "runtime", "objective": {"range": [0.0, base["runtime"] * 0.9]}}],
        assignments={"num_gpus": {"from": base["num_gpus"], "to": "?"}},
    )
    result = generate(Query.from_json(doc, handle.schema), handle, bundle, cfg, trust_index=index)
    for cand in result.candidates:
        assert cand.config["num_nodes"] == base["num_nodes"]
        assert cand.config["job_state"] == base["job_state"]
    assert result.baseline_row == row_id


def test_what_if_fast_path(env):
    cfg, handle, bundle, index = env
    row_id = _a_baseline_row(handle)
    base = handle.raw_row(row_id)
    new_gpus = base["num_gpus"] + 4
    doc = {
        "kind": "what_if",
        "targets": [],
        "assignments": {"num_gpus": {"from": base["num_gpus"], "to": new_gpus}},
        "baseline_row": row_id,
        "seed": 1,
    }
    result = generate(Query.from_json(doc, handle.schema), handle, bundle, cfg, trust_index=index)
    assert len(result.candidates) == 1
    cand = result.candidates[0]
    assert cand.config["num_gpus"] == new_gpus
    assert cand.config["num_nodes"] == base["num_nodes"]
    assert cand.trust is not None
    assert result.deltas() is not None and len(result.deltas()) == 1
    # forward semantics: delta equals prediction difference against the baseline
    assert result.deltas()[0] == pytest.approx(cand.prediction[0] - result.baseline_prediction[0])


def test_what_if_transition_pins_are_exact(env):
    cfg, handle, bundle, index = env
    row_id = _a_baseline_row(handle)
    doc = {
        "kind": "what_if",
        "targets": [],
        "assignments": {"job_state": {"from": "completed", "to": "failed"}},
        "baseline_row": row_id,
        "seed": 1,
    }
    result = generate(Query.from_json(doc, handle.schema), handle, bundle, cfg, trust_index=index)
    assert result.candidates[0].config["job_state"] == "failed"
