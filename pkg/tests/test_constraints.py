import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compass import constraints as C
from compass import data
from compass.errors import SchemaError
from conftest import JOBS_HINTS, jobs_csv


@pytest.fixture(scope="module")
def handle():
    return data.ingest(jobs_csv(), JOBS_HINTS, seed=11)


GPU_RULE = [{"feature": "num_gpus", "op": "<=", "coef": 4, "rhs_feature": "num_nodes"}]
COMPLETED = [{"feature": "job_state", "op": "==", "value": "completed"}]


def test_linear_inequality_satisfied(handle):
    cset = C.parse_constraints(GPU_RULE, handle.schema)
    phi, violated = C.violation(cset, {"num_gpus": 16, "num_nodes": 4}, handle.schema)
    assert phi == 0.0
    assert violated == []


def test_linear_inequality_violated(handle):
    cset = C.parse_constraints(GPU_RULE, handle.schema)
    phi, violated = C.violation(cset, {"num_gpus": 20, "num_nodes": 4}, handle.schema)
    assert phi > 0.0
    assert violated == [0]
    # range-normalized magnitude: 4 over the observed num_gpus span
    spec = handle.schema.column("num_gpus")
    assert phi == pytest.approx(4.0 / (spec.vmax - spec.vmin))


def test_empty_set_always_zero(handle):
    cset = C.ConstraintSet()
    for row in ({"num_gpus": -5}, {"num_nodes": 1e9}, {}):
        assert C.violation(cset, row, handle.schema) == (0.0, [])


def test_categorical_penalty_counts_one(handle):
    cset = C.parse_constraints(COMPLETED, handle.schema)
    phi, _ = C.violation(cset, {"job_state": "failed"}, handle.schema)
    assert phi == 1.0


def test_equality_linear_counts_one(handle):
    doc = [{"feature": "num_gpus", "op": "==", "coef": 1, "rhs_feature": "num_nodes"}]
    cset = C.parse_constraints(doc, handle.schema)
    assert C.violation(cset, {"num_gpus": 4, "num_nodes": 4}, handle.schema)[0] == 0.0
    assert C.violation(cset, {"num_gpus": 5, "num_nodes": 4}, handle.schema)[0] == 1.0


def test_bounds(handle):
    doc = [
        {"feature": "num_nodes", "op": ">=", "value": 1},
        {"feature": "num_gpus", "op": "<=", "value": 32},
    ]
    cset = C.parse_constraints(doc, handle.schema)
    assert C.violation(cset, {"num_nodes": 1, "num_gpus": 32}, handle.schema)[0] == 0.0
    phi, violated = C.violation(cset, {"num_nodes": 0, "num_gpus": 40}, handle.schema)
    assert violated == [0, 1]
    assert phi > 0


def test_penalty_scale_multiplies(handle):
    doc = [{"feature": "num_nodes", "op": ">=", "value": 1, "penalty_scale": 3.0}]
    cset = C.parse_constraints(doc, handle.schema)
    base = C.parse_constraints([{"feature": "num_nodes", "op": ">=", "value": 1}], handle.schema)
    x = {"num_nodes": 0}
    assert C.violation(cset, x, handle.schema)[0] == pytest.approx(
        3.0 * C.violation(base, x, handle.schema)[0]
    )


def test_items_missing_columns_skipped(handle):
    cset = C.parse_constraints(GPU_RULE, handle.schema)
    # candidate configurations never carry target columns
    assert C.violation(cset, {"num_nodes": 2}, handle.schema) == (0.0, [])


def test_parse_rejects_unknown_feature(handle):
    with pytest.raises(SchemaError):
        C.parse_constraints([{"feature": "nope", "op": ">=", "value": 0}], handle.schema)
    with pytest.raises(SchemaError):
        C.parse_constraints(
            [{"feature": "job_state", "op": "<=", "value": "completed"}], handle.schema
        )


def test_json_roundtrip(handle):
    doc = GPU_RULE + COMPLETED + [{"feature": "num_nodes", "op": ">=", "value": 1}]
    cset = C.parse_constraints(doc, handle.schema)
    again = C.parse_constraints(cset.to_json(), handle.schema)
    assert again == cset


def test_filter_categorical(handle):
    cset = C.parse_constraints(COMPLETED, handle.schema)
    primary, fallback = C.filter(handle, cset)
    code = handle.schema.column("job_state").categories.index("completed")
    for row_id in primary:
        assert handle.raw_row(row_id)["job_state"] == "completed"
    n_completed = sum(
        int((t.columns["job_state"] == code).sum()) for t in (handle.train, handle.validation)
    )
    assert len(primary) == n_completed
    assert fallback == primary  # all items satisfiable


def test_filter_no_constraints_returns_all(handle):
    primary, fallback = C.filter(handle, C.ConstraintSet())
    n = len(handle.train) + len(handle.validation)
    assert len(primary) == n == len(fallback)


def test_filter_unsatisfiable_falls_back(handle):
    doc = COMPLETED + [{"feature": "num_nodes", "op": "==", "value": -123.0}]
    cset = C.parse_constraints(doc, handle.schema)
    primary, fallback = C.filter(handle, cset)
    assert primary == []
    code = handle.schema.column("job_state").categories.index("completed")
    expected = sorted(
        int(r)
        for t in (handle.train, handle.validation)
        for r, s in zip(t.row_ids, t.columns["job_state"])
        if s == code
    )
    assert fallback == expected


def test_filter_fallback_maximality_brute_force(handle):
    doc = GPU_RULE + COMPLETED + [{"feature": "num_nodes", "op": ">=", "value": 6}]
    cset = C.parse_constraints(doc, handle.schema)
    _, fallback = C.filter(handle, cset)

    def satisfied_count(row):
        return sum(
            1
            for item, ok in zip(
                cset.items,
                [
                    row["num_gpus"] <= 4 * row["num_nodes"],
                    row["job_state"] == "completed",
                    row["num_nodes"] >= 6,
                ],
            )
            if ok
        )

    counts = {}
    for t in (handle.train, handle.validation):
        for r in t.row_ids:
            counts[int(r)] = satisfied_count(handle.raw_row(int(r)))
    best = max(counts.values())
    assert sorted(fallback) == sorted(r for r, c in counts.items() if c == best)


def test_soundness_matches_brute_force(handle):
    docs = GPU_RULE + COMPLETED + [{"feature": "num_nodes", "op": ">=", "value": 2}]
    cset = C.parse_constraints(docs, handle.schema)
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = {
            "num_gpus": float(rng.integers(-5, 50)),
            "num_nodes": float(rng.integers(-2, 12)),
            "job_state": str(rng.choice(["completed", "failed", "martian"])),
        }
        phi, violated = C.violation(cset, x, handle.schema)
        brute = [
            not (x["num_gpus"] <= 4 * x["num_nodes"] + 1e-12),
            x["job_state"] != "completed",
            not (x["num_nodes"] >= 2 - 1e-12),
        ]
        assert (phi == 0.0) == (not any(brute))
        assert violated == [k for k, v in enumerate(brute) if v]


@settings(max_examples=60, deadline=None)
@given(
    gpus=st.floats(-100, 100, allow_nan=False),
    nodes=st.floats(-100, 100, allow_nan=False),
    state=st.sampled_from(["completed", "failed", "timeout"]),
)
def test_adding_constraints_never_decreases_phi(gpus, nodes, state):
    handle = data.ingest(jobs_csv(), JOBS_HINTS, seed=11)
    x = {"num_gpus": gpus, "num_nodes": nodes, "job_state": state}
    docs = GPU_RULE + COMPLETED + [{"feature": "num_nodes", "op": ">=", "value": 1}]
    prev = 0.0
    for k in range(1, len(docs) + 1):
        cset = C.parse_constraints(docs[:k], handle.schema)
        phi, _ = C.violation(cset, x, handle.schema)
        assert phi >= prev - 1e-12
        prev = phi
