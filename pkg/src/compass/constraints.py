"""Constraint language over configurations: evaluation, penalties, filtering.

JSON grammar (one object per item):

    {"feature": "num_gpus_req", "op": "<=", "coef": 4, "rhs_feature": "num_nodes_req"}
    {"feature": "num_nodes_req", "op": ">=", "value": 1}
    {"feature": "mem_alloc", "op": "==", "coef": 1, "rhs_feature": "mem_req"}
    {"feature": "job_state", "op": "==", "value": "completed"}

Numeric bound/inequality penalties are the violation magnitude divided by the
feature's observed range; equality and categorical penalties count 1.
Penalties are evaluated in raw feature space.
"""

from dataclasses import dataclass

import numpy as np

from .data import CATEGORICAL, FeatureSchema, Table
from .errors import SchemaError

BOUND_LOWER = "bound_lower"
BOUND_UPPER = "bound_upper"
EQUALITY_CONST = "equality_const"
EQUALITY_LINEAR = "equality_linear"
INEQUALITY_LINEAR = "inequality_linear"
CATEGORICAL_EQUALS = "categorical_equals"

_TOL = 1e-9
_RANGE_FLOOR = 1e-8


@dataclass(frozen=True)
class Constraint:
    kind: str
    lhs: str
    op: str = ""
    value: object = None
    coef: float = 1.0
    rhs_feature: str | None = None
    offset: float = 0.0
    penalty_scale: float = 1.0

    def to_json(self) -> dict:
        out = {"feature": self.lhs, "op": self.op}
        if self.rhs_feature is not None:
            out["coef"] = self.coef
            out["rhs_feature"] = self.rhs_feature
            if self.offset:
                out["offset"] = self.offset
        else:
            out["value"] = self.value
        if self.penalty_scale != 1.0:
            out["penalty_scale"] = self.penalty_scale
        return out


@dataclass(frozen=True)
class ConstraintSet:
    items: tuple = ()

    def __len__(self) -> int:
        return len(self.items)

    def to_json(self) -> list:
        return [c.to_json() for c in self.items]


def parse_constraints(doc, schema: FeatureSchema | None = None) -> ConstraintSet:
    """Build a ConstraintSet from the JSON grammar, validating column names."""
    items = []
    for entry in doc or []:
        lhs = entry["feature"]
        op = entry["op"]
        scale = float(entry.get("penalty_scale", 1.0))
        if schema is not None:
            schema.column(lhs)
        if "rhs_feature" in entry:
            rhs = entry["rhs_feature"]
            if schema is not None:
                rhs_spec = schema.column(rhs)
                if schema.column(lhs).kind == CATEGORICAL or rhs_spec.kind == CATEGORICAL:
                    raise SchemaError(f"linear constraint on categorical column: {lhs} / {rhs}")
            kind = EQUALITY_LINEAR if op == "==" else INEQUALITY_LINEAR
            if op not in ("==", "<=", ">="):
                raise SchemaError(f"unsupported linear op: {op}")
            items.append(
                Constraint(kind, lhs, op, None, float(entry.get("coef", 1.0)), rhs, float(entry.get("offset", 0.0)), scale)
            )
            continue
        value = entry["value"]
        is_cat = schema is not None and schema.column(lhs).kind == CATEGORICAL
        if isinstance(value, str) or is_cat:
            if op != "==":
                raise SchemaError(f"categorical constraint supports only ==, got {op}")
            items.append(Constraint(CATEGORICAL_EQUALS, lhs, op, str(value), penalty_scale=scale))
        elif op == "==":
            items.append(Constraint(EQUALITY_CONST, lhs, op, float(value), penalty_scale=scale))
        elif op == ">=":
            items.append(Constraint(BOUND_LOWER, lhs, op, float(value), penalty_scale=scale))
        elif op == "<=":
            items.append(Constraint(BOUND_UPPER, lhs, op, float(value), penalty_scale=scale))
        else:
            raise SchemaError(f"unsupported op: {op}")
    return ConstraintSet(tuple(items))


def _feature_range(schema: FeatureSchema, name: str) -> float:
    spec = schema.column(name)
    span = spec.vmax - spec.vmin
    return span if span > _RANGE_FLOOR else _RANGE_FLOOR


def _item_penalty(item: Constraint, x: dict, schema: FeatureSchema):
    """Returns the penalty for one item, or None when x lacks its columns."""
    if item.lhs not in x:
        return None
    if item.kind == CATEGORICAL_EQUALS:
        return 0.0 if str(x[item.lhs]) == item.value else item.penalty_scale

    lhs = float(x[item.lhs])
    if item.rhs_feature is not None:
        if item.rhs_feature not in x:
            return None
        target = item.coef * float(x[item.rhs_feature]) + item.offset
    else:
        target = float(item.value)

    norm = _feature_range(schema, item.lhs)
    if item.kind in (EQUALITY_CONST, EQUALITY_LINEAR):
        return 0.0 if abs(lhs - target) / norm <= _TOL else item.penalty_scale
    if item.kind in (BOUND_LOWER,) or (item.kind == INEQUALITY_LINEAR and item.op == ">="):
        excess = (target - lhs) / norm
    else:  # upper bound / <=
        excess = (lhs - target) / norm
    return item.penalty_scale * excess if excess > _TOL else 0.0


def violation(cset: ConstraintSet, x: dict, schema: FeatureSchema):
    """Total penalty and the indices of violated items at configuration x.

    Items whose referenced columns are absent from x (e.g. target columns
    during candidate evaluation) are skipped.
    """
    phi = 0.0
    violated = []
    for k, item in enumerate(cset.items):
        p = _item_penalty(item, x, schema)
        if p:
            phi += p
            violated.append(k)
    return phi, violated


def satisfied_matrix(cset: ConstraintSet, table: Table, schema: FeatureSchema) -> np.ndarray:
    """Boolean (n_rows, n_items); raw-space evaluation over a whole table."""
    n = len(table)
    out = np.ones((n, len(cset.items)), dtype=bool)
    for k, item in enumerate(cset.items):
        spec = schema.column(item.lhs)
        col = table.columns[item.lhs]
        if item.kind == CATEGORICAL_EQUALS:
            try:
                code = spec.categories.index(item.value)
            except ValueError:
                out[:, k] = False
                continue
            out[:, k] = col == code
            continue
        lhs = col.astype(np.float64)
        if item.rhs_feature is not None:
            target = item.coef * table.columns[item.rhs_feature].astype(np.float64) + item.offset
        else:
            target = float(item.value)
        norm = _feature_range(schema, item.lhs)
        if item.kind in (EQUALITY_CONST, EQUALITY_LINEAR):
            out[:, k] = np.abs(lhs - target) / norm <= _TOL
        elif item.kind == BOUND_LOWER or (item.kind == INEQUALITY_LINEAR and item.op == ">="):
            out[:, k] = (target - lhs) / norm <= _TOL
        else:
            out[:, k] = (lhs - target) / norm <= _TOL
    return out


def filter(handle, cset: ConstraintSet, which: str = "all"):
    """Row ids satisfying every item, plus the max-satisfied fallback list."""
    tables = {
        "train": [handle.train],
        "validation": [handle.validation],
        "all": [handle.train, handle.validation],
    }[which]
    ids, counts = [], []
    for t in tables:
        sat = satisfied_matrix(cset, t, handle.schema)
        ids.append(t.row_ids)
        counts.append(sat.sum(axis=1))
    row_ids = np.concatenate(ids)
    n_sat = np.concatenate(counts)
    order = np.argsort(row_ids)
    row_ids, n_sat = row_ids[order], n_sat[order]
    primary = row_ids[n_sat == len(cset.items)]
    fallback = row_ids[n_sat == n_sat.max()] if len(row_ids) else row_ids
    return [int(r) for r in primary], [int(r) for r in fallback]
