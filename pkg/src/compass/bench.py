"""Synthetic analytical datasets and the evaluation metrics built on them.

Ten registered closed-form performance models provide noise-free ground
truth; the suites pose recommend queries against surrogates trained on their
samples and score the answers with APE and penalized MAPE (reconstruction
error plus the violated-constraint fraction).
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import constraints as C
from . import data as D
from .config import EngineConfig
from .errors import MetricUndefined, UnknownModel
from .generator import Query, generate
from .rng import make_rng
from .surrogate import train_select
from .trust import build_index

APE_FLOOR = 1e-8


def ape(actual: float, forecast: float) -> float:
    """Absolute percentage error with the 1e-8 denominator floor."""
    return abs(actual - forecast) / max(abs(actual), APE_FLOOR) * 100.0


@dataclass(frozen=True)
class AnalyticalModel:
    name: str
    feature_names: tuple
    default_n: int
    sampler: object  # (rng, n) -> {feature: array}
    evaluator: object  # ({feature: array}) -> array of y
    target: str = "y"

    def generate(self, n: int | None = None, seed: int = 0) -> dict:
        rng = make_rng(seed, "model", self.name)
        cols = self.sampler(rng, n or self.default_n)
        cols[self.target] = self.evaluator(cols)
        return cols

    def truth(self, config: dict) -> float:
        cols = {k: np.array([float(config[k])]) for k in self.feature_names}
        return float(self.evaluator(cols)[0])


def _log_uniform_int(lo, hi):
    def sample(rng, n):
        return np.floor(np.exp(rng.uniform(np.log(lo), np.log(hi + 1), n))).clip(lo, hi)

    return sample


def _p_sampler(lo=64, hi=131072):
    f = _log_uniform_int(lo, hi)
    return lambda rng, n: {"p": f(rng, n)}


def _intensity_sampler(lo=0.25, hi=1024.0):
    return lambda rng, n: {"I": np.exp(rng.uniform(np.log(lo), np.log(hi), n))}


def _hoefler_sampler(rng, n):
    return {
        "p_x": rng.integers(2, 65, n).astype(np.float64),
        "p_y": rng.integers(2, 65, n).astype(np.float64),
        "n_sweep": rng.integers(1, 33, n).astype(np.float64),
    }


def _linear_sampler(rng, n):
    return {f"X{j}": rng.normal(size=n) for j in range(1, 16)}


_T_MSG = 1e-6

REGISTRY = {
    m.name: m
    for m in [
        AnalyticalModel(
            "milc", ("p",), 4749, _p_sampler(),
            lambda c: 6.3e-6 * np.log2(c["p"]),
        ),
        AnalyticalModel(
            "homme_small", ("p",), 4749, _p_sampler(),
            lambda c: 0.026 + 2.53e-6 * np.sqrt(c["p"]) + 1.24e-12 * c["p"] ** 3,
        ),
        AnalyticalModel(
            "homme_large", ("p",), 4749, _p_sampler(),
            lambda c: 2.60e-2 * np.sqrt(c["p"]) + 1.17e-12 * c["p"] ** 3,
        ),
        AnalyticalModel(
            "vlaplace", ("p",), 4749, _p_sampler(),
            lambda c: 0.034 + 1.33e-10 * c["p"] ** 2,
        ),
        AnalyticalModel(
            "sweep3d", ("p",), 4749, _p_sampler(),
            lambda c: 1.0e-6 * np.sqrt(c["p"]),
        ),
        AnalyticalModel(
            "hoefler", ("p_x", "p_y", "n_sweep"), 6174, _hoefler_sampler,
            lambda c: (2.0 * (c["p_x"] + c["p_y"] - 2.0) + 4.0 * (c["n_sweep"] - 1.0)) * _T_MSG,
        ),
        AnalyticalModel(
            "roofline", ("I",), 10000, _intensity_sampler(),
            lambda c: np.minimum(1e12, 5e10 * c["I"]),
        ),
        AnalyticalModel(
            "amdahl", ("p",), 7287, _p_sampler(lo=1),
            lambda c: 1.0 / (0.1 + 0.9 / c["p"]),
        ),
        AnalyticalModel(
            "gpu_roofline", ("I",), 10000, _intensity_sampler(),
            lambda c: c["I"] / (1.0 / 8e10 + 1.0 / 2e12),
        ),
        AnalyticalModel(
            "basic_linear", tuple(f"X{j}" for j in range(1, 16)), 6000, _linear_sampler,
            lambda c: 2.0 * c["X14"] - 1.5 * c["X8"] + 0.5 * c["X6"],
        ),
    ]
}


def get_model(name: str) -> AnalyticalModel:
    if name not in REGISTRY:
        raise UnknownModel(f"unknown analytical model: {name} (have {sorted(REGISTRY)})")
    return REGISTRY[name]


def generate_model_dataset(model_name: str, n: int | None = None, seed: int = 0) -> str:
    """Samples a model's input space; returns CSV text usable for ingestion."""
    model = get_model(model_name)
    cols = model.generate(n, seed)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = list(model.feature_names) + [model.target]
    writer.writerow(names)
    for i in range(len(cols[model.target])):
        writer.writerow([repr(float(cols[name][i])) for name in names])
    return buf.getvalue()


def ingest_model(model_name: str, n: int | None = None, seed: int = 0, config=None) -> D.DatasetHandle:
    model = get_model(model_name)
    hints = {"columns": [{"name": model.target, "role": "target"}]}
    return D.ingest(generate_model_dataset(model_name, n, seed).encode(), hints, seed=seed, config=config)


@dataclass
class EvalReport:
    per_query: list  # {diff_norm, penalty_norm, penalized}
    mean: float
    ci95: float
    ape_list: list = field(default_factory=list)

    @property
    def ape_min(self):
        return min(self.ape_list) if self.ape_list else None

    @property
    def ape_mean(self):
        return sum(self.ape_list) / len(self.ape_list) if self.ape_list else None

    def to_json(self) -> dict:
        return {
            "per_query": self.per_query,
            "mean_penalized_mape": self.mean,
            "ci95": self.ci95,
            "ape": {"values": self.ape_list, "min": self.ape_min, "mean": self.ape_mean},
        }

    def to_table(self) -> str:
        lines = [f"{'query':>6} {'diff_norm':>12} {'penalty':>10} {'penalized':>12}"]
        for i, q in enumerate(self.per_query):
            lines.append(
                f"{i:>6} {q['diff_norm']:>12.6f} {q['penalty_norm']:>10.4f} {q['penalized']:>12.6f}"
            )
        lines.append(f"mean penalized MAPE = {self.mean:.6f} +/- {self.ci95:.6f} (95% CI)")
        if self.ape_list:
            lines.append(f"APE min = {self.ape_min:.4f}%  mean = {self.ape_mean:.4f}%")
        return "\n".join(lines)


def _aggregate_report(per_query, ape_list=None) -> EvalReport:
    vals = np.array([q["penalized"] for q in per_query], dtype=np.float64)
    mean = float(vals.mean()) if len(vals) else 0.0
    ci = float(1.96 * vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return EvalReport(per_query=per_query, mean=mean, ci95=ci, ape_list=list(ape_list or []))


def penalized_mape(generated, truths, masked_fields, cset: C.ConstraintSet, schema) -> EvalReport:
    """Reconstruction error on masked fields plus violated-constraint fraction.

    generated / truths / masked_fields line up per query; masked numeric
    fields score |gen - truth| / max(|truth|, 1e-8), categorical mismatches
    score 1, and the two report terms add.
    """
    per_query = []
    for gen, truth, masked in zip(generated, truths, masked_fields):
        if not masked:
            raise MetricUndefined("masked field set is empty")
        diffs = []
        for name in masked:
            spec = schema.column(name)
            if spec.kind == D.NUMERIC:
                g, t = float(gen[name]), float(truth[name])
                diffs.append(abs(g - t) / max(abs(t), APE_FLOOR))
            else:
                diffs.append(0.0 if str(gen[name]) == str(truth[name]) else 1.0)
        diff_norm = float(np.mean(diffs))
        _, violated = C.violation(cset, gen, schema)
        penalty_norm = len(violated) / max(len(cset.items), 1)
        per_query.append(
            {"diff_norm": diff_norm, "penalty_norm": penalty_norm, "penalized": diff_norm + penalty_norm}
        )
    return _aggregate_report(per_query)


@dataclass
class MaskingProtocol:
    n_queries: int = 20
    mask_groups: tuple = ()  # tuple of field tuples, rotated per query
    epsilon: float = 0.01  # half-width of the requested target range
    constraints: C.ConstraintSet = field(default_factory=C.ConstraintSet)
    magnitude_quantile: float = 0.5  # avoid near-zero truth in relative error
    num_candidates: int = 100
    gamma: int = 5


def reconstruction_suite(handle, bundle, protocol: MaskingProtocol, seed: int = 0,
                         config: EngineConfig | None = None, sink: list | None = None) -> EvalReport:
    """Mask held-out fields, pose matching recommend queries, score top-1."""
    config = config or EngineConfig()
    index = build_index(handle, bundle, config)
    rng = make_rng(seed, "reconstruction")
    target_specs = handle.schema.target_columns

    feature_names = handle.schema.feature_names
    generated, truths, masks = [], [], []
    for qi in range(protocol.n_queries):
        masked = list(protocol.mask_groups[qi % len(protocol.mask_groups)])
        score_fields = masked or feature_names  # identity query: hide nothing, score everything
        row = _pick_eval_row(handle, masked, protocol.magnitude_quantile, rng)
        targets = []
        for spec in target_specs:
            value = row[spec.name]
            if spec.target_task == "classification":
                targets.append({"target": spec.name, "objective": {"class": str(value)}})
            else:
                delta = max(protocol.epsilon * abs(float(value)), 1e-9)
                targets.append(
                    {"target": spec.name, "objective": {"range": [float(value) - delta, float(value) + delta]}}
                )
        assignments = {}
        for spec in handle.schema.feature_columns:
            if spec.name in masked:
                assignments[spec.name] = "?"
            else:
                assignments[spec.name] = {"value": row[spec.name]}
        doc = {
            "kind": "recommend",
            "targets": targets,
            "assignments": assignments,
            "constraints": protocol.constraints.to_json(),
            "gamma": protocol.gamma,
            "n": protocol.num_candidates,
            "seed": int(rng.integers(0, 2**31)),
        }
        result = generate(Query.from_json(doc, handle.schema), handle, bundle, config, trust_index=index)
        if sink is not None:
            sink.append(result)
        generated.append(result.top[0].config)
        truths.append(row)
        masks.append(score_fields)

    return penalized_mape(generated, truths, masks, protocol.constraints, handle.schema)


def recommend_accuracy_suite(model_name: str, n_queries: int = 10, seed: int = 0,
                             n_rows: int | None = None, config: EngineConfig | None = None,
                             num_candidates: int = 100, sink: list | None = None) -> EvalReport:
    """Per-model validation: recommend toward observed outcomes, score the
    top-1 answer's analytical truth against its predicted outcome with APE."""
    config = config or EngineConfig()
    model = get_model(model_name)
    handle = ingest_model(model_name, n_rows, seed, config)
    bundle = train_select(handle, seed=seed, config=config)
    index = build_index(handle, bundle, config)
    rng = make_rng(seed, "accuracy", model_name)

    apes = []
    per_query = []
    for _ in range(n_queries):
        row = _pick_eval_row(handle, [], 0.0, rng)
        y = float(row[model.target])
        delta = max(0.01 * abs(y), 1e-12)
        doc = {
            "kind": "recommend",
            "targets": [{"target": model.target, "objective": {"range": [y - delta, y + delta]}}],
            "assignments": {name: "?" for name in model.feature_names},
            "gamma": 3,
            "n": num_candidates,
            "seed": int(rng.integers(0, 2**31)),
        }
        result = generate(Query.from_json(doc, handle.schema), handle, bundle, config, trust_index=index)
        if sink is not None:
            sink.append(result)
        top = result.top[0]
        actual = model.truth(top.config)
        forecast = float(top.prediction[0])
        a = ape(actual, forecast)
        apes.append(a)
        per_query.append({"diff_norm": a / 100.0, "penalty_norm": 0.0, "penalized": a / 100.0})
    return _aggregate_report(per_query, apes)


def _pick_eval_row(handle, masked_numeric_fields, magnitude_quantile, rng) -> dict:
    """Seeded validation-row pick, preferring rows with non-tiny masked values."""
    table = handle.validation if len(handle.validation) else handle.train
    candidates = np.arange(len(table))
    if magnitude_quantile > 0:
        keep = np.ones(len(table), dtype=bool)
        for name in masked_numeric_fields:
            spec = handle.schema.column(name)
            if spec.kind != D.NUMERIC:
                continue
            col = np.abs(table.columns[name])
            keep &= col >= np.quantile(col, magnitude_quantile)
        if keep.any():
            candidates = candidates[keep]
    pos = int(candidates[int(rng.integers(0, len(candidates)))])
    row_id = int(table.row_ids[pos])
    return handle.raw_row(row_id, table)
