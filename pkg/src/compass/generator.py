"""Query orchestration: the four-term counterfactual loss and the population
search that minimizes it.

Per candidate x', total loss = lambda_valid * validity + lambda_prox *
proximity - lambda_div * diversity + lambda_cons * constraint penalty, where
validity is a range hinge on the surrogate prediction, proximity a weighted
L1 to the baseline in normalized space, diversity the mean mixed distance to
the rest of the population, and the constraint penalty comes from
compass.constraints. W seeded workers search independently; one aggregation
phase deduplicates, sorts, and truncates.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import constraints as C
from .config import EngineConfig
from .data import NUMERIC, DatasetHandle, denormalize, normalize
from .errors import DatasetEmpty, QueryError
from .rng import make_rng
from .surrogate import SurrogateBundle
from .trust import TrustIndex, assess_batch, build_index, distance_matrix

KINDS = ("recommend", "reconfigure", "what_if")
UNKNOWN = "?"


@dataclass(frozen=True)
class Objective:
    kind: str  # minimize | maximize | range | class
    lo: float | None = None
    hi: float | None = None
    label: str | None = None

    def to_json(self):
        if self.kind == "range":
            return {"range": [self.lo, self.hi]}
        if self.kind == "class":
            return {"class": self.label}
        return self.kind


@dataclass(frozen=True)
class Assignment:
    """pin(value) fixes a feature, search marks it mutable; transitions carry
    the baseline's old value for display but pin/search by their new value."""

    mode: str  # pin | search | transition
    value: object = None
    old: object = None

    @property
    def is_search(self) -> bool:
        return self.mode == "search" or (self.mode == "transition" and self.value is None)

    @property
    def pin_value(self):
        return None if self.is_search else self.value


@dataclass
class Query:
    kind: str
    targets: list  # [(target name, Objective)]
    user_assignments: dict  # feature -> Assignment
    constraints: C.ConstraintSet = field(default_factory=C.ConstraintSet)
    baseline_row: int | None = None
    gamma: int = 5
    num_candidates: int = 1000
    weights: tuple = (1.0, 1.0, 1.0, 1.0)  # valid, prox, cons, div
    proximity_weights: dict = field(default_factory=dict)
    seed: int = 0

    def validate(self, schema=None):
        if self.kind not in KINDS:
            raise QueryError(f"unknown query kind: {self.kind}", rule="kind")
        if self.kind == "recommend" and self.baseline_row is not None:
            raise QueryError("recommend forbids baseline_row", rule="baseline_row")
        if self.kind in ("reconfigure", "what_if") and self.baseline_row is None:
            raise QueryError(f"{self.kind} requires baseline_row", rule="baseline_row")
        if self.kind == "what_if":
            concrete = [
                a for a in self.user_assignments.values()
                if a.mode == "transition" and a.value is not None
            ]
            if not concrete:
                raise QueryError(
                    "what_if requires at least one transition with a concrete new value",
                    rule="transition",
                )
        if self.gamma < 1:
            raise QueryError("gamma must be >= 1", rule="gamma")
        if self.num_candidates < 1:
            raise QueryError("num_candidates must be >= 1", rule="num_candidates")
        if len(self.weights) != 4 or any(w < 0 for w in self.weights):
            raise QueryError("weights must be 4 non-negative reals", rule="weights")
        if self.kind != "what_if" and not self.targets:
            raise QueryError(f"{self.kind} requires at least one target objective", rule="targets")
        if schema is not None:
            target_names = set(schema.target_names)
            feature_names = set(schema.feature_names)
            for name, _ in self.targets:
                if name not in target_names:
                    raise QueryError(f"unknown target: {name}", rule="targets")
            for name in self.user_assignments:
                if name not in feature_names:
                    raise QueryError(f"assignment names non-feature column: {name}", rule="assignments")
        return self

    @classmethod
    def from_json(cls, doc: dict, schema=None) -> "Query":
        try:
            targets = [(t["target"], _objective_from_json(t.get("objective"))) for t in doc.get("targets", [])]
            assignments = {k: _assignment_from_json(v) for k, v in doc.get("assignments", {}).items()}
            lam = doc.get("lambdas", {})
            weights = (
                float(lam.get("valid", 1.0)),
                float(lam.get("prox", 1.0)),
                float(lam.get("cons", 1.0)),
                float(lam.get("div", 1.0)),
            )
            q = cls(
                kind=doc.get("kind", ""),
                targets=targets,
                user_assignments=assignments,
                constraints=C.parse_constraints(doc.get("constraints", []), schema),
                baseline_row=doc.get("baseline_row"),
                gamma=int(doc.get("gamma", 5)),
                num_candidates=int(doc.get("n", doc.get("num_candidates", 1000))),
                weights=weights,
                proximity_weights={k: float(v) for k, v in doc.get("proximity_weights", {}).items()},
                seed=int(doc.get("seed", 0)),
            )
        except QueryError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise QueryError(f"malformed query JSON: {exc}", rule="json") from exc
        return q.validate(schema)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "targets": [{"target": n, "objective": o.to_json()} for n, o in self.targets],
            "assignments": {k: _assignment_to_json(a) for k, a in self.user_assignments.items()},
            "constraints": self.constraints.to_json(),
            "baseline_row": self.baseline_row,
            "gamma": self.gamma,
            "n": self.num_candidates,
            "lambdas": {
                "valid": self.weights[0],
                "prox": self.weights[1],
                "cons": self.weights[2],
                "div": self.weights[3],
            },
            "proximity_weights": self.proximity_weights,
            "seed": self.seed,
        }


def _objective_from_json(obj) -> Objective:
    if obj in ("minimize", "maximize"):
        return Objective(obj)
    if isinstance(obj, dict) and "range" in obj:
        lo, hi = obj["range"]
        return Objective("range", lo=float(lo), hi=float(hi))
    if isinstance(obj, dict) and "class" in obj:
        return Objective("class", label=str(obj["class"]))
    raise QueryError(f"bad objective: {obj!r}", rule="objective")


def _assignment_from_json(v) -> Assignment:
    if v == UNKNOWN:
        return Assignment("search")
    if isinstance(v, dict) and "from" in v:
        to = v.get("to")
        return Assignment("transition", value=None if to == UNKNOWN else to, old=v["from"])
    if isinstance(v, dict) and "value" in v:
        return Assignment("pin", value=v["value"])
    if isinstance(v, (int, float, str)):
        return Assignment("pin", value=v)
    raise QueryError(f"bad assignment: {v!r}", rule="assignments")


def _assignment_to_json(a: Assignment):
    if a.mode == "search":
        return UNKNOWN
    if a.mode == "transition":
        return {"from": a.old, "to": UNKNOWN if a.value is None else a.value}
    return {"value": a.value}


@dataclass
class Candidate:
    config: dict
    prediction: list
    loss_terms: dict  # valid, prox, cons, div
    total_loss: float
    trust: object = None

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "prediction": self.prediction,
            "loss_terms": self.loss_terms,
            "total_loss": self.total_loss,
            "trust": self.trust.to_json() if self.trust is not None else None,
        }


@dataclass
class CandidateSet:
    candidates: list
    top_indices: list
    target_unmet: bool
    baseline: dict
    baseline_row: int | None
    baseline_prediction: list
    resolved_targets: list
    query: Query
    generations_run: int = 0
    timings: dict = field(default_factory=dict)

    @property
    def top(self) -> list:
        return [self.candidates[i] for i in self.top_indices]

    def to_json(self, include_all: bool = False) -> dict:
        out = {
            "kind": self.query.kind,
            "target_unmet": self.target_unmet,
            "baseline": self.baseline,
            "baseline_row": self.baseline_row,
            "baseline_prediction": self.baseline_prediction,
            "resolved_targets": [
                {"target": n, "objective": o.to_json()} for n, o in self.resolved_targets
            ],
            "top": [c.to_json() for c in self.top],
            "candidate_count": len(self.candidates),
            "seed": self.query.seed,
        }
        if self.query.kind == "what_if":
            out["deltas"] = self.deltas()
        if include_all:
            out["candidates"] = [c.to_json() for c in self.candidates]
        return out

    def deltas(self):
        if not self.candidates or self.baseline_prediction is None:
            return None
        new = self.candidates[self.top_indices[0]].prediction
        return [n - b for n, b in zip(new, self.baseline_prediction)]


# --- loss terms --------------------------------------------------------------


def validity_loss(prediction, objective: Objective) -> float:
    """Range hinge (regression) / top-class margin hinge (classification)."""
    if objective.kind == "class":
        scores = np.asarray(prediction, dtype=np.float64)
        target = objective.class_index if hasattr(objective, "class_index") else None
        if target is None:
            raise ValueError("class objective must be resolved to an index first")
        best_other = max(float(scores[c]) for c in range(len(scores)) if c != target)
        return max(0.0, best_other - float(scores[target]))
    f = float(prediction)
    loss = 0.0
    if objective.lo is not None:
        loss += max(0.0, objective.lo - f)
    if objective.hi is not None:
        loss += max(0.0, f - objective.hi)
    return loss


@dataclass(frozen=True)
class ResolvedClass(Objective):
    class_index: int = 0


def proximity_loss(z_candidate, z_baseline, weights, num_mask) -> float:
    """Weighted L1 over normalized numerics + weighted categorical mismatches."""
    a = np.asarray(z_candidate, dtype=np.float64)
    b = np.asarray(z_baseline, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    num = float((w[num_mask] * np.abs(a[num_mask] - b[num_mask])).sum())
    cat = float((w[~num_mask] * (a[~num_mask] != b[~num_mask])).sum())
    return num + cat


def diversity_score(encoded_candidates, num_mask) -> float:
    """Mean pairwise mixed distance; zero for a single candidate."""
    Z = np.asarray(encoded_candidates, dtype=np.float64)
    n = Z.shape[0]
    if n < 2:
        return 0.0
    D = distance_matrix(Z, Z, num_mask, ~num_mask)
    iu = np.triu_indices(n, k=1)
    return float(D[iu].mean())


def objective_to_range(
    objective: Objective,
    observed: np.ndarray | None = None,
    percentile: float = 0.05,
) -> Objective:
    """Resolve minimize/maximize into one-sided ranges over observed values."""
    if objective.kind == "range":
        return objective
    if objective.kind == "class":
        return objective
    if observed is None or len(observed) == 0:
        raise ValueError("minimize/maximize need a non-empty observed column")
    if objective.kind == "minimize":
        return Objective("range", lo=None, hi=float(np.quantile(observed, percentile)))
    if objective.kind == "maximize":
        return Objective("range", lo=float(np.quantile(observed, 1.0 - percentile)), hi=None)
    raise ValueError(f"unknown objective kind: {objective.kind}")


# --- search ------------------------------------------------------------------


@dataclass
class _SearchContext:
    handle: DatasetHandle
    bundle: SurrogateBundle
    query: Query
    z_start: np.ndarray
    num_mask: np.ndarray
    mut_num: np.ndarray  # indices of mutable numeric coords (std > 0)
    mut_cat: np.ndarray
    cat_cards: dict  # coord index -> category count
    z_lo: np.ndarray  # normalized bounds per coord (numeric)
    z_hi: np.ndarray
    prox_w: np.ndarray
    resolved: list
    pool: np.ndarray  # encoded rows used to seed populations
    cfg: EngineConfig
    deadline: float


@dataclass
class _Entry:
    key: tuple
    z: np.ndarray
    raw: dict
    pred: np.ndarray
    valid: float
    prox: float
    cons: float
    div: float
    total: float


def _round_sig(x: float, digits: int) -> float:
    if x == 0 or not math.isfinite(x):
        return 0.0 if x == 0 else x
    return round(x, digits - 1 - int(math.floor(math.log10(abs(x)))))


def _config_key(raw: dict, schema, digits: int) -> tuple:
    key = []
    for spec in schema.feature_columns:
        v = raw[spec.name]
        key.append(_round_sig(float(v), digits) if spec.kind == NUMERIC else v)
    return tuple(key)


def _predict_batch(ctx: _SearchContext, Z: np.ndarray) -> np.ndarray:
    return ctx.bundle.primary.predict(Z)


def _validity_batch(ctx: _SearchContext, preds: np.ndarray) -> np.ndarray:
    out = np.zeros(preds.shape[0])
    for name, obj in ctx.resolved:
        if obj.kind == "class":
            target = obj.class_index
            if preds.shape[1] < 2:
                continue  # single-class target: nothing can outrank it
            others = np.delete(preds, target, axis=1).max(axis=1)
            out += np.maximum(0.0, others - preds[:, target])
        else:
            col = ctx.handle.schema.target_names.index(name)
            f = preds[:, col]
            if obj.lo is not None:
                out += np.maximum(0.0, obj.lo - f)
            if obj.hi is not None:
                out += np.maximum(0.0, f - obj.hi)
    return out


def _evaluate(ctx: _SearchContext, Z: np.ndarray):
    raws = [denormalize(ctx.handle, z) for z in Z]
    preds = _predict_batch(ctx, Z)
    valid = _validity_batch(ctx, preds)
    diffs = np.abs(Z - ctx.z_start[None, :]) * ctx.prox_w[None, :]
    mism = (Z != ctx.z_start[None, :]) * ctx.prox_w[None, :]
    prox = diffs[:, ctx.num_mask].sum(axis=1) + mism[:, ~ctx.num_mask].sum(axis=1)
    cons = np.array([C.violation(ctx.query.constraints, r, ctx.handle.schema)[0] for r in raws])
    D = distance_matrix(Z, Z, ctx.num_mask, ~ctx.num_mask)
    div = D.sum(axis=1) / max(1, Z.shape[0] - 1)
    lv, lp, lc, ld = ctx.query.weights
    total = lv * valid + lp * prox + lc * cons - ld * div
    return raws, preds, valid, prox, cons, div, total


def _mutate(ctx: _SearchContext, z: np.ndarray, rng, rate: float, sigma: float) -> np.ndarray:
    out = z.copy()
    for j in ctx.mut_num:
        if rng.random() < rate:
            out[j] = float(np.clip(out[j] + rng.normal(0.0, sigma), ctx.z_lo[j], ctx.z_hi[j]))
    for j in ctx.mut_cat:
        if rng.random() < rate:
            out[j] = float(rng.integers(0, ctx.cat_cards[int(j)]))
    return out


def _anneal(sigma: float, gen: int, total: int) -> float:
    # sweep three decades from the configured scale so skewed features get
    # both coarse jumps early and fine moves late
    if total <= 1:
        return sigma
    return sigma * 10.0 ** (-3.0 * gen / (total - 1))


def _search_worker(ctx: _SearchContext, worker: int):
    cfg = ctx.cfg.generator
    rng = make_rng(ctx.query.seed, "worker", worker)
    pop_n = cfg.population
    mutable = len(ctx.mut_num) + len(ctx.mut_cat)
    archive = {}
    cap = max(2 * pop_n, math.ceil(2 * ctx.query.num_candidates / max(1, cfg.workers)))

    pop = [ctx.z_start.copy()]
    while len(pop) < pop_n:
        if len(ctx.pool) and rng.random() < 0.5:
            z = ctx.z_start.copy()
            donor = ctx.pool[int(rng.integers(0, len(ctx.pool)))]
            for j in np.concatenate([ctx.mut_num, ctx.mut_cat]).astype(np.int64):
                z[j] = donor[j]
            pop.append(_mutate(ctx, z, rng, 0.3, cfg.mutation_sigma))
        else:
            pop.append(_mutate(ctx, ctx.z_start, rng, 0.9, 2.0 * cfg.mutation_sigma))
    pop = np.array(pop)

    elite_n = max(1, int(round(cfg.elite_fraction * pop_n)))
    generations = 0
    for gen in range(cfg.generations if mutable else 1):
        raws, preds, valid, prox, cons, div, total = _evaluate(ctx, pop)
        generations = gen + 1
        for i in range(pop.shape[0]):
            key = _config_key(raws[i], ctx.handle.schema, cfg.duplicate_sig_digits)
            cur = archive.get(key)
            if cur is None or total[i] < cur.total:
                archive[key] = _Entry(
                    key, pop[i].copy(), raws[i], preds[i].copy(),
                    float(valid[i]), float(prox[i]), float(cons[i]), float(div[i]), float(total[i]),
                )
        if len(archive) > 2 * cap:
            keep = sorted(archive.values(), key=lambda e: _answer_key(ctx.query.weights, e))[:cap]
            archive = {e.key: e for e in keep}

        if gen == cfg.generations - 1 or not mutable:
            break
        if ctx.deadline and time.monotonic() > ctx.deadline:
            break

        sigma = _anneal(cfg.mutation_sigma, gen, cfg.generations)
        order = np.argsort(total, kind="stable")
        next_pop = [pop[i].copy() for i in order[:elite_n]]
        while len(next_pop) < pop_n:
            a = _tournament(order, rng, cfg.tournament_size)
            if rng.random() < cfg.crossover_rate:
                b = _tournament(order, rng, cfg.tournament_size)
                child = pop[a].copy()
                for j in np.concatenate([ctx.mut_num, ctx.mut_cat]).astype(np.int64):
                    if rng.random() < 0.5:
                        child[j] = pop[b][j]
            else:
                child = pop[a].copy()
            next_pop.append(_mutate(ctx, child, rng, cfg.mutation_rate, sigma))
        pop = np.array(next_pop)

    if len(ctx.mut_num):
        _refine_best(ctx, archive)
    entries = sorted(archive.values(), key=lambda e: _answer_key(ctx.query.weights, e))[:cap]
    return entries, generations


def _feasibility_rank(weights, valid: float, cons: float, tol: float = 1e-12) -> int:
    lv, _, lc, _ = weights
    rank = 0
    if lv > 0 and valid > tol:
        rank += 2
    if lc > 0 and cons > tol:
        rank += 1
    return rank


def _answer_key(weights, e: "_Entry"):
    # valid-and-feasible candidates always survive truncation, whatever the
    # diversity bonus does to the raw totals
    return (_feasibility_rank(weights, e.valid, e.cons), e.total, e.prox, e.key)


def _refine_best(ctx: _SearchContext, archive: dict, top_k: int = 10, rounds: int = 40):
    """Deterministic pattern search over numeric coords on selected survivors.

    Moves are ranked lexicographically: reach validity zero first, then
    constraint satisfaction, then shrink the diversity-free core loss. Steps
    double on consecutive success (fast traversal of long approaches) and
    halve on rejection (convergence into needle-thin target ranges); every
    improvement is folded back into the archive with its ordinary loss terms.
    """
    cfg = ctx.cfg.generator
    lv, lp, lc, _ = ctx.query.weights
    step_cap = 8.0 * cfg.mutation_sigma

    def search_key(valid, prox, cons):
        # descend the violation magnitude within a rank so the walk approaches
        # a not-yet-reached target instead of stalling on the proximity cost
        return (
            _feasibility_rank(ctx.query.weights, valid, cons),
            lv * valid + lc * cons,
            lv * valid + lp * prox + lc * cons,
        )

    def better(a, b):
        if a[0] != b[0]:
            return a[0] < b[0]
        if abs(a[1] - b[1]) > 1e-15:
            return a[1] < b[1]
        return a[2] < b[2] - 1e-15

    # seed both from the answer ordering and from the closest-to-valid points
    by_answer = sorted(
        archive.values(),
        key=lambda e: _answer_key(ctx.query.weights, e),
    )[: (top_k + 1) // 2]
    by_violation = sorted(
        archive.values(),
        key=lambda e: (lv * e.valid + lc * e.cons, e.prox, e.key),
    )[: top_k // 2]
    seeds, seen = [], set()
    for entry in by_answer + by_violation:
        if entry.key not in seen:
            seen.add(entry.key)
            seeds.append(entry)

    for entry in seeds:
        z = entry.z.copy()
        best = search_key(entry.valid, entry.prox, entry.cons)
        step = cfg.mutation_sigma
        streak = 0
        for _ in range(rounds):
            trials = []
            for j in ctx.mut_num:
                for sign in (1.0, -1.0):
                    z2 = z.copy()
                    z2[j] = float(np.clip(z2[j] + sign * step, ctx.z_lo[j], ctx.z_hi[j]))
                    trials.append(z2)
            raws, preds, valid, prox, cons, div, total = _evaluate(ctx, np.array(trials))
            keys = [search_key(valid[i], prox[i], cons[i]) for i in range(len(trials))]
            i = min(range(len(trials)), key=lambda k: keys[k])
            if better(keys[i], best):
                best = keys[i]
                z = trials[i]
                key = _config_key(raws[i], ctx.handle.schema, cfg.duplicate_sig_digits)
                cur = archive.get(key)
                if cur is None or total[i] < cur.total:
                    archive[key] = _Entry(
                        key, z.copy(), raws[i], preds[i].copy(),
                        float(valid[i]), float(prox[i]), float(cons[i]), float(div[i]),
                        float(total[i]),
                    )
                streak += 1
                if streak >= 2:
                    step = min(2.0 * step, step_cap)
            else:
                step /= 2.0
                streak = 0
            if ctx.deadline and time.monotonic() > ctx.deadline:
                break


def _tournament(order, rng, size: int) -> int:
    # order is ascending by loss; the smallest sampled rank wins
    ranks = rng.integers(0, len(order), size=size)
    return int(order[ranks.min()])


def generate(
    query: Query,
    handle: DatasetHandle,
    bundle: SurrogateBundle,
    config: EngineConfig | None = None,
    trust_index: TrustIndex | None = None,
) -> CandidateSet:
    """Run one query end to end and attach trust verdicts to every candidate."""
    config = config or EngineConfig()
    query.validate(handle.schema)
    cfg = config.generator

    baseline_row, baseline = _pick_baseline(query, handle)
    resolved = _resolve_targets(query, handle, cfg.minimize_percentile)

    start_raw = dict(baseline)
    for name, a in query.user_assignments.items():
        if not a.is_search:
            spec = handle.schema.column(name)
            start_raw[name] = (
                float(a.pin_value) if spec.kind == NUMERIC else str(a.pin_value)
            )

    if trust_index is None:
        trust_index = build_index(handle, bundle, config)

    z_base = normalize(handle, {k: v for k, v in baseline.items() if k in handle.feature_order})
    baseline_pred = bundle.primary.predict(z_base)

    if query.kind == "what_if":
        return _what_if(query, handle, bundle, config, trust_index, baseline_row, baseline, start_raw, resolved, baseline_pred)

    ctx = _build_context(query, handle, bundle, config, start_raw, resolved)
    worker_results = _run_workers(ctx, cfg)
    entries = _aggregate(worker_results, ctx)

    if not entries:
        raise DatasetEmpty("search produced no candidates")

    by_answer = sorted(range(len(entries)), key=lambda i: _answer_key(query.weights, entries[i]))
    top_indices = by_answer[: query.gamma]
    target_unmet = all(e.valid > 1e-12 for e in entries)

    candidates = [
        Candidate(
            config=e.raw,
            prediction=[float(v) for v in np.atleast_1d(e.pred)],
            loss_terms={"valid": e.valid, "prox": e.prox, "cons": e.cons, "div": e.div},
            total_loss=e.total,
        )
        for e in entries
    ]
    t_assess = time.monotonic()
    _attach_trust(candidates, top_indices, trust_index, bundle, config, query)

    return CandidateSet(
        candidates=candidates,
        top_indices=top_indices,
        target_unmet=target_unmet,
        baseline=baseline,
        baseline_row=baseline_row,
        baseline_prediction=[float(v) for v in np.atleast_1d(baseline_pred)],
        resolved_targets=resolved,
        query=query,
        generations_run=max(g for _, g in worker_results),
        timings={"assess_s": time.monotonic() - t_assess},
    )


def _run_workers(ctx: _SearchContext, cfg) -> list:
    workers = max(1, cfg.workers)
    if cfg.parallel and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda w: _search_worker(ctx, w), range(workers)))
    return [_search_worker(ctx, w) for w in range(workers)]


def _aggregate(worker_results: list, ctx: _SearchContext) -> list:
    merged = {}
    for w, (entries, _) in enumerate(worker_results):
        for e in entries:
            cur = merged.get(e.key)
            # deterministic keep rule, independent of worker completion order
            if cur is None or (e.total, e.prox, w) < (cur[0].total, cur[0].prox, cur[1]):
                merged[e.key] = (e, w)
    entries = [e for e, _ in merged.values()]
    entries.sort(key=lambda e: _answer_key(ctx.query.weights, e))
    entries = entries[: ctx.query.num_candidates]
    entries.sort(key=lambda e: (e.total, e.prox, e.key))  # presentation order
    return entries


def _attach_trust(candidates, top_indices, index: TrustIndex, bundle, config, query):
    # next-run suggestions are materialized only for answer-set candidates;
    # bulk candidates keep their scores and evidence
    skip = set(range(len(candidates))) - set(top_indices)
    verdicts = assess_batch(
        [c.config for c in candidates],
        index,
        bundle,
        next_run_count=config.trust.next_runs,
        next_run_bounds=_bound_map(query.constraints),
        skip_next_runs=skip,
    )
    for cand, verdict in zip(candidates, verdicts):
        cand.trust = verdict


def _what_if(query, handle, bundle, config, trust_index, baseline_row, baseline, start_raw, resolved, baseline_pred):
    z = normalize(handle, {k: v for k, v in start_raw.items() if k in handle.feature_order})
    pred = bundle.primary.predict(z)
    preds = np.atleast_2d(pred)

    ctx = _build_context(query, handle, bundle, config, start_raw, resolved, light=True)
    valid = float(_validity_batch(ctx, preds)[0]) if resolved else 0.0
    z_base = normalize(handle, {k: v for k, v in baseline.items() if k in handle.feature_order})
    prox = proximity_loss(z, z_base, ctx.prox_w, ctx.num_mask)
    cons, _ = C.violation(query.constraints, start_raw, handle.schema)
    lv, lp, lc, ld = query.weights
    cand = Candidate(
        config={k: v for k, v in start_raw.items() if k in handle.feature_order},
        prediction=[float(v) for v in np.atleast_1d(pred)],
        loss_terms={"valid": valid, "prox": prox, "cons": cons, "div": 0.0},
        total_loss=lv * valid + lp * prox + lc * cons - ld * 0.0,
    )
    cand.trust = assess_batch(
        [cand.config], trust_index, bundle,
        next_run_count=config.trust.next_runs,
        next_run_bounds=_bound_map(query.constraints),
    )[0]
    return CandidateSet(
        candidates=[cand],
        top_indices=[0],
        target_unmet=bool(resolved) and valid > 1e-12,
        baseline=baseline,
        baseline_row=baseline_row,
        baseline_prediction=[float(v) for v in np.atleast_1d(baseline_pred)],
        resolved_targets=resolved,
        query=query,
        generations_run=0,
    )


def _pick_baseline(query: Query, handle: DatasetHandle):
    if query.kind == "recommend":
        primary, fallback = C.filter(handle, query.constraints, which="train")
        pool = primary or fallback
        if not pool:
            raise DatasetEmpty("no training rows available for baseline selection")
        rng = make_rng(query.seed, "baseline")
        row_id = int(pool[int(rng.integers(0, len(pool)))])
    else:
        row_id = int(query.baseline_row)
    return row_id, handle.raw_row(row_id)


def _resolve_targets(query: Query, handle: DatasetHandle, percentile: float) -> list:
    resolved = []
    for name, obj in query.targets:
        spec = handle.schema.column(name)
        if obj.kind == "class":
            if spec.target_task != "classification":
                raise QueryError(f"class objective on regression target {name}", rule="objective")
            try:
                idx = spec.categories.index(obj.label)
            except ValueError:
                raise QueryError(f"unknown class {obj.label!r} for target {name}", rule="objective")
            resolved.append((name, ResolvedClass("class", label=obj.label, class_index=idx)))
            continue
        if spec.target_task != "regression":
            raise QueryError(f"range objective on classification target {name}", rule="objective")
        observed = handle.train.columns[name]
        resolved.append((name, objective_to_range(obj, observed, percentile)))
    return resolved


def _narrow_to_targets(ids: list, handle: DatasetHandle, resolved: list) -> list:
    """Prefer seed rows whose observed targets already satisfy the objective.

    Rows are filtered per resolved range/class; widening slack is applied when
    too few rows qualify, and the constraint-only pool is kept as a fallback.
    """
    if not ids or not resolved:
        return ids
    id_to_pos = {int(r): p for p, r in enumerate(handle.train.row_ids)}
    pos = np.array([id_to_pos[i] for i in ids if i in id_to_pos], dtype=np.int64)
    if not len(pos):
        return ids
    for slack in (0.0, 0.05, 0.25):
        keep = np.ones(len(pos), dtype=bool)
        for name, obj in resolved:
            col = handle.train.columns[name][pos]
            if obj.kind == "class":
                keep &= col == obj.class_index
                continue
            span = float(col.max() - col.min()) or 1.0
            if obj.lo is not None:
                keep &= col >= obj.lo - slack * span
            if obj.hi is not None:
                keep &= col <= obj.hi + slack * span
        if keep.sum() >= 5:
            return [int(handle.train.row_ids[p]) for p in pos[keep]]
    return ids


def _bound_map(cset: C.ConstraintSet) -> dict:
    bounds = {}
    for item in cset.items:
        if item.kind == C.BOUND_LOWER:
            lo, hi = bounds.get(item.lhs, (None, None))
            bounds[item.lhs] = (item.value if lo is None else max(lo, item.value), hi)
        elif item.kind == C.BOUND_UPPER:
            lo, hi = bounds.get(item.lhs, (None, None))
            bounds[item.lhs] = (lo, item.value if hi is None else min(hi, item.value))
    return bounds


def _build_context(query, handle, bundle, config, start_raw, resolved, light=False) -> _SearchContext:
    schema = handle.schema
    z_start = normalize(handle, {k: v for k, v in start_raw.items() if k in handle.feature_order})
    num_mask = np.array([c.kind == NUMERIC for c in schema.feature_columns])

    searchable = {
        name for name, a in query.user_assignments.items() if a.is_search
    }
    mut_num, mut_cat, cat_cards = [], [], {}
    z_lo = np.full(len(z_start), -np.inf)
    z_hi = np.full(len(z_start), np.inf)
    for j, spec in enumerate(schema.feature_columns):
        if spec.name not in searchable:
            continue
        if spec.kind == NUMERIC:
            mean, std = handle.scaler[spec.name]
            if std > 0:
                mut_num.append(j)
                z_lo[j] = (spec.vmin - mean) / std
                z_hi[j] = (spec.vmax - mean) / std
        elif len(spec.categories) > 1:
            mut_cat.append(j)
            cat_cards[j] = len(spec.categories)

    w = np.ones(len(z_start))
    for j, spec in enumerate(schema.feature_columns):
        if spec.name in query.proximity_weights:
            w[j] = query.proximity_weights[spec.name]

    pool = np.empty((0, len(z_start)))
    if not light and (mut_num or mut_cat):
        primary, fallback = C.filter(handle, query.constraints, which="train")
        ids = primary or fallback
        ids = _narrow_to_targets(ids, handle, resolved)
        if ids:
            rng = make_rng(query.seed, "pool")
            if len(ids) > 2000:
                ids = [ids[i] for i in sorted(rng.choice(len(ids), 2000, replace=False))]
            id_to_pos = {int(r): p for p, r in enumerate(handle.train.row_ids)}
            pos = [id_to_pos[i] for i in ids if i in id_to_pos]
            pool = handle.encoded_train()[pos]

    wall = config.generator.wall_budget_s
    return _SearchContext(
        handle=handle,
        bundle=bundle,
        query=query,
        z_start=z_start,
        num_mask=num_mask,
        mut_num=np.array(mut_num, dtype=np.int64),
        mut_cat=np.array(mut_cat, dtype=np.int64),
        cat_cards=cat_cards,
        z_lo=z_lo,
        z_hi=z_hi,
        prox_w=w,
        resolved=resolved,
        pool=pool,
        cfg=config,
        deadline=(time.monotonic() + wall) if wall else 0.0,
    )
