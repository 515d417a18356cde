"""Trust scoring: kNN data support, ensemble uncertainty, labels, evidence.

A configuration's OOD score is the percentile rank of its mean k-nearest
train distance against the validation distance distribution; its UQ score is
the percentile rank of its ensemble prediction variance against validation
variances. Labels: unsupported above 0.99 OOD, caution above 0.95 on either
scale, trusted otherwise. Percentiles use non-strict comparison and the
presorted arrays are an exact accelerator for the naive counting definition.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .config import EngineConfig
from .data import NUMERIC, DatasetHandle, denormalize, normalize
from .errors import IndexUnavailable
from .rng import make_rng, subseed
from .surrogate import SurrogateBundle, ensemble_variance

_CHUNK = 256

LABEL_TRUSTED = "trusted"
LABEL_CAUTION = "caution"
LABEL_UNSUPPORTED = "unsupported"

REASON_UNSUPPORTED = (
    "unsupported: no nearby training samples; this configuration is farther "
    "from the training data than 99% of validation samples"
)
REASON_CAUTION_SUPPORT = "caution: limited data support near this configuration"
REASON_CAUTION_UQ = "caution: high model uncertainty despite nearby training support"
REASON_TRUSTED = "trusted: supported by nearby training samples with stable predictions"


@dataclass
class TrustVerdict:
    label: str
    ood: float
    uq: float | None
    support: list  # [(train row_id, distance)], ascending, all <= tau_close
    reason: str
    next_runs: list | None = None

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "ood": self.ood,
            "uq": self.uq,
            "support": [[int(r), float(d)] for r, d in self.support],
            "support_count": len(self.support),
            "reason": self.reason,
            "next_runs": self.next_runs,
        }


@dataclass
class TrustIndex:
    handle: DatasetHandle
    train_encoded: np.ndarray
    train_row_ids: np.ndarray
    num_mask: np.ndarray
    cat_mask: np.ndarray
    val_distances_sorted: np.ndarray
    val_uncertainty_sorted: np.ndarray
    k: int
    tau_close: float
    caution_threshold: float = 0.95
    unsupported_threshold: float = 0.99
    seed: int = 0


def mixed_distance(a, b, schema) -> float:
    """Euclidean over standardized numerics plus 0/1 categorical mismatches."""
    num = np.array([c.kind == NUMERIC for c in schema.feature_columns])
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    sq = float(((a[num] - b[num]) ** 2).sum()) + int((a[~num] != b[~num]).sum())
    return float(np.sqrt(sq))


def distance_matrix(A, B, num_mask, cat_mask) -> np.ndarray:
    """Pairwise mixed distances between rows of A and rows of B.

    Accumulated column by column (not via GEMM) so the result is bit-identical
    for any batch slicing; percentile ranks then never straddle an ulp.
    """
    sq = np.zeros((A.shape[0], B.shape[0]))
    for j in np.flatnonzero(num_mask):
        diff = A[:, j][:, None] - B[None, :, j]
        sq += diff * diff
    for j in np.flatnonzero(cat_mask):
        sq += A[:, j][:, None] != B[None, :, j]
    return np.sqrt(sq)


def build_index(
    handle: DatasetHandle,
    bundle: SurrogateBundle,
    config: EngineConfig | None = None,
) -> TrustIndex:
    """Precomputes the validation distance/uncertainty distributions once."""
    config = config or EngineConfig()
    cfg = config.trust
    if len(handle.validation) == 0:
        raise IndexUnavailable("validation partition is empty")

    Ztr = handle.encoded_train()
    Zval = handle.encoded_validation()
    num_mask = np.array([c.kind == NUMERIC for c in handle.schema.feature_columns])
    cat_mask = ~num_mask

    k = cfg.k_neighbors
    if k > len(Ztr):
        warnings.warn(f"k={k} exceeds training size {len(Ztr)}; clamped")
        k = len(Ztr)

    val_d = np.empty(len(Zval))
    for s in range(0, len(Zval), _CHUNK):
        D = distance_matrix(Zval[s : s + _CHUNK], Ztr, num_mask, cat_mask)
        val_d[s : s + _CHUNK] = np.sort(D, axis=1)[:, :k].mean(axis=1)

    tau = float(np.quantile(val_d, cfg.tau_close_percentile))
    if tau <= 0.0 and val_d.max() > 0.0:
        tau = float(val_d[val_d > 0].min())

    val_u = np.atleast_1d(np.asarray(ensemble_variance(bundle, Zval), dtype=np.float64))

    return TrustIndex(
        handle=handle,
        train_encoded=Ztr,
        train_row_ids=handle.train.row_ids,
        num_mask=num_mask,
        cat_mask=cat_mask,
        val_distances_sorted=np.sort(val_d),
        val_uncertainty_sorted=np.sort(val_u),
        k=k,
        tau_close=tau,
        caution_threshold=cfg.caution_threshold,
        unsupported_threshold=cfg.unsupported_threshold,
        seed=handle.seed,
    )


def percentile_rank(sorted_values: np.ndarray, value: float) -> float:
    """Fraction of values <= value; identical to naive O(n) counting."""
    return float(np.searchsorted(sorted_values, value, side="right")) / len(sorted_values)


def knn_profile(index: TrustIndex, z: np.ndarray):
    """Mean k-nearest train distance plus the k nearest (row_id, distance)."""
    D = distance_matrix(z[None, :], index.train_encoded, index.num_mask, index.cat_mask)[0]
    order = np.argsort(D, kind="stable")[: index.k]
    dists = D[order]
    return float(dists.mean()), [(int(index.train_row_ids[i]), float(D[i])) for i in order]


def assess(
    x: dict,
    index: TrustIndex,
    bundle: SurrogateBundle,
    next_run_count: int = 5,
    next_run_bounds: dict | None = None,
) -> TrustVerdict:
    """Label one raw configuration with evidence and, if needed, mitigation."""
    return assess_batch([x], index, bundle, next_run_count, next_run_bounds)[0]


def assess_batch(
    configs: list,
    index: TrustIndex,
    bundle: SurrogateBundle,
    next_run_count: int = 5,
    next_run_bounds: dict | None = None,
    skip_next_runs=(),
) -> list:
    """Vectorized assess over many configurations (same labels as assess)."""
    handle = index.handle
    Z = np.array([normalize(handle, x, on_unseen="mismatch") for x in configs])
    n = Z.shape[0]

    d_x = np.empty(n)
    neighbor_ids = np.empty((n, index.k), dtype=np.int64)
    neighbor_d = np.empty((n, index.k))
    for s in range(0, n, _CHUNK):
        D = distance_matrix(Z[s : s + _CHUNK], index.train_encoded, index.num_mask, index.cat_mask)
        order = np.argsort(D, axis=1, kind="stable")[:, : index.k]
        rows = np.arange(D.shape[0])[:, None]
        neighbor_d[s : s + _CHUNK] = D[rows, order]
        neighbor_ids[s : s + _CHUNK] = index.train_row_ids[order]
        d_x[s : s + _CHUNK] = neighbor_d[s : s + _CHUNK].mean(axis=1)

    n_val = len(index.val_distances_sorted)
    ood = np.searchsorted(index.val_distances_sorted, d_x, side="right") / n_val

    u_x = np.atleast_1d(np.asarray(ensemble_variance(bundle, Z), dtype=np.float64))
    uq = np.searchsorted(index.val_uncertainty_sorted, u_x, side="right") / len(
        index.val_uncertainty_sorted
    )

    verdicts = []
    for i, x in enumerate(configs):
        close = neighbor_d[i] <= index.tau_close
        support = [(int(r), float(d)) for r, d in zip(neighbor_ids[i][close], neighbor_d[i][close])]
        if ood[i] > index.unsupported_threshold:
            runs = None
            if i not in skip_next_runs:
                runs = suggest_next_runs(x, index, next_run_count, bounds=next_run_bounds)
            verdicts.append(
                TrustVerdict(LABEL_UNSUPPORTED, float(ood[i]), None, support, REASON_UNSUPPORTED, runs)
            )
        elif ood[i] > index.caution_threshold:
            verdicts.append(
                TrustVerdict(LABEL_CAUTION, float(ood[i]), float(uq[i]), support, REASON_CAUTION_SUPPORT)
            )
        elif uq[i] > index.caution_threshold:
            verdicts.append(
                TrustVerdict(LABEL_CAUTION, float(ood[i]), float(uq[i]), support, REASON_CAUTION_UQ)
            )
        else:
            verdicts.append(
                TrustVerdict(LABEL_TRUSTED, float(ood[i]), float(uq[i]), support, REASON_TRUSTED)
            )
    return verdicts


def suggest_next_runs(
    x: dict,
    index: TrustIndex,
    count: int,
    seed: int | None = None,
    bounds: dict | None = None,
) -> list:
    """x itself, then jitters at radius tau_close over the numeric block.

    New measurements at this radius would land inside the support threshold
    and flip the support test on a re-run. Categorical fields are held fixed;
    numerics are clipped to observed ranges and any supplied bound constraints.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    handle = index.handle
    if seed is None:
        seed = subseed(index.seed, "next-runs", json.dumps(x, sort_keys=True, default=str))
    rng = make_rng(seed)

    runs = [dict(x)]
    z = normalize(handle, x, on_unseen="mismatch")
    num_idx = np.flatnonzero(index.num_mask)
    seen = {json.dumps(runs[0], sort_keys=True, default=str)}
    tries = 0
    while len(runs) < count and tries < 20 * count:
        tries += 1
        z2 = z.copy()
        if len(num_idx):
            u = rng.normal(size=len(num_idx))
            norm = np.linalg.norm(u)
            if norm == 0.0:
                continue
            z2[num_idx] = z[num_idx] + index.tau_close * u / norm
        cand = denormalize(handle, _snap_unseen(z2, handle))
        cand = _clip_bounds(cand, handle, bounds or {})
        if not len(num_idx):
            cand = _vary_categorical(cand, handle, rng)
        key = json.dumps(cand, sort_keys=True, default=str)
        if key not in seen:
            seen.add(key)
            runs.append(cand)
    return runs


def _snap_unseen(z: np.ndarray, handle: DatasetHandle) -> np.ndarray:
    # unseen categories were encoded as -1; snap to the first category for output
    out = z.copy()
    for j, spec in enumerate(handle.schema.feature_columns):
        if spec.kind != NUMERIC and out[j] < 0:
            out[j] = 0
    return out


def _clip_bounds(row: dict, handle: DatasetHandle, extra_bounds: dict) -> dict:
    out = dict(row)
    for spec in handle.schema.feature_columns:
        if spec.kind != NUMERIC:
            continue
        lo, hi = spec.vmin, spec.vmax
        if spec.name in extra_bounds:
            b_lo, b_hi = extra_bounds[spec.name]
            lo = max(lo, b_lo) if b_lo is not None else lo
            hi = min(hi, b_hi) if b_hi is not None else hi
        out[spec.name] = float(np.clip(out[spec.name], lo, hi))
    return out


def _vary_categorical(row: dict, handle: DatasetHandle, rng) -> dict:
    cats = [c for c in handle.schema.feature_columns if c.kind != NUMERIC and len(c.categories) > 1]
    if not cats:
        return row
    spec = cats[int(rng.integers(0, len(cats)))]
    out = dict(row)
    out[spec.name] = spec.categories[int(rng.integers(0, len(spec.categories)))]
    return out
