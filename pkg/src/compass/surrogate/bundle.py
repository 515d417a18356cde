"""Surrogate selection, the perturbed ensemble, and the persisted format.

train_select runs 5-fold cross-validation per family on the training
partition, refits the winner on the full partition, and bootstraps P ensemble
members used for uncertainty scoring.
"""

import io
import json
import struct
import time
import warnings
import zipfile
from dataclasses import dataclass, field

import numpy as np

from ..config import EngineConfig
from ..data import DatasetHandle
from ..errors import FormatError, ShapeError, TrainingFailed
from ..rng import make_rng, subseed
from . import models as M

MAGIC = b"CMPS"
VERSION = 1
APE_FLOOR = 1e-8


@dataclass
class Predictor:
    task: str  # regression | classification
    target_names: list
    family: str
    model: object
    feature_order: list
    classes: tuple = ()

    def predict(self, X):
        X, single = _as_batch(X, len(self.feature_order))
        out = self.model.predict(X) if self.task == "regression" else self.model.predict_proba(X)
        return out[0] if single else out


@dataclass
class SurrogateBundle:
    primary: Predictor
    ensemble: list
    selection_report: dict
    seed: int
    timings: dict = field(default_factory=dict)

    @property
    def task(self) -> str:
        return self.primary.task

    @property
    def feature_order(self) -> list:
        return self.primary.feature_order


def train_select(
    handle: DatasetHandle,
    families=None,
    seed: int = 0,
    config: EngineConfig | None = None,
) -> SurrogateBundle:
    config = config or EngineConfig()
    cfg = config.surrogate
    families = list(families or cfg.families)
    if not families:
        raise TrainingFailed("no candidate families given")

    X = handle.encoded_train()
    targets = handle.schema.target_columns
    task = "classification" if targets[0].target_task == "classification" else "regression"
    if task == "classification":
        y = handle.train.columns[targets[0].name].astype(np.int64)
        n_classes = len(targets[0].categories)
        Y = y
    else:
        Y = handle.target_matrix(handle.train)
        n_classes = 0

    n = X.shape[0]
    folds = np.array_split(make_rng(seed, "cv").permutation(n), cfg.cv_folds)

    report = {}
    start_all = time.monotonic()
    for family in families:
        t0 = time.monotonic()
        try:
            oof = np.empty((n,) + ((n_classes,) if n_classes else (Y.shape[1],)))
            for k, hold in enumerate(folds):
                if time.monotonic() - t0 > cfg.family_time_budget_s:
                    raise TimeoutError(f"budget {cfg.family_time_budget_s}s exceeded")
                rest = np.setdiff1d(np.arange(n), hold)
                model = _fit(family, cfg, X[rest], _take(Y, rest), n_classes, subseed(seed, "cv", family, k))
                oof[hold] = model.predict_proba(X[hold]) if n_classes else model.predict(X[hold])
            if n_classes:
                err = 1.0 - _macro_f1(Y, oof.argmax(axis=1))
            else:
                err = float(np.mean(np.abs(Y - oof) / np.maximum(np.abs(Y), APE_FLOOR)))
            report[family] = {"status": "ok", "cv_error": err}
        except Exception as exc:  # noqa: BLE001 - any family failure just excludes it
            warnings.warn(f"surrogate family {family} excluded: {exc}")
            report[family] = {"status": "excluded", "detail": str(exc)}

    ok = [f for f in families if report[f]["status"] == "ok"]
    if not ok:
        raise TrainingFailed("every candidate family failed cross-validation")
    best = ok[0]
    for f in ok[1:]:
        if report[f]["cv_error"] < report[best]["cv_error"]:
            best = f

    t0 = time.monotonic()
    primary_model = _fit(best, cfg, X, Y, n_classes, subseed(seed, "primary", best))
    classes = targets[0].categories if n_classes else ()
    primary = Predictor(task, handle.schema.target_names, best, primary_model, handle.feature_order, classes)

    members = []
    for p in range(max(2, cfg.ensemble_members)):
        idx = make_rng(seed, "ens-boot", p).integers(0, n, size=n)
        model = _fit(best, cfg, X[idx], _take(Y, idx), n_classes, subseed(seed, "ens-fit", p))
        members.append(Predictor(task, handle.schema.target_names, best, model, handle.feature_order, classes))

    return SurrogateBundle(
        primary=primary,
        ensemble=members,
        selection_report=report,
        seed=seed,
        timings={"cv_s": t0 - start_all, "fit_s": time.monotonic() - t0},
    )


def predict(bundle: SurrogateBundle, x):
    return bundle.primary.predict(x)


def ensemble_variance(bundle: SurrogateBundle, x):
    """Population variance of member predictions.

    Multi-target regression reports the mean of per-target variances;
    classification reports the variance of the primary top-class probability.
    """
    X, single = _as_batch(x, len(bundle.feature_order))
    stacked = np.stack([m.predict(X) for m in bundle.ensemble])  # (P, n, k)
    if bundle.task == "regression":
        var = stacked.var(axis=0, ddof=0).mean(axis=-1)
    else:
        top = bundle.primary.predict(X).argmax(axis=-1)
        var = stacked[:, np.arange(X.shape[0]), top].var(axis=0, ddof=0)
    return float(var[0]) if single else var


def persist(bundle: SurrogateBundle) -> bytes:
    arrays = {}
    manifest = {
        "task": bundle.task,
        "target_names": bundle.primary.target_names,
        "classes": list(bundle.primary.classes),
        "feature_order": bundle.primary.feature_order,
        "family": bundle.primary.family,
        "selection_report": bundle.selection_report,
        "seed": bundle.seed,
        "primary": _model_spec(bundle.primary.model, "p", arrays),
        "ensemble": [
            _model_spec(m.model, f"e{k}", arrays) for k, m in enumerate(bundle.ensemble)
        ],
    }
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as z:
        z.writestr("manifest.json", json.dumps(manifest, sort_keys=True))
        for key, arr in arrays.items():
            sub = io.BytesIO()
            np.save(sub, arr, allow_pickle=False)
            z.writestr(f"arr/{key}.npy", sub.getvalue())
    payload = buf.getvalue()
    return MAGIC + struct.pack("<H", VERSION) + struct.pack("<Q", len(payload)) + payload


def load(blob: bytes) -> SurrogateBundle:
    if len(blob) < 14 or blob[:4] != MAGIC:
        raise FormatError("not a native persisted surrogate (bad magic)")
    (version,) = struct.unpack("<H", blob[4:6])
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")
    (length,) = struct.unpack("<Q", blob[6:14])
    payload = blob[14:]
    if len(payload) != length:
        raise FormatError("truncated or padded stream")
    try:
        with zipfile.ZipFile(io.BytesIO(payload)) as z:
            manifest = json.loads(z.read("manifest.json"))
            arrays = {}
            for name in z.namelist():
                if name.startswith("arr/"):
                    arrays[name[4:-4]] = np.load(io.BytesIO(z.read(name)), allow_pickle=False)
    except (zipfile.BadZipFile, KeyError, ValueError) as exc:
        raise FormatError(f"corrupt payload: {exc}") from exc

    def mk(spec):
        model = _model_from_spec(spec, arrays)
        return Predictor(
            manifest["task"],
            manifest["target_names"],
            manifest["family"],
            model,
            manifest["feature_order"],
            tuple(manifest["classes"]),
        )

    return SurrogateBundle(
        primary=mk(manifest["primary"]),
        ensemble=[mk(s) for s in manifest["ensemble"]],
        selection_report=manifest["selection_report"],
        seed=manifest["seed"],
    )


def _take(Y, idx):
    return Y[idx]


def _as_batch(x, d):
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != d:
        raise ShapeError(f"expected vectors of length {d}, got shape {np.asarray(x).shape}")
    return np.ascontiguousarray(X), single


def _macro_f1(y_true, y_pred) -> float:
    scores = []
    for c in np.unique(y_true):
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def _fit(family, cfg, X, Y, n_classes, seed):
    if n_classes:
        return M.make_classifier(family, cfg).fit(X, Y, n_classes, seed)
    return M.make_regressor(family, cfg).fit(X, Y, seed)


def _bank_spec(bank, prefix, arrays):
    arrs = bank.arrays()
    keys = {}
    for name, arr in arrs.items():
        key = f"{prefix}_{name}"
        arrays[key] = arr
        keys[name] = key
    return keys


def _bank_from(keys, arrays):
    return M._TreeBank.from_arrays({name: arrays[k] for name, k in keys.items()})


def _model_spec(model, prefix, arrays):
    if isinstance(model, M.ForestRegressor):
        return {
            "kind": "forest_reg",
            "hyper": [model.n_trees, model.max_depth, model.min_leaf],
            "banks": [_bank_spec(b, f"{prefix}f{m}", arrays) for m, b in enumerate(model.banks)],
        }
    if isinstance(model, M.ForestClassifier):
        return {
            "kind": "forest_clf",
            "hyper": [model.n_trees, model.max_depth, model.min_leaf],
            "n_classes": model.n_classes,
            "bank": _bank_spec(model.bank, f"{prefix}f", arrays),
        }
    if isinstance(model, M.GradientBoostedRegressor):
        key = f"{prefix}base"
        arrays[key] = np.asarray(model.base)
        return {
            "kind": "gbt_reg",
            "hyper": [model.n_rounds, model.learning_rate, model.max_depth, model.min_leaf],
            "base": key,
            "banks": [_bank_spec(b, f"{prefix}g{m}", arrays) for m, b in enumerate(model.banks)],
        }
    if isinstance(model, M.GradientBoostedClassifier):
        key = f"{prefix}base"
        arrays[key] = np.asarray(model.base)
        return {
            "kind": "gbt_clf",
            "hyper": [model.n_rounds, model.learning_rate, model.max_depth, model.min_leaf],
            "n_classes": model.n_classes,
            "base": key,
            "banks": [_bank_spec(b, f"{prefix}g{c}", arrays) for c, b in enumerate(model.banks)],
        }
    if isinstance(model, (M.RidgeRegressor, M.RidgeClassifier)):
        inner = model.inner if isinstance(model, M.RidgeClassifier) else model
        key = f"{prefix}W"
        arrays[key] = inner.W
        spec = {"kind": "ridge_reg", "hyper": [inner.alpha], "W": key}
        if isinstance(model, M.RidgeClassifier):
            spec["kind"] = "ridge_clf"
            spec["n_classes"] = model.n_classes
        return spec
    raise FormatError(f"cannot serialize model type {type(model).__name__}")


def _model_from_spec(spec, arrays):
    kind = spec["kind"]
    if kind == "forest_reg":
        m = M.ForestRegressor(*spec["hyper"])
        m.banks = [_bank_from(k, arrays) for k in spec["banks"]]
        return m
    if kind == "forest_clf":
        m = M.ForestClassifier(*spec["hyper"])
        m.n_classes = spec["n_classes"]
        m.bank = _bank_from(spec["bank"], arrays)
        return m
    if kind == "gbt_reg":
        m = M.GradientBoostedRegressor(*spec["hyper"])
        m.base = arrays[spec["base"]]
        m.banks = [_bank_from(k, arrays) for k in spec["banks"]]
        return m
    if kind == "gbt_clf":
        m = M.GradientBoostedClassifier(*spec["hyper"])
        m.n_classes = spec["n_classes"]
        m.base = arrays[spec["base"]]
        m.banks = [_bank_from(k, arrays) for k in spec["banks"]]
        return m
    if kind == "ridge_reg":
        m = M.RidgeRegressor(*spec["hyper"])
        m.W = arrays[spec["W"]]
        return m
    if kind == "ridge_clf":
        m = M.RidgeClassifier(*spec["hyper"])
        m.n_classes = spec["n_classes"]
        m.inner = M.RidgeRegressor(*spec["hyper"])
        m.inner.W = arrays[spec["W"]]
        return m
    raise FormatError(f"unknown model kind in manifest: {kind}")
