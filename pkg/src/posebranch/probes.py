"""Layer probes: what category and pose information each layer's activations carry.

Three probe families run on frozen activations:

* a linear one-vs-all hinge classifier for category,
* kernel ridge regression of pose on (sin, cos) targets, plus k-nearest neighbours
  for both tasks,
* per-instance view-manifold measurements (effective rank at 90% singular-value
  mass, nuclear norm, leave-one-out kernel regression error).

``run_layer_sweep`` runs all of them over every layer of a trained model.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from . import topology as T
from .pose import aaai_accuracy, abs_angular_error, circular_mean, wrap360
from .synth import DatasetManifest, load_batch

log = logging.getLogger(__name__)

INPUT_LAYER = "input"
KNN_KS = (1, 3, 5, 7, 9)
REPORT_COLUMNS = (
    ("layer", "cat_acc", "pose_aaai", "pose_mae_deg")
    + tuple(f"knn_cat_k{k}" for k in KNN_KS)
    + tuple(f"knn_pose_aaai_k{k}" for k in KNN_KS)
    + ("eff_sv90", "nuclear_norm", "kreg_err_deg", "cross_eval")
)
REPORT_NOTE = "# kreg_err_deg is leave-one-out kernel ridge regression, an approximation of KPLS regression error"
DEFAULT_COLUMN_BUDGET = 16384


@dataclass
class FeatureMatrix:
    """Activations of one layer, one row per sample, with aligned labels."""

    X: np.ndarray
    category: np.ndarray
    angle: np.ndarray
    instance: np.ndarray
    layer: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError(f"features must be 2-D (samples, dims), got shape {self.X.shape}")
        self.category = np.asarray(self.category, dtype=np.int64)
        self.angle = np.asarray(self.angle, dtype=np.float64)
        self.instance = np.asarray(self.instance, dtype=np.int64)
        n = self.X.shape[0]
        for name in ("category", "angle", "instance"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} has {getattr(self, name).shape[0]} entries for {n} feature rows")
        if not np.all(np.isfinite(self.X)):
            raise ValueError(f"layer {self.layer!r}: non-finite feature values")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows)
        return FeatureMatrix(self.X[rows], self.category[rows], self.angle[rows], self.instance[rows], self.layer)


@dataclass(frozen=True)
class KernelConfig:
    """RBF kernel ridge settings.

    ``bandwidth`` is ``"median"`` (median pairwise train distance) or a positive
    number. ``ridge=None`` selects the ridge on a validation split from ``ridge_grid``.
    """

    bandwidth: float | str = "median"
    ridge: float | None = None
    ridge_grid: tuple = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    default_ridge: float = 1e-3

    def __post_init__(self):
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "median":
                raise ValueError(f"bandwidth rule must be 'median' or a number, got {self.bandwidth!r}")
        elif not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge coefficient must be nonnegative")
        if not self.ridge_grid or min(self.ridge_grid) < 0:
            raise ValueError("ridge grid must be nonempty and nonnegative")


# ------------------------------------------------------------------ feature extraction

def _model_layer_names(model) -> list[str]:
    return [INPUT_LAYER] + list(model.layer_names)


def extract_many(model, dataset: DatasetManifest, layers, split: str | None = None, indices=None,
                 batch_size: int = 128, dtype=np.float32) -> dict[str, FeatureMatrix]:
    """Eval-mode (center crop, no dropout) activations for several layers in one pass.

    ``"input"`` names the cropped pixels. Activations are stored as ``dtype``
    to bound memory on full sweeps.
    """
    known = _model_layer_names(model)
    layers = list(layers)
    for name in layers:
        if name not in known:
            raise ValueError(f"unknown layer {name!r}; model layers are {known}")
    idx = dataset.indices(split) if indices is None else np.asarray(indices)
    chunks = {name: [] for name in layers}
    for s in range(0, len(idx), batch_size):
        x, *_ = load_batch(dataset, idx[s:s + batch_size], "eval")
        _, acts = T.forward_with_activations(model, x)
        acts[INPUT_LAYER] = x.reshape(x.shape[0], -1)
        for name in layers:
            chunks[name].append(acts[name].astype(dtype))
    out = {}
    for name in layers:
        X = np.concatenate(chunks[name]) if chunks[name] else np.zeros((0, 0), dtype)
        out[name] = FeatureMatrix(X, dataset.category[idx], dataset.angle[idx], dataset.instance[idx], name)
    return out


def extract_features(model, dataset: DatasetManifest, layer: str, split: str | None = None,
                     indices=None) -> FeatureMatrix:
    """Flattened eval-mode activations of ``layer`` for the requested samples."""
    return extract_many(model, dataset, [layer], split, indices, dtype=np.float64)[layer]


def _check_pair(train: FeatureMatrix, test: FeatureMatrix) -> None:
    if train.dim != test.dim:
        raise ValueError(f"train has {train.dim} feature columns but test has {test.dim}")
    if len(train) == 0:
        raise ValueError("training features are empty")


# ------------------------------------------------------------------ linear category probe

@dataclass(frozen=True)
class LinearProbeConfig:
    """Pegasos-style one-vs-all hinge training.

    The L2 coefficient is ``reg`` when given, else ``reg_scale`` times the mean
    squared row norm, so the default is unaffected by a global feature rescaling.
    """

    reg: float | None = None
    reg_scale: float = 1e-3
    epochs: int = 30
    batch_size: int = 16
    seed: int = 0


def train_linear_probe(X: np.ndarray, y: np.ndarray, config: LinearProbeConfig = LinearProbeConfig()):
    """Return ``(W, b, classes)`` for one-vs-all linear hinge classifiers.

    The bias is learned as the weight of a constant column whose value is the
    RMS row norm, so rescaling ``X`` by ``s`` together with ``reg`` by ``s**2``
    rescales ``W`` by ``1/s`` and leaves every score unchanged.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("linear probe needs at least two categories in the training set")
    n = X.shape[0]
    msn = float(np.mean(np.einsum("ij,ij->i", X, X)))
    lam = config.reg if config.reg is not None else config.reg_scale * max(msn, 1e-300)
    if not lam > 0:
        raise ValueError("regularization coefficient must be positive")
    a = np.sqrt(msn) if msn > 0 else 1.0
    Xa = np.hstack([X, np.full((n, 1), a)])
    Y = np.where(y[:, None] == classes[None, :], 1.0, -1.0)
    K = len(classes)
    W = np.zeros((K, Xa.shape[1]))
    avg = np.zeros_like(W)
    rng = np.random.default_rng(config.seed)
    steps_per_epoch = -(-n // config.batch_size)
    total = config.epochs * steps_per_epoch
    start_avg = total // 2
    radius = 1.0 / np.sqrt(lam)
    t = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for s in range(0, n, config.batch_size):
            t += 1
            rows = order[s:s + config.batch_size]
            Xb, Yb = Xa[rows], Y[rows]
            eta = 1.0 / (lam * t)
            active = (Yb * (Xb @ W.T)) < 1.0
            W *= 1.0 - eta * lam
            W += (eta / len(rows)) * ((Yb * active).T @ Xb)
            norms = np.linalg.norm(W, axis=1)
            over = norms > radius
            W[over] *= (radius / norms[over])[:, None]
            if t > start_avg:
                avg += W
    avg /= max(total - start_avg, 1)
    return avg[:, :-1], avg[:, -1] * a, classes


def linear_category_probe(train: FeatureMatrix, test: FeatureMatrix,
                          config: LinearProbeConfig = LinearProbeConfig(), return_predictions: bool = False):
    """Test accuracy of one-vs-all linear hinge classifiers trained on ``train``."""
    _check_pair(train, test)
    W, b, classes = train_linear_probe(train.X, train.category, config)
    pred = classes[np.argmax(test.X @ W.T + b, axis=1)]
    acc = float(np.mean(pred == test.category)) if len(test) else float("nan")
    return (acc, pred) if return_predictions else acc


# ------------------------------------------------------------------ kernel ridge pose probe

def sq_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at zero."""
    d = np.einsum("ij,ij->i", A, A)[:, None] + np.einsum("ij,ij->i", B, B)[None, :] - 2.0 * (A @ B.T)
    return np.maximum(d, 0.0)


def median_bandwidth(X: np.ndarray, max_points: int = 1000) -> float:
    """Median off-diagonal pairwise distance; 1.0 when that median is zero."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] > max_points:
        X = X[np.linspace(0, X.shape[0] - 1, max_points).astype(int)]
    if X.shape[0] < 2:
        return 1.0
    d = np.sqrt(sq_distances(X, X)[np.triu_indices(X.shape[0], 1)])
    med = float(np.median(d))
    return med if med > 0 else 1.0


def rbf_kernel(A: np.ndarray, B: np.ndarray, bandwidth: float) -> np.ndarray:
    return np.exp(-sq_distances(A, B) / (2.0 * bandwidth ** 2))


def angle_targets(angles) -> np.ndarray:
    r = np.deg2rad(np.asarray(angles, dtype=np.float64))
    return np.stack([np.sin(r), np.cos(r)], axis=1)


def targets_to_angle(Y: np.ndarray) -> np.ndarray:
    return wrap360(np.rad2deg(np.arctan2(Y[:, 0], Y[:, 1])))


def solve_ridge(K: np.ndarray, Y: np.ndarray, ridge: float) -> np.ndarray:
    """``alpha = (K + ridge I)^-1 Y``; a singular system with ``ridge == 0`` is rejected."""
    A = K + ridge * np.eye(K.shape[0])
    if ridge == 0:
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
            raise ValueError("kernel matrix is singular with ridge 0; set a positive ridge coefficient")
        return linalg.solve(A, Y, assume_a="sym")
    return linalg.solve(A, Y, assume_a="pos")


@dataclass
class KernelRidgeModel:
    X: np.ndarray
    alpha: np.ndarray
    bandwidth: float
    ridge: float

    def predict_targets(self, Xq: np.ndarray) -> np.ndarray:
        return rbf_kernel(np.asarray(Xq, dtype=np.float64), self.X, self.bandwidth) @ self.alpha

    def predict(self, Xq: np.ndarray) -> np.ndarray:
        return targets_to_angle(self.predict_targets(Xq))


def fit_kernel_ridge(X: np.ndarray, angles, ridge: float, bandwidth: float | str = "median") -> KernelRidgeModel:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("kernel ridge needs at least one training row")
    bw = median_bandwidth(X) if bandwidth == "median" else float(bandwidth)
    alpha = solve_ridge(rbf_kernel(X, X, bw), angle_targets(angles), ridge)
    return KernelRidgeModel(X, alpha, bw, ridge)


def _pose_metrics(pred, truth) -> tuple[float, float]:
    return float(np.mean(aaai_accuracy(pred, truth))), float(np.mean(abs_angular_error(pred, truth)))


def kernel_ridge_pose_probe(train: FeatureMatrix, test: FeatureMatrix, config: KernelConfig = KernelConfig(),
                            val: FeatureMatrix | None = None) -> tuple[float, float]:
    """``(AAAI accuracy, MAE degrees)`` of an RBF kernel ridge pose regressor on ``test``.

    With ``config.ridge`` unset the ridge is picked by validation MAE when
    ``val`` is given, otherwise ``config.default_ridge`` is used.
    """
    _check_pair(train, test)
    ridge = config.ridge
    if ridge is None and val is not None and len(val):
        ridge = select_ridge(train, val, config)
    elif ridge is None:
        ridge = config.default_ridge
    model = fit_kernel_ridge(train.X, train.angle, ridge, config.bandwidth)
    return _pose_metrics(model.predict(test.X), test.angle)


def select_ridge(train: FeatureMatrix, val: FeatureMatrix, config: KernelConfig = KernelConfig()) -> float:
    """Ridge from ``config.ridge_grid`` with the lowest validation MAE (first on ties).

    One eigendecomposition of the train kernel serves the whole grid.
    """
    X = train.X
    bw = median_bandwidth(X) if config.bandwidth == "median" else float(config.bandwidth)
    evals, V = linalg.eigh(rbf_kernel(X, X, bw))
    proj = V.T @ angle_targets(train.angle)
    Kv = rbf_kernel(val.X, X, bw)
    best, best_err = None, np.inf
    for lam in config.ridge_grid:
        denom = evals + lam
        if np.any(denom <= 1e-12 * max(float(evals.max()), 1.0)):
            continue
        alpha = V @ (proj / denom[:, None])
        err = float(np.mean(abs_angular_error(targets_to_angle(Kv @ alpha), val.angle)))
        if err < best_err:
            best, best_err = float(lam), err
    if best is None:
        raise ValueError("every ridge in the grid gives a singular system; include a positive ridge")
    return best


# ------------------------------------------------------------------ k-nearest neighbours

def neighbor_order(train_X: np.ndarray, test_X: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest train rows per test row, nearest first.

    Equal distances keep the lower train index first.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > train_X.shape[0]:
        raise ValueError(f"k={k} exceeds the {train_X.shape[0]} training rows")
    d = sq_distances(np.asarray(test_X, np.float64), np.asarray(train_X, np.float64))
    return np.argsort(d, axis=1, kind="stable")[:, :k]


def vote(neighbor_labels: np.ndarray) -> np.ndarray:
    """Majority label per row; ties go to the label of the nearest tied neighbour."""
    out = np.empty(len(neighbor_labels), dtype=neighbor_labels.dtype)
    for i, row in enumerate(neighbor_labels):
        labels, counts = np.unique(row, return_counts=True)
        winners = set(labels[counts == counts.max()].tolist())
        out[i] = next(l for l in row if l in winners)
    return out


def knn_predict(train: FeatureMatrix, test: FeatureMatrix, ks=KNN_KS, task: str = "category") -> dict:
    """Predictions for several ``k`` from one neighbour ranking."""
    _check_pair(train, test)
    ks = sorted(set(int(k) for k in ks))
    order = neighbor_order(train.X, test.X, ks[-1])
    out = {}
    for k in ks:
        nb = order[:, :k]
        if task == "category":
            out[k] = vote(train.category[nb])
        elif task == "pose":
            out[k] = np.array([circular_mean(train.angle[r]) for r in nb])
        else:
            raise ValueError(f"task must be 'category' or 'pose', got {task!r}")
    return out


def knn_probe(train: FeatureMatrix, test: FeatureMatrix, k: int, task: str = "category"):
    """Category accuracy, or ``(AAAI, MAE degrees)`` for ``task="pose"``."""
    pred = knn_predict(train, test, (k,), task)[k]
    if task == "category":
        return float(np.mean(pred == test.category))
    return _pose_metrics(pred, test.angle)


# ------------------------------------------------------------------ view-manifold measurements

def project_columns(X: np.ndarray, budget: int = DEFAULT_COLUMN_BUDGET, seed: int = 0) -> np.ndarray:
    """Seeded sign-random projection down to ``budget`` columns when ``X`` is wider."""
    if X.shape[1] <= budget:
        return X
    rng = np.random.default_rng([seed, X.shape[1], budget])
    R = rng.choice(np.array([-1.0, 1.0]), size=(X.shape[1], budget)) / np.sqrt(budget)
    return X @ R


def _groups(features: FeatureMatrix, grouping=None):
    g = features.instance if grouping is None else np.asarray(grouping)
    if g.shape != (len(features),):
        raise ValueError("grouping must give one group id per feature row")
    return [np.flatnonzero(g == u) for u in np.unique(g)]


def _view_matrices(features: FeatureMatrix, grouping, budget: int, seed: int, min_views: int = 2):
    X = project_columns(features.X, budget, seed)
    for rows in _groups(features, grouping):
        if len(rows) < min_views:
            raise ValueError(f"instance group with {len(rows)} view(s); at least {min_views} required")
        M = X[rows]
        yield M - M.mean(axis=0)


def rank_for_energy(singular_values, fraction: float = 0.9, energy: str = "sigma") -> int:
    """Smallest ``r`` with the top-``r`` share of singular-value mass at least ``fraction``.

    ``energy="sigma2"`` accumulates squared singular values instead. All-zero gives 0.
    """
    s = np.sort(np.abs(np.asarray(singular_values, dtype=np.float64)))[::-1]
    if energy == "sigma2":
        s = s ** 2
    elif energy != "sigma":
        raise ValueError(f"energy must be 'sigma' or 'sigma2', got {energy!r}")
    total = s.sum()
    if total == 0:
        return 0
    share = np.cumsum(s) / total
    return int(np.searchsorted(share, fraction - 1e-12) + 1)


def effective_sv_90(features: FeatureMatrix, grouping=None, energy: str = "sigma",
                    budget: int = DEFAULT_COLUMN_BUDGET, seed: int = 0) -> float:
    """Mean over instances of the 90% singular-value-mass rank of the centred view matrix."""
    ranks = [rank_for_energy(linalg.svdvals(M), 0.9, energy)
             for M in _view_matrices(features, grouping, budget, seed)]
    return float(np.mean(ranks))


def matrix_nuclear_norm(M: np.ndarray, center: bool = True, normalize_rows: bool = True) -> float:
    M = np.asarray(M, dtype=np.float64)
    if center:
        M = M - M.mean(axis=0)
    if normalize_rows:
        n = np.linalg.norm(M, axis=1, keepdims=True)
        M = np.divide(M, n, out=np.zeros_like(M), where=n > 0)
    return float(linalg.svdvals(M).sum()) if M.size else 0.0


def nuclear_norm(features: FeatureMatrix, grouping=None, normalize_rows: bool = True,
                 budget: int = DEFAULT_COLUMN_BUDGET, seed: int = 0) -> float:
    """Mean over instances of the nuclear norm of the centred (row-normalised) view matrix."""
    vals = [matrix_nuclear_norm(M, center=False, normalize_rows=normalize_rows)
            for M in _view_matrices(features, grouping, budget, seed)]
    return float(np.mean(vals))


def loo_kernel_ridge_angles(X: np.ndarray, angles, ridge: float, bandwidth: float | str = "median") -> np.ndarray:
    """Leave-one-out kernel ridge predictions via the closed-form hat-matrix shortcut."""
    X = np.asarray(X, dtype=np.float64)
    if ridge <= 0:
        raise ValueError("leave-one-out kernel ridge needs a positive ridge")
    bw = median_bandwidth(X) if bandwidth == "median" else float(bandwidth)
    Y = angle_targets(angles)
    Hinv = linalg.inv(rbf_kernel(X, X, bw) + ridge * np.eye(X.shape[0]), check_finite=False)
    alpha = Hinv @ Y
    return targets_to_angle(Y - alpha / np.diag(Hinv)[:, None])


def kernel_regression_error(features: FeatureMatrix, grouping=None, config: KernelConfig = KernelConfig(),
                            budget: int = DEFAULT_COLUMN_BUDGET, seed: int = 0) -> float:
    """Mean per-instance leave-one-out geodesic pose error (degrees) of kernel ridge.

    Instances with fewer than three views are skipped with a warning. An
    instance whose views all share one feature vector carries no pose signal,
    so it scores the uninformed expectation of 90 degrees.
    """
    ridge = config.ridge if config.ridge else config.default_ridge
    X = project_columns(features.X, budget, seed)
    errs = []
    for rows in _groups(features, grouping):
        if len(rows) < 3:
            warnings.warn(f"skipping instance group with {len(rows)} view(s) in kernel regression error")
            continue
        M = X[rows]
        if np.all(M == M[0]):
            errs.append(90.0)
            continue
        pred = loo_kernel_ridge_angles(M, features.angle[rows], ridge, config.bandwidth)
        errs.append(float(np.mean(abs_angular_error(pred, features.angle[rows]))))
    return float(np.mean(errs)) if errs else float("nan")


# ------------------------------------------------------------------ layer sweep

PROBES = ("linear", "kernel", "knn", "svd", "kreg")


@dataclass
class ProbeReport:
    rows: list = field(default_factory=list)
    model_kind: str = ""

    @property
    def layers(self) -> list[str]:
        return [r["layer"] for r in self.rows]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(REPORT_NOTE + "\n")
            w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: _fmt(r.get(k, "")) for k in REPORT_COLUMNS})

    @staticmethod
    def read_csv(path) -> list[dict]:
        with open(path, newline="") as fh:
            return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def _fmt(v):
    if isinstance(v, float):
        return "" if np.isnan(v) else f"{v:.6g}"
    return v


def _cross_eval_flag(model, layer: str) -> int:
    """1 for layers inside a task branch of a two-task model, where the other task's probe is a cross-evaluation."""
    kind = model.spec[0].kind if isinstance(model.spec, tuple) else model.spec.kind
    if kind not in ("lbm", "ebm", "pm"):
        return 0
    return int(layer.split("/")[0] in ("category", "pose") and "/" in layer)


def run_layer_sweep(model, dataset: DatasetManifest, probes=PROBES, layers="all", ks=KNN_KS,
                    kernel: KernelConfig = KernelConfig(), linear: LinearProbeConfig = LinearProbeConfig(),
                    train_stride: int = 1, exclude_degenerate: bool = True, include_input: bool = False,
                    budget: int = DEFAULT_COLUMN_BUDGET, seed: int = 0) -> ProbeReport:
    """Probe every requested layer: train split fits, val split tunes the ridge, test split scores.

    Pose probes and manifold measurements skip degenerate categories when
    ``exclude_degenerate`` is set. Rows follow the model's layer order.
    """
    if isinstance(model, (str, Path)):
        model = T.load_model(model)
    unknown = set(probes) - set(PROBES)
    if unknown:
        raise ValueError(f"unknown probes {sorted(unknown)}; choose from {PROBES}")
    names = list(model.layer_names) if layers == "all" else list(layers)
    if include_input and INPUT_LAYER not in names:
        names.insert(0, INPUT_LAYER)
    split_idx = {s: dataset.indices(s) for s in ("train", "val", "test")}
    split_idx["train"] = split_idx["train"][::max(int(train_stride), 1)]
    keep = {s: ~dataset.degenerate_mask[i] if exclude_degenerate else np.ones(len(i), bool)
            for s, i in split_idx.items()}
    kind = model.spec[0].kind if isinstance(model.spec, tuple) else model.spec.kind
    report = ProbeReport(model_kind=kind)
    # Layers are processed in small groups so only a few activation matrices live at once.
    group = 4
    for g0 in range(0, len(names), group):
        chunk = names[g0:g0 + group]
        feats = {s: extract_many(model, dataset, chunk, indices=i) for s, i in split_idx.items()}
        for name in chunk:
            tr, va, te = (feats[s][name] for s in ("train", "val", "test"))
            trp, vap, tep = tr.subset(keep["train"]), va.subset(keep["val"]), te.subset(keep["test"])
            row = {"layer": name, "cross_eval": _cross_eval_flag(model, name)}
            if "linear" in probes:
                row["cat_acc"] = linear_category_probe(tr, te, linear)
            if "kernel" in probes:
                row["pose_aaai"], row["pose_mae_deg"] = kernel_ridge_pose_probe(trp, tep, kernel, vap)
            if "knn" in probes:
                cat = knn_predict(tr, te, ks, "category")
                pose = knn_predict(trp, tep, ks, "pose")
                for k in ks:
                    row[f"knn_cat_k{k}"] = float(np.mean(cat[k] == te.category))
                    row[f"knn_pose_aaai_k{k}"] = float(np.mean(aaai_accuracy(pose[k], tep.angle)))
            if "svd" in probes:
                row["eff_sv90"] = effective_sv_90(tep, budget=budget, seed=seed)
                row["nuclear_norm"] = nuclear_norm(tep, budget=budget, seed=seed)
            if "kreg" in probes:
                row["kreg_err_deg"] = kernel_regression_error(tep, config=kernel, budget=budget, seed=seed)
            log.info("probed %s: %s", name, {k: v for k, v in row.items() if k != "layer"})
            report.rows.append(row)
        del feats
    return report
