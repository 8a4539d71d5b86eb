"""Training, evaluation and the experiment drivers built on them."""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import topology as T
from .nn.losses import batch_softmax_cross_entropy, softmax
from .nn.optim import sgd_step
from .pose import LossWeights, PoseBinning, aaai_accuracy, abs_angular_error, argmax_pose, expected_pose, pose_scores
from .synth import CropConfig, DatasetManifest, load_batch, load_manifest
from .textconfig import format_key_values, parse_key_values

log = logging.getLogger(__name__)

POSE_RULES = ("argmax", "expected", "both")
RESULT_COLUMNS = ("model", "split", "category_acc", "pose_acc_22_5", "pose_acc_45",
                  "pose_aaai_argmax", "pose_aaai_expected")
CONVERGENCE_COLUMNS = ("iter", "lr", "cat_err", "pose_err", "loss")


@dataclass(frozen=True)
class ExperimentConfig:
    model_kind: str = "ebm"
    num_categories: int = 4
    num_pose_bins: int = 16
    dataset_path: str = ""
    lambda1: float = 1.0
    lambda2: float = 1.0
    base_lr: float = 1e-3
    gamma: float = 0.1
    decay_interval: int = 1000
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 32
    max_iterations: int = 3000
    seed: int = 0
    warm_start: str | None = None
    pose_rule: str = "both"
    profile: str = "desk"
    ebm_width: int = 800
    val_interval: int = 250
    init_std: float | None = None
    dropout: float = 0.1
    out_dir: str | None = None

    def __post_init__(self):
        if self.base_lr <= 0 or self.decay_interval <= 0 or self.max_iterations < 0:
            raise ValueError("learning rate and decay interval must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.pose_rule not in POSE_RULES:
            raise ValueError(f"pose_rule must be one of {POSE_RULES}")
        if self.model_kind not in T.MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.model_kind!r}")

    @classmethod
    def full(cls, **kw) -> "ExperimentConfig":
        """The full-scale schedule constants."""
        base = dict(base_lr=5e-4, gamma=0.1, decay_interval=5000, momentum=0.9, weight_decay=1e-4,
                    batch_size=100, profile="full", ebm_width=4096, init_std=0.01, dropout=0.5)
        base.update(kw)
        return cls(**base)

    @property
    def labels(self) -> T.LabelSpace:
        return T.LabelSpace(self.num_categories, self.num_pose_bins)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2)

    def topology(self):
        return T.build_topology(self.model_kind, self.labels, T.profile_from_name(self.profile),
                                ebm_width=self.ebm_width, dropout=self.dropout)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        kv = parse_key_values(text, allowed={f.name for f in fields(cls)})
        kw = {}
        for f in fields(cls):
            if f.name not in kv:
                continue
            v = kv[f.name]
            if v in ("", "none", "None"):
                kw[f.name] = "" if f.name == "dataset_path" else None
            elif f.name in ("model_kind", "dataset_path", "warm_start", "pose_rule", "profile", "out_dir"):
                kw[f.name] = v
            elif f.name in ("lambda1", "lambda2", "base_lr", "gamma", "momentum", "weight_decay",
                            "init_std", "dropout"):
                kw[f.name] = float(v)
            else:
                kw[f.name] = int(v)
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        return format_key_values(asdict(self))


def lr_at(iteration: int, config: ExperimentConfig, freshly_initialized: bool = False) -> float:
    """Step schedule ``base * gamma ** (iteration // interval)``; random-init layers get 10x."""
    if iteration < 0:
        raise ValueError("iteration must be nonnegative")
    lr = config.base_lr * config.gamma ** (iteration // config.decay_interval)
    return lr * 10.0 if freshly_initialized else lr


# ------------------------------------------------------------------ objectives

def _objective(head: str | None, kind: str, logits: dict, cats, bins, labels: T.LabelSpace,
               weights: LossWeights):
    """Loss, per-head logit gradients and batch errors for one network.

    ``head`` names the task of a parallel-model half; ``None`` otherwise.
    """
    if kind == "cpm":
        joint = cats * labels.num_pose_bins + bins
        loss, g = batch_softmax_cross_entropy(logits["joint"], joint)
        pred_c, pred_p = np.divmod(logits["joint"].argmax(axis=1), labels.num_pose_bins)
        return loss, {"joint": g}, float(np.mean(pred_c != cats)), float(np.mean(pred_p != bins))
    grads, loss = {}, 0.0
    cat_err = pose_err = float("nan")
    if "category" in logits and head in (None, "category"):
        lc, gc = batch_softmax_cross_entropy(logits["category"], cats)
        w = weights.category if kind in ("lbm", "ebm") else 1.0
        loss += w * lc
        grads["category"] = w * gc
        cat_err = float(np.mean(logits["category"].argmax(axis=1) != cats))
    if "pose" in logits and head in (None, "pose"):
        lp, gp = batch_softmax_cross_entropy(logits["pose"], bins)
        w = weights.pose if kind in ("lbm", "ebm") else 1.0
        loss += w * lp
        grads["pose"] = w * gp
        pose_err = float(np.mean(logits["pose"].argmax(axis=1) != bins))
    return loss, grads, cat_err, pose_err


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, batch_ids):
        self.iteration = iteration
        self.batch_ids = list(map(int, batch_ids))
        super().__init__(f"non-finite loss at iteration {iteration}; batch sample ids {self.batch_ids}")


# ------------------------------------------------------------------ prediction and evaluation

def predict(model, manifest: DatasetManifest, idx, batch_size: int = 128):
    """Eval-mode category and pose distributions, shapes (N, C) and (N, P)."""
    labels = _labels_of(model)
    cats, poses = [], []
    idx = np.asarray(idx)
    for s in range(0, len(idx), batch_size):
        x, *_ = load_batch(manifest, idx[s:s + batch_size], "eval")
        c, p = distributions(model.forward(x, train=False), labels)
        cats.append(c)
        poses.append(p)
    return np.concatenate(cats), np.concatenate(poses)


def _labels_of(model) -> T.LabelSpace:
    spec = model.spec[0] if isinstance(model.spec, tuple) else model.spec
    return spec.labels


def distributions(logits: dict, labels: T.LabelSpace):
    """Turn head logits into (category probs, pose probs).

    The cross-product head yields the category marginal and the pose distribution
    conditioned on the most probable category.
    """
    if "joint" in logits:
        joint = softmax(logits["joint"]).reshape(-1, labels.num_categories, labels.num_pose_bins)
        cat = joint.sum(axis=2)
        best = cat.argmax(axis=1)
        pose = joint[np.arange(len(best)), best]
        return cat, pose / pose.sum(axis=1, keepdims=True)
    n = next(iter(logits.values())).shape[0]
    cat = softmax(logits["category"]) if "category" in logits else np.full((n, labels.num_categories), 1 / labels.num_categories)
    pose = softmax(logits["pose"]) if "pose" in logits else np.full((n, labels.num_pose_bins), 1 / labels.num_pose_bins)
    return cat, pose


def evaluate_predictions(cat_probs, pose_probs, true_cats, true_angles, binning: PoseBinning,
                         pose_mask=None) -> dict:
    """Table-style percentages from predicted distributions.

    ``pose_mask`` restricts the pose columns (e.g. to non-degenerate categories).
    """
    true_cats = np.asarray(true_cats)
    true_angles = np.asarray(true_angles, dtype=np.float64)
    m = np.ones(len(true_cats), bool) if pose_mask is None else np.asarray(pose_mask, bool)
    cat_acc = float(np.mean(np.asarray(cat_probs).argmax(axis=1) == true_cats))
    am = argmax_pose(pose_probs[m], binning)
    ex = expected_pose(pose_probs[m], binning)
    sa = pose_scores(am, true_angles[m])
    se = pose_scores(ex, true_angles[m])
    return {
        "category_acc": 100.0 * cat_acc,
        "pose_acc_22_5": 100.0 * sa["acc_22_5"],
        "pose_acc_45": 100.0 * sa["acc_45"],
        "pose_aaai_argmax": 100.0 * sa["aaai"],
        "pose_aaai_expected": 100.0 * se["aaai"],
    }


def evaluate(model, manifest: DatasetManifest, split: str = "test", rule: str = "both",
             exclude_degenerate: bool = True, name: str | None = None) -> dict:
    """One results-table row for ``model`` on ``split``.

    The 22.5/45 degree columns follow ``rule`` (``expected`` switches them to
    the expectation rule); both AAAI columns are always filled.
    """
    if isinstance(model, (str, Path)):
        model = T.load_model(model)
    labels = _labels_of(model)
    if labels.num_categories != manifest.config.num_categories or labels.num_pose_bins != manifest.config.pose_bins:
        raise ValueError(
            f"model label space {labels} does not match dataset "
            f"({manifest.config.num_categories} categories, {manifest.config.pose_bins} bins)"
        )
    idx = manifest.indices(split)
    cat, pose = predict(model, manifest, idx)
    mask = ~manifest.degenerate_mask[idx] if exclude_degenerate else None
    binning = PoseBinning(labels.num_pose_bins)
    row = evaluate_predictions(cat, pose, manifest.category[idx], manifest.angle[idx], binning, mask)
    if rule == "expected":
        m = np.ones(len(idx), bool) if mask is None else mask
        err = abs_angular_error(expected_pose(pose[m], binning), manifest.angle[idx][m])
        row["pose_acc_22_5"] = 100.0 * float(np.mean(err < 22.5))
        row["pose_acc_45"] = 100.0 * float(np.mean(err < 45.0))
    kind = model.spec[0].kind if isinstance(model.spec, tuple) else model.spec.kind
    return {"model": name or kind, "split": split, **row}


def per_category_pose(model, manifest: DatasetManifest, split: str = "test", rule: str = "argmax") -> dict[int, float]:
    """Mean AAAI accuracy per category (fraction, not percent)."""
    idx = manifest.indices(split)
    _, pose = predict(model, manifest, idx)
    binning = PoseBinning(_labels_of(model).num_pose_bins)
    pred = argmax_pose(pose, binning) if rule == "argmax" else expected_pose(pose, binning)
    acc = aaai_accuracy(pred, manifest.angle[idx])
    cats = manifest.category[idx]
    return {int(c): float(np.mean(acc[cats == c])) for c in np.unique(cats)}


def write_results(path, rows) -> None:
    _write_csv(path, RESULT_COLUMNS, rows)


def _write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)


# ------------------------------------------------------------------ training

@dataclass
class TrainResult:
    model: object
    best_state: dict
    log: list = field(default_factory=list)  # dicts with CONVERGENCE_COLUMNS
    validation: list = field(default_factory=list)  # dicts: iter, category_acc, pose_aaai
    best_iteration: int = -1


def _validate(model, manifest, idx, labels):
    cat, pose = predict(model, manifest, idx)
    out = {}
    if any(h in ("category", "joint") for h in _heads(model)):
        out["category_acc"] = float(np.mean(cat.argmax(axis=1) == manifest.category[idx]))
    if any(h in ("pose", "joint") for h in _heads(model)):
        keep = ~manifest.degenerate_mask[idx]
        pred = argmax_pose(pose[keep], PoseBinning(labels.num_pose_bins))
        out["pose_aaai"] = float(np.mean(aaai_accuracy(pred, manifest.angle[idx][keep])))
    return out


def _heads(model):
    if isinstance(model, T.Network):
        return model.spec.branch_names
    return model.head_names


def _trainable(net, kind: str, weights: LossWeights) -> dict:
    """Parameters the optimizer updates: a branch whose loss weight is zero is left untouched."""
    params = net.named_parameters()
    if kind not in ("lbm", "ebm"):
        return params
    frozen = [head for head, w in (("category", weights.category), ("pose", weights.pose)) if w == 0]
    return {k: p for k, p in params.items() if not any(k.startswith(f"{h}/") for h in frozen)}


def _fit(net, config: ExperimentConfig, manifest: DatasetManifest, head: str | None):
    """One SGD loop over one network. ``head`` selects the task of a parallel-model half."""
    labels = config.labels
    kind = config.model_kind
    train_idx = manifest.indices("train")
    val_idx = manifest.indices("val")
    data_rng = np.random.default_rng([config.seed, 10])
    drop_rng = np.random.default_rng([config.seed, 11])
    crop = CropConfig(manifest.config.crop_size)
    params = _trainable(net, kind, config.weights)
    order, pos = data_rng.permutation(train_idx), 0
    result = TrainResult(net, net.state_dict())
    best = -np.inf
    for it in range(config.max_iterations):
        if pos + config.batch_size > len(order):
            order, pos = data_rng.permutation(train_idx), 0
        batch = order[pos:pos + config.batch_size]
        pos += config.batch_size
        x, cats, bins, _ = load_batch(manifest, batch, "train", crop, data_rng)
        lr = lr_at(it, config)
        net.zero_grad()
        logits = net.forward(x, train=True, rng=drop_rng)
        loss, grads, cerr, perr = _objective(head, kind, logits, cats, bins, labels, config.weights)
        if not np.isfinite(loss):
            raise TrainingDiverged(it, batch)
        net.backward(grads)
        try:
            sgd_step(params, lr, config.momentum, config.weight_decay)
        except FloatingPointError:
            raise TrainingDiverged(it, batch) from None
        result.log.append({"iter": it, "lr": lr, "cat_err": cerr, "pose_err": perr, "loss": loss})
        last = it + 1 == config.max_iterations
        if config.val_interval and ((it + 1) % config.val_interval == 0 or last):
            v = _validate(net, manifest, val_idx, labels)
            v = {k: val for k, val in v.items() if head is None or k.startswith("category" if head == "category" else "pose")}
            result.validation.append({"iter": it + 1, **v})
            score = float(np.mean(list(v.values())))
            if score > best:
                best, result.best_state, result.best_iteration = score, net.state_dict(), it + 1
            log.info("iter %d loss %.4f val %s", it + 1, loss, v)
    if config.max_iterations == 0 or not config.val_interval:
        result.best_state = net.state_dict()
    return result


def train(config: ExperimentConfig, manifest: DatasetManifest | None = None) -> TrainResult:
    """Train the configured model.

    The parallel model runs two independent loops over the same data order and
    their logs are merged per iteration. When ``config.out_dir`` is set, the
    final and best-validation checkpoints and both CSV logs are written there.
    """
    if manifest is None:
        manifest = load_manifest(config.dataset_path)
    if manifest.config.num_categories != config.num_categories or manifest.config.pose_bins != config.num_pose_bins:
        raise ValueError("dataset label space does not match the experiment config")
    model = T.instantiate(config.topology(), seed=config.seed, warm_start=config.warm_start,
                          init_std=config.init_std)
    if isinstance(model, T.PairedNetwork):
        parts = {role: _fit(net, config, manifest, role) for role, net in model.nets.items()}
        c, p = parts["category"], parts["pose"]
        merged = [
            {"iter": a["iter"], "lr": a["lr"], "cat_err": a["cat_err"], "pose_err": b["pose_err"],
             "loss": a["loss"] + b["loss"]}
            for a, b in zip(c.log, p.log)
        ]
        validation = [{**a, **b} for a, b in zip(c.validation, p.validation)]
        result = TrainResult(model, {**c.best_state, **p.best_state}, merged, validation,
                             max(c.best_iteration, p.best_iteration))
    else:
        result = _fit(model, config, manifest, None)
    if config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        T.save_model(model, out / "final.pbl")
        best = T.instantiate(config.topology(), init_std=config.init_std)
        best.load_state_dict(result.best_state)
        T.save_model(best, out / "best.pbl")
        _write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS, result.log)
        _write_csv(out / "validation.csv", ("iter", "category_acc", "pose_aaai"), result.validation)
        (out / "config.txt").write_text(config.to_text())
    return result


def best_model(config: ExperimentConfig, result: TrainResult):
    m = T.instantiate(config.topology(), init_std=config.init_std)
    m.load_state_dict(result.best_state)
    return m


# ------------------------------------------------------------------ experiment drivers

LAMBDA_GRID = ((1.0, 1.0), (1.0, 2.0), (2.0, 1.0))


def lambda_sweep(config: ExperimentConfig, manifest: DatasetManifest | None = None, grid=LAMBDA_GRID,
                 split: str = "test") -> list[dict]:
    """Train one model per (lambda1, lambda2) point with a shared seed; one row per point."""
    grid = list(grid)
    if not grid:
        raise ValueError("lambda grid is empty")
    manifest = manifest or load_manifest(config.dataset_path)
    rows = []
    for l1, l2 in grid:
        cfg = replace(config, lambda1=float(l1), lambda2=float(l2),
                      out_dir=str(Path(config.out_dir) / f"lambda_{l1:g}_{l2:g}") if config.out_dir else None)
        res = train(cfg, manifest)
        row = evaluate(res.model, manifest, split, config.pose_rule)
        rows.append({"lambda1": l1, "lambda2": l2, "categorization": row["category_acc"],
                     "pose": row["pose_aaai_argmax"]})
    return rows


def select_lambda(rows: list[dict]):
    """The grid point that is best on both columns, or ``None`` if no point dominates."""
    for r in rows:
        if all(r["categorization"] >= o["categorization"] and r["pose"] >= o["pose"] for o in rows):
            return (r["lambda1"], r["lambda2"])
    return None


def write_lambda_table(path, rows) -> None:
    _write_csv(path, ("lambda1", "lambda2", "categorization", "pose"), rows)


def iterations_to_threshold(validation: list[dict], threshold: float, key: str = "pose_aaai"):
    for v in validation:
        if key in v and v[key] >= threshold:
            return v["iter"]
    return None


def convergence_compare(configs: dict, manifest: DatasetManifest | None = None,
                        threshold: float = 0.8) -> tuple[list[dict], list[dict]]:
    """Train each named config and align the validation curves.

    Returns ``(curve rows, summary rows)``; summary gives the first validation
    iteration reaching ``threshold`` pose AAAI, or ``"not reached"``.
    """
    curves, summary = [], []
    for name, cfg in configs.items():
        m = manifest or load_manifest(cfg.dataset_path)
        res = train(cfg, m)
        for v in res.validation:
            curves.append({
                "model": name, "iter": v["iter"],
                "val_cat_err": 1.0 - v["category_acc"] if "category_acc" in v else "",
                "val_pose_err": 1.0 - v["pose_aaai"] if "pose_aaai" in v else "",
            })
        hit = iterations_to_threshold(res.validation, threshold)
        summary.append({"model": name, "threshold": threshold,
                        "iterations_to_threshold": hit if hit is not None else "not reached"})
    return curves, summary


def write_curves(path, curves) -> None:
    _write_csv(path, ("model", "iter", "val_cat_err", "val_pose_err"), curves)


def write_summary(path, summary) -> None:
    _write_csv(path, ("model", "threshold", "iterations_to_threshold"), summary)


def overfit_one_batch(config: ExperimentConfig, manifest: DatasetManifest, batch_ids,
                      max_iterations: int = 500, target: float = 0.01) -> tuple[int, float]:
    """Repeat one fixed (centre-cropped) batch until the joint loss drops below ``target``.

    Returns ``(iterations used, final loss)``; a wiring check for every model kind.
    """
    model = T.instantiate(config.topology(), seed=config.seed, init_std=config.init_std)
    x, cats, bins, _ = load_batch(manifest, batch_ids, "eval")
    nets = list(model.nets.items()) if isinstance(model, T.PairedNetwork) else [(None, model)]
    drop_rng = np.random.default_rng([config.seed, 11])
    loss = float("inf")
    for it in range(max_iterations):
        loss = 0.0
        for head, net in nets:
            net.zero_grad()
            logits = net.forward(x, train=True, rng=drop_rng)
            l, grads, _, _ = _objective(head, config.model_kind, logits, cats, bins, config.labels, config.weights)
            net.backward(grads)
            sgd_step(_trainable(net, config.model_kind, config.weights), lr_at(it, config),
                     config.momentum, config.weight_decay)
            loss += l
        if loss < target:
            return it + 1, loss
    return max_iterations, loss
