"""Optimizers, configs, the staged training loops, and evaluation runs.

Training proceeds one image at a time in float64; batches larger than 1
are gradient accumulation followed by a single averaged update. All
randomness flows from the config seed, so identical (config, dataset)
pairs produce identical run logs.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import DatasetIndex, class_pixel_frequencies
from .errors import (
    ConfigError,
    DivergenceError,
    InvalidClassError,
    NumericError,
    PairingError,
)
from .losses import (
    ClassWeights,
    class_weights_from_frequencies,
    focal_loss,
    gdl_grad_multiclass,
    gdl_value,
    softmax,
    wce_loss,
)
from .metrics import MetricsReport, binary_iou, evaluate_pair_set
from .models import Network, build_segnet, build_unet, compile_model
from .toy import ToyDataset

LOSS_KINDS = ("wce", "gdl", "focal")
OPTIMIZER_KINDS = ("sgd", "adam")
MODEL_KINDS = ("segnet", "unet")
STAGE_KINDS = ("overfit-one", "overfit-subset", "full")

LR_SCHEDULE_FORM = "lr0/(1+decay*t)"

RUNLOG_FIELDS = (
    "epoch", "train_loss", "train_acc", "train_biou", "val_acc", "val_biou", "lr",
)


def sgd_step(params, grads, lr: float):
    """params' = params - lr * grads, exactly; accepts arrays or dicts."""
    if isinstance(params, dict):
        if set(params) != set(grads):
            raise PairingError("params and grads have different keys")
        return {k: sgd_step(params[k], grads[k], lr) for k in params}
    p = np.asarray(params, dtype=np.float64)
    g = np.asarray(grads, dtype=np.float64)
    if p.shape != g.shape:
        raise ConfigError(f"param shape {p.shape} != grad shape {g.shape}")
    return p - lr * g


@dataclass
class AdamState:
    """First/second moment estimates plus the shared timestep."""

    m: dict | np.ndarray
    v: dict | np.ndarray
    t: int = 0

    @classmethod
    def init_like(cls, params) -> "AdamState":
        if isinstance(params, dict):
            return cls(
                m={k: np.zeros_like(np.asarray(v, dtype=np.float64)) for k, v in params.items()},
                v={k: np.zeros_like(np.asarray(v, dtype=np.float64)) for k, v in params.items()},
            )
        z = np.zeros_like(np.asarray(params, dtype=np.float64))
        return cls(m=z, v=z.copy())


def adam_step(
    params,
    grads,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """Standard bias-corrected Adam update; returns (params', state')."""
    t = state.t + 1
    if isinstance(params, dict):
        if set(params) != set(grads):
            raise PairingError("params and grads have different keys")
        new_p, new_m, new_v = {}, {}, {}
        for k in params:
            p = np.asarray(params[k], dtype=np.float64)
            g = np.asarray(grads[k], dtype=np.float64)
            if p.shape != g.shape:
                raise ConfigError(f"{k}: param shape {p.shape} != grad shape {g.shape}")
            m = beta1 * state.m[k] + (1 - beta1) * g
            v = beta2 * state.v[k] + (1 - beta2) * g * g
            m_hat = m / (1 - beta1**t)
            v_hat = v / (1 - beta2**t)
            new_p[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
            new_m[k] = m
            new_v[k] = v
        return new_p, AdamState(new_m, new_v, t)
    p = np.asarray(params, dtype=np.float64)
    g = np.asarray(grads, dtype=np.float64)
    if p.shape != g.shape:
        raise ConfigError(f"param shape {p.shape} != grad shape {g.shape}")
    m = beta1 * state.m + (1 - beta1) * g
    v = beta2 * state.v + (1 - beta2) * g * g
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    return p - lr * m_hat / (np.sqrt(v_hat) + eps), AdamState(m, v, t)


def lr_schedule(lr0: float, decay: float, t: int) -> float:
    """Inverse-time decay: lr_t = lr0 / (1 + decay * t), t counting updates."""
    if decay < 0:
        raise ConfigError(f"decay must be >= 0, got {decay}")
    return lr0 / (1.0 + decay * t)


@dataclass
class TrainConfig:
    """Everything a training run needs, loadable from flat key=value text."""

    model: str = "segnet"
    stage: str = "overfit-one"
    loss: str = "focal"
    gamma: float = 2.0
    optimizer: str = "sgd"
    lr: float = 0.01
    decay: float = 0.0
    batch_size: int = 1
    epochs: int = 300
    seed: int = 0
    split_fraction: float = 0.9
    weight_clip_lo: float = 0.1
    weight_clip_hi: float = 100.0
    data_dir: str = ""
    out_dir: str = ""
    image_size: int = 64
    num_classes: int = 47
    unet_depth: int = 4
    unet_base_channels: int = 64
    subset_size: int = 0
    image_id: str = ""
    success_acc: float = 0.99
    success_biou: float = 0.90
    early_stop: bool = True
    input_scale: float = 255.0

    def validate(self) -> None:
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.stage not in STAGE_KINDS:
            raise ConfigError(f"stage must be one of {STAGE_KINDS}, got {self.stage!r}")
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if self.optimizer not in OPTIMIZER_KINDS:
            raise ConfigError(
                f"optimizer must be one of {OPTIMIZER_KINDS}, got {self.optimizer!r}"
            )
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.decay < 0:
            raise ConfigError(f"decay must be >= 0, got {self.decay}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError(
                f"split_fraction must be in (0, 1), got {self.split_fraction}"
            )
        if not 0 < self.weight_clip_lo <= self.weight_clip_hi:
            raise ConfigError(
                f"bad weight clip bounds ({self.weight_clip_lo}, {self.weight_clip_hi})"
            )
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.input_scale <= 0:
            raise ConfigError(f"input_scale must be > 0, got {self.input_scale}")
        if self.image_size < 1:
            raise ConfigError(f"image_size must be >= 1, got {self.image_size}")
        if self.subset_size < 0:
            raise ConfigError(f"subset_size must be >= 0, got {self.subset_size}")
        if not 0.0 < self.success_acc <= 1.0 or not 0.0 < self.success_biou <= 1.0:
            raise ConfigError("success thresholds must be in (0, 1]")

    def to_text(self) -> str:
        lines = [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def weight_clip(self) -> tuple[float, float]:
        return (self.weight_clip_lo, self.weight_clip_hi)


def _coerce(raw: str, target_type: type):
    if target_type is bool:
        lowered = raw.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return target_type(raw)


def load_config(path: str | Path) -> TrainConfig:
    """Parse a flat `key = value` config file into a TrainConfig.

    Blank lines and lines starting with '#' are ignored. Unknown keys and
    unparseable values raise ConfigError; validation of the assembled
    config is left to the caller so usage errors can be told apart.
    """
    known = {f.name: f.type for f in fields(TrainConfig)}
    types = {"str": str, "float": float, "int": int, "bool": bool}
    values = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in known:
            raise ConfigError(f"line {line_no}: unknown config key {key!r}")
        try:
            values[key] = _coerce(raw, types[str(known[key])])
        except ValueError as exc:
            raise ConfigError(f"line {line_no}: bad value for {key}: {exc}") from exc
    return TrainConfig(**values)


def save_config(config: TrainConfig, path: str | Path) -> None:
    Path(path).write_text(config.to_text())


@dataclass
class RunLog:
    """Per-epoch training record plus run-level outcomes.

    records hold exactly the fields epoch, train_loss, train_acc,
    train_biou, val_acc, val_biou, lr, in that order, one JSON object per
    line on disk. Wall clock and fingerprints live in the separate meta
    payload so the log file itself is reproducible byte for byte.
    """

    records: list[dict] = field(default_factory=list)
    success: bool = False
    best_epoch: int = -1
    config_fingerprint: str = ""
    wall_clock_s: float = 0.0
    schedule: str = LR_SCHEDULE_FORM

    def append(self, **kwargs) -> None:
        if set(kwargs) != set(RUNLOG_FIELDS):
            raise ConfigError(f"run log record needs exactly {RUNLOG_FIELDS}")
        self.records.append({key: kwargs[key] for key in RUNLOG_FIELDS})

    def save_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for record in self.records:
                fh.write(json.dumps(record) + "\n")

    @classmethod
    def load_jsonl(cls, path: str | Path) -> "RunLog":
        log = cls()
        for line in Path(path).read_text().splitlines():
            if line.strip():
                log.records.append(json.loads(line))
        return log

    def meta_payload(self) -> dict:
        return {
            "success": self.success,
            "best_epoch": self.best_epoch,
            "config_fingerprint": self.config_fingerprint,
            "wall_clock_s": self.wall_clock_s,
            "lr_schedule": self.schedule,
            "epochs_logged": len(self.records),
        }

    def save_meta(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.meta_payload(), indent=2, sort_keys=True) + "\n")


def build_model_from_config(config: TrainConfig) -> Network:
    size = (config.image_size, config.image_size, 3)
    if config.model == "segnet":
        spec = build_segnet(num_classes=config.num_classes, input_shape=size)
    else:
        spec = build_unet(
            num_classes=config.num_classes,
            depth=config.unet_depth,
            base_channels=config.unet_base_channels,
            input_shape=size,
        )
    return compile_model(spec, seed=config.seed)


def one_hot_target(class_map: np.ndarray, num_classes: int) -> np.ndarray:
    if class_map.max(initial=0) >= num_classes:
        raise InvalidClassError(
            f"label {int(class_map.max())} does not fit num_classes={num_classes}"
        )
    out = np.zeros(class_map.shape + (num_classes,), dtype=np.float64)
    rows, cols = np.indices(class_map.shape)
    out[rows, cols, class_map] = 1.0
    return out


def loss_and_grad(
    kind: str,
    logits: np.ndarray,
    target: np.ndarray,
    weights: np.ndarray | ClassWeights,
    gamma: float,
) -> tuple[float, np.ndarray]:
    """Loss value and its gradient with respect to the logits.

    wce differentiates through softmax in fused form; gdl and focal are
    defined on probabilities, so their gradients are pushed through the
    softmax Jacobian p * (g - <g, p>).
    """
    if kind == "wce":
        return wce_loss(logits, target, weights)
    p = softmax(logits)
    if kind == "gdl":
        value = gdl_value(p, target)
        gp = gdl_grad_multiclass(p, target)
    elif kind == "focal":
        value, gp = focal_loss(p, target, gamma)
    else:
        raise ConfigError(f"unknown loss kind {kind!r}")
    dot = np.sum(gp * p, axis=-1, keepdims=True)
    return value, p * (gp - dot)


def predict(net: Network, image: np.ndarray, input_scale: float = 255.0) -> np.ndarray:
    """Inference-mode class map; argmax ties go to the lowest class index."""
    x = np.asarray(image, dtype=np.float64) / input_scale
    logits = net.forward(x, training=False)
    return np.argmax(logits, axis=-1).astype(np.int16)


def class_weights_for(
    index: DatasetIndex, config: TrainConfig
) -> ClassWeights:
    freq = class_pixel_frequencies(index)[: config.num_classes]
    return class_weights_from_frequencies(freq, clip=config.weight_clip())


class _Trainer:
    """Owns the network, optimizer state, and update counter for one run."""

    def __init__(self, net: Network, config: TrainConfig, weights: ClassWeights):
        self.net = net
        self.config = config
        self.weights = weights
        self.params = net.params()  # live views into the layers
        self.adam = AdamState.init_like(self.params) if config.optimizer == "adam" else None
        self.t = 0  # global update count
        self.last_lr = config.lr

    def train_batch(self, batch: list[tuple[np.ndarray, np.ndarray, np.ndarray]],
                    epoch: int) -> tuple[float, int, float]:
        """One accumulated update; returns (summed loss, correct pixels, biou sum)."""
        self.net.zero_grads()
        loss_sum = 0.0
        correct = 0
        biou_sum = 0.0
        n = len(batch)
        for x, target, class_map in batch:
            logits = self.net.forward(x, training=True)
            loss, dz = loss_and_grad(
                self.config.loss, logits, target, self.weights, self.config.gamma
            )
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            self.net.backward(dz / n)
            loss_sum += loss
            pred = np.argmax(logits, axis=-1)
            correct += int(np.count_nonzero(pred == class_map))
            biou_sum += binary_iou(pred, class_map)
        lr_t = lr_schedule(self.config.lr, self.config.decay, self.t)
        grads = self.net.grads()
        if self.adam is None:
            new_params = sgd_step(self.params, grads, lr_t)
        else:
            new_params, self.adam = adam_step(self.params, grads, self.adam, lr_t)
        for key, arr in self.params.items():
            arr[...] = new_params[key]
        self.t += 1
        self.last_lr = lr_t
        return loss_sum, correct, biou_sum


def _toy_example(
    dataset: ToyDataset, image_id: str, config: TrainConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    image = dataset.images[image_id]
    class_map = dataset.class_maps[image_id]
    x = np.asarray(image, dtype=np.float64) / config.input_scale
    target = one_hot_target(class_map, config.num_classes)
    return x, target, class_map


def _validate_pass(
    net: Network, dataset: ToyDataset, ids: list[str], input_scale: float
) -> tuple[float, float]:
    preds = [predict(net, dataset.images[i], input_scale) for i in ids]
    gts = [dataset.class_maps[i] for i in ids]
    report = evaluate_pair_set(preds, gts)
    return report.pixel_accuracy, report.binary_iou


def overfit_single(
    net: Network,
    image: np.ndarray,
    class_map: np.ndarray,
    config: TrainConfig,
) -> RunLog:
    """Drive the loss down on one example until it is memorized.

    Per-epoch val_* fields are inference-mode metrics on the same
    example. With early_stop set, the loop ends as soon as both success
    thresholds are met; the success flag reflects the final epoch.
    """
    config.validate()
    started = time.monotonic()
    x = np.asarray(image, dtype=np.float64) / config.input_scale
    target = one_hot_target(class_map, config.num_classes)
    counts = np.bincount(class_map.ravel(), minlength=config.num_classes)
    freq = counts[: config.num_classes] / class_map.size
    weights = class_weights_from_frequencies(freq, clip=config.weight_clip())
    trainer = _Trainer(net, config, weights)
    log = RunLog(config_fingerprint=config.fingerprint())
    n_pixels = class_map.size
    for epoch in range(1, config.epochs + 1):
        try:
            loss_sum, correct, biou_sum = trainer.train_batch(
                [(x, target, class_map)], epoch
            )
            pred = predict(net, image, config.input_scale)
        except NumericError as exc:
            # blown-up parameters surface as non-finite activations
            raise DivergenceError(epoch, str(exc)) from exc
        val_acc = float(np.count_nonzero(pred == class_map) / n_pixels)
        val_biou = binary_iou(pred, class_map)
        log.append(
            epoch=epoch,
            train_loss=loss_sum,
            train_acc=correct / n_pixels,
            train_biou=biou_sum,
            val_acc=val_acc,
            val_biou=val_biou,
            lr=trainer.last_lr,
        )
        hit = val_acc >= config.success_acc and val_biou >= config.success_biou
        if hit:
            log.success = True
            log.best_epoch = epoch
            if config.early_stop:
                break
    if log.records and log.best_epoch < 0:
        last = log.records[-1]
        log.success = (
            last["val_acc"] >= config.success_acc
            and last["val_biou"] >= config.success_biou
        )
        log.best_epoch = len(log.records)
    log.wall_clock_s = time.monotonic() - started
    return log


def fit(
    net: Network,
    dataset: ToyDataset,
    train_index: DatasetIndex,
    val_index: DatasetIndex,
    config: TrainConfig,
) -> tuple[RunLog, dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Epoch loop with per-epoch validation and best-val tracking.

    Returns (log, best_params, best_state); the best epoch maximizes
    (val_biou, val_acc, earliest). The network is left at its final-epoch
    parameters; restore the returned snapshot to use the best ones.
    """
    config.validate()
    train_ids = train_index.image_ids
    val_ids = val_index.image_ids
    if not train_ids:
        raise ConfigError("training set is empty")
    if not val_ids:
        raise ConfigError("validation set is empty")
    overlap = set(train_ids) & set(val_ids)
    if overlap:
        raise PairingError(f"train/val overlap on {sorted(overlap)[:5]}")
    missing = [i for i in train_ids + val_ids if i not in dataset.images]
    if missing:
        raise ConfigError(f"dataset has no pixels for {missing[:5]}")

    started = time.monotonic()
    weights = class_weights_for(train_index, config)
    trainer = _Trainer(net, config, weights)
    log = RunLog(config_fingerprint=config.fingerprint())
    rng = np.random.default_rng(config.seed)
    n_train_pixels = sum(dataset.class_maps[i].size for i in train_ids)
    best_key = None
    best_params: dict[str, np.ndarray] = {}
    best_state: dict[str, np.ndarray] = {}
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_ids))
        loss_total = 0.0
        correct_total = 0
        biou_total = 0.0
        n_batches = 0
        try:
            for start in range(0, len(order), config.batch_size):
                chunk = order[start:start + config.batch_size]
                batch = [_toy_example(dataset, train_ids[i], config) for i in chunk]
                loss_sum, correct, biou_sum = trainer.train_batch(batch, epoch)
                loss_total += loss_sum
                correct_total += correct
                biou_total += biou_sum
                n_batches += 1
            val_acc, val_biou = _validate_pass(
                net, dataset, val_ids, config.input_scale
            )
        except NumericError as exc:
            # blown-up parameters surface as non-finite activations
            raise DivergenceError(epoch, str(exc)) from exc
        log.append(
            epoch=epoch,
            train_loss=loss_total / len(train_ids),
            train_acc=correct_total / n_train_pixels,
            train_biou=biou_total / len(train_ids),
            val_acc=val_acc,
            val_biou=val_biou,
            lr=trainer.last_lr,
        )
        key = (val_biou, val_acc, -epoch)
        if best_key is None or key > best_key:
            best_key = key
            best_params = {k: v.copy() for k, v in net.params().items()}
            best_state = {k: v.copy() for k, v in net.state().items()}
            log.best_epoch = epoch
    log.wall_clock_s = time.monotonic() - started
    return log, best_params, best_state


def evaluate(
    net: Network,
    dataset: ToyDataset,
    index: DatasetIndex | None = None,
    input_scale: float = 255.0,
    config_fingerprint: str = "",
) -> MetricsReport:
    """Inference-mode scoring of a dataset (or an index subset of it)."""
    ids = (index or dataset.index).image_ids
    if not ids:
        raise ConfigError("nothing to evaluate")
    expected = net.spec.input_shape
    for image_id in ids:
        shape = dataset.images[image_id].shape
        if shape != expected:
            raise ConfigError(
                f"image {image_id} has shape {shape}, but the checkpoint "
                f"expects {expected}"
            )
    preds = [predict(net, dataset.images[i], input_scale) for i in ids]
    gts = [dataset.class_maps[i] for i in ids]
    return evaluate_pair_set(preds, gts, config_fingerprint=config_fingerprint)


def restore_snapshot(
    net: Network, params: dict[str, np.ndarray], state: dict[str, np.ndarray]
) -> None:
    net.set_params(params)
    net.set_state(state)
