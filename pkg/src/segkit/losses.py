"""Class-imbalance-aware segmentation losses with analytic gradients.

All functions accept arrays of shape (..., L): the leading axes index
pixels, the trailing axis indexes the L classes. Scores are reduced in
fixed row-major order in double precision, so results are reproducible
bit for bit.

Gradient conventions: the weighted cross entropy differentiates with
respect to logits (softmax fused); the generalized Dice and focal losses
differentiate with respect to probabilities. Every analytic form here is
checked against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import MaskShapeError, NumericError

EPS_LOG = 1e-12  # floor for log arguments
EPS_DICE = 1e-12  # volume floor; EPS_DICE**2 smooths both Dice sums

DEFAULT_WEIGHT_CLIP = (0.1, 100.0)
DEFAULT_FOCAL_GAMMA = 2.0


@dataclass(frozen=True)
class ClassWeights:
    """Per-class positive weights, clipped to [w_min, w_max]."""

    w: np.ndarray
    w_min: float = DEFAULT_WEIGHT_CLIP[0]
    w_max: float = DEFAULT_WEIGHT_CLIP[1]

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=np.float64))
        if (self.w < self.w_min - 1e-12).any() or (self.w > self.w_max + 1e-12).any():
            raise ValueError("weights violate the declared clip bounds")

    def __array__(self, dtype=None):
        return self.w if dtype is None else self.w.astype(dtype)

    def to_json_list(self) -> list[float]:
        return [float(x) for x in self.w]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the trailing class axis."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(z).all():
        raise NumericError("softmax received non-finite logits")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def class_weights_from_frequencies(
    frequencies: np.ndarray,
    clip: tuple[float, float] = DEFAULT_WEIGHT_CLIP,
) -> ClassWeights:
    """Turn mean per-class pixel fractions into loss weights.

    w_c = (1 - f_c) / f_c, clipped to the given bounds; a never-seen class
    (f_c = 0) gets the upper bound. Rare classes end up heavy, dominant
    ones light, which is what pulls training away from the background.
    """
    f = np.asarray(frequencies, dtype=np.float64)
    if (f < 0).any() or (f > 1).any():
        raise ValueError("pixel fractions must lie in [0, 1]")
    w_min, w_max = clip
    if not (0 < w_min <= w_max):
        raise ValueError(f"bad clip bounds {clip}")
    with np.errstate(divide="ignore"):
        raw = np.where(f > 0, (1.0 - f) / np.maximum(f, np.finfo(float).tiny), np.inf)
    return ClassWeights(np.clip(raw, w_min, w_max), w_min, w_max)


def _check_match(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise MaskShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def wce_loss(
    logits: np.ndarray,
    target: np.ndarray,
    weights: np.ndarray | ClassWeights,
) -> tuple[float, np.ndarray]:
    """Weighted softmax cross entropy over logits.

    loss = -(1/N) sum_n sum_l w_l r_{ln} log p_{ln} with p = softmax(logits)
    and N the pixel count. Returns (loss, d loss / d logits); the gradient
    is the fused softmax form (1/N) (p_n * <w, r_n> - w * r_n).
    """
    z = np.asarray(logits, dtype=np.float64)
    r = np.asarray(target, dtype=np.float64)
    _check_match(z, r, "wce_loss")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (z.shape[-1],):
        raise MaskShapeError(f"weights shape {w.shape} does not match {z.shape[-1]} classes")
    n_pixels = int(np.prod(z.shape[:-1])) or 1
    p = softmax(z)
    loss = -np.sum(w * r * np.log(np.maximum(p, EPS_LOG))) / n_pixels
    wr_sum = np.sum(w * r, axis=-1, keepdims=True)
    grad = (p * wr_sum - w * r) / n_pixels
    return float(loss), grad


def wce_loss_binary(
    prob_fg: np.ndarray,
    target_fg: np.ndarray,
    weight: float,
) -> tuple[float, np.ndarray]:
    """Two-class weighted cross entropy on foreground probabilities.

    loss = -(1/N) sum_n [ w r_n log p_n + (1 - r_n) log(1 - p_n) ].
    Kept alongside the multiclass form purely as a gradient cross-check;
    returns (loss, d loss / d p).
    """
    p = np.asarray(prob_fg, dtype=np.float64)
    r = np.asarray(target_fg, dtype=np.float64)
    _check_match(p, r, "wce_loss_binary")
    n = p.size or 1
    p_f = np.maximum(p, EPS_LOG)
    q_f = np.maximum(1.0 - p, EPS_LOG)
    loss = -np.sum(weight * r * np.log(p_f) + (1.0 - r) * np.log(q_f)) / n
    grad = (-weight * r / p_f + (1.0 - r) / q_f) / n
    return float(loss), grad


def _gdl_weights(r: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Per-class volume weights 1 / (sum_n r_ln)^2 with empty-class flooring."""
    axes = tuple(range(r.ndim - 1))
    volumes = r.sum(axis=axes)
    degenerate = bool((volumes == 0).any())
    floored = np.maximum(volumes, EPS_DICE)
    return 1.0 / floored**2, volumes, degenerate


def gdl_value(prob: np.ndarray, target: np.ndarray) -> float:
    """Generalized Dice loss with inverse-squared-volume class weights.

    GDL = 1 - 2 * (sum_l w_l sum_n r p) / (sum_l w_l sum_n (r + p)) with
    w_l = 1/(sum_n r_ln)^2; empty classes get the floored weight 1/EPS^2
    and EPS^2 is added to both sums. Lies in [0, 1] up to the smoothing.
    """
    p = np.asarray(prob, dtype=np.float64)
    r = np.asarray(target, dtype=np.float64)
    _check_match(p, r, "gdl_value")
    w, _, _ = _gdl_weights(r)
    axes = tuple(range(r.ndim - 1))
    num = np.sum(w * (r * p).sum(axis=axes)) + EPS_DICE**2
    den = np.sum(w * (r + p).sum(axis=axes)) + EPS_DICE**2
    return float(1.0 - 2.0 * num / den)


def gdl_grad_multiclass(prob: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Quotient-rule gradient of gdl_value with respect to probabilities.

    d GDL / d p_{ln} = -2 w_l (r_{ln} * den - num) / den^2, with num and
    den as in gdl_value (smoothing included, so this is the exact
    derivative of the implemented value).
    """
    p = np.asarray(prob, dtype=np.float64)
    r = np.asarray(target, dtype=np.float64)
    _check_match(p, r, "gdl_grad_multiclass")
    w, _, _ = _gdl_weights(r)
    axes = tuple(range(r.ndim - 1))
    num = np.sum(w * (r * p).sum(axis=axes)) + EPS_DICE**2
    den = np.sum(w * (r + p).sum(axis=axes)) + EPS_DICE**2
    return -2.0 * w * (r * den - num) / den**2


class GdlTwoClassGrad(NamedTuple):
    grad: np.ndarray
    degenerate: bool


def gdl_grad_two_class(prob: np.ndarray, target: np.ndarray) -> GdlTwoClassGrad:
    """Closed-form two-class Dice-loss gradient.

    Takes 2-channel stacks (channel 0 background, channel 1 foreground)
    and differentiates with respect to the foreground probability p_i,
    with the background channel constrained to 1 - p_i:

        d GDL / d p_i = -2 [ (w1^2 - w2^2)(r_i S - A)
                             + N w2 (w1 + w2)(2 r_i - 1) ] / D^2

    where A = sum_n p_n r_n, S = sum_n (p_n + r_n),
    D = (w1 - w2) S + 2 N w2, w1 = 1/(sum r)^2, w2 = 1/(N - sum r)^2.
    If every pixel carries one class the weights are floored and the
    result is flagged degenerate.
    """
    p = np.asarray(prob, dtype=np.float64)
    r = np.asarray(target, dtype=np.float64)
    _check_match(p, r, "gdl_grad_two_class")
    if p.shape[-1] != 2:
        raise MaskShapeError(f"expected exactly 2 channels, got {p.shape[-1]}")
    p_fg = p[..., 1]
    r_fg = r[..., 1]
    n = p_fg.size
    fg_volume = r_fg.sum()
    bg_volume = n - fg_volume
    degenerate = fg_volume == 0 or bg_volume == 0
    w1 = 1.0 / max(fg_volume, EPS_DICE) ** 2
    w2 = 1.0 / max(bg_volume, EPS_DICE) ** 2
    a = np.sum(p_fg * r_fg)
    s = np.sum(p_fg + r_fg)
    d = (w1 - w2) * s + 2.0 * n * w2
    grad = -2.0 * ((w1**2 - w2**2) * (r_fg * s - a) + n * w2 * (w1 + w2) * (2.0 * r_fg - 1.0)) / d**2
    return GdlTwoClassGrad(grad, degenerate)


def focal_loss(
    prob: np.ndarray,
    target: np.ndarray,
    gamma: float = DEFAULT_FOCAL_GAMMA,
) -> tuple[float, np.ndarray]:
    """Focal loss FL(p_t) = -(1 - p_t)^gamma log(p_t), averaged over pixels.

    p_t is the probability assigned to each pixel's true class. gamma = 0
    reduces to plain cross entropy; larger gamma down-weights pixels the
    model already gets right. Returns (loss, d loss / d p).
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    p = np.asarray(prob, dtype=np.float64)
    r = np.asarray(target, dtype=np.float64)
    _check_match(p, r, "focal_loss")
    n_pixels = int(np.prod(p.shape[:-1])) or 1
    p_t = np.sum(r * p, axis=-1)
    p_f = np.maximum(p_t, EPS_LOG)
    m = np.maximum(1.0 - p_t, 0.0)
    log_p = np.log(p_f)
    loss = -np.sum(m**gamma * log_p) / n_pixels
    if gamma == 0:
        d_pt = -1.0 / p_f
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            d_pt = np.where(m > 0, gamma * m ** (gamma - 1.0) * log_p - m**gamma / p_f, 0.0)
    grad = r * (d_pt / n_pixels)[..., None]
    return float(loss), grad


GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_STEP = 1e-5


def _fd_grad(f, x: np.ndarray, h: float = GRADCHECK_STEP) -> np.ndarray:
    """Central finite differences of a scalar function, every coordinate."""
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        f_plus = f(x)
        x[idx] = orig - h
        f_minus = f(x)
        x[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def _max_rel_err(analytic: np.ndarray, numeric: np.ndarray, tiny: float = 1e-6) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), tiny)
    return float(np.max(np.abs(analytic - numeric) / denom))


def _random_case(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Random probabilities and one-hot target with every class populated.

    Probabilities are mixed with the uniform distribution to stay in the
    simplex interior: near the faces the losses' curvature explodes (for
    fractional focal gamma it is unbounded) and central differences stop
    being a trustworthy oracle at any step size.
    """
    h = int(rng.integers(3, 9))
    w = int(rng.integers(3, 9))
    c = int(rng.integers(2, 6))
    prob = 0.9 * softmax(rng.normal(0.0, 1.5, size=(h, w, c))) + 0.1 / c
    labels = rng.integers(0, c, size=(h, w))
    flat = labels.ravel()
    flat[rng.permutation(flat.size)[:c]] = np.arange(c)  # no empty class
    target = np.zeros((h, w, c))
    rows, cols = np.indices(labels.shape)
    target[rows, cols, labels] = 1.0
    return prob, target


def finite_difference_report(
    seed: int = 0,
    trials: int = 100,
    wrong_sign: bool = False,
) -> dict[str, float]:
    """Max relative error of each analytic gradient vs central differences.

    Every coordinate of every trial is checked. wrong_sign negates the
    analytic gradients first; it exists as a negative control so the
    harness around this check can prove the check can fail.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    sign = -1.0 if wrong_sign else 1.0
    worst = {"wce": 0.0, "gdl_multiclass": 0.0, "gdl_two_class": 0.0, "focal": 0.0}
    gammas = (0.0, 0.5, 1.0, 2.0, 3.0)
    for trial in range(trials):
        prob, target = _random_case(rng)
        c = prob.shape[-1]
        weights = rng.uniform(0.1, 5.0, size=c)

        logits = rng.normal(0.0, 1.5, size=prob.shape)
        _, grad = wce_loss(logits, target, weights)
        numeric = _fd_grad(lambda z: wce_loss(z, target, weights)[0], logits)
        worst["wce"] = max(worst["wce"], _max_rel_err(sign * grad, numeric))

        grad = gdl_grad_multiclass(prob, target)
        numeric = _fd_grad(lambda p: gdl_value(p, target), prob.copy())
        worst["gdl_multiclass"] = max(
            worst["gdl_multiclass"], _max_rel_err(sign * grad, numeric)
        )

        p_fg = prob[..., 0].copy()
        r_fg = target[..., 0].copy()
        grad = gdl_grad_two_class(
            np.stack([1.0 - p_fg, p_fg], axis=-1),
            np.stack([1.0 - r_fg, r_fg], axis=-1),
        ).grad
        numeric = _fd_grad(
            lambda p: gdl_value(
                np.stack([1.0 - p, p], axis=-1),
                np.stack([1.0 - r_fg, r_fg], axis=-1),
            ),
            p_fg,
        )
        worst["gdl_two_class"] = max(
            worst["gdl_two_class"], _max_rel_err(sign * grad, numeric)
        )

        gamma = gammas[trial % len(gammas)]
        _, grad = focal_loss(prob, target, gamma)
        numeric = _fd_grad(lambda p: focal_loss(p, target, gamma)[0], prob.copy())
        worst["focal"] = max(worst["focal"], _max_rel_err(sign * grad, numeric))
    return worst
