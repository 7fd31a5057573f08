"""Warping losses, the dynamic-class ignore set and objective composition."""

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ShapeError
from .validation import check_mask, check_segmap

LOG_EPS = 1e-12
DEFAULT_MU = (0.01, 0.01, 1.0, 1.0)
IGNORE_INDEX = 255

# person, rider, car, truck, bus, train, motorcycle, bicycle
CITYSCAPES_DYNAMIC = frozenset(range(11, 19))


@dataclass(frozen=True)
class ClassConfig:
    """Class count and the set of dynamic (movable) classes.

    When ``dynamic_classes`` is None the Cityscapes dynamic classes that fall
    inside ``range(num_classes)`` are used.
    """

    num_classes: int = 19
    dynamic_classes: frozenset = None

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        dyn = self.dynamic_classes
        if dyn is None:
            dyn = {k for k in CITYSCAPES_DYNAMIC if k < self.num_classes}
        dyn = frozenset(int(k) for k in dyn)
        bad = [k for k in dyn if not 0 <= k < self.num_classes]
        if bad:
            raise ValueError(f"dynamic classes {sorted(bad)} outside [0, {self.num_classes})")
        object.__setattr__(self, "dynamic_classes", dyn)


class AllIgnoredWarning(RuntimeWarning):
    pass


def one_hot(probs):
    """One-hot of the argmax along the last axis (ties to the lowest index)."""
    probs = np.asarray(probs)
    out = np.zeros(probs.shape, dtype=np.float32)
    idx = np.argmax(probs, axis=-1)
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def cross_entropy_h(target, pred):
    """Sum over classes of one_hot(target) * log(pred), pred clamped to [eps, 1].

    Always <= 0. Works on a single class vector or on ``(..., C)`` arrays.
    """
    target, pred = np.asarray(target), np.asarray(pred, dtype=np.float64)
    if target.shape != pred.shape:
        raise ShapeError(f"shape mismatch: {target.shape} vs {pred.shape}")
    k = np.argmax(target, axis=-1)
    p = np.take_along_axis(pred, k[..., None], axis=-1)[..., 0]
    h = np.log(np.clip(p, LOG_EPS, 1.0))
    return float(h) if h.ndim == 0 else h


def ignore_mask(p_n, p_warped, cfg):
    """Pixels whose night class is dynamic and disagrees with the warped label."""
    p_n = np.asarray(p_n)
    p_warped = np.asarray(p_warped)
    if p_n.shape != p_warped.shape:
        raise ShapeError(f"shape mismatch: {p_n.shape} vs {p_warped.shape}")
    if p_n.shape[-1] != cfg.num_classes:
        raise ShapeError(f"maps have {p_n.shape[-1]} classes, config says {cfg.num_classes}")
    k_n = np.argmax(p_n, axis=-1)
    k_w = np.argmax(p_warped, axis=-1)
    dyn = np.isin(k_n, sorted(cfg.dynamic_classes))
    return dyn & (k_n != k_w)


def warping_loss(p_target, p_supervisor, m, cfg):
    """Confidence-masked cross entropy of ``p_target`` against the one-hot of
    ``p_supervisor``, normalized by ``h * w * C``.

    ``p_target`` plays the night-prediction role in the ignore set.
    """
    p_target = check_segmap(p_target, "p_target")
    p_supervisor = check_segmap(p_supervisor, "p_supervisor")
    m = check_mask(m, p_target.shape[:2], "confidence")
    keep = ~ignore_mask(p_target, p_supervisor, cfg)
    h = cross_entropy_h(p_supervisor, p_target)
    terms = np.where(keep & m, h, 0.0).ravel()
    n_p = p_target.shape[0] * p_target.shape[1]
    loss = -float(np.sum(terms)) / (n_p * cfg.num_classes)
    return loss + 0.0


def seg_loss(p_s, labels, ignore_index=IGNORE_INDEX):
    """Mean negative log-probability of the labelled class over non-ignored pixels."""
    p_s = np.asarray(p_s, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.shape != p_s.shape[:-1]:
        raise ShapeError(f"labels shape {labels.shape} does not match map {p_s.shape[:-1]}")
    if np.any(labels != np.round(labels)):
        raise ValueError("labels must be integers")
    labels = labels.astype(np.int64)
    valid = labels != ignore_index
    c = p_s.shape[-1]
    if np.any((labels[valid] < 0) | (labels[valid] >= c)):
        raise ValueError(f"label outside [0, {c}) (ignore index is {ignore_index})")
    if not np.any(valid):
        warnings.warn("all pixels ignored; segmentation loss set to 0", AllIgnoredWarning)
        return 0.0
    p = np.take_along_axis(p_s, np.where(valid, labels, 0)[..., None], axis=-1)[..., 0]
    nll = -np.log(np.clip(p[valid], LOG_EPS, 1.0))
    return float(np.sum(nll)) / int(valid.sum()) + 0.0


@dataclass
class LossBreakdown:
    l_n2d: float = 0.0
    l_d2n: float = 0.0
    l_seg: float = 0.0
    l_light: float = 0.0
    l_adv: float = 0.0
    l_dis: float = 0.0
    mu: tuple = DEFAULT_MU
    composed: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["mu"] = list(self.mu)
        return d


def compose_objectives(
    l_n2d=0.0, l_d2n=0.0, l_seg=0.0, l_light=0.0, l_adv=0.0, l_dis=0.0, mu=DEFAULT_MU
):
    """Day-target, night-target and source objectives from the loss terms."""
    values = dict(l_n2d=l_n2d, l_d2n=l_d2n, l_seg=l_seg, l_light=l_light, l_adv=l_adv, l_dis=l_dis)
    for name, v in list(values.items()) + [(f"mu{i + 1}", m) for i, m in enumerate(mu)]:
        if not math.isfinite(v):
            raise ValueError(f"{name} is not finite: {v}")
    if len(mu) != 4:
        raise ValueError(f"expected 4 weights, got {len(mu)}")
    mu1, mu2, mu3, mu4 = (float(m) for m in mu)
    composed = {
        "L_Td": mu1 * l_light + mu2 * l_adv,
        "L_Tn": mu1 * l_light + l_n2d + l_d2n + mu2 * l_adv,
        "L_S": mu1 * l_light + mu3 * l_seg + mu4 * l_dis,
    }
    return LossBreakdown(**{k: float(v) for k, v in values.items()}, mu=tuple(mu), composed=composed)
