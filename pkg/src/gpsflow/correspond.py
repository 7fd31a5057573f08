"""Dense correspondence: cosine correlation volumes, local/global fusion,
soft-argmax correspondence fields, flow scaling and similarity maps.

Volumes are ``(h_src, w_src, h_tgt, w_tgt)`` float32 arrays. Correspondence
fields are ``(h, w, 2)`` float32 arrays holding absolute target coordinates
``(x, y)`` = (column, row).
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ShapeError
from .validation import check_feature_map, check_field

DEFAULT_ALPHA = 1e4
DEFAULT_SIMILARITY_THRESHOLD = 0.25
_ROW_BLOCK = 256


def default_workers():
    env = os.environ.get("GLASS_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"GLASS_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ValueError("GLASS_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def normalize_features(f, return_degenerate=False):
    """L2-normalize every feature vector. Zero vectors stay zero.

    With ``return_degenerate=True`` also returns the ``(h, w)`` boolean mask of
    zero-norm positions.
    """
    f = check_feature_map(f)
    f64 = f.astype(np.float64)
    norm = np.sqrt(np.sum(f64 * f64, axis=2, keepdims=True))
    degenerate = norm[..., 0] == 0.0
    out = np.divide(f64, norm, out=np.zeros_like(f64), where=norm > 0)
    out = out.astype(np.float32)
    if return_degenerate:
        return out, degenerate
    return out


def _unit64(f):
    f64 = np.asarray(f, dtype=np.float64)
    norm = np.sqrt(np.sum(f64 * f64, axis=-1, keepdims=True))
    return np.divide(f64, norm, out=np.zeros_like(f64), where=norm > 0)


def _corr_rows(a, b, start, stop, out):
    # fixed channel order, one accumulator per element: results do not
    # depend on how rows are split across workers
    acc = np.zeros((stop - start, b.shape[0]), dtype=np.float64)
    for k in range(a.shape[1]):
        acc += a[start:stop, k, None] * b[None, :, k]
    np.clip(acc, -1.0, 1.0, out=acc)
    out[start:stop] = acc


def correlation(f_src, f_tgt, n_jobs=None):
    """Cosine similarity between every source and every target position."""
    f_src = check_feature_map(f_src, "f_src")
    f_tgt = check_feature_map(f_tgt, "f_tgt")
    if f_src.shape[2] != f_tgt.shape[2]:
        raise ShapeError(f"channel mismatch: {f_src.shape[2]} vs {f_tgt.shape[2]}")
    a = _unit64(f_src).reshape(-1, f_src.shape[2])
    b = _unit64(f_tgt).reshape(-1, f_tgt.shape[2])
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float32)
    blocks = [(s, min(s + _ROW_BLOCK, a.shape[0])) for s in range(0, a.shape[0], _ROW_BLOCK)]
    workers = min(n_jobs or default_workers(), len(blocks))
    if workers <= 1:
        for s, e in blocks:
            _corr_rows(a, b, s, e, out)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda se: _corr_rows(a, b, se[0], se[1], out), blocks))
    return out.reshape(f_src.shape[:2] + f_tgt.shape[:2])


def fuse_volumes(c_l, c_g):
    c_l, c_g = np.asarray(c_l), np.asarray(c_g)
    if c_l.shape != c_g.shape:
        raise ShapeError(f"volume shapes differ: {c_l.shape} vs {c_g.shape}")
    return (c_l.astype(np.float64) * c_g.astype(np.float64)).astype(np.float32)


def grid_coords(h, w):
    """``(h*w, 2)`` float64 array of (x, y) coordinates in linear index order."""
    ys, xs = np.mgrid[0:h, 0:w]
    return np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)


def check_volume(c):
    c = np.asarray(c)
    if c.ndim != 4:
        raise ShapeError(f"expected (h_src, w_src, h_tgt, w_tgt) volume, got shape {c.shape}")
    return c


def softmax_rows(c, alpha):
    """Row-wise softmax of ``alpha * c`` for a 2-D ``(n_src, n_tgt)`` array."""
    z = alpha * np.asarray(c, dtype=np.float64)
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def soft_argmax_flow(c, alpha=DEFAULT_ALPHA):
    """Expected target coordinate under a temperature-``alpha`` softmax over
    each source position's scores. Returns an ``(h_src, w_src, 2)`` field."""
    if not alpha >= 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    c = check_volume(c)
    hs, ws, ht, wt = c.shape
    weights = softmax_rows(c.reshape(hs * ws, ht * wt), alpha)
    coords = weights @ grid_coords(ht, wt)
    coords[:, 0] = np.clip(coords[:, 0], 0, wt - 1)
    coords[:, 1] = np.clip(coords[:, 1], 0, ht - 1)
    return coords.reshape(hs, ws, 2).astype(np.float32)


def identity_field(h, w):
    return grid_coords(h, w).reshape(h, w, 2).astype(np.float32)


def displacement(field):
    field = check_field(field)
    return field - identity_field(*field.shape[:2])


def scale_flow(field, lam, clip=True):
    """Scale the displacement ``F(p) - p`` by ``lam``.

    With ``clip=True`` the result is clamped into the grid box; the pseudo-label
    pipeline passes ``clip=False`` so the warp can record out-of-bounds samples.
    """
    if not lam >= 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    field = check_field(field)
    h, w = field.shape[:2]
    base = identity_field(h, w).astype(np.float64)
    out = base + lam * (field.astype(np.float64) - base)
    if clip:
        out[..., 0] = np.clip(out[..., 0], 0, w - 1)
        out[..., 1] = np.clip(out[..., 1], 0, h - 1)
    return out.astype(np.float32)


def match(src_local, tgt_local, src_global=None, tgt_global=None, alpha=DEFAULT_ALPHA, n_jobs=None):
    """Correlate (and fuse, when global features are given) then soft-argmax."""
    c = correlation(src_local, tgt_local, n_jobs=n_jobs)
    if src_global is not None or tgt_global is not None:
        if src_global is None or tgt_global is None:
            raise ValueError("global features must be given for both source and target")
        c = fuse_volumes(c, correlation(src_global, tgt_global, n_jobs=n_jobs))
    return soft_argmax_flow(c, alpha)


def hard_argmax(c):
    """Integer ``(h_src, w_src, 2)`` map of each source position's best target
    (x, y); ties go to the lowest linear target index."""
    c = check_volume(c)
    hs, ws, ht, wt = c.shape
    idx = np.argmax(c.reshape(hs * ws, ht * wt), axis=1)
    return np.stack([idx % wt, idx // wt], axis=1).reshape(hs, ws, 2)


def similarity_map(f_night, point, f_day, threshold=DEFAULT_SIMILARITY_THRESHOLD):
    """Binary ``(h, w)`` mask of day positions whose cosine similarity with the
    night feature at ``point=(x, y)`` exceeds ``threshold`` (strict)."""
    f_night = check_feature_map(f_night, "f_night")
    f_day = check_feature_map(f_day, "f_day")
    if f_night.shape[2] != f_day.shape[2]:
        raise ShapeError(f"channel mismatch: {f_night.shape[2]} vs {f_day.shape[2]}")
    x, y = point
    h, w = f_night.shape[:2]
    if not (0 <= x < w and 0 <= y < h) or int(x) != x or int(y) != y:
        raise ValueError(f"point {point} outside night grid {w}x{h}")
    q = _unit64(f_night[int(y), int(x)])
    day = _unit64(f_day)
    sim = np.zeros(f_day.shape[:2], dtype=np.float64)
    for k in range(q.shape[0]):
        sim += q[k] * day[..., k]
    return sim > threshold
