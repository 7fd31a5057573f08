"""Input validation helpers for the array types passed around the package.

Feature maps, segmentation maps and correspondence fields are plain numpy
arrays laid out as ``(h, w, channels)``. These helpers coerce and check them
so the estimators and CLI fail early with a :class:`ShapeError` instead of a
broadcasting error deep inside a kernel.
"""

import numpy as np

from .errors import ShapeError

SEGMAP_TOL = 1e-4


def check_feature_map(f, name="features"):
    f = np.asarray(f)
    if f.ndim != 3:
        raise ShapeError(f"{name}: expected (h, w, d) array, got shape {f.shape}")
    h, w, d = f.shape
    if h < 1 or w < 1 or d < 1:
        raise ShapeError(f"{name}: empty dimension in shape {f.shape}")
    if not np.issubdtype(f.dtype, np.floating):
        f = f.astype(np.float32)
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name}: non-finite feature values")
    return f


def check_segmap(p, name="segmap", tol=SEGMAP_TOL):
    """Validate an ``(h, w, c)`` probability map; each pixel must sum to 1."""
    p = np.asarray(p)
    if p.ndim != 3 or p.shape[2] < 1:
        raise ShapeError(f"{name}: expected (h, w, c) array, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name}: non-finite probabilities")
    if np.any(p < 0):
        raise ValueError(f"{name}: negative probabilities")
    sums = p.sum(axis=2, dtype=np.float64)
    bad = np.abs(sums - 1.0) > tol
    if np.any(bad):
        r, c = np.argwhere(bad)[0]
        raise ValueError(
            f"{name}: pixel ({r}, {c}) sums to {sums[r, c]:.6g}, expected 1 +/- {tol:g}"
        )
    return p


def check_field(field, name="field"):
    field = np.asarray(field)
    if field.ndim != 3 or field.shape[2] != 2:
        raise ShapeError(f"{name}: expected (h, w, 2) array, got shape {field.shape}")
    if not np.all(np.isfinite(field)):
        raise ValueError(f"{name}: non-finite coordinates")
    return field


def check_mask(mask, shape, name="mask"):
    mask = np.asarray(mask)
    if mask.shape != tuple(shape):
        raise ShapeError(f"{name}: expected shape {tuple(shape)}, got {mask.shape}")
    return mask.astype(bool)


def check_same_grid(a, b, names=("a", "b")):
    if a.shape[:2] != b.shape[:2]:
        raise ShapeError(
            f"{names[0]} grid {a.shape[:2]} does not match {names[1]} grid {b.shape[:2]}"
        )


def renormalize(p):
    """Rescale each pixel's class vector to sum to one (computed in float64)."""
    p64 = np.asarray(p, dtype=np.float64)
    s = p64.sum(axis=-1, keepdims=True)
    s = np.where(s > 0, s, 1.0)
    return (p64 / s).astype(np.float32)
