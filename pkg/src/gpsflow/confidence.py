"""Binary confidence maps from argmax agreement within a 3x3 neighbourhood."""

import numpy as np

from .errors import ShapeError
from .validation import check_mask, check_segmap


def argmax_classes(p):
    """Per-pixel argmax; ties break to the lowest class index."""
    return np.argmax(np.asarray(p), axis=-1)


def confidence_map(p_a, p_a_prime, oob=None):
    """``M(p) = 1`` iff the class of ``p_a`` at ``p`` equals the class of
    ``p_a_prime`` at some ``p + i`` with ``i`` in the 3x3 window (clipped at
    the borders). Forced to 0 wherever ``oob`` is set.

    Only ``p_a_prime`` is searched over the window; ``p_a`` is read at the
    centre.
    """
    p_a = check_segmap(p_a, "p_a")
    p_a_prime = check_segmap(p_a_prime, "p_a_prime")
    if p_a.shape != p_a_prime.shape:
        raise ShapeError(f"shape mismatch: {p_a.shape} vs {p_a_prime.shape}")
    h, w = p_a.shape[:2]
    centre = argmax_classes(p_a)
    other = argmax_classes(p_a_prime)
    m = np.zeros((h, w), dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            ys = slice(max(0, -dy), min(h, h - dy))
            xs = slice(max(0, -dx), min(w, w - dx))
            ys2 = slice(ys.start + dy, ys.stop + dy)
            xs2 = slice(xs.start + dx, xs.stop + dx)
            m[ys, xs] |= centre[ys, xs] == other[ys2, xs2]
    if oob is not None:
        m &= ~check_mask(oob, (h, w), "oob")
    return m.astype(np.uint8)


def zero_fraction(m):
    m = np.asarray(m)
    if m.size == 0:
        raise ValueError("zero_fraction of an empty map")
    return float(np.count_nonzero(m == 0)) / m.size
