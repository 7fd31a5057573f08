"""Backward warping of probability maps and assembly of the four pseudo-labels."""

from dataclasses import dataclass

import numpy as np

from . import geo
from .correspond import DEFAULT_ALPHA, match, scale_flow
from .errors import ShapeError
from .validation import check_field, check_segmap, renormalize


@dataclass
class WarpResult:
    seg: np.ndarray
    oob_mask: np.ndarray


def backward_warp(p_src, field):
    """Bilinearly sample ``p_src`` at ``field(p)`` for every output pixel ``p``.

    Coordinates outside the source box are clamped to the border and flagged
    in ``oob_mask``. Each output pixel is renormalized to sum to one.
    """
    p_src = check_segmap(p_src, "p_src")
    field = check_field(field)
    hs, ws, _ = p_src.shape
    x = field[..., 0].astype(np.float64)
    y = field[..., 1].astype(np.float64)
    oob = (x < 0) | (x > ws - 1) | (y < 0) | (y > hs - 1)
    x = np.clip(x, 0, ws - 1)
    y = np.clip(y, 0, hs - 1)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, ws - 1)
    y1 = np.minimum(y0 + 1, hs - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    src = p_src.astype(np.float64)
    top = src[y0, x0] * (1 - fx) + src[y0, x1] * fx
    bottom = src[y1, x0] * (1 - fx) + src[y1, x1] * fx
    out = top * (1 - fy) + bottom * fy
    return WarpResult(renormalize(out), oob)


@dataclass
class PseudoLabels:
    """The four warped maps (on the day or night grid) and their oob masks.

    ``p_n2d`` and ``p_n2d_prime`` live on the day grid; ``p_d2n`` and
    ``p_d2n_prime`` on the night grid.
    """

    p_n2d: np.ndarray
    p_d2n: np.ndarray
    p_n2d_prime: np.ndarray
    p_d2n_prime: np.ndarray
    oob_n2d: np.ndarray
    oob_d2n: np.ndarray
    oob_n2d_prime: np.ndarray
    oob_d2n_prime: np.ndarray
    reference: geo.RefChoice
    lam: float
    fields: dict


COINCIDENT_M = 1e-6


def resolve_reference(gps):
    """Choose the day reference frame and the flow scale factor.

    Coincident night/day fixes (closer than ``COINCIDENT_M``) leave the cosine
    test undefined; those cases are resolved directly: a night fix on ``d``
    gives a zero scale, and a night fix on ``d+``/``d-`` selects that frame.
    """
    x_d, x_plus, x_minus, x_n = (geo.GpsFix(*gps[k]) for k in ("d", "d+", "d-", "n"))
    if geo.haversine(x_d, x_n) < COINCIDENT_M:
        return geo.RefChoice.FORWARD, 0.0
    if geo.haversine(x_plus, x_n) < COINCIDENT_M:
        choice = geo.RefChoice.FORWARD
    elif geo.haversine(x_minus, x_n) < COINCIDENT_M:
        choice = geo.RefChoice.BACKWARD
    else:
        choice = geo.select_reference(x_d, x_plus, x_minus, x_n)
    x_dr = x_plus if choice is geo.RefChoice.FORWARD else x_minus
    return choice, geo.scale_factor(x_d, x_dr, x_n)


def make_pseudolabels(sample, alpha=DEFAULT_ALPHA, n_jobs=None, lam=None):
    """Run inter- and intra-domain matching and warp both probability maps.

    ``lam`` overrides the GPS-derived scale factor (the reference frame is
    still chosen from GPS).
    """
    sample.validate()
    choice, gps_lam = resolve_reference(sample.gps)
    if lam is None:
        lam = gps_lam
    if choice is geo.RefChoice.FORWARD:
        ref_local, ref_global = sample.ref_plus_local, sample.ref_plus_global
    else:
        ref_local, ref_global = sample.ref_minus_local, sample.ref_minus_global

    d, n = (sample.day_local, sample.day_global), (sample.night_local, sample.night_global)
    dr = (ref_local, ref_global)
    f_d2n = match(d[0], n[0], d[1], n[1], alpha=alpha, n_jobs=n_jobs)
    f_n2d = match(n[0], d[0], n[1], d[1], alpha=alpha, n_jobs=n_jobs)
    f_d2dr = match(d[0], dr[0], d[1], dr[1], alpha=alpha, n_jobs=n_jobs)
    f_dr2d = match(dr[0], d[0], dr[1], d[1], alpha=alpha, n_jobs=n_jobs)
    f_d2n_prime = scale_flow(f_d2dr, lam, clip=False)
    f_n2d_prime = scale_flow(f_dr2d, lam, clip=False)

    if sample.p_night.shape[:2] != f_d2n.shape[:2]:
        raise ShapeError("night map grid does not match the day grid")
    n2d = backward_warp(sample.p_night, f_d2n)
    d2n = backward_warp(sample.p_day, f_n2d)
    n2d_p = backward_warp(sample.p_night, f_d2n_prime)
    d2n_p = backward_warp(sample.p_day, f_n2d_prime)
    return PseudoLabels(
        p_n2d=n2d.seg,
        p_d2n=d2n.seg,
        p_n2d_prime=n2d_p.seg,
        p_d2n_prime=d2n_p.seg,
        oob_n2d=n2d.oob_mask,
        oob_d2n=d2n.oob_mask,
        oob_n2d_prime=n2d_p.oob_mask,
        oob_d2n_prime=d2n_p.oob_mask,
        reference=choice,
        lam=float(lam),
        fields={
            "d2n": f_d2n,
            "n2d": f_n2d,
            "d2dr": f_d2dr,
            "dr2d": f_dr2d,
            "d2n_prime": f_d2n_prime,
            "n2d_prime": f_n2d_prime,
        },
    )
