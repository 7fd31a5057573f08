"""Analytic gradients of the soft-argmax flow and the warping loss, checked
against central finite differences.

Analytic values are computed in float64; the flow differences are evaluated in
extended precision (see ``_FD_DTYPE``).
"""

from dataclasses import dataclass, field

import numpy as np

from .correspond import check_volume, grid_coords, softmax_rows
from .errors import ProbeError
from .losses import LOG_EPS, ClassConfig, ignore_mask, one_hot
from .synth import SplitMix64
from .validation import check_mask

FD_STEP = 1e-5
DEFAULT_TOL = 1e-4
REL_FLOOR = 1e-8


def rel_err(a, n):
    return abs(a - n) / max(abs(a), abs(n), REL_FLOOR)


@dataclass
class GradEntry:
    probe: tuple
    analytic: float
    numeric: float
    rel_err: float


@dataclass
class GradReport:
    tolerance: float
    entries: list = field(default_factory=list)

    @property
    def max_rel_err(self):
        return max((e.rel_err for e in self.entries), default=0.0)

    @property
    def passed(self):
        return self.max_rel_err < self.tolerance

    def to_dict(self):
        return {
            "entries_checked": len(self.entries),
            "max_rel_err": self.max_rel_err,
            "pass": self.passed,
            "tolerance": self.tolerance,
            "entries": [
                {"probe": list(e.probe), "analytic": e.analytic, "numeric": e.numeric,
                 "rel_err": e.rel_err}
                for e in self.entries
            ],
        }


# Extended precision for the finite-difference side only: at a 1e-5 step the
# change in F for targets with softmax weight below ~1e-7 is smaller than
# float64 rounding of the weighted sum.
_FD_DTYPE = np.longdouble


def _flow_row(row, alpha, coords, ref):
    z = _FD_DTYPE(alpha) * row
    e = np.exp(z - z.max())
    w = e / e.sum()
    # centred on the unperturbed estimate so roundoff scales with the
    # displacement, not with the absolute coordinate
    return w @ (coords - ref)


def flow_jacobian_row(row, alpha, coords):
    """Analytic ``dF/dc(q)`` for one source row: ``alpha * w_q * (q - F)``,
    shape ``(n_tgt, 2)``."""
    w = softmax_rows(row[None, :], alpha)[0]
    f = w @ coords
    return alpha * w[:, None] * (coords - f)


def grad_flow_wrt_corr(c, alpha, probes, step=FD_STEP, tol=DEFAULT_TOL):
    """Check the soft-argmax flow gradient at ``probes``.

    Each probe is ``(p, q)`` with ``p`` and ``q`` linear source/target indices;
    both the x and y components are reported.
    """
    c = check_volume(c)
    hs, ws, ht, wt = c.shape
    vol = np.asarray(c, dtype=np.float64).reshape(hs * ws, ht * wt)
    coords = grid_coords(ht, wt)
    report = GradReport(tolerance=tol)
    for p, q in probes:
        if not (0 <= p < vol.shape[0] and 0 <= q < vol.shape[1]):
            raise ProbeError(f"probe ({p}, {q}) outside volume {vol.shape}")
        row = vol[p].copy()
        analytic = flow_jacobian_row(row, alpha, coords)[q]
        ref = softmax_rows(row[None, :], alpha)[0] @ coords
        row_x = row.astype(_FD_DTYPE)
        coords_x = coords.astype(_FD_DTYPE)
        plus, minus = row_x.copy(), row_x.copy()
        plus[q] += step
        minus[q] -= step
        numeric = (
            _flow_row(plus, alpha, coords_x, ref) - _flow_row(minus, alpha, coords_x, ref)
        ) / (2 * _FD_DTYPE(step))
        for axis in range(2):
            a, n = float(analytic[axis]), float(numeric[axis])
            report.entries.append(GradEntry((int(p), int(q), axis), a, n, rel_err(a, n)))
    return report


def grad_loss_wrt_target(p_target, p_supervisor, m, cfg, probes, step=FD_STEP, tol=DEFAULT_TOL):
    """Check ``dL/dlog p_target(q; k)`` of the warping loss.

    Probes are ``(row, col, k)``. The analytic value is
    ``-M(q) * onehot(sup(q))_k / (N_p * C)``; the numeric one perturbs the
    log-probability of a copy of ``p_target`` and re-evaluates the full loss
    (without renormalizing, so log-probabilities act as free variables).
    """
    p_target = np.asarray(p_target, dtype=np.float64)
    p_supervisor = np.asarray(p_supervisor, dtype=np.float64)
    h, w, c = p_target.shape
    m = check_mask(m, (h, w), "confidence")
    ignored = ignore_mask(p_target, p_supervisor, cfg)
    sup = one_hot(p_supervisor)
    n_p = h * w
    report = GradReport(tolerance=tol)
    for r, col, k in probes:
        if not (0 <= r < h and 0 <= col < w and 0 <= k < c):
            raise ProbeError(f"probe ({r}, {col}, {k}) outside map {p_target.shape}")
        if ignored[r, col]:
            raise ProbeError(f"probe ({r}, {col}) lies in the ignore set")
        if not LOG_EPS < p_target[r, col, k] < 1.0:
            raise ProbeError(f"probe ({r}, {col}, {k}) sits on the log clamp")
        analytic = -float(m[r, col]) * float(sup[r, col, k]) / (n_p * cfg.num_classes)

        def loss_at(delta):
            pt = p_target.copy()
            pt[r, col, k] = np.exp(np.log(pt[r, col, k]) + delta)
            return _warping_loss_unchecked(pt, p_supervisor, m, cfg)

        numeric = (loss_at(step) - loss_at(-step)) / (2 * step)
        report.entries.append(GradEntry((int(r), int(col), int(k)), analytic, numeric,
                                        rel_err(analytic, numeric)))
    return report


def _warping_loss_unchecked(p_target, p_supervisor, m, cfg):
    """The warping loss without the probability-simplex check, so individual
    log-probabilities can be perturbed."""
    keep = ~ignore_mask(p_target, p_supervisor, cfg)
    k = np.argmax(p_supervisor, axis=-1)
    p = np.take_along_axis(p_target, k[..., None], axis=-1)[..., 0]
    terms = np.where(keep & m, np.log(np.clip(p, LOG_EPS, 1.0)), 0.0)
    # fixed-order pairwise summation
    total = np.sum(terms.ravel())
    return -float(total) / (p_target.shape[0] * p_target.shape[1] * cfg.num_classes)


def random_suite(n_probes, alpha, seed, tol=DEFAULT_TOL):
    """Random 6x6 volume plus a random 6x6, 19-class loss instance; ``n_probes``
    probes on each. Returns ``(flow_report, loss_report)``."""
    rng = SplitMix64(seed)
    c = (rng.uniform(6 * 6 * 6 * 6) * 2 - 1).reshape(6, 6, 6, 6)
    flow_probes = list(zip(rng.integers(36, n_probes).tolist(), rng.integers(36, n_probes).tolist()))
    flow = grad_flow_wrt_corr(c, alpha, flow_probes, tol=tol)

    h = w = 6
    n_classes = 19
    cfg = ClassConfig(n_classes)
    logits_t = rng.normal(h * w * n_classes).reshape(h, w, n_classes)
    logits_s = rng.normal(h * w * n_classes).reshape(h, w, n_classes)
    p_t = np.exp(logits_t) / np.exp(logits_t).sum(axis=2, keepdims=True)
    p_s = np.exp(logits_s) / np.exp(logits_s).sum(axis=2, keepdims=True)
    m = rng.uniform(h * w).reshape(h, w) < 0.7
    ok = np.argwhere(~ignore_mask(p_t, p_s, cfg))
    pix = ok[rng.integers(len(ok), n_probes)]
    ks = rng.integers(n_classes, n_probes)
    # half the probes on the supervised class so nonzero gradients get exercised
    sup = np.argmax(p_s, axis=2)
    ks = np.where(np.arange(n_probes) % 2 == 0, sup[pix[:, 0], pix[:, 1]], ks)
    loss_probes = [(int(r), int(col), int(k)) for (r, col), k in zip(pix, ks)]
    loss = grad_loss_wrt_target(p_t, p_s, m, cfg, loss_probes, tol=tol)
    return flow, loss
