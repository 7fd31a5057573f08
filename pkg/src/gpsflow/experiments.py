"""GPS-noise sweep: how much of the confidence map drops out as the night fix
is pushed further from the day fix."""

import io
import math

import numpy as np

from . import geo
from .confidence import confidence_map, zero_fraction
from .correspond import DEFAULT_ALPHA
from .synth import SplitMix64, gen_translated_scene
from .warp import make_pseudolabels

DEFAULT_LEVELS = (0.0, 2.0, 5.0)

# Sweep scenes are laid out at 1 px per meter of travel, so a GPS error of
# e meters mis-scales the intra-domain flow by roughly e pixels.
SWEEP_GRID = 32
SWEEP_DIM = 8
SWEEP_CLASSES = 6
SWEEP_LAMBDA = 0.5
SWEEP_LATERAL_M = 0.3


def sweep_scene(trial_seed):
    rng = SplitMix64(trial_seed)
    dx = int(rng.integers(3, 1)[0]) + 1
    dy = int(rng.integers(3, 1)[0]) - 1
    ref_px = math.hypot(dx / SWEEP_LAMBDA, dy / SWEEP_LAMBDA)
    return gen_translated_scene(
        SWEEP_GRID,
        SWEEP_GRID,
        SWEEP_DIM,
        SWEEP_CLASSES,
        (dx, dy),
        SWEEP_LAMBDA,
        rng.next_u64(),
        ref_distance_m=ref_px,
        lateral_m=SWEEP_LATERAL_M,
    )


def scene_zero_fraction(sample, alpha=DEFAULT_ALPHA, n_jobs=None):
    """Mean zero fraction of the two confidence maps for one sample."""
    pl = make_pseudolabels(sample, alpha=alpha, n_jobs=n_jobs)
    m_n2d = confidence_map(pl.p_n2d, pl.p_n2d_prime, pl.oob_n2d | pl.oob_n2d_prime)
    m_d2n = confidence_map(pl.p_d2n, pl.p_d2n_prime, pl.oob_d2n | pl.oob_d2n_prime)
    return 0.5 * (zero_fraction(m_n2d) + zero_fraction(m_d2n)), pl.lam


def run_noise_sweep(levels=DEFAULT_LEVELS, trials=20, seed=0, alpha=DEFAULT_ALPHA, n_jobs=None):
    """Returns ``(rows, summary)``; rows are ``(level_m, trial, zero_fraction)``."""
    levels = [float(v) for v in levels]
    if any(not (math.isfinite(v) and v >= 0) for v in levels):
        raise ValueError(f"noise levels must be finite and >= 0, got {levels}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    master = SplitMix64(seed)
    trial_seeds = [int(s) for s in master.u64(trials)]
    rows, lams = [], {}
    for trial, tseed in enumerate(trial_seeds):
        scene = sweep_scene(tseed)
        base = scene.sample.gps
        for level in levels:
            scene.sample.gps = dict(base, n=geo.apply_gps_noise(base["n"], base["d"], level))
            zf, lam = scene_zero_fraction(scene.sample, alpha=alpha, n_jobs=n_jobs)
            rows.append((level, trial, zf))
            lams.setdefault(level, []).append(lam)
        scene.sample.gps = base
    means = [float(np.mean([r[2] for r in rows if r[0] == lv])) for lv in levels]
    monotone = all(b >= a for a, b in zip(means, means[1:]))
    summary = {
        "levels_m": levels,
        "trials": trials,
        "seed": seed,
        "alpha": alpha,
        "mean_zero_fraction": means,
        "mean_lambda": [float(np.mean(lams[lv])) for lv in levels],
        "non_decreasing": monotone,
        "first_to_last_gap": means[-1] - means[0],
    }
    return rows, summary


def rows_to_csv(rows):
    buf = io.StringIO()
    buf.write("level_m,trial,zero_fraction\n")
    for level, trial, zf in rows:
        buf.write(f"{level:.9g},{trial},{zf:.9g}\n")
    return buf.getvalue()
