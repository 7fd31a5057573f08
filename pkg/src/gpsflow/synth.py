"""Synthetic scenes with known ground truth, and brute-force oracles.

All randomness comes from :class:`SplitMix64`, a counter-based 64-bit
generator: output ``i`` (0-based) of a stream seeded with ``s`` is
``mix(s + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64)`` with the standard
SplitMix64 finalizer. Uniform doubles take the top 53 bits; normals use the
Box-Muller cosine branch on consecutive uniform pairs.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geo
from .errors import ShapeError
from .tensorio import GpsRecord, GpsTrack, PairSample, write_bundle, write_tensor, write_text
from .validation import check_feature_map, renormalize

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
DEFAULT_ORIGIN = geo.GpsFix(47.3769, 8.5417)


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    def __init__(self, seed):
        self.state = np.uint64(int(seed) % (1 << 64))

    def u64(self, n):
        with np.errstate(over="ignore"):
            steps = np.arange(1, n + 1, dtype=np.uint64)
            out = _mix(self.state + steps * GAMMA)
            self.state = self.state + np.uint64(n) * GAMMA
        return out

    def next_u64(self):
        return int(self.u64(1)[0])

    def uniform(self, n):
        """``n`` doubles in [0, 1)."""
        return (self.u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n):
        u = self.uniform(2 * n).reshape(n, 2)
        return np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])

    def integers(self, high, n):
        """``n`` integers in ``[0, high)`` (modulo reduction; bias < 2**-50)."""
        return (self.u64(n) % np.uint64(high)).astype(np.int64)


def random_unit_features(rng, h, w, d):
    g = rng.normal(h * w * d).reshape(h, w, d)
    return g / np.linalg.norm(g, axis=2, keepdims=True)


def blocky_probabilities(rng, h, w, c, block=3, peak=4.0):
    """Piecewise-constant class layout with soft probabilities whose argmax is
    the block label."""
    bh, bw = -(-h // block), -(-w // block)
    labels = rng.integers(c, bh * bw).reshape(bh, bw)
    labels = np.repeat(np.repeat(labels, block, axis=0), block, axis=1)[:h, :w]
    logits = rng.uniform(h * w * c).reshape(h, w, c)
    np.put_along_axis(logits, labels[..., None], peak, axis=2)
    e = np.exp(logits - logits.max(axis=2, keepdims=True))
    return renormalize(e / e.sum(axis=2, keepdims=True)), labels


@dataclass
class SyntheticScene:
    sample: PairSample
    shift: tuple
    ref_shift: tuple
    lambda_target: float
    gt_field: np.ndarray
    gt_valid: np.ndarray
    labels_day: np.ndarray
    seed: int

    def metadata(self):
        return {
            "generator": "translated",
            "shift": list(self.shift),
            "ref_shift": list(self.ref_shift),
            "lambda": self.lambda_target,
            "seed": self.seed,
            "grid": list(self.sample.p_day.shape),
            "feature_dim": self.sample.day_local.shape[2],
        }

    def write(self, directory):
        directory = Path(directory)
        write_bundle(self.sample, directory)
        write_tensor(self.gt_field, directory / "gt_field.glt")
        write_tensor(self.gt_valid.astype(np.float32), directory / "gt_valid.glt")
        write_text(directory / "scene.json", json.dumps(self.metadata(), sort_keys=True) + "\n")


def _crop(world, origin, t, h, w):
    oy, ox = origin
    y0, x0 = oy - t[1], ox - t[0]
    return world[y0 : y0 + h, x0 : x0 + w]


def gen_translated_scene(
    h,
    w,
    d,
    c,
    shift,
    lambda_target,
    seed,
    *,
    ref_distance_m=10.0,
    lateral_m=0.0,
    heading_deg=90.0,
    block=3,
    origin=DEFAULT_ORIGIN,
):
    """Day/night/reference frames cut from one random "world" canvas.

    A frame translated by ``t`` satisfies ``frame(p + t) = day(p)``. The night
    frame is translated by ``shift`` and the two references by
    ``+-shift / lambda_target``, which must be integral. GPS fixes lie on a
    line through the day fix with the forward reference ``ref_distance_m``
    ahead and the night fix at ``lambda_target`` of that distance, offset
    sideways by ``lateral_m``.
    """
    dx, dy = (int(v) for v in shift)
    if (dx, dy) != tuple(shift):
        raise ValueError(f"shift must be integral, got {shift}")
    if not (abs(dx) < w / 2 and abs(dy) < h / 2):
        raise ValueError(f"shift {shift} too large for a {w}x{h} grid")
    if not lambda_target > 0:
        raise ValueError(f"lambda_target must be > 0, got {lambda_target}")
    rx, ry = dx / lambda_target, dy / lambda_target
    if abs(rx - round(rx)) > 1e-9 or abs(ry - round(ry)) > 1e-9:
        raise ValueError(f"reference shift ({rx}, {ry}) = shift / lambda must be integral")
    rx, ry = int(round(rx)), int(round(ry))
    if abs(rx) >= w or abs(ry) >= h:
        raise ValueError(f"reference shift ({rx}, {ry}) leaves no overlap with a {w}x{h} grid")

    rng = SplitMix64(seed)
    px, py = max(abs(dx), abs(rx)), max(abs(dy), abs(ry))
    wh, ww = h + 2 * py, w + 2 * px
    world_local = random_unit_features(rng, wh, ww, d)
    world_global = random_unit_features(rng, wh, ww, d)
    world_probs, world_labels = blocky_probabilities(rng, wh, ww, c, block=block)

    o = (py, px)

    def frame(arr, t):
        return np.ascontiguousarray(_crop(arr, o, t, h, w)).astype(np.float32)

    fixes = _scene_fixes(origin, heading_deg, ref_distance_m, lambda_target, lateral_m)
    sample = PairSample(
        day_local=frame(world_local, (0, 0)),
        day_global=frame(world_global, (0, 0)),
        night_local=frame(world_local, (dx, dy)),
        night_global=frame(world_global, (dx, dy)),
        ref_plus_local=frame(world_local, (rx, ry)),
        ref_plus_global=frame(world_global, (rx, ry)),
        ref_minus_local=frame(world_local, (-rx, -ry)),
        ref_minus_global=frame(world_global, (-rx, -ry)),
        p_day=frame(world_probs, (0, 0)),
        p_night=frame(world_probs, (dx, dy)),
        gps=fixes,
    ).validate()

    ys, xs = np.mgrid[0:h, 0:w]
    gt = np.stack([xs + dx, ys + dy], axis=2).astype(np.float32)
    valid = (xs + dx >= 0) & (xs + dx < w) & (ys + dy >= 0) & (ys + dy < h)
    return SyntheticScene(
        sample=sample,
        shift=(dx, dy),
        ref_shift=(rx, ry),
        lambda_target=float(lambda_target),
        gt_field=gt,
        gt_valid=valid,
        labels_day=_crop(world_labels, o, (0, 0), h, w).copy(),
        seed=int(seed),
    )


def _scene_fixes(origin, heading_deg, ref_distance_m, lam, lateral_m):
    a = math.radians(heading_deg)
    e = (math.sin(a), math.cos(a))
    n = (e[1], -e[0])

    def at(s, off=0.0):
        return geo.from_local_enu(origin, (s * e[0] + off * n[0], s * e[1] + off * n[1]))

    return {
        "d": geo.GpsFix(*origin),
        "d+": at(ref_distance_m),
        "d-": at(-ref_distance_m),
        "n": at(lam * ref_distance_m, lateral_m),
    }


def brute_force_match(f_src, f_tgt):
    """Integer ``(h, w, 2)`` map of (x, y) best matches by naive normalized
    dot products, ties to the lowest linear target index."""
    f_src = check_feature_map(f_src, "f_src").astype(np.float64)
    f_tgt = check_feature_map(f_tgt, "f_tgt").astype(np.float64)
    if f_src.shape[2] != f_tgt.shape[2]:
        raise ShapeError(f"channel mismatch: {f_src.shape[2]} vs {f_tgt.shape[2]}")
    hs, ws, d = f_src.shape
    ht, wt, _ = f_tgt.shape
    tgt = f_tgt.reshape(-1, d)
    tnorm = np.sqrt((tgt * tgt).sum(axis=1))
    out = np.zeros((hs, ws, 2), dtype=np.int64)
    for y in range(hs):
        for x in range(ws):
            v = f_src[y, x]
            vn = math.sqrt(float(v @ v))
            best, best_i = -math.inf, 0
            for i in range(tgt.shape[0]):
                denom = vn * tnorm[i]
                s = float(v @ tgt[i]) / denom if denom > 0 else 0.0
                if s > best:
                    best, best_i = s, i
            out[y, x] = (best_i % wt, best_i // wt)
    return out


def gen_route(n, spacing_m, heading_deg, jitter_m, seed, origin=DEFAULT_ORIGIN):
    """Near-straight GPS track with Gaussian cross-track jitter.

    Each on-line point is placed ``spacing_m`` ahead of the previous one in
    the previous point's tangent plane, so consecutive gaps stay exact over
    long routes.
    """
    if n < 3:
        raise ValueError("a route needs at least 3 points")
    if not spacing_m > 0:
        raise ValueError("spacing_m must be > 0")
    rng = SplitMix64(seed)
    noise = rng.normal(n) * jitter_m
    a = math.radians(heading_deg)
    e = (math.sin(a), math.cos(a))
    perp = (e[1], -e[0])
    on_line = geo.GpsFix(*origin)
    records = []
    for i in range(n):
        if i:
            on_line = geo.from_local_enu(on_line, (spacing_m * e[0], spacing_m * e[1]))
        fix = on_line
        if noise[i] != 0.0:
            fix = geo.from_local_enu(on_line, (noise[i] * perp[0], noise[i] * perp[1]))
        records.append(GpsRecord(f"{i:06d}", float(i), fix))
    return GpsTrack(records)
