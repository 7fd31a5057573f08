"""Slow reference implementations used to generate golden fixtures.

Everything here is written with explicit Python loops and ``math`` so it
shares no vectorized code path with the main modules.
"""

import math

import numpy as np

EARTH_RADIUS_M = 6_371_000.0


def correlation_bf(f_src, f_tgt):
    hs, ws, d = f_src.shape
    ht, wt, _ = f_tgt.shape
    src = [[[float(v) for v in f_src[y, x]] for x in range(ws)] for y in range(hs)]
    tgt = [[[float(v) for v in f_tgt[y, x]] for x in range(wt)] for y in range(ht)]

    def unit(v):
        n = math.sqrt(math.fsum(a * a for a in v))
        return [a / n for a in v] if n > 0 else [0.0] * len(v)

    src = [[unit(v) for v in row] for row in src]
    tgt = [[unit(v) for v in row] for row in tgt]
    out = np.zeros((hs, ws, ht, wt))
    for i in range(hs):
        for j in range(ws):
            for k in range(ht):
                for m in range(wt):
                    out[i, j, k, m] = math.fsum(a * b for a, b in zip(src[i][j], tgt[k][m]))
    return out


def soft_argmax_bf(c, alpha):
    hs, ws, ht, wt = c.shape
    out = np.zeros((hs, ws, 2))
    for i in range(hs):
        for j in range(ws):
            scores = [float(c[i, j, k, m]) for k in range(ht) for m in range(wt)]
            top = max(scores)
            w = [math.exp(alpha * (s - top)) for s in scores]
            z = math.fsum(w)
            out[i, j, 0] = math.fsum(wq * (q % wt) for q, wq in enumerate(w)) / z
            out[i, j, 1] = math.fsum(wq * (q // wt) for q, wq in enumerate(w)) / z
    return out


def match_bf(src_local, tgt_local, src_global, tgt_global, alpha):
    c = correlation_bf(src_local, tgt_local)
    if src_global is not None:
        c = c * correlation_bf(src_global, tgt_global)
    return soft_argmax_bf(c, alpha)


def _enu(origin, p):
    lat0 = math.radians(origin[0])
    d_lat = math.radians(p[0] - origin[0])
    d_lon = math.radians((p[1] - origin[1] + 180.0) % 360.0 - 180.0)
    return (EARTH_RADIUS_M * math.cos(lat0) * d_lon, EARTH_RADIUS_M * d_lat)


def _cos(u, v):
    return (u[0] * v[0] + u[1] * v[1]) / (math.hypot(*u) * math.hypot(*v))


def forward_is_closer_bf(x_d, x_plus, x_minus, x_n):
    """True when the forward neighbour makes the smaller angle-cosine with the
    night-to-day direction, i.e. the forward frame should be the reference."""
    a = _enu(x_n, x_d)
    return _cos(a, _enu(x_n, x_plus)) < _cos(a, _enu(x_n, x_minus))


def _great_circle(a, b):
    p1, p2 = math.radians(a[0]), math.radians(b[0])
    dl = math.radians(b[1] - a[1])
    s = math.sin((p2 - p1) / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(min(1.0, max(0.0, s))))


def scale_factor_bf(x_d, x_dr, x_n):
    v = _enu(x_d, x_dr)
    u = _enu(x_d, x_n)
    t = (u[0] * v[0] + u[1] * v[1]) / (v[0] ** 2 + v[1] ** 2)
    if t <= 0:
        return 0.0
    lat0 = math.radians(x_d[0])
    proj = (
        x_d[0] + math.degrees(t * v[1] / EARTH_RADIUS_M),
        x_d[1] + math.degrees(t * v[0] / (EARTH_RADIUS_M * math.cos(lat0))),
    )
    return _great_circle(x_d, proj) / _great_circle(x_d, x_dr)


def warp_bf(p, field):
    """Bilinear backward warp with border clamping; returns (seg, oob)."""
    hs, ws, c = p.shape
    h, w, _ = field.shape
    seg = np.zeros((h, w, c))
    oob = np.zeros((h, w), dtype=bool)
    for i in range(h):
        for j in range(w):
            x, y = float(field[i, j, 0]), float(field[i, j, 1])
            oob[i, j] = x < 0 or x > ws - 1 or y < 0 or y > hs - 1
            x = min(max(x, 0.0), ws - 1.0)
            y = min(max(y, 0.0), hs - 1.0)
            x0, y0 = int(math.floor(x)), int(math.floor(y))
            x1, y1 = min(x0 + 1, ws - 1), min(y0 + 1, hs - 1)
            ax, ay = x - x0, y - y0
            for k in range(c):
                seg[i, j, k] = (
                    (1 - ay) * ((1 - ax) * p[y0, x0, k] + ax * p[y0, x1, k])
                    + ay * ((1 - ax) * p[y1, x0, k] + ax * p[y1, x1, k])
                )
            s = math.fsum(seg[i, j])
            if s > 0:
                seg[i, j] /= s
    return seg, oob


def _argmax(v):
    best, idx = -math.inf, 0
    for k, a in enumerate(v):
        if a > best:
            best, idx = a, k
    return idx


def confidence_bf(p_a, p_b, oob=None):
    """1 where the argmax at the center of ``p_a`` appears anywhere in the
    clipped 3x3 window of ``p_b``; forced to 0 on ``oob``."""
    h, w, _ = p_a.shape
    out = np.zeros((h, w), dtype=np.uint8)
    for i in range(h):
        for j in range(w):
            if oob is not None and oob[i, j]:
                continue
            ka = _argmax(p_a[i, j])
            hit = False
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    y, x = i + di, j + dj
                    if 0 <= y < h and 0 <= x < w and _argmax(p_b[y, x]) == ka:
                        hit = True
            out[i, j] = 1 if hit else 0
    return out


def warping_loss_bf(p_target, p_supervisor, m, dynamic, eps=1e-12):
    """Masked cross-entropy of ``p_target`` against the one-hot argmax of
    ``p_supervisor``, skipping dynamic-class disagreements."""
    m = np.asarray(m)
    h, w, c = p_target.shape
    terms = []
    for i in range(h):
        for j in range(w):
            kt = _argmax(p_target[i, j])
            ks = _argmax(p_supervisor[i, j])
            if kt in dynamic and kt != ks:
                continue
            terms.append(float(m[i, j]) * -math.log(max(float(p_target[i, j, ks]), eps)))
    return math.fsum(terms) / (h * w * c)


def objectives_bf(l_n2d, l_d2n, l_light, l_adv, l_seg, l_dis, mu):
    m1, m2, m3, m4 = mu
    return {
        "L_Td": m1 * l_light + m2 * l_adv,
        "L_Tn": m1 * l_light + l_n2d + l_d2n + m2 * l_adv,
        "L_S": m1 * l_light + m3 * l_seg + m4 * l_dis,
    }


def similarity_bf(f_night, point, f_day, threshold):
    x, y = point
    v = [float(a) for a in f_night[y, x]]
    nv = math.sqrt(math.fsum(a * a for a in v))
    h, w, _ = f_day.shape
    out = np.zeros((h, w), dtype=np.uint8)
    for i in range(h):
        for j in range(w):
            u = [float(a) for a in f_day[i, j]]
            nu = math.sqrt(math.fsum(a * a for a in u))
            s = math.fsum(a * b for a, b in zip(v, u)) / (nv * nu) if nv > 0 and nu > 0 else 0.0
            out[i, j] = 1 if s > threshold else 0
    return out
