"""GPS geometry: great-circle distances, reference-frame selection and the
flow scale factor derived from the day/night/reference positions.

All planar work happens in an equirectangular tangent plane. Routes are a few
tens of meters long, so the projection error is far below GPS noise.
"""

import enum
import math
from typing import NamedTuple

from .errors import GeometryError

EARTH_RADIUS_M = 6_371_000.0


class GpsFix(NamedTuple):
    lat_deg: float
    lon_deg: float

    def validate(self):
        if not (math.isfinite(self.lat_deg) and math.isfinite(self.lon_deg)):
            raise ValueError(f"non-finite coordinate in {self!r}")
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValueError(f"latitude {self.lat_deg} outside [-90, 90]")
        if not -180.0 <= self.lon_deg <= 180.0:
            raise ValueError(f"longitude {self.lon_deg} outside [-180, 180]")
        return self


class LocalVec(NamedTuple):
    east_m: float
    north_m: float

    def dot(self, other):
        return self.east_m * other.east_m + self.north_m * other.north_m

    def norm(self):
        return math.hypot(self.east_m, self.north_m)


class RefChoice(enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


def _fix(p):
    return GpsFix(float(p[0]), float(p[1])).validate()


def haversine(a, b):
    """Great-circle distance in meters between two fixes."""
    a, b = _fix(a), _fix(b)
    lat1, lat2 = math.radians(a.lat_deg), math.radians(b.lat_deg)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon_deg - a.lon_deg)
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    h = min(max(h, 0.0), 1.0)
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(h))


def _wrap_lon(dlon):
    return (dlon + 180.0) % 360.0 - 180.0


def to_local_enu(origin, p):
    origin, p = _fix(origin), _fix(p)
    dlat = math.radians(p.lat_deg - origin.lat_deg)
    dlon = math.radians(_wrap_lon(p.lon_deg - origin.lon_deg))
    return LocalVec(
        EARTH_RADIUS_M * dlon * math.cos(math.radians(origin.lat_deg)),
        EARTH_RADIUS_M * dlat,
    )


def from_local_enu(origin, v):
    """Inverse of :func:`to_local_enu`."""
    origin = _fix(origin)
    cos_lat = math.cos(math.radians(origin.lat_deg))
    if cos_lat == 0.0:
        raise GeometryError("tangent plane undefined at the poles")
    lat = origin.lat_deg + math.degrees(v[1] / EARTH_RADIUS_M)
    lon = origin.lon_deg + math.degrees(v[0] / (EARTH_RADIUS_M * cos_lat))
    if not -180.0 <= lon <= 180.0:
        lon = _wrap_lon(lon)
    return GpsFix(lat, lon)


def cosine_similarity(u, v):
    nu, nv = u.norm(), v.norm()
    if nu == 0.0 or nv == 0.0:
        raise GeometryError("cosine similarity of a zero-length vector")
    return u.dot(v) / (nu * nv)


def select_reference(x_d, x_d_plus, x_d_minus, x_n):
    """Pick the day frame neighbour lying toward the night position.

    Forward is chosen only on a strict inequality; ties go Backward.
    """
    v_d = to_local_enu(x_n, x_d)
    v_plus = to_local_enu(x_n, x_d_plus)
    v_minus = to_local_enu(x_n, x_d_minus)
    if v_d.norm() == 0.0 or v_plus.norm() == 0.0 or v_minus.norm() == 0.0:
        raise GeometryError("night fix coincides with a day frame fix")
    if cosine_similarity(v_d, v_plus) < cosine_similarity(v_d, v_minus):
        return RefChoice.FORWARD
    return RefChoice.BACKWARD


def project_onto_line(x_d, x_dr, x_n):
    """Return ``(t, fix)``: the projection parameter along x_d -> x_dr and the
    projected position mapped back to latitude/longitude."""
    v = to_local_enu(x_d, x_dr)
    vv = v.dot(v)
    if vv == 0.0:
        raise GeometryError("day and reference fixes coincide")
    u = to_local_enu(x_d, x_n)
    t = u.dot(v) / vv
    return t, from_local_enu(x_d, (t * v.east_m, t * v.north_m))


def scale_factor(x_d, x_dr, x_n):
    """Ratio of the day-to-projected-night distance over the day-to-reference
    distance. Projections behind ``x_d`` clamp to 0; no upper clamp."""
    x_d, x_dr, x_n = _fix(x_d), _fix(x_dr), _fix(x_n)
    t, proj = project_onto_line(x_d, x_dr, x_n)
    if t <= 0.0:
        return 0.0
    if t == 1.0:
        return 1.0
    return haversine(x_d, proj) / haversine(x_d, x_dr)


def apply_gps_noise(x_n, x_d, extra_m):
    """Push ``x_n`` ``extra_m`` meters further away from ``x_d`` along the ray
    x_d -> x_n, so the Haversine distance grows by exactly ``extra_m``."""
    x_n, x_d = _fix(x_n), _fix(x_d)
    if not (math.isfinite(extra_m) and extra_m >= 0):
        raise ValueError(f"extra_m must be a finite non-negative number, got {extra_m}")
    u = to_local_enu(x_d, x_n)
    r = u.norm()
    if r == 0.0:
        raise GeometryError("night fix coincides with day fix; noise direction undefined")
    if extra_m == 0:
        return x_n
    target = haversine(x_d, x_n) + extra_m
    s = r + extra_m
    # the tangent plane is not exactly isometric; a few fixed-point steps on
    # the ray length close the gap to well below a millimeter
    for _ in range(4):
        out = from_local_enu(x_d, (u.east_m * s / r, u.north_m * s / r))
        err = target - haversine(x_d, out)
        if abs(err) < 1e-9:
            break
        s += err
    return out
