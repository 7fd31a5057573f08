"""File formats: GLT1 binary tensors, GPS track CSV, and on-disk pair bundles.

GLT1 layout (all little-endian)::

    b"GLT1"            4 bytes magic
    rank               1 byte, 2..4
    dims               rank x uint32
    payload            prod(dims) x float32, row-major, last axis fastest
"""

import csv
import io
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    BadRankError,
    DimOverflowError,
    GpsCsvError,
    NonFiniteError,
    ParseError,
    ShapeError,
    TruncatedPayloadError,
)
from .geo import GpsFix
from .validation import check_feature_map, check_same_grid, check_segmap

MAGIC = b"GLT1"
MAX_ELEMENTS = 1 << 28
GPS_HEADER = ["frame_id", "timestamp_s", "lat_deg", "lon_deg"]


def encode_tensor(arr):
    arr = np.asarray(arr)
    if not 2 <= arr.ndim <= 4:
        raise BadRankError(f"GLT1 supports rank 2-4, got rank {arr.ndim}")
    if any(d >= 1 << 32 for d in arr.shape):
        raise DimOverflowError(f"dimension too large for uint32: {arr.shape}")
    data = np.ascontiguousarray(arr, dtype="<f4")
    if not np.all(np.isfinite(data)):
        raise NonFiniteError("refusing to write non-finite values")
    header = MAGIC + struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + data.tobytes()


def decode_tensor(buf):
    buf = memoryview(buf)
    if len(buf) < 5:
        raise TruncatedPayloadError("file shorter than GLT1 header")
    if bytes(buf[:4]) != MAGIC:
        raise BadMagicError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}")
    rank = buf[4]
    if not 2 <= rank <= 4:
        raise BadRankError(f"rank {rank} outside 2-4")
    end = 5 + 4 * rank
    if len(buf) < end:
        raise TruncatedPayloadError("truncated dimension header")
    dims = struct.unpack(f"<{rank}I", buf[5:end])
    # checked before any allocation
    n = math.prod(dims)
    if n > MAX_ELEMENTS:
        raise DimOverflowError(f"header declares {n} elements (limit {MAX_ELEMENTS})")
    expected = end + 4 * n
    if len(buf) < expected:
        raise TruncatedPayloadError(f"payload has {len(buf) - end} bytes, expected {4 * n}")
    if len(buf) > expected:
        raise TruncatedPayloadError(f"{len(buf) - expected} trailing bytes after payload")
    arr = np.frombuffer(buf[end:expected], dtype="<f4").reshape(dims)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("payload contains non-finite values")
    return arr.astype(np.float32)


def _atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_tensor(arr, path):
    _atomic_write_bytes(path, encode_tensor(arr))


def read_tensor(path):
    return decode_tensor(Path(path).read_bytes())


def write_text(path, text):
    _atomic_write_bytes(path, text.encode("utf-8"))


@dataclass(frozen=True)
class GpsRecord:
    frame_id: str
    timestamp_s: float
    fix: GpsFix


@dataclass
class GpsTrack:
    records: list = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        last = -math.inf
        for rec in self.records:
            if rec.frame_id in seen:
                raise ValueError(f"duplicate frame_id {rec.frame_id!r}")
            seen.add(rec.frame_id)
            if rec.timestamp_s < last:
                raise ValueError(f"timestamps decrease at frame {rec.frame_id!r}")
            last = rec.timestamp_s

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self):
        return {r.frame_id: r for r in self.records}

    def fix(self, frame_id):
        for r in self.records:
            if r.frame_id == frame_id:
                return r.fix
        raise KeyError(frame_id)


def _fmt(x):
    return repr(float(x))


def format_gps_csv(track):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GPS_HEADER)
    for r in track:
        w.writerow([r.frame_id, _fmt(r.timestamp_s), _fmt(r.fix.lat_deg), _fmt(r.fix.lon_deg)])
    return buf.getvalue()


def write_gps_csv(track, path):
    write_text(path, format_gps_csv(track))


def parse_gps_csv(text):
    rows = csv.reader(io.StringIO(text))
    try:
        header = next(rows)
    except StopIteration:
        raise GpsCsvError("empty file", line=1) from None
    if header != GPS_HEADER:
        raise GpsCsvError(f"header {header!r} != {GPS_HEADER!r}", line=1)
    records, seen = [], {}
    last_t = -math.inf
    for row in rows:
        line = rows.line_num
        if not row:
            continue
        if len(row) != 4:
            raise GpsCsvError(f"expected 4 fields, got {len(row)}", line=line)
        frame_id, ts, lat, lon = row
        if not frame_id:
            raise GpsCsvError("empty frame_id", line=line)
        try:
            t, la, lo = float(ts), float(lat), float(lon)
        except ValueError as exc:
            raise GpsCsvError(f"unparsable number: {exc}", line=line) from None
        if not all(math.isfinite(v) for v in (t, la, lo)):
            raise GpsCsvError("non-finite value", line=line)
        if not -90.0 <= la <= 90.0:
            raise GpsCsvError(f"latitude {la} outside [-90, 90]", line=line)
        if not -180.0 <= lo <= 180.0:
            raise GpsCsvError(f"longitude {lo} outside [-180, 180]", line=line)
        if frame_id in seen:
            raise GpsCsvError(
                f"duplicate frame_id {frame_id!r} (first on line {seen[frame_id]})", line=line
            )
        if t < last_t:
            raise GpsCsvError("timestamp decreases", line=line)
        seen[frame_id] = line
        last_t = t
        records.append(GpsRecord(frame_id, t, GpsFix(la, lo)))
    return GpsTrack(records)


def read_gps_csv(path):
    try:
        text = Path(path).read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise GpsCsvError(f"not valid UTF-8: {exc}") from None
    return parse_gps_csv(text)


# -- pair bundles -----------------------------------------------------------

FRAME_IDS = ("d", "d+", "d-", "n")

BUNDLE_FILES = {
    "day_local": "day_local.glt",
    "day_global": "day_global.glt",
    "night_local": "night_local.glt",
    "night_global": "night_global.glt",
    "ref_plus_local": "ref_plus_local.glt",
    "ref_plus_global": "ref_plus_global.glt",
    "ref_minus_local": "ref_minus_local.glt",
    "ref_minus_global": "ref_minus_global.glt",
    "p_day": "p_day.glt",
    "p_night": "p_night.glt",
}
GPS_FILE = "gps.csv"


@dataclass
class PairSample:
    """Day/night pair with both candidate day references and their fixes.

    Feature arrays are ``(h, w, d)``; ``p_day``/``p_night`` are ``(h, w, c)``
    probability maps. ``gps`` maps the frame ids ``d``, ``d+``, ``d-``, ``n``
    to :class:`GpsFix`.
    """

    day_local: np.ndarray
    day_global: np.ndarray
    night_local: np.ndarray
    night_global: np.ndarray
    ref_plus_local: np.ndarray
    ref_plus_global: np.ndarray
    ref_minus_local: np.ndarray
    ref_minus_global: np.ndarray
    p_day: np.ndarray
    p_night: np.ndarray
    gps: dict

    def validate(self):
        feats = [n for n in BUNDLE_FILES if not n.startswith("p_")]
        for name in feats:
            setattr(self, name, check_feature_map(getattr(self, name), name))
        for name in ("p_day", "p_night"):
            setattr(self, name, check_segmap(getattr(self, name), name))
        for name in feats + ["p_night"]:
            check_same_grid(self.p_day, getattr(self, name), ("p_day", name))
        for kind in ("local", "global"):
            d = {getattr(self, n).shape[2] for n in feats if n.endswith(kind)}
            if len(d) != 1:
                raise ShapeError(f"{kind} features disagree on channel count: {sorted(d)}")
        if self.p_day.shape[2] != self.p_night.shape[2]:
            raise ShapeError("p_day and p_night disagree on class count")
        missing = [f for f in FRAME_IDS if f not in self.gps]
        if missing:
            raise KeyError(f"missing GPS frame(s): {', '.join(missing)}")
        return self


def write_bundle(sample, directory, extra_track=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for attr, fname in BUNDLE_FILES.items():
        write_tensor(getattr(sample, attr), directory / fname)
    records = [GpsRecord(fid, float(i), sample.gps[fid]) for i, fid in enumerate(FRAME_IDS)]
    write_gps_csv(extra_track or GpsTrack(records), directory / GPS_FILE)


def read_bundle(directory):
    """Load a :class:`PairSample` from a bundle directory.

    Raises :class:`ParseError` for missing files or GPS frames so the CLI can
    map them onto its parse-error exit code.
    """
    directory = Path(directory)
    arrays = {}
    for attr, fname in BUNDLE_FILES.items():
        path = directory / fname
        if not path.exists():
            raise ParseError(f"bundle missing {fname}")
        arrays[attr] = read_tensor(path)
    gps_path = directory / GPS_FILE
    if not gps_path.exists():
        raise ParseError(f"bundle missing {GPS_FILE}")
    track = read_gps_csv(gps_path).by_id()
    missing = [f for f in FRAME_IDS if f not in track]
    if missing:
        raise ParseError(f"GPS track missing frame(s): {', '.join(missing)}")
    sample = PairSample(**arrays, gps={f: track[f].fix for f in FRAME_IDS})
    try:
        return sample.validate()
    except ShapeError:
        raise
    except ValueError as exc:
        raise ParseError(str(exc)) from None
