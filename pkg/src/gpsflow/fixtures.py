"""Golden fixtures: small inputs, CLI commands and expected outputs produced by
the slow oracles in :mod:`gpsflow.oracles`.

Layout of a fixture directory::

    manifest.json                 canonical JSON, one entry per fixture
    <name>/inputs/...             files the command reads
    <name>/expected/...           expected outputs

Each entry lists the command (``{inputs}`` and ``{out}`` are substituted), a
tolerance class and the SHA-256 of every expected file. ``bit-exact``
compares output digests; the numeric classes compare values. Expected JSON
files are subsets: only the keys they contain are checked.
"""

import contextlib
import csv
import io
import json
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geo, oracles
from .correspond import DEFAULT_ALPHA
from .experiments import run_noise_sweep, rows_to_csv
from .report import canonical_json, file_digest
from .synth import SplitMix64, gen_translated_scene, random_unit_features
from .tensorio import PairSample, decode_tensor, write_bundle, write_tensor
from .tensorio import write_text

DEFAULT_FIXTURE_DIR = Path(__file__).parent / "golden"
MANIFEST = "manifest.json"
TOLERANCES = {"bit-exact": 0.0, "1e-6": 1e-6, "1e-4": 1e-4}

# One tag per modelled formula plus the noise-sweep and similarity analyses.
REQUIRED_COVERAGE = frozenset(
    {
        "correlation",
        "soft-argmax",
        "correspondence-field",
        "reference-selection",
        "scale-factor",
        "confidence-n2d",
        "confidence-d2n",
        "one-hot-cross-entropy",
        "warping-loss-d2n",
        "dynamic-ignore-set",
        "warping-loss-n2d",
        "objective-day-target",
        "objective-night-target",
        "objective-source",
        "gps-noise-sweep",
        "similarity-map",
    }
)


@dataclass
class FixtureResult:
    name: str
    passed: bool
    detail: str = ""


def load_manifest(directory=DEFAULT_FIXTURE_DIR):
    path = Path(directory) / MANIFEST
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def coverage_union(manifest):
    return frozenset(tag for fx in manifest["fixtures"] for tag in fx["coverage"])


# -- comparison --------------------------------------------------------------


def _compare_json(expected, actual, tol, where="$"):
    if isinstance(expected, dict):
        if not isinstance(actual, dict):
            return f"{where}: expected object"
        for k, v in expected.items():
            if k not in actual:
                return f"{where}.{k}: missing"
            msg = _compare_json(v, actual[k], tol, f"{where}.{k}")
            if msg:
                return msg
        return None
    if isinstance(expected, list):
        if not isinstance(actual, list) or len(actual) != len(expected):
            return f"{where}: list length differs"
        for i, (e, a) in enumerate(zip(expected, actual)):
            msg = _compare_json(e, a, tol, f"{where}[{i}]")
            if msg:
                return msg
        return None
    if isinstance(expected, bool) or not isinstance(expected, (int, float)):
        return None if expected == actual else f"{where}: {actual!r} != {expected!r}"
    if isinstance(actual, bool) or not isinstance(actual, (int, float)):
        return f"{where}: expected a number"
    if abs(actual - expected) > tol:
        return f"{where}: {actual!r} differs from {expected!r} by more than {tol:g}"
    return None


def _compare_csv(expected_text, actual_text, tol):
    exp = list(csv.reader(io.StringIO(expected_text)))
    act = list(csv.reader(io.StringIO(actual_text)))
    if len(exp) != len(act):
        return f"row count {len(act)} != {len(exp)}"
    for r, (e_row, a_row) in enumerate(zip(exp, act)):
        if len(e_row) != len(a_row):
            return f"row {r}: field count differs"
        for e, a in zip(e_row, a_row):
            try:
                if abs(float(e) - float(a)) > tol:
                    return f"row {r}: {a} vs {e}"
            except ValueError:
                if e != a:
                    return f"row {r}: {a!r} vs {e!r}"
    return None


def compare_output(expected_path, actual_path, tolerance):
    """Return None on a match, else a short reason."""
    if not actual_path.exists():
        return f"output {actual_path.name} not produced"
    if tolerance == "bit-exact":
        if file_digest(actual_path) != file_digest(expected_path):
            return f"{actual_path.name}: digest differs"
        return None
    tol = TOLERANCES[tolerance]
    suffix = expected_path.suffix
    if suffix == ".glt":
        e = decode_tensor(expected_path.read_bytes()).astype(np.float64)
        a = decode_tensor(actual_path.read_bytes()).astype(np.float64)
        if e.shape != a.shape:
            return f"{actual_path.name}: shape {a.shape} != {e.shape}"
        err = float(np.max(np.abs(e - a))) if e.size else 0.0
        return None if err <= tol else f"{actual_path.name}: max abs diff {err:.3g} > {tol:g}"
    if suffix == ".json":
        msg = _compare_json(
            json.loads(expected_path.read_text(encoding="utf-8")),
            json.loads(actual_path.read_text(encoding="utf-8")),
            tol,
        )
        return f"{actual_path.name} {msg}" if msg else None
    if suffix == ".csv":
        msg = _compare_csv(expected_path.read_text(), actual_path.read_text(), tol)
        return f"{actual_path.name} {msg}" if msg else None
    return None if actual_path.read_bytes() == expected_path.read_bytes() else "bytes differ"


# -- verification ------------------------------------------------------------


def _run_cli(argv):
    from .cli import main

    buf_out, buf_err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(buf_out), contextlib.redirect_stderr(buf_err):
        try:
            code = main(argv)
        except SystemExit as exc:
            code = exc.code
    return code, buf_err.getvalue().strip()


def verify_fixture(directory, fx):
    name = fx.get("name", "<unnamed>")
    root = Path(directory) / name
    inputs = root / "inputs"
    if not inputs.is_dir():
        return FixtureResult(name, False, "fixture missing")
    if fx.get("tolerance") not in TOLERANCES:
        return FixtureResult(name, False, f"unknown tolerance class {fx.get('tolerance')!r}")
    for rel, digest in sorted(fx["expected"].items()):
        path = root / "expected" / rel
        if not path.exists():
            return FixtureResult(name, False, f"expected file {rel} missing")
        if file_digest(path) != digest:
            return FixtureResult(name, False, f"expected file {rel} does not match its digest")
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "out"
        argv = [a.format(inputs=str(inputs), out=str(out)) for a in fx["command"]]
        code, err = _run_cli(argv)
        if code != 0:
            return FixtureResult(name, False, f"command exited {code}: {err}")
        for rel in sorted(fx["expected"]):
            msg = compare_output(root / "expected" / rel, out / rel, fx["tolerance"])
            if msg:
                return FixtureResult(name, False, msg)
    return FixtureResult(name, True, fx["tolerance"])


def verify_fixtures(directory=DEFAULT_FIXTURE_DIR):
    """Run every fixture; a missing fixture shows up as a failed row."""
    manifest = load_manifest(directory)
    if not manifest or not manifest.get("fixtures"):
        return [FixtureResult("<none>", False, f"no fixtures found in {directory}")]
    return [verify_fixture(directory, fx) for fx in manifest["fixtures"]]


def format_table(results):
    width = max(len(r.name) for r in results)
    lines = [f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}" for r in results]
    n_ok = sum(r.passed for r in results)
    lines.append(f"{n_ok}/{len(results)} fixtures passed")
    return "\n".join(lines) + "\n"


# -- regeneration ------------------------------------------------------------


def _scaled(field, lam):
    h, w, _ = field.shape
    ys, xs = np.mgrid[0:h, 0:w]
    grid = np.stack([xs, ys], axis=2).astype(np.float64)
    return grid + lam * (field - grid)


def _oracle_pseudolabels(sample, alpha):
    gps = sample.gps
    forward = oracles.forward_is_closer_bf(gps["d"], gps["d+"], gps["d-"], gps["n"])
    key = "plus" if forward else "minus"
    lam = oracles.scale_factor_bf(gps["d"], gps["d+" if forward else "d-"], gps["n"])
    dl, dg = sample.day_local, sample.day_global
    nl, ng = sample.night_local, sample.night_global
    rl, rg = getattr(sample, f"ref_{key}_local"), getattr(sample, f"ref_{key}_global")
    f_d2n = oracles.match_bf(dl, nl, dg, ng, alpha)
    f_n2d = oracles.match_bf(nl, dl, ng, dg, alpha)
    f_d2n_p = _scaled(oracles.match_bf(dl, rl, dg, rg, alpha), lam)
    f_n2d_p = _scaled(oracles.match_bf(rl, dl, rg, dg, alpha), lam)
    p_n = sample.p_night.astype(np.float64)
    p_d = sample.p_day.astype(np.float64)
    n2d, o1 = oracles.warp_bf(p_n, f_d2n)
    d2n, o2 = oracles.warp_bf(p_d, f_n2d)
    n2d_p, o3 = oracles.warp_bf(p_n, f_d2n_p)
    d2n_p, o4 = oracles.warp_bf(p_d, f_n2d_p)
    return {
        "reference": "forward" if forward else "backward",
        "lambda": lam,
        "p_n2d": n2d,
        "p_d2n": d2n,
        "p_n2d_prime": n2d_p,
        "p_d2n_prime": d2n_p,
        "m_n2d": oracles.confidence_bf(n2d, n2d_p, o1 | o3),
        "m_d2n": oracles.confidence_bf(d2n, d2n_p, o2 | o4),
    }


def _expected_pseudolabel(sample, alpha, out):
    res = _oracle_pseudolabels(sample, alpha)
    for k in ("p_n2d", "p_d2n", "p_n2d_prime", "p_d2n_prime", "m_n2d", "m_d2n"):
        write_tensor(res[k].astype(np.float32), out / f"{k}.glt")
    subset = {"outputs": {"reference": res["reference"], "lambda": res["lambda"]}}
    write_text(out / "report.json", canonical_json(subset))


def _fx_match(root):
    scene = gen_translated_scene(8, 8, 4, 3, (1, 1), 0.5, seed=101)
    scene.write(root / "inputs")
    s = scene.sample
    alpha = 50.0
    exp = root / "expected"
    write_tensor(
        oracles.match_bf(s.day_local, s.night_local, s.day_global, s.night_global, alpha)
        .astype(np.float32),
        exp / "f_d2n.glt",
    )
    write_tensor(
        oracles.match_bf(s.night_local, s.day_local, s.night_global, s.day_global, alpha)
        .astype(np.float32),
        exp / "f_n2d.glt",
    )
    return {
        "command": ["match", "--bundle", "{inputs}", "--alpha", "50", "--out", "{out}"],
        "coverage": ["correlation", "soft-argmax", "correspondence-field"],
        "tolerance": "1e-4",
    }


def _fx_pseudolabel_forward(root):
    scene = gen_translated_scene(10, 10, 6, 5, (1, 0), 0.5, seed=202, lateral_m=0.3)
    scene.write(root / "inputs")
    _expected_pseudolabel(scene.sample, DEFAULT_ALPHA, root / "expected")
    return {
        "command": ["pseudolabel", "{inputs}", "--out", "{out}"],
        "coverage": [
            "correlation", "soft-argmax", "correspondence-field", "reference-selection",
            "scale-factor", "confidence-n2d", "confidence-d2n",
        ],
        "tolerance": "1e-4",
    }


def _fx_pseudolabel_backward(root):
    # Mirror the route: the night fix now sits toward the backward neighbour.
    scene = gen_translated_scene(10, 10, 6, 5, (0, 1), 0.5, seed=303, heading_deg=0.0,
                                 lateral_m=-0.2)
    s = scene.sample
    gps = dict(s.gps, **{"d+": s.gps["d-"], "d-": s.gps["d+"]})
    sample = PairSample(
        day_local=s.day_local, day_global=s.day_global,
        night_local=s.night_local, night_global=s.night_global,
        ref_plus_local=s.ref_minus_local, ref_plus_global=s.ref_minus_global,
        ref_minus_local=s.ref_plus_local, ref_minus_global=s.ref_plus_global,
        p_day=s.p_day, p_night=s.p_night, gps=gps,
    ).validate()
    write_bundle(sample, root / "inputs")
    _expected_pseudolabel(sample, 200.0, root / "expected")
    return {
        "command": ["pseudolabel", "{inputs}", "--alpha", "200", "--out", "{out}"],
        "coverage": ["reference-selection", "scale-factor", "confidence-n2d", "confidence-d2n"],
        "tolerance": "1e-4",
    }


WORKED_P_DAY = [[[0.7, 0.2, 0.1], [0.1, 0.8, 0.1]], [[0.2, 0.2, 0.6], [0.5, 0.3, 0.2]]]
WORKED_P_NIGHT = [[[0.6, 0.3, 0.1], [0.2, 0.7, 0.1]], [[0.1, 0.3, 0.6], [0.3, 0.4, 0.3]]]
WORKED_P_N2D = [[[0.5, 0.25, 0.25], [0.3, 0.6, 0.1]], [[0.2, 0.4, 0.4], [0.25, 0.5, 0.25]]]
WORKED_P_D2N = [[[0.6, 0.2, 0.2], [0.1, 0.1, 0.8]], [[0.3, 0.3, 0.4], [0.6, 0.2, 0.2]]]
WORKED_M_N2D = [[1, 1], [0, 1]]
WORKED_M_D2N = [[1, 1], [1, 1]]
WORKED_DYNAMIC = (1,)
WORKED_MU = (0.01, 0.01, 1.0, 1.0)
WORKED_EXTERNAL = {"l_light": 0.5, "l_adv": 2.0, "l_dis": 0.3, "l_seg": 0.7}


def _fx_loss_worked(root):
    inputs = root / "inputs"
    rng = SplitMix64(404)
    feats = [random_unit_features(rng, 2, 2, 2).astype(np.float32) for _ in range(8)]
    origin = geo.GpsFix(47.3769, 8.5417)
    fixes = {
        "d": origin,
        "d+": geo.from_local_enu(origin, (10.0, 0.0)),
        "d-": geo.from_local_enu(origin, (-10.0, 0.0)),
        "n": geo.from_local_enu(origin, (4.0, 0.5)),
    }
    sample = PairSample(
        *feats,
        p_day=np.array(WORKED_P_DAY, np.float32),
        p_night=np.array(WORKED_P_NIGHT, np.float32),
        gps=fixes,
    ).validate()
    write_bundle(sample, inputs)
    pseudo = inputs / "pseudo"
    write_tensor(np.array(WORKED_P_N2D, np.float32), pseudo / "p_n2d.glt")
    write_tensor(np.array(WORKED_P_D2N, np.float32), pseudo / "p_d2n.glt")
    write_tensor(np.array(WORKED_M_N2D, np.float32), pseudo / "m_n2d.glt")
    write_tensor(np.array(WORKED_M_D2N, np.float32), pseudo / "m_d2n.glt")

    f32 = lambda a: np.array(a, np.float32).astype(np.float64)  # noqa: E731
    dyn = set(WORKED_DYNAMIC)
    l_n2d = oracles.warping_loss_bf(f32(WORKED_P_N2D), f32(WORKED_P_DAY), WORKED_M_N2D, dyn)
    l_d2n = oracles.warping_loss_bf(f32(WORKED_P_NIGHT), f32(WORKED_P_D2N), WORKED_M_D2N, dyn)
    composed = oracles.objectives_bf(l_n2d, l_d2n, mu=WORKED_MU, **WORKED_EXTERNAL)
    subset = {"outputs": dict(l_n2d=l_n2d, l_d2n=l_d2n, composed=composed, **WORKED_EXTERNAL)}
    write_text(root / "expected" / "loss.json", canonical_json(subset))
    ext = ",".join(f"{k}={v!r}" for k, v in sorted(WORKED_EXTERNAL.items()))
    return {
        "command": [
            "loss", "{inputs}", "--pseudo", "{inputs}/pseudo", "--dynamic-classes",
            ",".join(map(str, WORKED_DYNAMIC)), "--mu", ",".join(map(repr, WORKED_MU)),
            "--external-losses", ext, "--out", "{out}",
        ],
        "coverage": [
            "one-hot-cross-entropy", "warping-loss-d2n", "dynamic-ignore-set",
            "warping-loss-n2d", "objective-day-target", "objective-night-target",
            "objective-source",
        ],
        "tolerance": "1e-6",
    }


def _fx_similarity(root):
    rng = SplitMix64(505)
    night = rng.normal(6 * 7 * 5).reshape(6, 7, 5).astype(np.float32)
    day = rng.normal(6 * 7 * 5).reshape(6, 7, 5).astype(np.float32)
    day[2, 3] = night[3, 2]
    write_tensor(night, root / "inputs" / "night.glt")
    write_tensor(day, root / "inputs" / "day.glt")
    mask = oracles.similarity_bf(night.astype(np.float64), (2, 3), day.astype(np.float64), 0.25)
    write_tensor(mask.astype(np.float32), root / "expected" / "mask.glt")
    return {
        "command": [
            "similarity", "--night", "{inputs}/night.glt", "--day", "{inputs}/day.glt",
            "--point", "2,3", "--threshold", "0.25", "--out", "{out}",
        ],
        "coverage": ["similarity-map"],
        "tolerance": "bit-exact",
    }


def _fx_noise_sweep(root):
    # No closed-form oracle exists for the sweep; this pins the pipeline output.
    (root / "inputs").mkdir(parents=True, exist_ok=True)
    write_text(root / "inputs" / "levels.txt", "0,2,5\n")
    rows, _ = run_noise_sweep(levels=(0, 2, 5), trials=2, seed=7)
    write_text(root / "expected" / "sweep.csv", rows_to_csv(rows))
    return {
        "command": ["noise-sweep", "--levels", "0,2,5", "--trials", "2", "--seed", "7",
                    "--out", "{out}"],
        "coverage": ["gps-noise-sweep", "scale-factor", "confidence-n2d", "confidence-d2n"],
        "tolerance": "1e-6",
    }


def _fx_gradcheck(root):
    (root / "inputs").mkdir(parents=True, exist_ok=True)
    write_text(root / "inputs" / "seed.txt", "0\n")
    write_text(root / "expected" / "gradcheck.json", canonical_json({"outputs": {"pass": True}}))
    return {
        "command": ["gradcheck", "--probes", "20", "--alpha", "1", "--seed", "0",
                    "--out", "{out}"],
        "coverage": ["soft-argmax", "warping-loss-d2n"],
        "tolerance": "1e-6",
    }


BUILDERS = {
    "match-fused": _fx_match,
    "pseudolabel-forward": _fx_pseudolabel_forward,
    "pseudolabel-backward": _fx_pseudolabel_backward,
    "loss-worked-2x2": _fx_loss_worked,
    "similarity-threshold": _fx_similarity,
    "noise-sweep-small": _fx_noise_sweep,
    "gradcheck-probes": _fx_gradcheck,
}


def regenerate_fixtures(directory=DEFAULT_FIXTURE_DIR):
    """Rebuild every fixture from scratch and write the manifest."""
    directory = Path(directory)
    entries = []
    for name, build in BUILDERS.items():
        root = directory / name
        if root.exists():
            for p in sorted(root.rglob("*"), reverse=True):
                p.unlink() if p.is_file() else p.rmdir()
        entry = build(root)
        exp = root / "expected"
        entry["expected"] = {
            p.relative_to(exp).as_posix(): file_digest(p) for p in sorted(exp.rglob("*"))
            if p.is_file()
        }
        entries.append(dict(name=name, inputs=f"{name}/inputs", **entry))
    missing = REQUIRED_COVERAGE - coverage_union({"fixtures": entries})
    if missing:
        raise RuntimeError(f"fixture coverage incomplete: {sorted(missing)}")
    manifest = {"fixtures": entries, "tolerance_classes": sorted(TOLERANCES)}
    write_text(directory / MANIFEST, canonical_json(manifest))
    return manifest


__all__ = [
    "DEFAULT_FIXTURE_DIR",
    "REQUIRED_COVERAGE",
    "FixtureResult",
    "coverage_union",
    "format_table",
    "load_manifest",
    "regenerate_fixtures",
    "verify_fixtures",
]
