"""Command-line interface.

Exit codes: 0 success, 1 fixture verification failure, 2 parse/input error,
3 shape error, 4 degenerate GPS geometry, 5 gradient check failure.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .correspond import DEFAULT_ALPHA, DEFAULT_SIMILARITY_THRESHOLD
from .correspond import match as match_fields
from .correspond import similarity_map
from .errors import GeometryError, ParseError, ShapeError
from .estimators import PseudoLabeler
from .experiments import DEFAULT_LEVELS, rows_to_csv, run_noise_sweep
from .gradcheck import DEFAULT_TOL, random_suite
from .losses import DEFAULT_MU, IGNORE_INDEX, ClassConfig, compose_objectives, seg_loss
from .report import canonical_json, run_report
from .synth import gen_translated_scene
from .tensorio import BUNDLE_FILES, GPS_FILE, read_bundle, read_tensor, write_tensor, write_text

EXIT_OK = 0
EXIT_FIXTURES = 1
EXIT_PARSE = 2
EXIT_SHAPE = 3
EXIT_GEOMETRY = 4
EXIT_GRADCHECK = 5


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def _floats(text, n=None):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} values, got {len(vals)}")
    return vals


def _ints(text, n=None):
    vals = _floats(text, n)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def _pair_ints(text):
    return _ints(text, 2)


def _mu(text):
    return _floats(text, 4)


def _externals(text):
    out = {}
    for item in text.split(","):
        if not item.strip():
            continue
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or key not in ("l_light", "l_adv", "l_dis", "l_seg"):
            raise argparse.ArgumentTypeError(
                f"expected l_light=..,l_adv=..,l_dis=..,l_seg=.., got {item!r}"
            )
        try:
            out[key] = float(val)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad number in {item!r}")
    return out


def _emit(report, out_dir, name="report.json"):
    text = canonical_json(report)
    if out_dir is not None:
        write_text(Path(out_dir) / name, text)
    sys.stdout.write(text)


def _bundle_inputs(bundle):
    bundle = Path(bundle)
    files = {k: bundle / f for k, f in BUNDLE_FILES.items()}
    files["gps"] = bundle / GPS_FILE
    return files


# -- commands ----------------------------------------------------------------


def cmd_synth(args):
    if args.preset != "translated":
        raise ValueError(f"unknown preset {args.preset!r}")
    h, w = args.size
    scene = gen_translated_scene(
        h, w, args.dim, args.classes, tuple(args.shift), args.lam, args.seed,
        ref_distance_m=args.ref_distance, lateral_m=args.lateral,
    )
    out = Path(args.out)
    scene.write(out)
    report = run_report(
        "synth",
        parameters={
            "preset": args.preset, "shift": args.shift, "lambda": args.lam, "seed": args.seed,
            "size": args.size, "dim": args.dim, "classes": args.classes,
            "ref_distance_m": args.ref_distance, "lateral_m": args.lateral,
        },
        outputs={"files": sorted(p.name for p in out.iterdir() if p.name != "report.json")},
    )
    _emit(report, out)
    return EXIT_OK


def cmd_match(args):
    if args.bundle:
        b = Path(args.bundle)
        paths = {
            "day_local": b / BUNDLE_FILES["day_local"],
            "night_local": b / BUNDLE_FILES["night_local"],
            "day_global": b / BUNDLE_FILES["day_global"],
            "night_global": b / BUNDLE_FILES["night_global"],
        }
    else:
        if not (args.day and args.night):
            raise ParseError("match needs --bundle or both --day and --night")
        paths = {"day_local": Path(args.day), "night_local": Path(args.night)}
        if args.day_global or args.night_global:
            if not (args.day_global and args.night_global):
                raise ParseError("--day-global and --night-global go together")
            paths["day_global"] = Path(args.day_global)
            paths["night_global"] = Path(args.night_global)
    for p in paths.values():
        if not p.exists():
            raise ParseError(f"no such file: {p}")
    t = {k: read_tensor(p) for k, p in paths.items()}
    dl, nl = t["day_local"], t["night_local"]
    dg, ng = t.get("day_global"), t.get("night_global")
    f_d2n = match_fields(dl, nl, dg, ng, alpha=args.alpha)
    f_n2d = match_fields(nl, dl, ng, dg, alpha=args.alpha)
    out = Path(args.out)
    write_tensor(f_d2n, out / "f_d2n.glt")
    write_tensor(f_n2d, out / "f_n2d.glt")
    outputs = {"files": ["f_d2n.glt", "f_n2d.glt"]}
    if args.bundle and (Path(args.bundle) / "gt_field.glt").exists():
        gt = read_tensor(Path(args.bundle) / "gt_field.glt")
        valid = read_tensor(Path(args.bundle) / "gt_valid.glt") > 0.5
        err = np.linalg.norm(f_d2n.astype(np.float64) - gt, axis=2)[valid]
        outputs["mean_endpoint_error_interior"] = float(err.mean()) if err.size else 0.0
    report = run_report(
        "match", inputs=paths, parameters={"alpha": args.alpha, "fused": dg is not None},
        outputs=outputs,
    )
    _emit(report, out)
    return EXIT_OK


def _class_config(num_classes, dynamic):
    return ClassConfig(num_classes, None if dynamic is None else frozenset(dynamic))


def cmd_pseudolabel(args):
    sample = read_bundle(args.bundle)
    labeler = PseudoLabeler(
        alpha=args.alpha, num_classes=sample.p_day.shape[2], dynamic_classes=args.dynamic_classes
    ).fit()
    res = labeler.transform(sample)
    pl = res["pseudolabels"]
    out = Path(args.out)
    arrays = {
        "p_n2d": pl.p_n2d,
        "p_d2n": pl.p_d2n,
        "p_n2d_prime": pl.p_n2d_prime,
        "p_d2n_prime": pl.p_d2n_prime,
        "m_n2d": res["m_n2d"],
        "m_d2n": res["m_d2n"],
        "oob_n2d": pl.oob_n2d | pl.oob_n2d_prime,
        "oob_d2n": pl.oob_d2n | pl.oob_d2n_prime,
    }
    for name, arr in arrays.items():
        write_tensor(np.asarray(arr, dtype=np.float32), out / f"{name}.glt")
    report = run_report(
        "pseudolabel",
        inputs=_bundle_inputs(args.bundle),
        parameters={
            "alpha": args.alpha,
            "dynamic_classes": sorted(labeler.class_config_.dynamic_classes),
            "num_classes": labeler.class_config_.num_classes,
        },
        outputs={
            "files": sorted(f"{n}.glt" for n in arrays),
            "reference": pl.reference.value,
            "lambda": pl.lam,
            "zero_fraction_n2d": res["zero_fraction_n2d"],
            "zero_fraction_d2n": res["zero_fraction_d2n"],
            "oob_fraction_n2d": float(np.mean(arrays["oob_n2d"])),
            "oob_fraction_d2n": float(np.mean(arrays["oob_d2n"])),
        },
    )
    _emit(report, out)
    return EXIT_OK


def cmd_loss(args):
    from .losses import warping_loss

    sample = read_bundle(args.bundle)
    pdir = Path(args.pseudo)
    needed = ["p_n2d", "p_d2n", "m_n2d", "m_d2n"]
    paths = {n: pdir / f"{n}.glt" for n in needed}
    for p in paths.values():
        if not p.exists():
            raise ParseError(f"pseudo-label directory missing {p.name}")
    t = {n: read_tensor(p) for n, p in paths.items()}
    cfg = _class_config(sample.p_day.shape[2], args.dynamic_classes)
    l_n2d = warping_loss(t["p_n2d"], sample.p_day, t["m_n2d"] > 0.5, cfg)
    l_d2n = warping_loss(sample.p_night, t["p_d2n"], t["m_d2n"] > 0.5, cfg)
    ext = dict(args.external_losses or {})
    inputs = dict(_bundle_inputs(args.bundle), **{f"pseudo_{k}": v for k, v in paths.items()})
    src_probs, src_labels = Path(args.bundle) / "source_probs.glt", Path(args.bundle) / "source_labels.glt"
    seg_source = "external" if "l_seg" in ext else "none"
    if "l_seg" not in ext and src_probs.exists() and src_labels.exists():
        labels = read_tensor(src_labels)
        ext["l_seg"] = seg_loss(read_tensor(src_probs), labels, ignore_index=IGNORE_INDEX)
        inputs.update(source_probs=src_probs, source_labels=src_labels)
        seg_source = "bundle"
    mu = tuple(args.mu) if args.mu else DEFAULT_MU
    breakdown = compose_objectives(l_n2d=l_n2d, l_d2n=l_d2n, mu=mu, **ext)
    report = run_report(
        "loss",
        inputs=inputs,
        parameters={"mu": list(mu), "dynamic_classes": sorted(cfg.dynamic_classes),
                    "num_classes": cfg.num_classes, "l_seg_source": seg_source},
        outputs=breakdown.to_dict(),
    )
    _emit(report, Path(args.out) if args.out else None, name="loss.json")
    return EXIT_OK


def cmd_noise_sweep(args):
    rows, summary = run_noise_sweep(
        levels=args.levels, trials=args.trials, seed=args.seed, alpha=args.alpha
    )
    out = Path(args.out)
    write_text(out / "sweep.csv", rows_to_csv(rows))
    report = run_report("noise-sweep", parameters={
        "levels_m": args.levels, "trials": args.trials, "seed": args.seed, "alpha": args.alpha,
    }, outputs=summary)
    _emit(report, out, name="summary.json")
    return EXIT_OK


def cmd_gradcheck(args):
    if args.probes < 1:
        raise ValueError("--probes must be >= 1")
    flow, loss = random_suite(args.probes, args.alpha, args.seed, tol=args.tolerance)
    passed = flow.passed and loss.passed
    report = run_report(
        "gradcheck",
        parameters={"probes": args.probes, "alpha": args.alpha, "seed": args.seed,
                    "tolerance": args.tolerance, "step": 1e-5},
        outputs={"pass": passed, "flow_wrt_corr": flow.to_dict(), "loss_wrt_target": loss.to_dict()},
    )
    _emit(report, Path(args.out) if args.out else None, name="gradcheck.json")
    if not passed:
        print(
            f"gradient check failed: max rel err flow={flow.max_rel_err:.3g} "
            f"loss={loss.max_rel_err:.3g} tolerance={args.tolerance:g}",
            file=sys.stderr,
        )
        return EXIT_GRADCHECK
    return EXIT_OK


def cmd_similarity(args):
    for p in (args.night, args.day):
        if not Path(p).exists():
            raise ParseError(f"no such file: {p}")
    night, day = read_tensor(args.night), read_tensor(args.day)
    if night.ndim != 3 or day.ndim != 3:
        raise ShapeError("similarity expects (h, w, d) feature tensors")
    x, y = args.point
    mask = similarity_map(night, (x, y), day, threshold=args.threshold)
    out = Path(args.out)
    write_tensor(mask.astype(np.float32), out / "mask.glt")
    report = run_report(
        "similarity",
        inputs={"night": args.night, "day": args.day},
        parameters={"point": [x, y], "threshold": args.threshold},
        outputs={"files": ["mask.glt"], "count": int(mask.sum()), "coverage": float(mask.mean())},
    )
    _emit(report, out)
    return EXIT_OK


def cmd_verify_fixtures(args):
    from .fixtures import format_table, verify_fixtures

    results = verify_fixtures(args.dir)
    sys.stdout.write(format_table(results))
    return EXIT_OK if results and all(r.passed for r in results) else EXIT_FIXTURES


def cmd_regen_fixtures(args):
    from .fixtures import regenerate_fixtures

    manifest = regenerate_fixtures(args.dir)
    sys.stdout.write(f"regenerated {len(manifest['fixtures'])} fixtures in {args.dir}\n")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser():
    from .fixtures import DEFAULT_FIXTURE_DIR

    p = _ArgumentParser(prog="gpsflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gpsflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    s = sub.add_parser("synth", help="write a synthetic pair bundle")
    s.add_argument("--preset", default="translated")
    s.add_argument("--shift", type=_pair_ints, required=True, help="dx,dy in pixels")
    s.add_argument("--lambda", dest="lam", type=float, default=0.5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", type=_pair_ints, default=[16, 16], help="h,w")
    s.add_argument("--dim", type=int, default=8)
    s.add_argument("--classes", type=int, default=5)
    s.add_argument("--ref-distance", type=float, default=10.0, help="meters from d to d+")
    s.add_argument("--lateral", type=float, default=0.0, help="night fix cross-track offset (m)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("match", help="dense soft-argmax correspondence between day and night")
    s.add_argument("--bundle")
    s.add_argument("--day")
    s.add_argument("--night")
    s.add_argument("--day-global")
    s.add_argument("--night-global")
    s.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_match)

    s = sub.add_parser("pseudolabel", help="pseudo-labels and confidence maps for a bundle")
    s.add_argument("bundle")
    s.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    s.add_argument("--dynamic-classes", type=_ints, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pseudolabel)

    s = sub.add_parser("loss", help="warping losses and composed objectives")
    s.add_argument("bundle")
    s.add_argument("--pseudo", required=True, help="output directory of the pseudolabel command")
    s.add_argument("--mu", type=_mu, default=None, help="mu1,mu2,mu3,mu4")
    s.add_argument("--external-losses", type=_externals, default=None,
                   help="l_light=..,l_adv=..,l_dis=..[,l_seg=..]")
    s.add_argument("--dynamic-classes", type=_ints, default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_loss)

    s = sub.add_parser("noise-sweep", help="confidence zero fraction versus injected GPS error")
    s.add_argument("--levels", type=_floats, default=list(DEFAULT_LEVELS))
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_noise_sweep)

    s = sub.add_parser("gradcheck", help="finite-difference check of the analytic gradients")
    s.add_argument("--probes", type=int, default=100)
    s.add_argument("--alpha", type=float, default=10.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tolerance", type=float, default=DEFAULT_TOL)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("similarity", help="thresholded cosine-similarity map for one night pixel")
    s.add_argument("--night", required=True)
    s.add_argument("--day", required=True)
    s.add_argument("--point", type=_pair_ints, required=True, help="x,y")
    s.add_argument("--threshold", type=float, default=DEFAULT_SIMILARITY_THRESHOLD)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_similarity)

    s = sub.add_parser("verify-fixtures", help="re-run golden fixtures and compare")
    s.add_argument("--dir", default=str(DEFAULT_FIXTURE_DIR))
    s.set_defaults(func=cmd_verify_fixtures)

    s = sub.add_parser("regen-fixtures", help="rebuild golden fixtures (re-runs the oracles)")
    s.add_argument("--dir", default=str(DEFAULT_FIXTURE_DIR))
    s.set_defaults(func=cmd_regen_fixtures)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ShapeError as exc:
        print(f"shape error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except GeometryError as exc:
        print(f"geometry error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except (ParseError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
