import json
import math

import numpy as np
import pytest

from conftest import one_hot_map, orthonormal_features
from gpsflow import geo, oracles
from gpsflow.report import canonical_json
from gpsflow.synth import SplitMix64, gen_translated_scene
from gpsflow.tensorio import read_gps_csv, read_tensor, write_bundle, write_tensor


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def bundle(tmp_path, run_cli):
    code, _, err = run_cli("synth", "--shift", "2,1", "--lambda", "0.5", "--seed", "3",
                           "--size", "12,12", "--lateral", "0.2", "--out", tmp_path / "b")
    assert code == 0, err
    return tmp_path / "b"


def identity_bundle(path):
    scene = gen_translated_scene(8, 8, 6, 4, (0, 0), 1.0, seed=11)
    s = scene.sample
    s.gps["n"] = s.gps["d"]
    s.p_day = s.p_night = one_hot_map(scene.labels_day, 4).astype(np.float32)
    write_bundle(s, path)
    return path


class TestSynth:
    def test_deterministic_bytes(self, tmp_path, run_cli):
        for name in ("a", "b"):
            assert run_cli("synth", "--shift", "1,2", "--seed", "9", "--out", tmp_path / name)[0] == 0
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_lambda_roundtrip(self, tmp_path, run_cli):
        run_cli("synth", "--shift", "2,2", "--lambda", "0.25", "--seed", "1",
                "--size", "20,20", "--out", tmp_path)
        tr = read_gps_csv(tmp_path / "gps.csv")
        lam = geo.scale_factor(tr.fix("d"), tr.fix("d+"), tr.fix("n"))
        assert lam == pytest.approx(0.25, abs=1e-6)

    def test_oversize_shift(self, tmp_path, run_cli):
        code, _, err = run_cli("synth", "--shift", "9,0", "--out", tmp_path)
        assert code == 2 and "too large" in err


class TestMatch:
    def test_bundle(self, bundle, tmp_path, run_cli):
        code, out, _ = run_cli("match", "--bundle", bundle, "--out", tmp_path / "m")
        assert code == 0
        assert (tmp_path / "m" / "f_d2n.glt").exists() and (tmp_path / "m" / "f_n2d.glt").exists()
        report = json.loads(out)
        assert report["parameters"]["alpha"] == 1e4
        assert report["outputs"]["mean_endpoint_error_interior"] < 0.05

    def test_separate_tensors(self, bundle, tmp_path, run_cli):
        code, _, _ = run_cli("match", "--day", bundle / "day_local.glt",
                             "--night", bundle / "night_local.glt", "--alpha", "20",
                             "--out", tmp_path / "m")
        assert code == 0
        assert read_tensor(tmp_path / "m" / "f_d2n.glt").shape == (12, 12, 2)

    def test_corrupt_magic(self, bundle, tmp_path, run_cli):
        raw = bytearray((bundle / "day_local.glt").read_bytes())
        raw[:4] = b"XXXX"
        (bundle / "day_local.glt").write_bytes(bytes(raw))
        code, _, err = run_cli("match", "--bundle", bundle, "--out", tmp_path / "m")
        assert code == 2 and "magic" in err

    def test_channel_mismatch(self, tmp_path, run_cli):
        write_tensor(np.ones((3, 3, 4)), tmp_path / "a.glt")
        write_tensor(np.ones((3, 3, 5)), tmp_path / "b.glt")
        code, _, err = run_cli("match", "--day", tmp_path / "a.glt", "--night", tmp_path / "b.glt",
                               "--out", tmp_path / "m")
        assert code == 3 and "channel" in err

    def test_missing_input(self, tmp_path, run_cli):
        code, _, _ = run_cli("match", "--day", tmp_path / "nope.glt", "--night",
                             tmp_path / "nope.glt", "--out", tmp_path / "m")
        assert code == 2


class TestPseudolabel:
    def test_outputs(self, bundle, tmp_path, run_cli):
        code, out, _ = run_cli("pseudolabel", bundle, "--out", tmp_path / "p")
        assert code == 0
        for name in ("p_n2d", "p_d2n", "p_n2d_prime", "p_d2n_prime", "m_n2d", "m_d2n"):
            assert (tmp_path / "p" / f"{name}.glt").exists()
        rep = json.loads(out)["outputs"]
        assert rep["reference"] == "forward"
        assert rep["lambda"] == pytest.approx(0.5, abs=1e-6)

    def test_identity_bundle_has_full_confidence(self, tmp_path, run_cli):
        b = identity_bundle(tmp_path / "id")
        code, out, _ = run_cli("pseudolabel", b, "--out", tmp_path / "p")
        rep = json.loads(out)["outputs"]
        assert code == 0
        assert rep["zero_fraction_n2d"] == 0.0 and rep["zero_fraction_d2n"] == 0.0

    def test_lambda_mismatch_raises_zero_fraction(self, tmp_path, run_cli):
        scene = gen_translated_scene(16, 16, 8, 5, (2, 0), 0.5, seed=4, lateral_m=0.2)
        write_bundle(scene.sample, tmp_path / "ok")
        g = scene.sample.gps
        v = geo.to_local_enu(g["d"], g["d+"])
        scene.sample.gps["n"] = geo.from_local_enu(g["d"], (1.5 * v.east_m, 1.5 * v.north_m))
        write_bundle(scene.sample, tmp_path / "bad")
        zf = {}
        for name in ("ok", "bad"):
            code, out, _ = run_cli("pseudolabel", tmp_path / name, "--out", tmp_path / f"o{name}")
            assert code == 0
            o = json.loads(out)["outputs"]
            zf[name] = o["zero_fraction_n2d"] + o["zero_fraction_d2n"]
        assert zf["bad"] > 0 and zf["bad"] > zf["ok"]

    def test_missing_frame_named(self, bundle, tmp_path, run_cli):
        lines = (bundle / "gps.csv").read_text().splitlines(keepends=True)
        (bundle / "gps.csv").write_text("".join(l for l in lines if not l.startswith("d-,")))
        code, _, err = run_cli("pseudolabel", bundle, "--out", tmp_path / "p")
        assert code == 2 and "d-" in err

    def test_degenerate_geometry(self, bundle, tmp_path, run_cli):
        text = (bundle / "gps.csv").read_text().splitlines()
        d_row = next(l for l in text if l.startswith("d,"))
        fixed = [("d+," + d_row.split(",", 1)[1]) if l.startswith("d+,") else l for l in text]
        fixed = [("d-," + d_row.split(",", 1)[1]) if l.startswith("d-,") else l for l in fixed]
        (bundle / "gps.csv").write_text("\n".join(fixed) + "\n")
        code, _, err = run_cli("pseudolabel", bundle, "--out", tmp_path / "p")
        assert code == 4 and "geometry" in err


class TestLoss:
    def test_perfect_agreement(self, tmp_path, run_cli):
        b = identity_bundle(tmp_path / "id")
        run_cli("pseudolabel", b, "--out", tmp_path / "p")
        code, out, _ = run_cli("loss", b, "--pseudo", tmp_path / "p")
        o = json.loads(out)["outputs"]
        assert code == 0 and o["l_n2d"] == 0 and o["l_d2n"] == 0

    def test_zero_weights(self, bundle, tmp_path, run_cli):
        run_cli("pseudolabel", bundle, "--out", tmp_path / "p")
        code, out, _ = run_cli("loss", bundle, "--pseudo", tmp_path / "p", "--mu", "0,0,0,0",
                               "--external-losses", "l_light=3,l_adv=2,l_dis=1")
        o = json.loads(out)["outputs"]
        assert code == 0
        assert o["composed"]["L_Td"] == 0 and o["composed"]["L_S"] == 0
        assert o["composed"]["L_Tn"] == pytest.approx(o["l_n2d"] + o["l_d2n"], abs=1e-9)
        assert o["l_n2d"] > 0

    def test_worked_two_by_two(self, tmp_path, run_cli):
        from gpsflow import fixtures as fx

        entry = fx._fx_loss_worked(tmp_path)
        argv = [a.format(inputs=str(tmp_path / "inputs"), out=str(tmp_path / "o"))
                for a in entry["command"]]
        code, out, _ = run_cli(*argv)
        o = json.loads(out)["outputs"]
        # by hand: n2d keeps (0,0) at 0.5 and (0,1) at 0.6, (1,0) is masked and (1,1) is
        # ignored (dynamic class 1 vs supervisor class 0); d2n keeps (0,0) and (1,0), both 0.6,
        # while (0,1) and (1,1) are ignored
        l_n2d = -(math.log(0.5) + math.log(0.6)) / 12
        l_d2n = -2 * math.log(0.6) / 12
        assert code == 0
        assert o["l_n2d"] == pytest.approx(l_n2d, abs=1e-6)
        assert o["l_d2n"] == pytest.approx(l_d2n, abs=1e-6)
        assert o["composed"]["L_Tn"] == pytest.approx(0.005 + l_n2d + l_d2n + 0.02, abs=1e-6)
        assert o["composed"]["L_S"] == pytest.approx(0.005 + 0.7 + 0.3, abs=1e-9)

    def test_bad_mu(self, bundle, tmp_path, run_cli):
        code, _, _ = run_cli("loss", bundle, "--pseudo", tmp_path, "--mu", "1,2")
        assert code == 2

    def test_missing_pseudo(self, bundle, tmp_path, run_cli):
        code, _, err = run_cli("loss", bundle, "--pseudo", tmp_path / "none")
        assert code == 2 and "missing" in err


class TestNoiseSweep:
    def test_same_seed_same_bytes(self, tmp_path, run_cli):
        for name in ("a", "b"):
            code, _, _ = run_cli("noise-sweep", "--trials", "2", "--seed", "5",
                                 "--out", tmp_path / name)
            assert code == 0
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
        rows = (tmp_path / "a" / "sweep.csv").read_text().splitlines()
        assert rows[0] == "level_m,trial,zero_fraction" and len(rows) == 7

    def test_level_zero_small(self, tmp_path, run_cli):
        code, out, _ = run_cli("noise-sweep", "--levels", "0", "--trials", "3", "--out", tmp_path)
        assert code == 0
        assert json.loads(out)["outputs"]["mean_zero_fraction"][0] < 0.1

    def test_negative_level(self, tmp_path, run_cli):
        assert run_cli("noise-sweep", "--levels", "0,-1", "--out", tmp_path)[0] == 2


class TestGradcheck:
    def test_defaults_pass(self, run_cli):
        code, out, _ = run_cli("gradcheck")
        rep = json.loads(out)["outputs"]
        assert code == 0 and rep["pass"] is True
        assert rep["flow_wrt_corr"]["entries_checked"] == 200

    def test_tight_tolerance_fails(self, run_cli):
        code, out, err = run_cli("gradcheck", "--tolerance", "1e-12")
        assert code == 5 and json.loads(out)["outputs"]["pass"] is False
        assert "failed" in err

    def test_alpha_zero(self, run_cli):
        code, out, _ = run_cli("gradcheck", "--alpha", "0")
        rep = json.loads(out)["outputs"]["flow_wrt_corr"]
        assert code == 0 and rep["max_rel_err"] == 0
        assert all(e["analytic"] == 0 for e in rep["entries"])


class TestSimilarity:
    def test_orthonormal_peak(self, tmp_path, run_cli):
        f = orthonormal_features(4, 5)
        write_tensor(f, tmp_path / "f.glt")
        code, out, _ = run_cli("similarity", "--night", tmp_path / "f.glt", "--day",
                               tmp_path / "f.glt", "--point", "3,1", "--out", tmp_path / "o")
        mask = read_tensor(tmp_path / "o" / "mask.glt")
        assert code == 0 and mask.sum() == 1 and mask[1, 3] == 1
        assert json.loads(out)["outputs"]["count"] == 1

    def test_threshold_one(self, tmp_path, run_cli):
        write_tensor(np.random.default_rng(0).normal(size=(4, 4, 3)), tmp_path / "f.glt")
        run_cli("similarity", "--night", tmp_path / "f.glt", "--day", tmp_path / "f.glt",
                "--point", "0,0", "--threshold", "1.0", "--out", tmp_path / "o")
        assert read_tensor(tmp_path / "o" / "mask.glt").sum() == 0

    def test_random_matches_oracle(self, tmp_path, run_cli):
        rng = SplitMix64(77)
        night = rng.normal(8 * 8 * 4).reshape(8, 8, 4).astype(np.float32)
        day = rng.normal(8 * 8 * 4).reshape(8, 8, 4).astype(np.float32)
        write_tensor(night, tmp_path / "n.glt")
        write_tensor(day, tmp_path / "d.glt")
        run_cli("similarity", "--night", tmp_path / "n.glt", "--day", tmp_path / "d.glt",
                "--point", "5,2", "--out", tmp_path / "o")
        expected = oracles.similarity_bf(night, (5, 2), day, 0.25)
        assert np.array_equal(read_tensor(tmp_path / "o" / "mask.glt"), expected)

    def test_point_outside(self, tmp_path, run_cli):
        write_tensor(np.ones((2, 2, 2)), tmp_path / "f.glt")
        code, _, _ = run_cli("similarity", "--night", tmp_path / "f.glt", "--day",
                             tmp_path / "f.glt", "--point", "5,5", "--out", tmp_path)
        assert code == 2

    def test_rank_checked(self, tmp_path, run_cli):
        write_tensor(np.ones((2, 2)), tmp_path / "f.glt")
        code, _, _ = run_cli("similarity", "--night", tmp_path / "f.glt", "--day",
                             tmp_path / "f.glt", "--point", "0,0", "--out", tmp_path)
        assert code == 3


class TestReports:
    def test_canonical_form(self):
        text = canonical_json({"b": 1 / 3, "a": [np.float32(2.5), True], "c": None})
        assert text == ('{\n  "a": [\n    2.5,\n    true\n  ],\n  "b": 0.333333333,\n'
                        '  "c": null\n}\n')

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            canonical_json({"x": float("nan")})

    def test_usage_error_is_parse_exit(self, run_cli):
        assert run_cli("match")[0] == 2
        assert run_cli("bogus")[0] == 2
        assert run_cli("synth", "--shift", "1")[0] == 2
