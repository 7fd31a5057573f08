import numpy as np
import pytest

from conftest import orthonormal_features
from gpsflow import geo
from gpsflow.correspond import correlation, hard_argmax, match
from gpsflow.synth import (
    SplitMix64,
    brute_force_match,
    gen_route,
    gen_translated_scene,
)
from gpsflow.tensorio import write_bundle

MASK64 = (1 << 64) - 1


def splitmix_reference(seed, n):
    """Textbook sequential SplitMix64 on Python ints."""
    out, s = [], seed & MASK64
    for _ in range(n):
        s = (s + 0x9E3779B97F4A7C15) & MASK64
        z = s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        out.append(z ^ (z >> 31))
    return out


class TestSplitMix:
    @pytest.mark.parametrize("seed", [0, 1, 1234567, MASK64])
    def test_matches_sequential_reference(self, seed):
        rng = SplitMix64(seed)
        got = [int(v) for v in rng.u64(5)] + [int(v) for v in rng.u64(3)]
        assert got == splitmix_reference(seed, 8)

    def test_known_value(self):
        # first output for seed 0 of the published algorithm
        assert SplitMix64(0).next_u64() == 0xE220A8397B1DCDAF

    def test_uniform_and_normal(self):
        rng = SplitMix64(3)
        u = rng.uniform(20000)
        assert u.min() >= 0 and u.max() < 1 and abs(u.mean() - 0.5) < 0.01
        z = SplitMix64(4).normal(20000)
        assert abs(z.mean()) < 0.03 and abs(z.std() - 1) < 0.03

    def test_integers(self):
        v = SplitMix64(5).integers(7, 1000)
        assert v.min() == 0 and v.max() == 6


class TestTranslatedScene:
    def test_zero_shift(self):
        s = gen_translated_scene(6, 6, 4, 3, (0, 0), 1.0, seed=0)
        assert np.array_equal(s.sample.day_local, s.sample.night_local)
        assert np.array_equal(s.sample.day_local, s.sample.ref_plus_local)
        assert np.array_equal(s.gt_field[..., 0], np.tile(np.arange(6), (6, 1)))

    def test_shift_and_reference(self):
        s = gen_translated_scene(16, 16, 8, 5, (3, 2), 0.5, seed=1)
        assert s.ref_shift == (6, 4)
        d, n = s.sample.day_local, s.sample.night_local
        assert np.array_equal(n[2:, 3:], d[:-2, :-3])
        assert np.array_equal(s.sample.ref_plus_local[4:, 6:], d[:-4, :-6])
        assert np.array_equal(s.sample.ref_minus_local[:-4, :-6], d[4:, 6:])
        g = s.sample.gps
        assert geo.scale_factor(g["d"], g["d+"], g["n"]) == pytest.approx(0.5, abs=1e-6)
        mid = geo.haversine(g["d"], g["n"])
        assert mid == pytest.approx(0.5 * geo.haversine(g["d"], g["d+"]), abs=1e-6)

    def test_deterministic(self, tmp_path):
        a = gen_translated_scene(8, 8, 4, 3, (1, -2), 0.5, seed=42)
        b = gen_translated_scene(8, 8, 4, 3, (1, -2), 0.5, seed=42)
        write_bundle(a.sample, tmp_path / "a")
        write_bundle(b.sample, tmp_path / "b")
        for p in sorted((tmp_path / "a").iterdir()):
            assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()

    @pytest.mark.parametrize("shift,lam", [((8, 0), 1.0), ((0, -8), 1.0), ((3, 0), 0.7),
                                           ((1, 0), 0.0)])
    def test_rejects(self, shift, lam):
        with pytest.raises(ValueError):
            gen_translated_scene(16, 16, 4, 3, shift, lam, seed=0)

    def test_flow_recovery_on_interior(self):
        s = gen_translated_scene(16, 16, 8, 5, (3, 2), 0.5, seed=2)
        smp = s.sample
        f = match(smp.day_local, smp.night_local, smp.day_global, smp.night_global, alpha=1e4)
        err = np.linalg.norm(f - s.gt_field, axis=2)[s.gt_valid]
        assert err.mean() < 0.05


class TestBruteForce:
    def test_identity(self):
        f = orthonormal_features(3, 4)
        out = brute_force_match(f, f)
        assert np.array_equal(out[..., 0], np.tile(np.arange(4), (3, 1)))
        assert np.array_equal(out[..., 1], np.tile(np.arange(3)[:, None], (1, 4)))

    def test_translated_orthonormal(self):
        world = np.eye(64, dtype=np.float32).reshape(8, 8, 64)
        src, tgt = world[:6, :6], world[1:7, 2:8]
        out = brute_force_match(src, tgt)
        # src(p) == tgt(p - (2, 1)) for p inside the overlap
        assert np.array_equal(out[1:, 2:, 0], np.tile(np.arange(4), (5, 1)))
        assert np.array_equal(out[1:, 2:, 1], np.tile(np.arange(5)[:, None], (1, 4)))

    def test_agrees_with_correlation_argmax(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(6, 6, 4)), rng.normal(size=(6, 6, 4))
        assert np.array_equal(brute_force_match(a, b), hard_argmax(correlation(a, b)))


class TestRoute:
    def test_spacing_without_jitter(self):
        tr = gen_route(6, 10.0, 37.0, 0.0, seed=0)
        fixes = [r.fix for r in tr]
        for a, b in zip(fixes, fixes[1:]):
            assert geo.haversine(a, b) == pytest.approx(10.0, abs=1e-3)

    def test_total_length(self):
        fixes = [r.fix for r in gen_route(3, 10.0, 90.0, 0.0, seed=0)]
        total = sum(geo.haversine(a, b) for a, b in zip(fixes, fixes[1:]))
        assert total == pytest.approx(20.0, abs=2e-3)

    def test_deterministic_and_jittered(self):
        a = gen_route(10, 5.0, 0.0, 0.5, seed=3)
        b = gen_route(10, 5.0, 0.0, 0.5, seed=3)
        assert a.records == b.records
        straight = gen_route(10, 5.0, 0.0, 0.0, seed=3)
        offs = [geo.haversine(x.fix, y.fix) for x, y in zip(a, straight)]
        assert max(offs) > 0 and max(offs) < 5 * 0.5 + 1

    def test_rejects(self):
        with pytest.raises(ValueError):
            gen_route(2, 1.0, 0, 0, seed=0)
        with pytest.raises(ValueError):
            gen_route(3, 0.0, 0, 0, seed=0)
