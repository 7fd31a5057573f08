import numpy as np
import pytest

from conftest import random_segmap
from gpsflow.correspond import grid_coords
from gpsflow.errors import ProbeError
from gpsflow.gradcheck import (
    flow_jacobian_row,
    grad_flow_wrt_corr,
    grad_loss_wrt_target,
    rel_err,
)
from gpsflow.losses import ClassConfig, ignore_mask


def test_rel_err_floor():
    assert rel_err(0.0, 0.0) == 0.0
    assert rel_err(1e-9, 0.0) == pytest.approx(1e-9 / 1e-8)


class TestFlowGradient:
    def test_uniform_closed_form(self):
        c = np.full((2, 2, 3, 3), 0.2)
        alpha = 5.0
        q = 7
        rep = grad_flow_wrt_corr(c, alpha, [(0, q)])
        centroid = np.array([1.0, 1.0])
        expected = alpha / 9 * (grid_coords(3, 3)[q] - centroid)
        for e, x in zip(rep.entries, expected):
            assert e.analytic == pytest.approx(x, abs=1e-12)
            assert abs(e.numeric - x) < 1e-6

    def test_alpha_zero(self):
        rng = np.random.default_rng(0)
        c = rng.uniform(-1, 1, (3, 3, 3, 3))
        rep = grad_flow_wrt_corr(c, 0.0, [(p, q) for p in range(9) for q in range(9)])
        assert all(e.analytic == 0 and e.numeric == 0 for e in rep.entries)
        assert rep.passed

    @pytest.mark.parametrize("alpha", [0.1, 1.0, 10.0, 100.0])
    def test_random_probes(self, alpha):
        rng = np.random.default_rng(1)
        c = rng.uniform(-1, 1, (6, 6, 6, 6))
        probes = list(zip(rng.integers(0, 36, 100), rng.integers(0, 36, 100)))
        rep = grad_flow_wrt_corr(c, alpha, probes)
        assert len(rep.entries) == 200
        assert rep.passed, rep.max_rel_err

    def test_step_sensitivity(self):
        rng = np.random.default_rng(2)
        c = rng.uniform(-1, 1, (6, 6, 6, 6))
        probes = list(zip(rng.integers(0, 36, 100), rng.integers(0, 36, 100)))
        for alpha in (0.1, 1.0):
            a = grad_flow_wrt_corr(c, alpha, probes, step=1e-5)
            b = grad_flow_wrt_corr(c, alpha, probes, step=5e-6)
            worst = max(rel_err(x.numeric, y.numeric) for x, y in zip(a.entries, b.entries))
            assert worst < 1e-6

    def test_jacobian_conserves_probability(self):
        rng = np.random.default_rng(3)
        row = rng.uniform(-1, 1, 20)
        coords = np.ones((20, 2)) * 3.5
        assert np.allclose(flow_jacobian_row(row, 7.0, coords), 0)
        jac = flow_jacobian_row(row, 7.0, grid_coords(4, 5))
        assert np.allclose(jac.sum(axis=0), 0, atol=1e-12)

    def test_probe_out_of_range(self):
        with pytest.raises(ProbeError):
            grad_flow_wrt_corr(np.zeros((2, 2, 2, 2)), 1.0, [(4, 0)])

    def test_tight_tolerance_fails(self):
        rng = np.random.default_rng(4)
        c = rng.uniform(-1, 1, (4, 4, 4, 4))
        rep = grad_flow_wrt_corr(c, 10.0, [(1, 2), (3, 5)], tol=1e-14)
        assert not rep.passed
        assert rep.to_dict()["pass"] is False


class TestLossGradient:
    def test_single_pixel_two_classes(self):
        cfg = ClassConfig(2, frozenset())
        t = np.array([[[0.3, 0.7]]])
        s = np.array([[[0.1, 0.9]]])
        rep = grad_loss_wrt_target(t, s, np.ones((1, 1), bool), cfg, [(0, 0, 1), (0, 0, 0)])
        assert rep.entries[0].analytic == -0.5
        assert rep.entries[0].numeric == pytest.approx(-0.5, rel=1e-8)
        assert rep.entries[1].analytic == 0.0 and abs(rep.entries[1].numeric) < 1e-12
        assert rep.passed

    def test_masked_pixel_has_zero_gradient(self):
        rng = np.random.default_rng(5)
        cfg = ClassConfig(3, frozenset())
        t, s = random_segmap(rng, 2, 2, 3), random_segmap(rng, 2, 2, 3)
        m = np.ones((2, 2), bool)
        m[1, 0] = False
        k = int(np.argmax(s[1, 0]))
        rep = grad_loss_wrt_target(t, s, m, cfg, [(1, 0, k)])
        assert rep.entries[0].analytic == 0.0 and rep.entries[0].numeric == 0.0

    def test_random_probes(self):
        rng = np.random.default_rng(6)
        cfg = ClassConfig(19)
        t, s = random_segmap(rng, 6, 6, 19), random_segmap(rng, 6, 6, 19)
        m = rng.uniform(size=(6, 6)) < 0.7
        ok = np.argwhere(~ignore_mask(t, s, cfg))
        pick = ok[rng.integers(0, len(ok), 50)]
        sup = np.argmax(s, axis=2)
        probes = [(r, c, sup[r, c] if i % 2 else rng.integers(0, 19)) for i, (r, c) in
                  enumerate(pick)]
        rep = grad_loss_wrt_target(t, s, m, cfg, probes)
        assert rep.passed, rep.max_rel_err
        assert any(e.analytic != 0 for e in rep.entries)

    def test_ignored_probe_rejected(self):
        cfg = ClassConfig(3, frozenset({1}))
        t = np.array([[[0.2, 0.7, 0.1]]])
        s = np.array([[[0.8, 0.1, 0.1]]])
        with pytest.raises(ProbeError, match="ignore"):
            grad_loss_wrt_target(t, s, np.ones((1, 1), bool), cfg, [(0, 0, 0)])

    def test_probe_out_of_range(self):
        cfg = ClassConfig(2, frozenset())
        with pytest.raises(ProbeError):
            grad_loss_wrt_target(np.full((1, 1, 2), 0.5), np.full((1, 1, 2), 0.5),
                                 np.ones((1, 1), bool), cfg, [(0, 0, 2)])
