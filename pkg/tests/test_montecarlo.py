"""Path simulation: configuration, Cholesky factors, reproducibility,
abort handling and the FEM comparison report."""

import math
import warnings

import numpy as np
import pytest

from firstexit import _kernels
from firstexit.meshing import BoxDomain, mesh_box
from firstexit.models import builtin_model, model_from_expressions
from firstexit.montecarlo import (
    ExitStats,
    SimulationConfig,
    cholesky_at,
    compare,
    monitoring_bias_allowance,
    simulate_exit,
)
from firstexit.solvers import ScalarField

RUMOR_DOMAIN = BoxDomain([0.7, 0.1], [0.9, 0.3])
RUMOR_START = np.array([0.8, 0.2])


def small_config(**kw):
    args = dict(dt=1e-5, n_paths=300, seed=2024, time_cap=0.5)
    args.update(kw)
    return SimulationConfig(**args)


class TestSimulationConfig:
    def test_accepts_valid_settings(self):
        cfg = small_config()
        assert cfg.dt == 1e-5 and cfg.n_paths == 300

    @pytest.mark.parametrize("bad", [
        dict(dt=0.0), dict(dt=-1e-3),
        dict(n_paths=0),
        dict(time_cap=0.0),
        dict(seed=-1), dict(seed=2**64),
    ])
    def test_rejects_invalid_settings(self, bad):
        with pytest.raises(ValueError):
            small_config(**bad)


class TestCholesky:
    def test_factor_reproduces_diffusion_matrix(self):
        from firstexit.expressions import evaluate
        model = builtin_model("tumor")
        point = np.array([3.0, 1.5, 1.0])
        L = cholesky_at(model, point)
        assert np.allclose(L, np.tril(L))
        assert np.all(np.diag(L) > 0.0)
        a = np.array([[evaluate(model.diffusion[i][j], point)
                       for j in range(3)] for i in range(3)])
        np.testing.assert_allclose(L @ L.T, a, rtol=1e-12, atol=1e-14)

    def test_degenerate_point_is_reported(self):
        model = model_from_expressions(
            "deg", ["x", "y"], ["0", "0"], [["x", "0"], ["1"]])
        with pytest.raises(ValueError, match="not positive definite at"):
            cholesky_at(model, np.array([-0.25, 0.0]))


class TestSimulateExit:
    def test_start_must_be_interior(self):
        with pytest.raises(ValueError, match="strictly inside"):
            simulate_exit(builtin_model("rumor"), RUMOR_DOMAIN,
                          np.array([0.7, 0.2]), small_config())

    def test_path_accounting(self):
        stats = simulate_exit(builtin_model("rumor"), RUMOR_DOMAIN,
                              RUMOR_START, small_config())
        assert stats.n_paths == 300
        assert stats.n_exited + stats.n_censored + stats.n_aborted == 300
        assert stats.n_exited > 0
        assert stats.mean > 0.0
        assert stats.standard_error > 0.0
        assert stats.seed == 2024 and stats.dt == 1e-5

    def test_thread_count_does_not_change_results(self):
        runs = [
            simulate_exit(builtin_model("rumor"), RUMOR_DOMAIN, RUMOR_START,
                          small_config(), survival_times=[0.005, 0.01, 0.02],
                          workers=w)
            for w in (1, 3, 7)
        ]
        base = runs[0]
        for other in runs[1:]:
            assert other.mean == base.mean
            assert other.standard_error == base.standard_error
            assert (other.n_exited, other.n_censored, other.n_aborted) == \
                (base.n_exited, base.n_censored, base.n_aborted)
            np.testing.assert_array_equal(
                other.survival_values, base.survival_values)

    def test_seed_changes_results(self):
        a = simulate_exit(builtin_model("rumor"), RUMOR_DOMAIN, RUMOR_START,
                          small_config(n_paths=100))
        b = simulate_exit(builtin_model("rumor"), RUMOR_DOMAIN, RUMOR_START,
                          small_config(n_paths=100, seed=2025))
        assert a.mean != b.mean

    def test_survival_fractions_recomputed_from_kernel(self):
        # rebuild the empirical survival curve straight from the kernel
        # output; simulate_exit's chunked aggregation must agree exactly
        from firstexit.montecarlo import _coefficient_programs
        model = builtin_model("rumor")
        cfg = small_config(n_paths=200)
        times = np.array([0.0, 0.002, 0.005, 0.01, 0.03])
        stats = simulate_exit(model, RUMOR_DOMAIN, RUMOR_START, cfg,
                              survival_times=times, workers=4)

        programs = _coefficient_programs(model)
        max_steps = int(math.ceil(cfg.time_cap / cfg.dt))
        status, steps = _kernels.simulate_paths(
            programs.code, programs.offsets, programs.consts,
            programs.max_stack, model.dimension, RUMOR_START,
            RUMOR_DOMAIN.lower, RUMOR_DOMAIN.upper, cfg.dt, max_steps,
            cfg.seed, cfg.n_paths, 0)
        exited = status == _kernels.STATUS_EXITED
        t_exit = steps[exited] * cfg.dt
        assert stats.n_exited == int(exited.sum())
        assert stats.mean == float(np.mean(t_exit))
        sd = float(np.std(t_exit, ddof=1))
        assert stats.standard_error == sd / math.sqrt(t_exit.size)
        alive = np.where(status == _kernels.STATUS_CENSORED,
                         max_steps, steps) * cfg.dt
        alive = alive[status != _kernels.STATUS_ABORTED]
        expect = [float((alive > t).sum()) / alive.size for t in times]
        np.testing.assert_array_equal(stats.survival_values, expect)
        assert stats.survival_values[0] == 1.0
        assert np.all(np.diff(stats.survival_values) <= 0.0)

    def test_tiny_time_cap_censors(self):
        stats = simulate_exit(builtin_model("rumor"), RUMOR_DOMAIN,
                              RUMOR_START, small_config(time_cap=3e-5))
        assert stats.n_censored > 250
        if stats.n_exited == 0:
            assert math.isnan(stats.mean)

    def test_aborting_paths_warn(self):
        # drift pushes x through 0 where a_11 = x loses positive
        # definiteness; the start point itself is still fine
        model = model_from_expressions(
            "drain", ["x", "y"], ["-5", "0"], [["x", "0"], ["1"]])
        domain = BoxDomain([-1.0, -1.0], [1.0, 1.0])
        cfg = SimulationConfig(dt=0.01, n_paths=50, seed=7, time_cap=5.0)
        with pytest.warns(RuntimeWarning, match="aborted"):
            stats = simulate_exit(model, domain, np.array([0.5, 0.0]), cfg)
        assert stats.n_aborted > 0


class TestCompare:
    @staticmethod
    def stats(mean, se, n_exited=100):
        return ExitStats(mean=mean, standard_error=se, n_paths=120,
                         n_exited=n_exited, n_censored=120 - n_exited,
                         n_aborted=0, survival_times=np.empty(0),
                         survival_values=np.empty(0), seed=1, dt=1e-4)

    def test_z_score_and_verdict(self):
        report = compare(1.0, self.stats(1.05, 0.02))
        assert report.z == pytest.approx(-2.5)
        assert report.passed
        assert not compare(1.0, self.stats(1.07, 0.02)).passed

    def test_allowance_extends_the_band(self):
        s = self.stats(1.15, 0.02)
        assert not compare(1.0, s).passed
        assert compare(1.0, s, bias_allowance=0.1).passed

    def test_threshold_is_respected(self):
        s = self.stats(1.05, 0.02)
        assert not compare(1.0, s, z_threshold=2.0).passed

    def test_no_exits_is_an_error(self):
        with pytest.raises(ValueError, match="no uncensored paths"):
            compare(1.0, self.stats(float("nan"), float("nan"), n_exited=0))


class TestBiasAllowance:
    def test_matches_closed_form_for_affine_field(self):
        # constant A = diag(4) gives sigma = 2 on the boundary; an affine
        # field has constant gradient, so the bound is 0.5826*2*sqrt(dt)*|g|
        mesh = mesh_box(BoxDomain([0.0, 0.0], [1.0, 1.0]), 4)
        model = model_from_expressions(
            "flat", ["x", "y"], ["0", "0"], [["4", "0"], ["4"]])
        g = np.array([0.6, -0.8])  # |g| = 1
        field = ScalarField(mesh=mesh, values=mesh.nodes @ g, kind="test")
        dt = 2.5e-3
        expect = 0.5826 * 2.0 * math.sqrt(dt) * 1.0
        assert monitoring_bias_allowance(model, field, dt) == \
            pytest.approx(expect, rel=1e-12)

    def test_scales_with_sqrt_dt(self):
        model = builtin_model("rumor")
        from firstexit.solvers import mean_exit_time
        field = mean_exit_time(model, RUMOR_DOMAIN, 8)
        a1 = monitoring_bias_allowance(model, field, 1e-4)
        a2 = monitoring_bias_allowance(model, field, 4e-4)
        assert a2 == pytest.approx(2.0 * a1, rel=1e-12)
