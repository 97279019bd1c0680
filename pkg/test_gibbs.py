"""
Tests for the Metropolis sampler, specific-heat sweeps and MC learning
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(str(Path(__file__).parent))

from models.schemas import EmpiricalMoments, IsingModel, LearnConfig, McConfig
from services.analysis import lattice_links, site_index
from services.enumeration import (
    exact_moments, exact_specific_heat, moments_from_distribution, state_probabilities,
)
from services.errors import BmPriorError
from services.gibbs import (
    draw_independent_states, energy_variance_stderr, learn_mc, sample_moments,
    specific_heat_sweep, stream_seeds, temperature_grid,
)


def ferromagnet(L, w=1.0, h=0.0):
    """Open-boundary nearest-neighbour lattice with uniform couplings"""
    n = L * L
    couplings = np.zeros((n, n))
    for (x1, y1), (x2, y2) in lattice_links(L, "NN"):
        i, j = site_index(L, x1, y1), site_index(L, x2, y2)
        couplings[i, j] = couplings[j, i] = w
    return IsingModel(L=L, w=couplings, h=np.full(n, h))


def random_model(rng, n, w_max=0.5, h_max=0.5):
    w = np.triu(rng.uniform(-w_max, w_max, size=(n, n)), 1)
    return IsingModel(w=w + w.T, h=rng.uniform(-h_max, h_max, size=n))


class TestSeeding:
    def test_streams_are_reproducible_and_distinct(self):
        np.testing.assert_array_equal(stream_seeds(7, 5), stream_seeds(7, 5))
        assert not np.array_equal(stream_seeds(7, 5), stream_seeds(7, 5, stream=1))
        # a prefix does not depend on how many seeds are drawn
        np.testing.assert_array_equal(stream_seeds(7, 3), stream_seeds(7, 5)[:3])

    def test_same_seed_same_estimate(self):
        model = random_model(np.random.default_rng(0), 5)
        cfg = McConfig(sweeps=2000, burn_in=100, chains=3, seed=42)
        a = sample_moments(model, cfg)
        b = sample_moments(model, cfg)
        np.testing.assert_array_equal(a.m, b.m)
        np.testing.assert_array_equal(a.second_moment, b.second_moment)
        np.testing.assert_array_equal(a.energy_series, b.energy_series)

    def test_thread_count_does_not_change_estimate(self):
        model = random_model(np.random.default_rng(1), 6)
        serial = sample_moments(model, McConfig(sweeps=3000, chains=4, seed=3, threads=1))
        parallel = sample_moments(model, McConfig(sweeps=3000, chains=4, seed=3, threads=4))
        np.testing.assert_array_equal(serial.m, parallel.m)
        np.testing.assert_array_equal(serial.c, parallel.c)

    def test_independent_states_do_not_depend_on_threads(self):
        model = random_model(np.random.default_rng(2), 4)
        cfg = McConfig(burn_in=20, seed=9)
        serial = draw_independent_states(model, 2500, cfg.model_copy(update={"threads": 1}))
        parallel = draw_independent_states(model, 2500, cfg.model_copy(update={"threads": 3}))
        assert serial.shape == (2500, 4)
        np.testing.assert_array_equal(serial, parallel)

    def test_zero_states_rejected(self):
        with pytest.raises(BmPriorError):
            draw_independent_states(ferromagnet(2), 0)


class TestSampleMoments:
    def test_free_spins_are_unbiased(self):
        model = IsingModel(w=np.zeros((4, 4)), h=np.zeros(4))
        est = sample_moments(model, McConfig(sweeps=20000, chains=4, seed=1))
        bound = 4 * 1.2 * est.stderr()
        assert np.abs(est.m).max() < bound
        assert np.abs(est.c - np.diag(np.diag(est.c))).max() < bound

    def test_uniform_field_magnetization(self):
        model = IsingModel(w=np.zeros((4, 4)), h=np.full(4, 0.8))
        est = sample_moments(model, McConfig(sweeps=20000, chains=4, seed=2))
        np.testing.assert_allclose(est.m, np.tanh(0.8), atol=0.02)

    def test_small_ferromagnet_matches_enumeration(self):
        model = ferromagnet(2, w=0.4)
        est = sample_moments(model, McConfig(sweeps=50000, chains=4, seed=3))
        exact = exact_moments(model)
        np.testing.assert_allclose(est.m, exact.m, atol=0.01)
        np.testing.assert_allclose(est.second_moment, exact.second_moment, atol=0.01)
        assert est.energy_mean == pytest.approx(exact.energy_mean, abs=0.02)

    def test_second_moment_shape(self):
        est = sample_moments(ferromagnet(2, w=0.2), McConfig(sweeps=500, chains=2))
        np.testing.assert_array_equal(np.diag(est.second_moment), 1.0)
        np.testing.assert_array_equal(est.second_moment, est.second_moment.T)
        assert est.samples_used == 1000
        assert est.energy_series.shape == (1000,)

    def test_state_frequencies_follow_boltzmann(self):
        model = random_model(np.random.default_rng(5), 4)
        cfg = McConfig(sweeps=2_500_000, burn_in=1000, chains=4, seed=6, record_every=10)
        est = sample_moments(model, cfg)
        assert est.states.shape == (1_000_000, 4)

        flipped = (1 - est.states.astype(np.int64)) // 2
        index = flipped @ (1 << np.arange(4))
        freq = np.bincount(index, minlength=16) / index.size
        _, p = state_probabilities(model)
        sigma = np.sqrt(p * (1 - p) / index.size)
        assert np.all(np.abs(freq - p) <= 4 * 1.2 * sigma)


class TestSpecificHeat:
    def test_temperature_grid(self):
        assert temperature_grid(1.0, 2.0, 3) == [1.0, 1.5, 2.0]
        assert temperature_grid(2.0, 2.0, 1) == [2.0]

    @pytest.mark.parametrize("args", [(0.0, 1.0, 5), (2.0, 1.0, 5), (1.0, 2.0, 0), (1.0, 1.0, 3)])
    def test_bad_grid(self, args):
        with pytest.raises(BmPriorError):
            temperature_grid(*args)

    def test_sweep_rejects_unsorted_grid(self):
        with pytest.raises(BmPriorError):
            specific_heat_sweep(ferromagnet(2), [2.0, 1.0])
        with pytest.raises(BmPriorError):
            specific_heat_sweep(ferromagnet(2), [-1.0, 1.0])

    def test_constant_energy_has_zero_stderr(self):
        assert energy_variance_stderr(np.full(400, -3.0), chains=2) == 0.0

    def test_free_spins_in_a_field(self):
        model = IsingModel(w=np.zeros((4, 4)), h=np.ones(4))
        grid = [0.5, 1.0, 2.0, 50.0]
        exact = exact_specific_heat(model, grid)
        for point in exact.points:
            analytic = (1.0 / point.T ** 2) / np.cosh(1.0 / point.T) ** 2
            assert point.C == pytest.approx(analytic, rel=1e-12)

        curve = specific_heat_sweep(model, grid, McConfig(sweeps=20000, chains=4, seed=4))
        for point, ref in zip(curve.points, exact.points):
            assert abs(point.C - ref.C) <= 4 * point.C_stderr + 0.01 * ref.C
        assert curve.points[-1].C < 0.01

    def test_zero_field_drops_fields(self):
        model = IsingModel(w=np.zeros((4, 4)), h=np.ones(4))
        curve = specific_heat_sweep(model, [1.0], McConfig(sweeps=200, chains=2), zero_field=True)
        assert curve.points[0].C == 0.0

    def test_fluctuation_dissipation_on_exact_oracle(self):
        model = random_model(np.random.default_rng(8), 6, w_max=1.0)
        delta = 1e-4
        for T in (0.8, 1.5, 3.0):
            hot = exact_moments(model, T + delta).energy_mean
            cold = exact_moments(model, T - delta).energy_mean
            derivative = (hot - cold) / (2 * delta) / model.N
            C = exact_specific_heat(model, [T]).points[0].C
            assert derivative == pytest.approx(C, abs=1e-6)

    @pytest.mark.slow
    def test_ferromagnet_curve_matches_enumeration(self):
        model = ferromagnet(4, w=1.0)
        grid = list(np.linspace(1.0, 5.0, 10))
        exact = exact_specific_heat(model, grid)
        curve = specific_heat_sweep(model, grid, McConfig(sweeps=40000, burn_in=2000, chains=4, seed=5))
        for point, ref in zip(curve.points, exact.points):
            assert abs(point.C - ref.C) <= 4 * point.C_stderr + 0.02 * ref.C
        peak_index = [p.T for p in curve.points].index(curve.peak_T)
        exact_index = [p.T for p in exact.points].index(exact.peak_T)
        assert abs(peak_index - exact_index) <= 1


class TestLearnMc:
    def test_independent_spins_stop_at_mean_field(self):
        mu = np.array([0.3, -0.2, 0.1, 0.0])
        m = EmpiricalMoments(B=0, mu=mu, gamma=np.diag(1 - mu ** 2))
        cfg = LearnConfig(grad_tol=0.05, max_iters=10, mc=McConfig(sweeps=20000, chains=4, seed=1))
        result = learn_mc(m, cfg)
        assert result.converged
        assert np.abs(result.model.w).max() < 0.05
        np.testing.assert_allclose(result.model.h, np.arctanh(mu), atol=0.05)
        assert result.history[0].step_type == "init"

    def test_starting_at_the_optimum(self):
        truth = ferromagnet(2, w=0.3, h=0.1)
        m = moments_from_distribution(truth)
        cfg = LearnConfig(grad_tol=0.02, max_iters=10, mc=McConfig(sweeps=20000, chains=4, seed=2))
        result = learn_mc(m, cfg, init=truth)
        assert result.converged
        assert result.iterations <= 2

    def test_residual_never_grows_beyond_tolerance(self):
        truth = random_model(np.random.default_rng(3), 5, w_max=0.6)
        m = moments_from_distribution(truth)
        cfg = LearnConfig(grad_tol=1e-4, max_iters=6, mc=McConfig(sweeps=5000, chains=2, seed=3))
        result = learn_mc(m, cfg)
        assert result.iterations == 6
        assert len(result.history) == 7
        for before, after in zip(result.history, result.history[1:]):
            assert after.grad_inf_norm <= before.grad_inf_norm + cfg.reject_tol + 1e-12
        assert result.grad_inf_norm == min(step.grad_inf_norm for step in result.history)

    def test_diagonal_curvature_path(self):
        truth = ferromagnet(2, w=0.3)
        m = moments_from_distribution(truth)
        cfg = LearnConfig(
            grad_tol=0.02, max_iters=20, max_full_curvature=0,
            mc=McConfig(sweeps=20000, chains=4, seed=4),
        )
        result = learn_mc(m, cfg)
        assert result.grad_inf_norm < 0.05

    @pytest.mark.slow
    def test_recovers_three_by_three_ferromagnet(self):
        truth = ferromagnet(3, w=0.3)
        m = moments_from_distribution(truth)
        cfg = LearnConfig(grad_tol=0.01, max_iters=20, mc=McConfig(sweeps=200000, chains=4, seed=5))
        result = learn_mc(m, cfg)
        error = np.abs(result.model.w - truth.w)
        assert error.max() <= 0.05


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
