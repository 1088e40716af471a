import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.linalg import eigh

import oracles
from stochch.errors import DivergentTrace, KernelUnresolved, SpectrumGridMismatch
from stochch.field_core import Grid2D, RadialGrid, integrate
from stochch.noise import (
    QSpectrum,
    RadialNoise,
    SmearKernel,
    SquareNoise,
    WienerSource,
    radial_eigenbasis,
    smeared_path,
    smoothed_nodes,
    spectral_traces,
    trace_report,
    wiener_increment_2d,
    wiener_increment_radial,
)


class TestSpectrum:
    def test_zero_mode_has_zero_amplitude(self):
        assert QSpectrum().amplitude(0.0) == 0.0

    def test_power_law(self):
        spectrum = QSpectrum(s=2.5, a0=2.0)
        lam = np.pi**2
        assert spectrum.amplitude(lam) == pytest.approx(2.0 * (1 + lam) ** -1.25)

    def test_single_mode_traces(self):
        assert spectral_traces([np.pi**2], [1.0]) == pytest.approx((1.0, np.pi**2))

    def test_traces_converge_for_s_2_5(self):
        a = trace_report(QSpectrum(s=2.5, a0=1.0, cutoff=64))
        b = trace_report(QSpectrum(s=2.5, a0=1.0, cutoff=128))
        assert math.isfinite(a.trQ) and math.isfinite(a.trNegLapQ)
        assert abs(b.trNegLapQ - a.trNegLapQ) / b.trNegLapQ < 0.01

    def test_trace_matches_direct_sum(self):
        spectrum = QSpectrum(s=3.0, a0=1.0, cutoff=10)
        direct_q = direct_l = 0.0
        for k1 in range(11):
            for k2 in range(11):
                if k1 == k2 == 0:
                    continue
                lam = np.pi**2 * (k1 * k1 + k2 * k2)
                direct_q += (1 + lam) ** -3.0
                direct_l += lam * (1 + lam) ** -3.0
        rep = trace_report(spectrum)
        assert rep.trQ == pytest.approx(direct_q, rel=1e-12)
        assert rep.trNegLapQ == pytest.approx(direct_l, rel=1e-12)

    def test_slow_decay_diverges(self):
        with pytest.raises(DivergentTrace):
            trace_report(QSpectrum(s=1.0))

    def test_radial_trace(self):
        rep = trace_report(QSpectrum(s=2.5), RadialGrid(2, 128))
        assert rep.trQ > 0 and math.isfinite(rep.trNegLapQ)


class TestSquareIncrements:
    def test_zero_mean(self):
        rng = np.random.default_rng(0)
        inc = wiener_increment_2d(QSpectrum(), Grid2D(32), 1e-3, rng)
        assert abs(integrate(inc)) <= 1e-12

    def test_dt_zero_gives_zero_field(self):
        inc = wiener_increment_2d(QSpectrum(), Grid2D(16), 0.0, np.random.default_rng(0))
        assert np.abs(inc.values).max() == 0.0

    def test_l2_norm_matches_trace(self):
        grid, spectrum, dt = Grid2D(16), QSpectrum(s=2.5, a0=1.0), 1e-3
        nm = SquareNoise(grid, spectrum)
        src = WienerSource(nm.alpha, dt, np.random.default_rng(5))
        fields = nm.synthesize(src.draw(10_000))
        l2 = (fields**2).mean(axis=(1, 2)) / dt
        assert l2.mean() == pytest.approx(float(np.sum(nm.alpha**2)), rel=0.02)

    def test_modes_orthonormal(self):
        grid = Grid2D(8)
        nm = SquareNoise(grid, QSpectrum(cutoff=7))
        E = nm.synthesize(np.eye(nm.n_modes))
        gram = np.einsum("aij,bij->ab", E, E) * grid.h**2
        np.testing.assert_allclose(gram, np.eye(nm.n_modes), atol=1e-12)

    def test_covariance_within_three_standard_errors(self):
        grid, dt, N = Grid2D(16), 1e-3, 10_000
        nm = SquareNoise(grid, QSpectrum())
        src = WienerSource(nm.alpha, dt, np.random.default_rng(11))
        proj = nm.project(nm.synthesize(src.draw(N)))[:, :4]
        cov = proj.T @ proj / N
        a = nm.alpha[:4]
        for j in range(4):
            for k in range(4):
                target = a[j] ** 2 * dt if j == k else 0.0
                se = a[j] * a[k] * dt * (math.sqrt(2.0 / N) if j == k else 1.0 / math.sqrt(N))
                assert abs(cov[j, k] - target) <= 3 * se

    def test_cutoff_beyond_grid(self):
        with pytest.raises(SpectrumGridMismatch):
            SquareNoise(Grid2D(8), QSpectrum(cutoff=8))


class TestRadialIncrements:
    @pytest.mark.parametrize("d", [2, 3])
    def test_weighted_mean_zero(self, d):
        grid = RadialGrid(d, 128)
        inc = wiener_increment_radial(QSpectrum(), grid, 1e-3, np.random.default_rng(1))
        assert abs(grid.weights @ inc.values) <= 1e-10

    @pytest.mark.parametrize("d", [2, 3])
    def test_gram_identity(self, d):
        grid = RadialGrid(d, 64)
        lam, B = radial_eigenbasis(grid)
        np.testing.assert_allclose(B.T @ (grid.weights[:, None] * B), np.eye(63), atol=1e-8)

    @pytest.mark.parametrize("d", [2, 3])
    def test_eigenvalues_match_dense_solve(self, d):
        grid = RadialGrid(d, 64)
        lam, _ = radial_eigenbasis(grid)
        dense = eigh(-grid.stiffness.toarray(), np.diag(grid.weights), eigvals_only=True)
        assert abs(dense[0]) < 1e-8
        np.testing.assert_allclose(lam, dense[1:], rtol=1e-8)

    def test_seed_determinism(self):
        grid, spectrum = RadialGrid(2, 64), QSpectrum()
        a = wiener_increment_radial(spectrum, grid, 1e-3, np.random.default_rng(3)).values
        b = wiener_increment_radial(spectrum, grid, 1e-3, np.random.default_rng(3)).values
        c = wiener_increment_radial(spectrum, grid, 1e-3, np.random.default_rng(4)).values
        np.testing.assert_array_equal(a, b)
        assert np.abs(a - c).max() > 0

    def test_model_for_other_grid_rejected(self):
        spectrum = QSpectrum()
        model = RadialNoise(RadialGrid(2, 64), spectrum)
        with pytest.raises(SpectrumGridMismatch):
            wiener_increment_radial(spectrum, RadialGrid(2, 128), 1e-3, np.random.default_rng(0), model=model)

    def test_cutoff_beyond_grid(self):
        with pytest.raises(SpectrumGridMismatch):
            RadialNoise(RadialGrid(2, 16), QSpectrum(cutoff=16))


class TestSmearKernel:
    @pytest.mark.parametrize("eps", [0.2, 0.1, 0.05])
    @pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
    def test_unit_mass(self, eps, gamma):
        k = SmearKernel(gamma)
        w = k.width(eps)
        val, _ = quad(lambda t: float(k.rho_eps(t, eps)), -w, w, epsabs=1e-13, epsrel=1e-12)
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_support(self):
        k = SmearKernel(1.0)
        assert k.rho_eps(0.1, 0.1) == 0.0 and k.rho_eps(-0.11, 0.1) == 0.0
        assert k.rho_eps(0.099, 0.1) > 0

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-2, 2))
    def test_even(self, t):
        assert SmearKernel.rho(t) == SmearKernel.rho(-t)

    def test_unresolved(self):
        with pytest.raises(KernelUnresolved):
            SmearKernel(1.0).half_width(0.05, 0.05 / 4)

    def test_discrete_weights_normalised(self):
        w = SmearKernel(1.0).weights(0.1, 1e-3)
        assert w.sum() * 1e-3 == pytest.approx(1.0, abs=1e-14)


class TestSmearedPath:
    def test_matches_direct_convolution(self):
        p = smeared_path(1.0, SmearKernel(1.0), 0.1, 0.2, 0.01, 7)
        direct = oracles.smooth_path_direct(p.increments, p.L, p.dt, 0.1, p.steps)
        np.testing.assert_allclose(p.smoothed()[:, 0], direct, atol=1e-12)

    def test_integral_of_xi_telescopes(self):
        p = smeared_path(1.0, SmearKernel(1.0), 0.1, 0.5, 1e-3, 2)
        We = p.smoothed()[:, 0]
        assert p.xi[:, 0].sum() * p.dt == pytest.approx(We[-1] - We[0], abs=1e-12)

    @pytest.mark.parametrize("eps", [0.2, 0.1])
    def test_integral_close_to_increment(self, eps):
        T, dt, N = 1.0, 2e-3, 400
        diffs = []
        for seed in range(N):
            p = smeared_path(1.0, SmearKernel(1.0), eps, T, dt, seed)
            diffs.append(p.xi[:, 0].sum() * dt - p.wiener()[-1, 0])
        rms = math.sqrt(np.mean(np.square(diffs)))
        # both ends contribute independently
        boundary = math.sqrt(2 * oracles.smear_boundary_variance(eps))
        assert rms <= 2 * boundary

    def test_sup_difference_decreases(self):
        sups = []
        for eps in (0.2, 0.1, 0.05):
            p = smeared_path(1.0, SmearKernel(1.0), eps, 1.0, 1e-4, 5)
            sups.append(np.abs(p.smoothed() - p.wiener()).max())
        assert sups[0] > sups[1] > sups[2]

    def test_derivative_bound_scales(self):
        norm = []
        for eps in (0.2, 0.1, 0.05):
            p = smeared_path(1.0, SmearKernel(1.0), eps, 1.0, 1e-4, 5)
            norm.append(np.abs(np.diff(p.xi[:, 0])).max() / p.dt * eps**2)
        assert max(norm) <= norm[0] * (1 + 1e-12)

    def test_positive_path_shared_across_widths(self):
        a = smeared_path(1.0, SmearKernel(1.0), 0.2, 0.5, 1e-3, 9)
        b = smeared_path(1.0, SmearKernel(1.0), 0.05, 0.5, 1e-3, 9)
        np.testing.assert_array_equal(a.wiener(), b.wiener())

    def test_seed_determinism(self):
        a = smeared_path([1.0, 0.5], SmearKernel(1.0), 0.1, 0.2, 1e-3, 4)
        b = smeared_path([1.0, 0.5], SmearKernel(1.0), 0.1, 0.2, 1e-3, 4)
        np.testing.assert_array_equal(a.xi, b.xi)

    def test_unresolved_path(self):
        with pytest.raises(KernelUnresolved):
            smeared_path(1.0, SmearKernel(1.0), 0.05, 1.0, 0.01, 0)

    def test_smoothed_nodes_needs_history(self):
        with pytest.raises(ValueError):
            smoothed_nodes(np.zeros((10, 1)), np.ones(7) / 7, 2, 4)

    def test_csv_dump(self, tmp_path):
        p = smeared_path([1.0, 0.5], SmearKernel(1.0), 0.1, 0.1, 1e-2, 1)
        p.to_csv(tmp_path / "path.csv")
        lines = (tmp_path / "path.csv").read_text().splitlines()
        assert lines[0] == "t,mode0,mode1"
        data = np.loadtxt(tmp_path / "path.csv", delimiter=",", skiprows=1)
        np.testing.assert_array_equal(data[:, 1:], p.wiener())
