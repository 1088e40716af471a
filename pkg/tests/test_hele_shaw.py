import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from stochch.errors import GeometryCollapse, NoiseGridMismatch, SingularGeometry
from stochch.field_core import RadialGrid, sphere_area
from stochch.hele_shaw import (
    ABSORB_RADIUS,
    SURFACE_TENSION,
    HSTrajectory,
    InterfaceConfig,
    evolve_deterministic,
    evolve_stochastic,
    interface_velocities,
    phase_volume,
    solve_potential_deterministic,
    stochastic_step,
)
from stochch.noise import QSpectrum, RadialNoise

S = oracles.surface_tension_closed_form()
# frozen from oracles.two_interface_velocities_2d(0.3, 0.6, S)
TWO_B, TWO_V1, TWO_V2 = -3.400464821989298, -5.667441369982163, -2.8337206849910817


class TestInterfaceConfig:
    @pytest.mark.parametrize("radii", [(0.5, 0.3), (0.0,), (1.2,), (0.3, 0.3)])
    def test_invalid(self, radii):
        with pytest.raises(ValueError):
            InterfaceConfig(2, radii)

    def test_phases_alternate(self):
        cfg = InterfaceConfig(2, (0.2, 0.4, 0.6), inner_phase=-1)
        assert [cfg.segment_phase(j) for j in range(4)] == [-1, 1, -1, 1]
        assert cfg.curvature(1) == pytest.approx(1 / 0.4)


class TestPotential:
    @pytest.mark.parametrize("d", [2, 3])
    @pytest.mark.parametrize("phase", [1, -1])
    def test_single_interface_is_constant(self, d, phase):
        cfg = InterfaceConfig(d, (0.5,), phase)
        pot = solve_potential_deterministic(cfg)
        r = np.linspace(0.01, 0.99, 50)
        np.testing.assert_allclose(pot(r), phase * S * (d - 1) / 0.5, atol=1e-12)
        assert interface_velocities(cfg, pot) == pytest.approx([0.0], abs=1e-12)

    def test_no_interface(self):
        pot = solve_potential_deterministic(InterfaceConfig(2, ()))
        assert np.all(pot(np.linspace(0.1, 0.9, 5)) == 0.0)
        assert interface_velocities(InterfaceConfig(2, ())) == []

    def test_two_interfaces_match_hand_solution(self):
        b, V1, V2 = oracles.two_interface_velocities_2d(0.3, 0.6, S)
        assert (b, V1, V2) == pytest.approx((TWO_B, TWO_V1, TWO_V2), rel=1e-12)
        cfg = InterfaceConfig(2, (0.3, 0.6), 1)
        pot = solve_potential_deterministic(cfg)
        assert pot.b[1] == pytest.approx(TWO_B, rel=1e-12)
        assert interface_velocities(cfg, pot) == pytest.approx([TWO_V1, TWO_V2], rel=1e-12)

    @pytest.mark.parametrize("d", [2, 3])
    def test_dirichlet_values(self, d):
        cfg = InterfaceConfig(d, (0.3, 0.6), 1)
        pot = solve_potential_deterministic(cfg)
        for i, R in enumerate(cfg.radii):
            target = S * cfg.curvature(i)
            seg_in, seg_out = i, i + 1
            phi = math.log(R) if d == 2 else 1 / R
            assert pot.a[seg_in] + pot.b[seg_in] * phi == pytest.approx(target, abs=1e-12)
            assert pot.a[seg_out] + pot.b[seg_out] * phi == pytest.approx(target, abs=1e-12)
        assert pot.b[0] == 0.0 and pot.b[-1] == 0.0

    def test_annulus_potential_not_constant(self):
        pot = solve_potential_deterministic(InterfaceConfig(2, (0.3, 0.6)))
        vals = pot(np.array([0.35, 0.45, 0.55]))
        assert np.ptp(vals) > 0.1

    def test_too_close(self):
        with pytest.raises(SingularGeometry):
            solve_potential_deterministic(InterfaceConfig(2, (0.3, 0.3005)))

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(0.05, 0.95), min_size=1, max_size=4, unique=True), st.sampled_from([2, 3]),
           st.sampled_from([1, -1]))
    def test_signed_volume_rate_vanishes(self, radii, d, phase):
        radii = sorted(radii)
        if np.any(np.diff(radii) < 0.02):
            return
        cfg = InterfaceConfig(d, tuple(radii), phase)
        V = interface_velocities(cfg)
        om = sphere_area(d)
        # d/dt vol(+1 phase) = sum over interfaces of area * V * (+1 if the + phase is inside)
        rate = sum(om * R ** (d - 1) * v * cfg.enclosed_phase(i) for i, (R, v) in enumerate(zip(radii, V)))
        scale = sum(om * R ** (d - 1) * abs(v) for R, v in zip(radii, V)) + 1.0
        assert abs(rate) <= 1e-10 * scale


class TestDeterministicEvolution:
    @pytest.mark.parametrize("d", [2, 3])
    def test_single_bubble_stays(self, d):
        traj = evolve_deterministic(InterfaceConfig(d, (0.5,)), 1.0, 1e-2)
        assert np.abs(traj.radii[:, 0] - 0.5).max() <= 1e-10

    def test_area_conserved(self):
        cfg = InterfaceConfig(2, (0.3, 0.6))
        traj = evolve_deterministic(cfg, 0.02, 1e-3)
        vols = [phase_volume(cfg.with_radii(r)) for r in traj.radii]
        assert np.abs(np.array(vols) - vols[0]).max() <= 1e-8

    def test_rk4_order(self):
        cfg = InterfaceConfig(2, (0.3, 0.6))
        T = 0.02
        ref = evolve_deterministic(cfg, T, 1e-5).radii[-1]
        errs = [np.abs(evolve_deterministic(cfg, T, dt).radii[-1] - ref).max() for dt in (2e-3, 1e-3, 5e-4)]
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert orders.min() >= 3.5

    def test_inner_bubble_absorbed(self):
        cfg = InterfaceConfig(2, (0.05, 0.6))
        traj = evolve_deterministic(cfg, 0.05, 1e-4)
        assert len(traj.events) == 1
        t_event, index, _ = traj.events[0]
        assert index == 0
        assert np.isnan(traj.radii[-1, 0]) and math.isfinite(traj.radii[-1, 1])
        assert traj.inner_phase[-1] == -1
        k = int(round(t_event / 1e-4))
        assert np.all(traj.radii[:k, 0] >= ABSORB_RADIUS)

    def test_collision(self):
        # a thin ring runs into the inner bubble long before the bubble could vanish
        with pytest.raises(GeometryCollapse):
            evolve_deterministic(InterfaceConfig(2, (0.4, 0.45, 0.452)), 0.05, 1e-4)

    def test_thin_ring_overshoot(self):
        with pytest.raises(GeometryCollapse):
            evolve_deterministic(InterfaceConfig(2, (0.3, 0.5, 0.502)), 0.05, 1e-3)

    def test_csv_roundtrip(self, tmp_path):
        traj = evolve_deterministic(InterfaceConfig(2, (0.3, 0.6)), 0.01, 1e-3)
        traj.to_csv(tmp_path / "hs.csv")
        back = HSTrajectory.from_csv(tmp_path / "hs.csv")
        np.testing.assert_array_equal(back.radii, traj.radii)
        np.testing.assert_array_equal(back.times, traj.times)


class TestStochastic:
    def test_zero_noise_keeps_radius(self):
        g = RadialGrid(2, 256)
        traj = evolve_stochastic(InterfaceConfig(2, (0.5,)), g, QSpectrum(a0=0.0), 0.01, 1e-4, 0)
        assert np.abs(traj.radii[:, 0] - 0.5).max() <= 1e-10

    @pytest.mark.parametrize("d", [2, 3])
    def test_psi_jump_small(self, d):
        g = RadialGrid(d, 256)
        model = RadialNoise(g, QSpectrum())
        rng = np.random.default_rng(0)
        for R in (0.3, 0.5, 0.71):
            z = rng.standard_normal(model.n_modes) * model.alpha * 1e-2
            st_ = stochastic_step(R, 1, z, 1e-4, g, QSpectrum())
            assert abs(st_.psi_jump) <= 10 * g.h

    def test_boundary_values(self):
        g = RadialGrid(2, 256)
        model = RadialNoise(g, QSpectrum())
        z = np.random.default_rng(1).standard_normal(model.n_modes) * model.alpha * 1e-2
        st_ = stochastic_step(0.5, 1, z, 1e-4, g, QSpectrum())
        # nodes adjacent to R stay close to the Gibbs-Thomson value
        assert st_.v_left == pytest.approx(SURFACE_TENSION / 0.5, rel=0.05)
        assert st_.v_right == pytest.approx(SURFACE_TENSION / 0.5, rel=0.05)

    def test_ensemble_statistics(self):
        g = RadialGrid(2, 256)
        paths = np.array([
            evolve_stochastic(InterfaceConfig(2, (0.5,)), g, QSpectrum(a0=0.1), 0.05, 1e-4, seed).radii[:, 0]
            for seed in range(64)
        ])
        final = paths[:, -1]
        se = final.std(ddof=1) / math.sqrt(len(final))
        assert abs(final.mean() - 0.5) <= 2 * se
        var = paths.var(axis=0, ddof=1)[::50]
        assert np.all(np.diff(var) >= 0)

    def test_small_amplitude_close_to_deterministic(self):
        g = RadialGrid(2, 128)
        cfg = InterfaceConfig(2, (0.4,))
        dev = []
        for amp in (1e-1, 1e-2):
            traj = evolve_stochastic(cfg, g, QSpectrum(), 0.01, 1e-4, 3, amplitude=amp)
            dev.append(np.abs(traj.radii[:, 0] - 0.4).max())
        assert dev[1] <= dev[0] + 1e-12 and dev[0] <= 1.0 * 1e-1

    def test_replayed_increments(self):
        g = RadialGrid(2, 128)
        model = RadialNoise(g, QSpectrum())
        inc = np.random.default_rng(5).standard_normal((20, model.n_modes)) * model.alpha * 1e-2
        a = evolve_stochastic(InterfaceConfig(2, (0.4,)), g, QSpectrum(), 2e-3, 1e-4, increments=inc)
        b = evolve_stochastic(InterfaceConfig(2, (0.4,)), g, QSpectrum(), 2e-3, 1e-4, increments=inc)
        np.testing.assert_array_equal(a.radii, b.radii)

    def test_wrong_mode_count(self):
        g = RadialGrid(2, 128)
        with pytest.raises(NoiseGridMismatch):
            evolve_stochastic(InterfaceConfig(2, (0.4,)), g, QSpectrum(), 1e-3, 1e-4, increments=np.zeros((10, 3)))

    def test_dimension_mismatch(self):
        with pytest.raises(NoiseGridMismatch):
            evolve_stochastic(InterfaceConfig(3, (0.4,)), RadialGrid(2, 64), QSpectrum(), 1e-3, 1e-4, 0)

    def test_single_interface_only(self):
        with pytest.raises(ValueError):
            evolve_stochastic(InterfaceConfig(2, (0.3, 0.6)), RadialGrid(2, 64), QSpectrum(), 1e-3, 1e-4, 0)
