import math
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from stochch.diagnostics import (
    STATED_SURFACE_TENSION,
    CosineTest,
    DiagnosticsRecord,
    constants_report,
    cosine_family,
    discrepancy,
    energy,
    extract_interface_radial,
    g_transform,
    gibbs_thomson_residual,
    grad_v_sq,
    mass_balance_residual,
    perimeter_estimate,
    potential_mass,
    read_records_csv,
    record,
    surface_tension,
    write_records_csv,
)
from stochch.errors import NoInterface, StrideTooCoarse
from stochch.experiments import fit_scaling
from stochch.field_core import Field2D, Grid2D, RadialField, RadialGrid
from stochch.noise import QSpectrum
from stochch.solver import (
    Radial,
    SolverConfig,
    Square,
    State,
    chemical_potential,
    initial_annulus_radial,
    initial_bubble_radial,
    initial_strip_2d,
    run,
    stationary_bubble_run,
)

# frozen from tests/oracles.py
S_ORACLE = 0.4714045207910317
STRIP_ENERGY_005 = 0.9428090415791199
STRIP_POTENTIAL = {0.1: 0.04714024851070368, 0.05: 0.023570226039478004, 0.025: 0.011785113019775795}
G_ORACLE = {
    -1.0: 0.0,
    0.0: 0.4714045207910316,
    1.0: 0.9428090415820634,
    0.5: 0.7954951288348661,
    -0.3: 0.26563644746574633,
    1.5: 1.1490485194281397,
    -1.5: -0.20623947784607635,
}
QUIET = QSpectrum(a0=0.0)

finite = st.floats(-1.5, 1.5, allow_nan=False)


class TestSurfaceTension:
    def test_quadrature_matches_closed_form(self):
        c = surface_tension()
        assert c.S == pytest.approx(math.sqrt(2) / 3, abs=1e-10)
        assert c.S == pytest.approx(S_ORACLE, abs=1e-10)
        assert c.closed_form == pytest.approx(oracles.surface_tension_closed_form(), abs=1e-15)

    def test_two_s_is_g_of_one(self):
        c = surface_tension()
        assert c.twoS == pytest.approx(2 * c.S, abs=1e-10)

    def test_stated_value_flagged(self):
        c = surface_tension()
        assert c.stated == STATED_SURFACE_TENSION == pytest.approx(2 / 3)
        assert c.mismatch
        assert "WARNING" in constants_report()


class TestGTransform:
    @pytest.mark.parametrize("u", sorted(G_ORACLE))
    def test_values(self, u):
        assert g_transform(u) == pytest.approx(G_ORACLE[u], abs=1e-12)

    @pytest.mark.parametrize("u", [-1.7, -0.9, 0.2, 0.99, 1.3])
    def test_matches_quadrature(self, u):
        assert g_transform(u) == pytest.approx(oracles.g_quadrature(u), abs=1e-12)

    @settings(max_examples=100)
    @given(finite, finite)
    def test_monotone(self, a, b):
        lo, hi = min(a, b), max(a, b)
        assert g_transform(lo) <= g_transform(hi) + 1e-15

    @settings(max_examples=100)
    @given(st.floats(-1, 1), st.floats(-1, 1))
    def test_lower_bound(self, a, b):
        c1 = 1 / (3 * math.sqrt(2))
        assert c1 * (a - b) ** 2 <= abs(g_transform(a) - g_transform(b)) + 1e-15

    def test_field_input(self):
        f = Field2D.constant(Grid2D(4), 0.0)
        assert np.allclose(g_transform(f).values, S_ORACLE)


class TestEnergy:
    def test_well(self):
        assert energy(Field2D.constant(Grid2D(16), 1.0), 0.1) == 0.0

    @pytest.mark.parametrize("eps", [0.1, 0.05])
    def test_pure_potential(self, eps):
        assert energy(Field2D.constant(Grid2D(16), 0.0), eps) == pytest.approx(1 / (4 * eps))

    def test_strip(self):
        eps = 0.05
        E = energy(initial_strip_2d(Grid2D(256), eps), eps)
        assert E == pytest.approx(STRIP_ENERGY_005, rel=1e-6)
        assert E == pytest.approx(2 * S_ORACLE, rel=0.10)

    def test_potential_mass_scales_linearly(self):
        pts = [(eps, potential_mass(initial_strip_2d(Grid2D(512), eps))) for eps in (0.1, 0.05, 0.025)]
        for eps, val in pts:
            assert val == pytest.approx(STRIP_POTENTIAL[eps], rel=1e-6)
        assert fit_scaling(pts).slope == pytest.approx(1.0, abs=0.05)

    def test_wells_give_zero(self):
        u = Field2D.constant(Grid2D(8), -1.0)
        assert potential_mass(u) == 0.0 and perimeter_estimate(u) == 0.0
        assert grad_v_sq(chemical_potential(u, 0.1)) == 0.0


class TestDiscrepancy:
    def test_profile_equipartition(self):
        eps = 0.05
        abs_, pos = discrepancy(initial_strip_2d(Grid2D(256), eps), eps)
        assert abs_ <= 1e-2 and 0.0 <= pos <= abs_

    def test_pure_potential(self):
        abs_, pos = discrepancy(Field2D.constant(Grid2D(8), 0.0), 0.1)
        assert abs_ == pytest.approx(2.5) and pos == 0.0

    def test_well(self):
        assert discrepancy(Field2D.constant(Grid2D(8), 1.0), 0.1) == (0.0, 0.0)


class TestPerimeter:
    def test_bubble(self):
        u = initial_bubble_radial(0.5, 0.02, RadialGrid(2, 512))
        assert perimeter_estimate(u) == pytest.approx(2 * S_ORACLE * 2 * math.pi * 0.5, rel=0.10)

    def test_strip(self):
        assert perimeter_estimate(initial_strip_2d(Grid2D(256), 0.05)) == pytest.approx(2 * S_ORACLE, rel=0.01)


class TestFunctionalInequalities:
    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (8, 8), elements=finite), st.floats(0.01, 1.0))
    def test_square(self, vals, eps):
        u = Field2D(Grid2D(8), vals)
        E = energy(u, eps)
        abs_, pos = discrepancy(u, eps)
        assert perimeter_estimate(u) <= E + 1e-10 * max(1.0, E)
        assert pos <= abs_ + 1e-12
        assert abs_ >= abs(E - 2 * potential_mass(u) / eps) - 1e-10 * max(1.0, E)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, 16, elements=finite), st.floats(0.01, 1.0), st.sampled_from([2, 3]))
    def test_radial(self, vals, eps, d):
        u = RadialField(RadialGrid(d, 16), vals)
        E = energy(u, eps)
        abs_, pos = discrepancy(u, eps)
        assert perimeter_estimate(u) <= E + 1e-10 * max(1.0, E)
        assert pos <= abs_ + 1e-12
        assert abs_ >= abs(E - 2 * potential_mass(u) / eps) - 1e-10 * max(1.0, E)


class TestInterfaces:
    @pytest.mark.parametrize("d", [2, 3])
    def test_bubble(self, d):
        g = RadialGrid(d, 256)
        (r, sgn), = extract_interface_radial(initial_bubble_radial(0.5, 0.02, g))
        assert abs(r - 0.5) <= g.h and sgn == -1

    def test_flat(self):
        assert extract_interface_radial(RadialField.constant(RadialGrid(2, 32), 1.0)) == []

    def test_annulus(self):
        g = RadialGrid(2, 256)
        found = extract_interface_radial(initial_annulus_radial(0.3, 0.6, 0.02, g))
        assert len(found) == 2
        (r1, s1), (r2, s2) = found
        assert abs(r1 - 0.3) <= g.h and abs(r2 - 0.6) <= g.h
        assert (s1, s2) == (-1, 1)


class TestGibbsThomson:
    def test_exact_cancellation(self):
        g = RadialGrid(2, 256)
        u = RadialField(g, g.r - 0.5)  # increasing through r = 0.5
        v = RadialField.constant(g, -S_ORACLE / 0.5)
        assert gibbs_thomson_residual(u, v) == pytest.approx(0.0, abs=1e-14)

    def test_no_interface(self):
        g = RadialGrid(2, 32)
        with pytest.raises(NoInterface):
            gibbs_thomson_residual(RadialField.constant(g, 1.0), RadialField.constant(g, 0.0))

    def test_stationary_bubble(self):
        res = {}
        for eps in (0.04, 0.02):
            cfg = SolverConfig(eps=eps, T=0.1, geometry=Radial(2, 512), noise=QUIET, stride=10**6)
            u = stationary_bubble_run(0.5, cfg, 0).final.u
            res[eps] = gibbs_thomson_residual(u, chemical_potential(u, eps))
        assert res[0.02] <= 0.1 * S_ORACLE / 0.5
        assert res[0.02] <= res[0.04]


@dataclass(frozen=True)
class _ZeroTest:
    T: float

    def spatial(self, grid):
        return np.zeros((grid.n, grid.n)) if isinstance(grid, Grid2D) else np.zeros(grid.nr)

    def time_factor(self, t):
        return 1.0 - np.asarray(t) / self.T


def _balance_run(n, dt, a0=0.0, regime="wiener"):
    g = Grid2D(n)
    X, Y = g.mesh
    u0 = Field2D(g, 0.2 + 0.5 * np.cos(np.pi * X) + 0.3 * np.cos(2 * np.pi * X) * np.cos(np.pi * Y))
    cfg = SolverConfig(eps=0.1, sigma=0.0, T=0.04, dt=dt, regime=regime, geometry=Square(n),
                       noise=QSpectrum(a0=a0), stride=1)
    return run(u0, cfg, 0, keep_states=True, diagnostics=False)


class TestMassBalance:
    def test_zero_test_function(self):
        traj = _balance_run(16, 4e-4)
        assert mass_balance_residual(traj, [_ZeroTest(0.04)]) == [0.0]

    def test_refinement(self):
        levels = [max(mass_balance_residual(_balance_run(n, dt))) for n, dt in ((16, 4e-4), (32, 2e-4), (64, 1e-4))]
        assert levels[0] > levels[1] > levels[2]

    def test_smeared_same_order_as_deterministic(self):
        det = max(mass_balance_residual(_balance_run(32, 2e-4)))
        sm = max(mass_balance_residual(_balance_run(32, 2e-4, a0=1.0, regime="smeared")))
        assert 0.5 * det <= sm <= 2 * det

    def test_stride_too_coarse(self):
        g = Grid2D(8)
        cfg = SolverConfig(eps=0.1, T=1e-3, dt=1e-4, geometry=Square(8), noise=QUIET, stride=1)
        traj = run(Field2D.constant(g, 0.0), cfg, 0, keep_states=True)
        with pytest.raises(StrideTooCoarse):
            mass_balance_residual(traj)

    def test_family(self):
        fam = cosine_family(1.0)
        assert [f.k for f in fam] == [1, 2, 3]
        assert fam[0].time_factor(1.0) == 0.0
        assert isinstance(fam[0], CosineTest)


class TestRecords:
    def test_radial_record_fields(self):
        g = RadialGrid(2, 256)
        u = initial_bubble_radial(0.5, 0.02, g)
        rec = record(State(0.0, u), 0.02)
        assert len(rec.interface_radii) == 1 and math.isfinite(rec.gt_residual)
        assert rec.perimeter <= rec.energy
        assert rec.mass == pytest.approx(-0.5, rel=0.02)

    def test_square_record_has_no_radii(self):
        rec = record(State(0.0, initial_strip_2d(Grid2D(32), 0.1)), 0.1)
        assert rec.interface_radii == () and math.isnan(rec.gt_residual)

    def test_csv_roundtrip(self, tmp_path):
        recs = [
            DiagnosticsRecord(0.0, 1.0, 0.1, 0.01, 0.005, 0.9, -0.5, 2.0, (0.5,), 1e-3),
            DiagnosticsRecord(0.1, 0.9, 0.2, 0.02, 0.0, 0.8, -0.5, 1.0, (0.3, 0.6), 2e-3),
            DiagnosticsRecord(1 / 3, 0.5, 0.1, 0.0, 0.0, 0.4, 0.0, 0.0),
        ]
        write_records_csv(recs, tmp_path / "r.csv")
        back = read_records_csv(tmp_path / "r.csv")
        assert back[:2] == recs[:2]
        assert back[2].t == 1 / 3 and math.isnan(back[2].gt_residual) and back[2].interface_radii == ()
        write_records_csv(back, tmp_path / "s.csv")
        assert (tmp_path / "r.csv").read_bytes() == (tmp_path / "s.csv").read_bytes()
