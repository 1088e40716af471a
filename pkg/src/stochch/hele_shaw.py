"""Radially symmetric Mullins-Sekerka / Hele-Shaw reference dynamics.

Interfaces sit at radii ``0 < R_1 < ... < R_m < 1``.  Between them the
potential is radially harmonic (``a + b ln r`` in 2D, ``a + b / r`` in 3D),
it equals ``S H_i`` on the i-th interface and satisfies a Neumann condition at
``r = 1``.  ``H_i = s_i (d-1) / R_i`` where ``s_i`` is the phase enclosed by
the interface, so a disc of the +1 phase has positive curvature.

Interface radii move by mass balance,

    dR_i/dt = (s_i / 2) (dv/dr(R_i+) - dv/dr(R_i-)),

which keeps the volume of each phase fixed.

The stochastic law drives a single interface with a mean-zero radial noise:
``v`` solves ``Lap v = -dW/dt`` on both sides with the same boundary values,
and the interface also feels half the jump of ``d/dr Lap^{-1} dW``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_banded

from .errors import GeometryCollapse, NoiseGridMismatch, SingularGeometry
from .field_core import RadialGrid, sphere_area
from .noise import QSpectrum, RadialNoise, WienerSource

__all__ = [
    "ABSORB_RADIUS",
    "MIN_SEPARATION",
    "InterfaceConfig",
    "RadialPotential",
    "solve_potential_deterministic",
    "interface_velocities",
    "phase_volume",
    "HSTrajectory",
    "evolve_deterministic",
    "StochasticStep",
    "stochastic_step",
    "evolve_stochastic",
]

ABSORB_RADIUS = 1e-2
MIN_SEPARATION = 1e-3
SURFACE_TENSION = math.sqrt(2.0) / 3.0


@dataclass(frozen=True)
class InterfaceConfig:
    d: int
    radii: tuple
    inner_phase: int = 1

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError("radial interfaces are supported for d = 2 or 3")
        if self.inner_phase not in (1, -1):
            raise ValueError("inner_phase must be +1 or -1")
        radii = tuple(float(r) for r in self.radii)
        object.__setattr__(self, "radii", radii)
        if any(not 0 < r < 1 for r in radii):
            raise ValueError(f"radii must lie in (0, 1): {radii}")
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError(f"radii must be strictly increasing: {radii}")

    @property
    def m(self) -> int:
        return len(self.radii)

    def segment_phase(self, j: int) -> int:
        """Phase on segment ``j`` (segment 0 contains the origin)."""
        return self.inner_phase * (-1) ** j

    def enclosed_phase(self, i: int) -> int:
        return self.segment_phase(i)

    def curvature(self, i: int) -> float:
        return self.enclosed_phase(i) * (self.d - 1) / self.radii[i]

    def with_radii(self, radii) -> "InterfaceConfig":
        return InterfaceConfig(self.d, tuple(radii), self.inner_phase)


def _basis(d: int, r):
    """Singular radial harmonic and its derivative."""
    r = np.asarray(r, dtype=float)
    if d == 2:
        return np.log(r), 1.0 / r
    return 1.0 / r, -1.0 / r**2


@dataclass(frozen=True)
class RadialPotential:
    """``v = a_j + b_j phi(r)`` on segment ``j``; ``phi`` is ``ln r`` or ``1/r``."""

    d: int
    breaks: tuple
    a: np.ndarray
    b: np.ndarray

    def segment(self, r: float) -> int:
        return int(np.searchsorted(self.breaks, r, side="right"))

    def __call__(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        seg = np.searchsorted(self.breaks, r, side="right")
        phi, _ = _basis(self.d, np.where(r > 0, r, 1.0))
        return self.a[seg] + self.b[seg] * phi

    def derivative(self, r: float, side: int) -> float:
        """``dv/dr`` at ``r`` from the right (``side=+1``) or left (``side=-1``)."""
        seg = int(np.searchsorted(self.breaks, r, side="right" if side > 0 else "left"))
        _, dphi = _basis(self.d, r)
        return float(self.b[seg] * dphi)


def solve_potential_deterministic(cfg: InterfaceConfig, S: float = SURFACE_TENSION) -> RadialPotential:
    """Piecewise radial harmonic potential with Gibbs-Thomson values at every interface."""
    m = cfg.m
    if m == 0:
        return RadialPotential(cfg.d, (), np.zeros(1), np.zeros(1))
    R = np.asarray(cfg.radii)
    if R[0] < MIN_SEPARATION or np.any(np.diff(R) < MIN_SEPARATION) or 1.0 - R[-1] < MIN_SEPARATION:
        raise SingularGeometry(f"interfaces closer than {MIN_SEPARATION}: {cfg.radii}")
    g = np.array([S * cfg.curvature(i) for i in range(m)])
    # unknowns (a_0, b_0, ..., a_m, b_m); b_0 = 0 (regular at 0), b_m = 0 (Neumann at 1)
    n = 2 * (m + 1)
    M = np.zeros((n, n))
    rhs = np.zeros(n)
    M[0, 1] = 1.0
    M[1, 2 * m + 1] = 1.0
    phi, _ = _basis(cfg.d, R)
    row = 2
    for i in range(m):
        for j in (i, i + 1):
            M[row, 2 * j] = 1.0
            M[row, 2 * j + 1] = phi[i]
            rhs[row] = g[i]
            row += 1
    if np.linalg.cond(M) > 1e12:
        raise SingularGeometry(f"ill-conditioned potential solve for radii {cfg.radii}")
    coef = np.linalg.solve(M, rhs)
    return RadialPotential(cfg.d, tuple(R), coef[0::2].copy(), coef[1::2].copy())


def interface_velocities(cfg: InterfaceConfig, pot: RadialPotential | None = None,
                         S: float = SURFACE_TENSION) -> list[float]:
    """``dR_i/dt = (s_i/2)(dv/dr(R_i+) - dv/dr(R_i-))`` for every interface."""
    if pot is None:
        pot = solve_potential_deterministic(cfg, S)
    out = []
    for i, R in enumerate(cfg.radii):
        jump = pot.derivative(R, +1) - pot.derivative(R, -1)
        out.append(0.5 * cfg.enclosed_phase(i) * jump)
    return out


def phase_volume(cfg: InterfaceConfig, phase: int = 1) -> float:
    """Volume of the region occupied by ``phase`` in the unit ball."""
    om = sphere_area(cfg.d) / cfg.d
    edges = (0.0,) + cfg.radii + (1.0,)
    return sum(
        om * (edges[j + 1] ** cfg.d - edges[j] ** cfg.d)
        for j in range(cfg.m + 1)
        if cfg.segment_phase(j) == phase
    )


# --------------------------------------------------------------------------
# deterministic evolution
# --------------------------------------------------------------------------


@dataclass
class HSTrajectory:
    times: np.ndarray
    radii: np.ndarray  # (steps + 1, m0); NaN once an interface is absorbed
    inner_phase: np.ndarray
    events: list = field(default_factory=list)
    psi_jumps: np.ndarray | None = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"R{i + 1}" for i in range(self.radii.shape[1])])
            for t, row in zip(self.times, self.radii):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path) -> "HSTrajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1:], np.zeros(len(data), dtype=int))


def _velocity(d: int, radii: np.ndarray, inner: int, S: float) -> np.ndarray:
    cfg = InterfaceConfig(d, tuple(radii), inner)
    _check_geometry(cfg.radii)
    return np.array(interface_velocities(cfg, S=S))


def _check_geometry(radii) -> None:
    R = np.asarray(radii)
    if R.size and (np.any(np.diff(R) < MIN_SEPARATION) or R[-1] > 1.0 - MIN_SEPARATION or R[0] <= 0):
        raise GeometryCollapse(f"interfaces collided: {tuple(R)}")


def _rk4(d, R, inner, S, dt):
    """One classical RK4 step, or None when a stage leaves the admissible geometry."""
    try:
        k1 = _velocity(d, R, inner, S)
        k2 = _velocity(d, R + 0.5 * dt * k1, inner, S)
        k3 = _velocity(d, R + 0.5 * dt * k2, inner, S)
        k4 = _velocity(d, R + dt * k3, inner, S)
    except (ValueError, SingularGeometry, GeometryCollapse):
        return None
    return R + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _innermost_vanishes(d, R, inner, S, dt) -> bool:
    """Whether the innermost bubble shrinks below the absorption radius before any gap closes."""
    V = _velocity(d, R, inner, S)
    t_vanish = (R[0] - ABSORB_RADIUS) / -V[0] if V[0] < 0 else math.inf
    if t_vanish > 2.0 * dt:
        return False
    closing = -np.diff(V)
    gaps = np.diff(R) - MIN_SEPARATION
    wall = (1.0 - MIN_SEPARATION - R[-1]) / V[-1] if V[-1] > 0 else math.inf
    t_gap = min([g / c for g, c in zip(gaps, closing) if c > 0] + [wall])
    return t_vanish <= t_gap


def evolve_deterministic(cfg0: InterfaceConfig, T: float, dt: float,
                         S: float = SURFACE_TENSION) -> HSTrajectory:
    """Classical RK4 on the interface ODE with absorption of vanishing bubbles."""
    steps = int(round(T / dt))
    m0 = cfg0.m
    out = np.full((steps + 1, m0), np.nan)
    phases = np.empty(steps + 1, dtype=int)
    alive = list(range(m0))
    R = np.array(cfg0.radii)
    inner = cfg0.inner_phase
    out[0] = R
    phases[0] = inner
    events = []
    d = cfg0.d
    for n in range(steps):
        if R.size:
            new = _rk4(d, R, inner, S, dt)
            if new is None and not _innermost_vanishes(d, R, inner, S, dt):
                raise GeometryCollapse(f"geometry degenerated near t={n * dt:.4g}: {tuple(R)}")
            if new is None or new[0] < ABSORB_RADIUS:
                # the innermost bubble vanishes within this step
                events.append(((n + 1) * dt, alive[0], float(R[0])))
                R, alive, inner = R[1:], alive[1:], -inner
                new = _rk4(d, R, inner, S, dt) if R.size else R
                if new is None:
                    raise GeometryCollapse(f"geometry degenerated near t={n * dt:.4g}: {tuple(R)}")
            R = new
            _check_geometry(R)
        out[n + 1, alive] = R
        phases[n + 1] = inner
    return HSTrajectory(np.arange(steps + 1) * dt, out, phases, events)


# --------------------------------------------------------------------------
# stochastic single interface
# --------------------------------------------------------------------------


def _shell(d: int, a: float, b: float) -> float:
    return sphere_area(d) / d * (b**d - a**d)


@dataclass(frozen=True)
class StochasticStep:
    velocity_dt: float  # increment of R
    v_jump: float  # [dv/dr] from the potential solve
    psi_jump: float  # [d/dr Lap^{-1} dW]
    v_left: float
    v_right: float


def _dirichlet_solve(upper, w_cut, src, dist, face_R, gR, side):
    """Banded FV solve on a block of consecutive nodes with ``v = gR`` at the interface.

    ``upper`` holds the face conductances between neighbouring nodes of the
    block, ``dist`` the distance from the interface to the adjacent node.
    Returns ``(values, flux)`` with ``flux`` the outward flux of the block
    through the interface sphere.
    """
    n = len(w_cut)
    diag = np.zeros(n)
    diag[:-1] -= upper
    diag[1:] -= upper
    j = n - 1 if side < 0 else 0
    coupling = face_R / max(dist, 1e-12)
    diag[j] -= coupling
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = upper
    rhs = -w_cut * src
    rhs[j] -= coupling * gR
    vals = solve_banded((1, 1), ab, rhs)
    return vals, coupling * (gR - vals[j])


def _one_sided_slope(r, f, R, side):
    """Second-order one-sided derivative at ``R`` from three nodes on one side."""
    idx = np.arange(3)
    xs = r[idx] if side > 0 else r[idx - 3]
    ys = f[idx] if side > 0 else f[idx - 3]
    c = np.polyfit(xs - R, ys, 2)
    return float(c[1])


class _StochasticHS:
    def __init__(self, grid: RadialGrid, noise: QSpectrum, S: float):
        self.grid = grid
        self.model = RadialNoise(grid, noise)
        self.upper = grid.stiffness.diagonal(1)
        self.S = S

    def step(self, R: float, phase: int, z: np.ndarray, dt: float) -> StochasticStep:
        g = self.grid
        r, w, d = g.r, g.weights, g.d
        J = int(np.searchsorted(r, R, side="left")) - 1  # r[J] < R <= r[J+1]
        if J < 2 or J + 4 > g.nr:
            raise GeometryCollapse(f"interface at R={R:.4g} left the resolvable range")
        faces = g.faces
        dW = self.model.synthesize(z)
        src = dW / dt
        shift = _shell(d, faces[J], R)
        w_in = w[: J + 1].copy()
        w_in[-1] += shift
        w_out = w[J + 1:].copy()
        w_out[0] -= shift
        aR = sphere_area(d) * R ** (d - 1)
        gR = self.S * phase * (d - 1) / R
        up = self.upper
        v_in, f_in = _dirichlet_solve(up[:J], w_in, src[: J + 1], R - r[J], aR, gR, -1)
        v_out, f_out = _dirichlet_solve(up[J + 1:], w_out, src[J + 1:], r[J + 1] - R, aR, gR, +1)
        # outward fluxes: inner domain a(R) v_r(R-), outer domain -a(R) v_r(R+)
        v_jump = (-f_out - f_in) / aR
        psi = self.model.inverse_laplacian(z)
        psi_jump = (_one_sided_slope(r[J + 1:], psi[J + 1:], R, +1)
                    - _one_sided_slope(r[: J + 1], psi[: J + 1], R, -1))
        inc = 0.5 * phase * (v_jump * dt + psi_jump)
        return StochasticStep(inc, v_jump, psi_jump, float(v_in[-1]), float(v_out[0]))


@lru_cache(maxsize=8)
def _stochastic_solver(grid: RadialGrid, noise: QSpectrum, S: float) -> _StochasticHS:
    return _StochasticHS(grid, noise, S)


def stochastic_step(R: float, phase: int, z: np.ndarray, dt: float, grid: RadialGrid,
                    noise: QSpectrum, S: float = SURFACE_TENSION) -> StochasticStep:
    """One Euler-Maruyama increment for modal noise coefficients ``z`` over ``dt``."""
    return _stochastic_solver(grid, noise, S).step(R, phase, np.asarray(z, dtype=float), dt)


def evolve_stochastic(cfg0: InterfaceConfig, grid: RadialGrid, noise: QSpectrum, T: float, dt: float,
                      rng=None, increments: np.ndarray | None = None, amplitude: float = 1.0,
                      S: float = SURFACE_TENSION) -> HSTrajectory:
    """Euler-Maruyama for a single radial interface under mean-zero noise.

    ``increments`` (steps x modes, unscaled, already multiplied by the
    spectral amplitudes) replays a given noise path, e.g. the Wiener
    increments consumed by a paired phase-field run; otherwise Wiener
    increments are drawn from ``rng``.  ``amplitude`` multiplies the noise.
    """
    if cfg0.m != 1:
        raise ValueError("the stochastic interface law is defined for a single interface")
    if cfg0.d != grid.d:
        raise NoiseGridMismatch(f"interface dimension {cfg0.d} differs from grid dimension {grid.d}")
    solver = _stochastic_solver(grid, noise, S)
    steps = int(round(T / dt))
    if increments is not None:
        increments = np.asarray(increments, dtype=float)
        if increments.shape[1] != solver.model.n_modes:
            raise NoiseGridMismatch(
                f"increments carry {increments.shape[1]} modes, grid noise has {solver.model.n_modes}"
            )
        if increments.shape[0] < steps:
            raise ValueError(f"need {steps} increments, got {increments.shape[0]}")
    else:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        increments = WienerSource(solver.model.alpha, dt, rng).draw(steps)
    phase = cfg0.inner_phase
    R = cfg0.radii[0]
    radii = np.empty(steps + 1)
    jumps = np.empty(steps)
    radii[0] = R
    for n in range(steps):
        st = solver.step(R, phase, amplitude * increments[n], dt)
        R = R + st.velocity_dt
        if not ABSORB_RADIUS < R < 1.0 - MIN_SEPARATION:
            raise GeometryCollapse(f"interface reached R={R:.4g} at t={(n + 1) * dt:.4g}")
        radii[n + 1] = R
        jumps[n] = st.psi_jump
    return HSTrajectory(np.arange(steps + 1) * dt, radii[:, None], np.full(steps + 1, phase),
                        psi_jumps=jumps)
