"""Conservative Q-Wiener noise and its time-smeared counterpart.

Noise is represented in modal coordinates: an increment is a vector ``z`` of
length ``n_modes`` and the corresponding field is ``sum_k z_k e_k`` where the
``e_k`` are L2-orthonormal Neumann eigenfunctions with the constant mode
left out.  Mode amplitudes follow ``alpha_k = a0 (1 + lambda_k)^(-s/2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.signal import fftconvolve

from .errors import DivergentTrace, KernelUnresolved, SpectrumGridMismatch
from .field_core import Field2D, Grid2D, RadialField, RadialGrid, dct2, idct2

__all__ = [
    "QSpectrum",
    "SquareNoise",
    "RadialNoise",
    "TraceReport",
    "SmearKernel",
    "NoisePath",
    "WienerSource",
    "SmearedSource",
    "noise_model",
    "radial_eigenbasis",
    "wiener_increment_2d",
    "wiener_increment_radial",
    "trace_report",
    "smeared_path",
    "smoothed_nodes",
    "spectral_traces",
]

# relative growth of a partial trace sum under cutoff doubling beyond which
# the sum is declared divergent
CAUCHY_TOL = 0.25


@dataclass(frozen=True)
class QSpectrum:
    """Power-law spectrum of a conservative trace-class covariance.

    ``cutoff`` is the largest mode index kept per axis on the square and the
    number of nonconstant modes kept radially.  ``None`` means half the grid.
    """

    s: float = 2.5
    a0: float = 1.0
    cutoff: int | None = None

    def __post_init__(self):
        if self.a0 < 0:
            raise ValueError("noise amplitude a0 must be nonnegative")
        if self.cutoff is not None and self.cutoff < 1:
            raise ValueError("noise cutoff must be >= 1")

    def amplitude(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        alpha = self.a0 * (1.0 + lam) ** (-self.s / 2)
        return np.where(lam > 0, alpha, 0.0)

    def lattice(self, cutoff: int) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and amplitudes on ``0 <= k1, k2 <= cutoff`` (square law)."""
        k = np.pi * np.arange(cutoff + 1)
        lam = k[:, None] ** 2 + k[None, :] ** 2
        return lam, self.amplitude(lam)


@dataclass(frozen=True)
class TraceReport:
    trQ: float
    trNegLapQ: float
    cutoff: int
    relative_change: float


def spectral_traces(lam, alpha) -> tuple[float, float]:
    """``(sum alpha^2, sum lambda alpha^2)`` over an explicit mode list."""
    lam = np.asarray(lam, dtype=float)
    a2 = np.asarray(alpha, dtype=float) ** 2
    return float(a2.sum()), float((lam * a2).sum())


def _cauchy(spectrum, lam_a, alpha_a, lam_b, alpha_b, cutoff) -> TraceReport:
    tq = float(np.sum(alpha_b**2))
    tl = float(np.sum(lam_b * alpha_b**2))
    tl_a = float(np.sum(lam_a * alpha_a**2))
    change = (tl - tl_a) / tl if tl > 0 else 0.0
    if change > CAUCHY_TOL:
        raise DivergentTrace(
            f"Tr((-Delta)Q) partial sums grow by {change:.1%} under cutoff doubling "
            f"(s={spectrum.s}); the spectrum decays too slowly"
        )
    return TraceReport(tq, tl, cutoff, change)


def trace_report(spectrum: QSpectrum, grid: Grid2D | RadialGrid | None = None) -> TraceReport:
    """``(Tr Q, Tr((-Delta) Q))`` with a Cauchy test on the partial sums.

    On the square (or with ``grid=None``) the sums run over the lattice law
    up to the cutoff and are compared against the doubled cutoff.  Radially
    the discrete eigenvalues are used and the comparison is with half the
    cutoff.
    """
    if isinstance(grid, RadialGrid):
        nm = RadialNoise(grid, spectrum)
        lam, alpha = nm.eigenvalues, nm.alpha
        half = max(1, len(lam) // 2)
        return _cauchy(spectrum, lam[:half], alpha[:half], lam, alpha, len(lam))
    if grid is not None:
        cutoff = spectrum.cutoff if spectrum.cutoff is not None else grid.n // 2
    else:
        cutoff = spectrum.cutoff if spectrum.cutoff is not None else 64
    lam_a, alpha_a = spectrum.lattice(cutoff)
    lam_b, alpha_b = spectrum.lattice(2 * cutoff)
    report = _cauchy(spectrum, lam_a, alpha_a, lam_b, alpha_b, cutoff)
    # report the sums actually used at the cutoff
    return TraceReport(
        float(np.sum(alpha_a**2)),
        float(np.sum(lam_a * alpha_a**2)),
        cutoff,
        report.relative_change,
    )


# --------------------------------------------------------------------------
# modal bases
# --------------------------------------------------------------------------


class SquareNoise:
    """Cosine modes on the unit square, constant mode excluded."""

    def __init__(self, grid: Grid2D, spectrum: QSpectrum):
        cutoff = spectrum.cutoff if spectrum.cutoff is not None else grid.n // 2
        if cutoff > grid.n - 1:
            raise SpectrumGridMismatch(
                f"cutoff {cutoff} exceeds the {grid.n - 1} resolvable modes of an n={grid.n} grid"
            )
        self.grid = grid
        self.spectrum = spectrum
        self.cutoff = cutoff
        idx = np.arange(grid.n)
        mask = (idx[:, None] <= cutoff) & (idx[None, :] <= cutoff)
        mask[0, 0] = False
        self.mask = mask
        self.eigenvalues = grid.eigenvalues[mask]
        self.alpha = spectrum.amplitude(self.eigenvalues)
        self._to_coeff = 1.0 / grid.mode_norms[mask]

    @property
    def n_modes(self) -> int:
        return int(self.mask.sum())

    def coefficients(self, z: np.ndarray) -> np.ndarray:
        """Cosine coefficients of ``sum_k z_k e_k``; leading axes are batched."""
        z = np.asarray(z, dtype=float)
        c = np.zeros(z.shape[:-1] + (self.grid.n, self.grid.n))
        c[..., self.mask] = z * self._to_coeff
        return c

    def synthesize(self, z: np.ndarray) -> np.ndarray:
        return idct2(self.coefficients(z), self.grid)

    def project(self, values: np.ndarray) -> np.ndarray:
        """``<f, e_k>`` for every kept mode."""
        c = dct2(np.asarray(values, dtype=float), self.grid)
        return c[..., self.mask] / self._to_coeff


def radial_eigenbasis(grid: RadialGrid, count: int | None = None):
    """Nonconstant eigenpairs of the discrete radial Neumann Laplacian.

    Returns ``(lam, B)`` with ``-L B[:, k] = lam[k] B[:, k]`` and
    ``B.T @ diag(w) @ B = I``; eigenvalues ascend, the zero mode is dropped.
    """
    w = grid.weights
    K = grid.stiffness
    sw = np.sqrt(w)
    diag = -K.diagonal() / w
    off = -K.diagonal(1) / (sw[:-1] * sw[1:])
    count = grid.nr - 1 if count is None else count
    lam, q = eigh_tridiagonal(diag, off, select="i", select_range=(1, count))
    vecs = q / sw[:, None]
    # fix signs so that each mode is positive at the origin
    vecs *= np.where(vecs[0] < 0, -1.0, 1.0)
    return lam, vecs


class RadialNoise:
    """Weighted-orthonormal radial eigenmodes, constant mode excluded."""

    def __init__(self, grid: RadialGrid, spectrum: QSpectrum):
        cutoff = spectrum.cutoff if spectrum.cutoff is not None else (grid.nr - 1) // 2
        if cutoff > grid.nr - 1:
            raise SpectrumGridMismatch(
                f"cutoff {cutoff} exceeds the {grid.nr - 1} nonconstant modes of the radial grid"
            )
        self.grid = grid
        self.spectrum = spectrum
        self.cutoff = cutoff
        self.eigenvalues, self.vectors = radial_eigenbasis(grid, cutoff)
        self.alpha = spectrum.amplitude(self.eigenvalues)

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    def synthesize(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z) @ self.vectors.T

    def project(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values) * self.grid.weights) @ self.vectors

    def inverse_laplacian(self, z: np.ndarray) -> np.ndarray:
        """Node values of the mean-zero ``L^{-1}`` applied to ``sum_k z_k b_k``."""
        return self.synthesize(-np.asarray(z) / self.eigenvalues)


def noise_model(grid, spectrum: QSpectrum):
    if isinstance(grid, Grid2D):
        return SquareNoise(grid, spectrum)
    if isinstance(grid, RadialGrid):
        return RadialNoise(grid, spectrum)
    raise TypeError(f"unsupported grid {grid!r}")


# --------------------------------------------------------------------------
# Wiener increments
# --------------------------------------------------------------------------


class WienerSource:
    """Per-step modal Q-Wiener increments ``alpha_k sqrt(dt) Z_k``."""

    def __init__(self, alpha: np.ndarray, dt: float, rng: np.random.Generator):
        self.alpha = np.asarray(alpha, dtype=float)
        self.dt = dt
        self.rng = rng

    def draw(self, count: int) -> np.ndarray:
        z = self.rng.standard_normal((count, len(self.alpha)))
        return z * (self.alpha * math.sqrt(self.dt))

    def draw_with_wiener(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        inc = self.draw(count)
        return inc, inc


def wiener_increment_2d(spectrum: QSpectrum, grid: Grid2D, dt: float, rng) -> Field2D:
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    nm = SquareNoise(grid, spectrum)
    z = rng.standard_normal(nm.n_modes) * nm.alpha * math.sqrt(dt)
    c = nm.coefficients(z)
    return Field2D(grid, idct2(c, grid), c)


def wiener_increment_radial(spectrum: QSpectrum, grid: RadialGrid, dt: float, rng,
                            model: RadialNoise | None = None) -> RadialField:
    """Radial increment; pass ``model`` to reuse a precomputed eigenbasis."""
    if model is None:
        model = RadialNoise(grid, spectrum)
    elif model.grid != grid or model.spectrum != spectrum:
        raise SpectrumGridMismatch("radial noise model was built for another grid or spectrum")
    z = rng.standard_normal(model.n_modes) * model.alpha * math.sqrt(dt)
    return RadialField(grid, model.synthesize(z))


# --------------------------------------------------------------------------
# smeared noise
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SmearKernel:
    """Mollifier ``rho(t) = (35/32) (1 - t^2)^3`` on [-1, 1], rescaled to
    ``rho_eps(t) = eps^-gamma rho(t / eps^gamma)``."""

    gamma: float = 1.0
    resolution: int = 8

    NORM = 35.0 / 32.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @classmethod
    def rho(cls, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.where(np.abs(t) < 1.0, cls.NORM * (1.0 - t**2) ** 3, 0.0)

    def width(self, eps: float) -> float:
        return eps**self.gamma

    def rho_eps(self, t, eps: float) -> np.ndarray:
        w = self.width(eps)
        return self.rho(np.asarray(t) / w) / w

    def half_width(self, eps: float, dt: float) -> int:
        """Number of whole steps inside the support on one side."""
        w = self.width(eps)
        if dt > w / self.resolution:
            raise KernelUnresolved(
                f"dt={dt:g} does not resolve kernel width {w:g} (need dt <= {w / self.resolution:g})"
            )
        return int(math.floor(w / dt * (1 + 1e-12)))

    def weights(self, eps: float, dt: float) -> np.ndarray:
        """Samples ``rho_eps(k dt)`` for ``|k| <= L``, renormalised to ``sum * dt = 1``."""
        L = self.half_width(eps, dt)
        k = np.arange(-L, L + 1)
        w = self.rho_eps(k * dt, eps)
        return w / (w.sum() * dt)


class SmearedSource:
    """Streams ``eps``-smeared increments ``xi^eps(t_{m+1/2}) dt`` per step.

    Underlying Wiener increments live on the step grid and start ``L`` steps
    before ``t = 0``; the negative-time part comes from an independent child
    stream, as for a two-sided Wiener process.  With ``record=True`` every
    unit-amplitude increment drawn is kept in ``history``.
    """

    def __init__(self, alpha: np.ndarray, kernel: SmearKernel, eps: float, dt: float,
                 rng: np.random.Generator, record: bool = False):
        self.alpha = np.asarray(alpha, dtype=float)
        self.kappa = kernel.weights(eps, dt)
        self.L = (len(self.kappa) - 1) // 2
        self.dt = dt
        rng_neg, self._rng = rng.spawn(2)
        # drawn backwards from t = 0, so kernels of different width see the same path
        neg = rng_neg.standard_normal((self.L, len(self.alpha)))[::-1] * math.sqrt(dt)
        self._buffer = neg  # increments j in [m0 - L, m0 - L + len)
        self._m0 = 0
        self.history = [neg] if record else None

    def _extend(self, upto: int) -> None:
        have = self._m0 - self.L + len(self._buffer)
        if upto > have:
            extra = self._rng.standard_normal((upto - have, len(self.alpha))) * math.sqrt(self.dt)
            self._buffer = np.vstack([self._buffer, extra])
            if self.history is not None:
                self.history.append(extra)

    def draw_with_wiener(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(smeared, wiener)`` modal increments for the next ``count`` steps."""
        L = self.L
        self._extend(self._m0 + count + L)
        block = self._buffer[: count + 2 * L]
        xi = fftconvolve(block, self.kappa[:, None], mode="valid", axes=0)[:count]
        wiener = self._buffer[L : L + count] * self.alpha
        self._buffer = self._buffer[count:]
        self._m0 += count
        return xi * self.dt * self.alpha, wiener

    def draw(self, count: int) -> np.ndarray:
        return self.draw_with_wiener(count)[0]


@dataclass
class NoisePath:
    """A sampled two-sided Wiener path with its smeared derivative.

    ``increments[j]`` is ``W(t_{j-L+1}) - W(t_{j-L})`` on the step grid, so
    index ``L`` is the first increment after ``t = 0``.  ``xi[m]`` is the
    smeared derivative at the step midpoint ``(m + 1/2) dt``.
    """

    dt: float
    eps: float
    kernel: SmearKernel
    L: int
    increments: np.ndarray
    xi: np.ndarray
    seed: int | None = None
    alpha: np.ndarray = field(default_factory=lambda: np.ones(1))

    @property
    def steps(self) -> int:
        return self.xi.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def wiener(self) -> np.ndarray:
        """``W`` at nodes ``t_0 .. t_M`` with ``W_0 = 0``."""
        pos = self.increments[self.L : self.L + self.steps]
        return np.vstack([np.zeros((1, pos.shape[1])), np.cumsum(pos, axis=0)])

    def to_csv(self, path) -> None:
        """Dump ``t`` and the modal coordinates of ``W(t)`` (one column per mode)."""
        W = self.wiener()
        data = np.column_stack([self.times, W])
        header = ",".join(["t"] + [f"mode{k}" for k in range(W.shape[1])])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")

    def smoothed(self) -> np.ndarray:
        """``W^eps`` at nodes ``t_0 .. t_M`` by discrete convolution."""
        return smoothed_nodes(self.increments, self.kernel.weights(self.eps, self.dt) * self.dt,
                              self.L, self.steps)


def smoothed_nodes(increments: np.ndarray, kappa_dt: np.ndarray, offset: int, steps: int) -> np.ndarray:
    """Discrete ``W^eps(t_m) = sum_k kappa_k dt W(t_{m-k})`` for ``m = 0..steps``.

    ``increments[j]`` covers ``[t_{j-offset}, t_{j-offset+1}]`` and
    ``W(t_0) = 0``.  The kernel half width must not exceed ``offset``.
    """
    L = (len(kappa_dt) - 1) // 2
    if L > offset:
        raise ValueError("path does not extend far enough before t = 0 for this kernel")
    nodes = np.vstack([np.zeros((1,) + increments.shape[1:]), np.cumsum(increments, axis=0)])
    nodes = nodes - nodes[offset]
    start = offset - L
    window = nodes[start : offset + steps + L + 1]
    return fftconvolve(window, kappa_dt[:, None], mode="valid", axes=0)[: steps + 1]


def smeared_path(alpha, kernel: SmearKernel, eps: float, T: float, dt: float,
                 rng: np.random.Generator | int) -> NoisePath:
    """Materialise a smeared path over ``[0, T]`` for modal amplitudes ``alpha``.

    ``alpha`` is a noise model's amplitude vector, or a scalar for a single
    Brownian mode.
    """
    seed = rng if isinstance(rng, (int, np.integer)) else None
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    steps = int(round(T / dt))
    src = SmearedSource(alpha, kernel, eps, dt, rng, record=True)
    xi_dt, _ = src.draw_with_wiener(steps)
    increments = np.vstack(src.history) * alpha
    return NoisePath(dt, eps, kernel, src.L, increments, xi_dt / dt, seed, alpha)
