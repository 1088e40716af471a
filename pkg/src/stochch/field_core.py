"""Scalar fields on the Neumann unit square and on the radial interval [0, 1].

The square uses cell-centred nodes ``x_j = (j + 1/2) h`` so that the cosine
modes ``cos(pi k x)`` are exactly the DCT-II basis.  A field is expanded as

    f(x, y) = sum_{k1, k2} c[k1, k2] cos(pi k1 x) cos(pi k2 y),

so a constant has ``c[0, 0] = 1`` and ``cos(pi x)`` has ``c[1, 0] = 1``.  The
Laplacian is the spectral multiplier ``-pi^2 (k1^2 + k2^2)``.

The radial interval carries a finite-volume Laplacian written as
``L = W^{-1} K`` with ``K`` symmetric and row sums zero, so that weighted
integrals of ``L f`` vanish identically and ``L`` is self-adjoint in the
weighted inner product.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp

from .errors import NonZeroMean

__all__ = [
    "Grid2D",
    "Field2D",
    "RadialGrid",
    "RadialField",
    "to_spectral",
    "from_spectral",
    "laplacian",
    "inv_laplacian",
    "integrate",
    "integrate_radial",
    "radial_laplacian",
    "gradient",
    "gradient_sq",
    "radial_gradient_sq",
    "mean",
    "save_field_csv",
    "load_field_csv",
    "save_field_binary",
    "load_field_binary",
]

MEAN_TOL = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# --------------------------------------------------------------------------
# square
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid2D:
    """Uniform cell-centred grid on [0, 1]^2 with ``n`` points per axis."""

    n: int

    def __post_init__(self):
        if self.n < 4:
            raise ValueError(f"grid needs n >= 4, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @cached_property
    def x(self) -> np.ndarray:
        return _frozen((np.arange(self.n) + 0.5) / self.n)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """``(X, Y)`` with ``X[i, j] = x_i``; axis 0 is x, axis 1 is y."""
        X, Y = np.meshgrid(self.x, self.x, indexing="ij")
        return _frozen(X), _frozen(Y)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return _frozen(np.pi * np.arange(self.n))

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """``lambda_k = pi^2 (k1^2 + k2^2)``, shape ``(n, n)``."""
        k = self.wavenumbers
        return _frozen(k[:, None] ** 2 + k[None, :] ** 2)

    @cached_property
    def _fwd_scale(self) -> np.ndarray:
        t = np.ones(self.n)
        t[0] = 0.5
        return _frozen(np.outer(t, t) / self.n**2)

    @cached_property
    def _inv_scale(self) -> np.ndarray:
        s = np.full(self.n, 0.5)
        s[0] = 1.0
        return _frozen(np.outer(s, s))

    @cached_property
    def mode_norms(self) -> np.ndarray:
        """L2 norm of each product cosine ``cos(pi k1 x) cos(pi k2 y)``."""
        t = np.full(self.n, math.sqrt(0.5))
        t[0] = 1.0
        return _frozen(np.outer(t, t))


# array-level transforms; the Field2D API wraps these


def dct2(values: np.ndarray, grid: Grid2D) -> np.ndarray:
    return sfft.dctn(values, type=2, axes=(-2, -1)) * grid._fwd_scale


def idct2(coeffs: np.ndarray, grid: Grid2D) -> np.ndarray:
    return sfft.dctn(coeffs * grid._inv_scale, type=3, axes=(-2, -1))


def _sine_synth(b: np.ndarray, axis: int) -> np.ndarray:
    """Evaluate ``sum_{m>=1} b_m sin(pi m x_j)`` along ``axis`` at the nodes."""
    b = np.moveaxis(b, axis, 0)
    x = np.zeros_like(b)
    x[:-1] = 0.5 * b[1:]
    return np.moveaxis(sfft.dst(x, type=3, axis=0), 0, axis)


def _cos_synth(c: np.ndarray, axis: int) -> np.ndarray:
    c = np.moveaxis(c, axis, 0)
    x = 0.5 * c
    x[0] = c[0]
    return np.moveaxis(sfft.dct(x, type=3, axis=0), 0, axis)


def spectral_gradient(coeffs: np.ndarray, grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    k = grid.wavenumbers
    gx = _cos_synth(_sine_synth(-k[:, None] * coeffs, axis=0), axis=1)
    gy = _sine_synth(_cos_synth(-k[None, :] * coeffs, axis=0), axis=1)
    return gx, gy


@dataclass(frozen=True, eq=False)
class Field2D:
    """Real scalar field on a :class:`Grid2D` with an optional cosine spectrum."""

    grid: Grid2D
    values: np.ndarray
    spectral: np.ndarray | None = None

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"values shape {v.shape} does not match grid n={self.grid.n}")
        object.__setattr__(self, "values", v)
        if self.spectral is not None:
            object.__setattr__(self, "spectral", _frozen(self.spectral))

    @classmethod
    def from_function(cls, grid: Grid2D, fn) -> "Field2D":
        X, Y = grid.mesh
        return cls(grid, np.broadcast_to(fn(X, Y), X.shape))

    @classmethod
    def constant(cls, grid: Grid2D, value: float) -> "Field2D":
        return cls(grid, np.full((grid.n, grid.n), float(value)))

    def coefficients(self) -> np.ndarray:
        if self.spectral is not None:
            return self.spectral
        return dct2(self.values, self.grid)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def to_spectral(f: Field2D) -> Field2D:
    if f.spectral is not None:
        return f
    return Field2D(f.grid, f.values, dct2(f.values, f.grid))


def from_spectral(grid: Grid2D, coeffs: np.ndarray) -> Field2D:
    coeffs = np.asarray(coeffs, dtype=float)
    return Field2D(grid, idct2(coeffs, grid), coeffs)


def laplacian(f: Field2D) -> Field2D:
    return from_spectral(f.grid, -f.grid.eigenvalues * f.coefficients())


def inv_laplacian(f: Field2D) -> Field2D:
    """Mean-zero solution ``g`` of ``laplacian(g) = f`` with Neumann walls."""
    c = f.coefficients()
    if abs(c[0, 0]) > MEAN_TOL:
        raise NonZeroMean(f"Neumann inverse needs a mean-zero field, mean = {c[0, 0]:.3e}")
    lam = f.grid.eigenvalues
    out = np.zeros_like(c)
    nz = lam > 0
    out[nz] = -c[nz] / lam[nz]
    return from_spectral(f.grid, out)


def mean(f) -> float:
    if isinstance(f, RadialField):
        return integrate_radial(f) / float(f.grid.weights.sum())
    return float(np.mean(f.values))


def integrate(f: Field2D) -> float:
    return float(np.sum(f.values) * f.grid.h**2)


def gradient(f: Field2D) -> tuple[np.ndarray, np.ndarray]:
    return spectral_gradient(f.coefficients(), f.grid)


def gradient_sq(f: Field2D) -> Field2D:
    gx, gy = gradient(f)
    return Field2D(f.grid, gx**2 + gy**2)


# --------------------------------------------------------------------------
# radial
# --------------------------------------------------------------------------


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


@dataclass(frozen=True)
class RadialGrid:
    """Uniform nodes ``r_j = j/(nr-1)`` on [0, 1] for a radial profile in R^d.

    Quadrature weights are control-volume volumes: ``w_0 = |B_{h/2}|``, the
    exact shell volume in the interior, and a half cell ``|S^{d-1}| r^{d-1} h/2``
    evaluated at the last face for the wall node.
    """

    d: int
    nr: int

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"radial grids support d = 2 or 3, got {self.d}")
        if self.nr < 8:
            raise ValueError(f"radial grid needs nr >= 8, got {self.nr}")

    @property
    def h(self) -> float:
        return 1.0 / (self.nr - 1)

    @property
    def omega(self) -> float:
        return sphere_area(self.d)

    @property
    def volume(self) -> float:
        """Volume of the unit ball."""
        return self.omega / self.d

    @cached_property
    def r(self) -> np.ndarray:
        return _frozen(np.linspace(0.0, 1.0, self.nr))

    @cached_property
    def faces(self) -> np.ndarray:
        return _frozen((np.arange(self.nr - 1) + 0.5) * self.h)

    @cached_property
    def face_area(self) -> np.ndarray:
        return _frozen(self.omega * self.faces ** (self.d - 1))

    @cached_property
    def weights(self) -> np.ndarray:
        d, om, fr = self.d, self.omega, self.faces
        w = np.empty(self.nr)
        w[0] = om / d * fr[0] ** d
        w[1:-1] = om / d * (fr[1:] ** d - fr[:-1] ** d)
        w[-1] = self.face_area[-1] * self.h / 2
        return _frozen(w)

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Symmetric ``K`` with ``(K f)_j = [a_{j+1/2} (f_{j+1}-f_j) - a_{j-1/2} (f_j-f_{j-1})] / h``."""
        c = self.face_area / self.h
        diag = np.zeros(self.nr)
        diag[:-1] -= c
        diag[1:] -= c
        return sp.diags([c, diag, c], [-1, 0, 1], format="csr")

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        return sp.diags(1.0 / self.weights) @ self.stiffness



@dataclass(frozen=True, eq=False)
class RadialField:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != (self.grid.nr,):
            raise ValueError(f"values shape {v.shape} does not match nr={self.grid.nr}")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: RadialGrid, fn) -> "RadialField":
        return cls(grid, np.broadcast_to(fn(grid.r), grid.r.shape))

    @classmethod
    def constant(cls, grid: RadialGrid, value: float) -> "RadialField":
        return cls(grid, np.full(grid.nr, float(value)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def integrate_radial(f: RadialField) -> float:
    return float(f.grid.weights @ f.values)


def radial_laplacian_values(values: np.ndarray, grid: RadialGrid) -> np.ndarray:
    return grid.laplacian_matrix @ values


def radial_laplacian(f: RadialField) -> RadialField:
    """Second-order radial Laplacian.

    At ``r = 0`` the stencil reduces to ``2 d (f_1 - f_0) / h^2``, the
    symmetry limit ``d f''(0)``.  At ``r = 1`` it equals the ghost-node stencil
    ``2 (f_{N-2} - f_{N-1}) / h^2`` for ``f'(1) = 0``; for data violating the
    wall condition the result is still returned, it is just inconsistent there.
    """
    return RadialField(f.grid, radial_laplacian_values(f.values, f.grid))


def radial_gradient_sq_values(values: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Node values of ``|d_r f|^2`` whose weighted sum equals the face energy.

    Each face contribution ``a h delta^2`` is split evenly between its two
    nodes, so ``sum_j w_j g_j = -f^T K f`` exactly.
    """
    delta = np.diff(values) / grid.h
    face_energy = grid.face_area * grid.h * delta**2
    g = np.zeros(grid.nr)
    g[:-1] += 0.5 * face_energy
    g[1:] += 0.5 * face_energy
    return g / grid.weights


def radial_gradient_sq(f: RadialField) -> RadialField:
    return RadialField(f.grid, radial_gradient_sq_values(f.values, f.grid))


# --------------------------------------------------------------------------
# snapshot export
# --------------------------------------------------------------------------

_BINARY_MAGIC = b"SCHF"


def save_field_csv(f: Field2D, path) -> None:
    """Row-major CSV with a header line ``n,<n>``."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"n,{f.grid.n}\n")
        np.savetxt(fh, f.values, delimiter=",", fmt="%.17g")


def load_field_csv(path) -> Field2D:
    path = Path(path)
    with path.open() as fh:
        key, n = fh.readline().strip().split(",")
        if key != "n":
            raise ValueError(f"{path}: expected header 'n,<n>'")
        values = np.loadtxt(fh, delimiter=",", ndmin=2)
    return Field2D(Grid2D(int(n)), values)


def save_field_binary(f: Field2D, path) -> None:
    """Binary snapshot: magic ``SCHF``, little-endian uint32 ``n``, then
    ``n*n`` little-endian float64 values in row-major order."""
    with Path(path).open("wb") as fh:
        fh.write(_BINARY_MAGIC)
        fh.write(np.uint32(f.grid.n).astype("<u4").tobytes())
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_field_binary(path) -> Field2D:
    raw = Path(path).read_bytes()
    if raw[:4] != _BINARY_MAGIC:
        raise ValueError(f"{path}: not a field snapshot")
    n = int(np.frombuffer(raw[4:8], dtype="<u4")[0])
    values = np.frombuffer(raw[8:], dtype="<f8").reshape(n, n)
    return Field2D(Grid2D(n), values)
