"""Cell-centered grids, the discrete Neumann Laplacian and its cosine basis.

Fields are plain ``numpy`` arrays whose shape equals ``grid.shape``. The
discrete Laplacian uses the 3-point (5-point in 2D) stencil with reflected
ghost cells, which the type-II DCT diagonalizes exactly. Cosine coefficients
are scaled so that Parseval holds in the discrete L2 inner product,
``sum(|c_k|^2) == sum(f^2) * cell_volume``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on an interval or rectangle."""

    n: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        if len(n) not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {len(n)}")
        if len(lengths) == 1 and len(n) == 2:
            lengths = lengths * 2
        if len(lengths) != len(n):
            raise ValueError("need one length per axis")
        if any(v <= 0 for v in n):
            raise ValueError(f"cell counts must be positive, got {n}")
        if any(not np.isfinite(v) or v <= 0 for v in lengths):
            raise ValueError(f"domain lengths must be positive, got {lengths}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def uniform(cls, n, length=1.0, dim=1) -> "Grid":
        return cls((n,) * dim, (length,) * dim)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def measure(self) -> float:
        return float(np.prod(self.lengths))

    def centers(self, axis: int = 0) -> np.ndarray:
        h = self.h[axis]
        return (np.arange(self.n[axis]) + 0.5) * h

    def mesh(self) -> tuple[np.ndarray, ...]:
        return np.meshgrid(*[self.centers(a) for a in range(self.dim)], indexing="ij")

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of -Δ_h on the cosine modes, shape ``grid.shape``."""
        nu = np.zeros(self.shape)
        for axis, (n, h) in enumerate(zip(self.n, self.h)):
            k = np.arange(n)
            nu_ax = (2.0 / h**2) * (1.0 - np.cos(np.pi * k / n))
            shape = [1] * self.dim
            shape[axis] = n
            nu = nu + nu_ax.reshape(shape)
        nu.flat[0] = 0.0
        return nu

    def mode(self, k) -> np.ndarray:
        """Cosine eigenmode with unit discrete L2 norm."""
        k = tuple(np.atleast_1d(k))
        coef = np.zeros(self.shape)
        coef[k] = 1.0
        return self.inverse(coef)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def full(self, value: float) -> np.ndarray:
        return np.full(self.shape, float(value))

    def check(self, f: np.ndarray, name: str = "field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ValueError(f"{name} has shape {f.shape}, grid expects {self.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError(f"{name} has non-finite entries")
        return f

    # cosine transforms -------------------------------------------------

    def forward(self, f: np.ndarray) -> np.ndarray:
        return fft.dctn(f, type=2, norm="ortho") * np.sqrt(self.cell_volume)

    def inverse(self, c: np.ndarray) -> np.ndarray:
        return fft.idctn(c, type=2, norm="ortho") / np.sqrt(self.cell_volume)


def laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Δ_h f with homogeneous Neumann ghost cells (ghost = boundary value)."""
    out = np.zeros_like(f, dtype=float)
    for axis, h in enumerate(grid.h):
        d = np.diff(f, axis=axis) / h**2
        lo = [slice(None)] * f.ndim
        hi = [slice(None)] * f.ndim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        # face fluxes; boundary faces carry zero flux
        out[tuple(lo)] += d
        out[tuple(hi)] -= d
    return out


def spectral_solve(grid: Grid, rhs: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    """Solve the operator with cosine-mode symbol ``symbol`` against ``rhs``."""
    return grid.inverse(grid.forward(rhs) / symbol)


def helmholtz_solve(grid: Grid, a: float, b: float, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(a I - b Δ_h) x = rhs`` exactly mode by mode."""
    if not a > 0:
        raise ValueError(f"helmholtz_solve needs a > 0, got {a}")
    if b < 0:
        raise ValueError(f"helmholtz_solve needs b >= 0, got {b}")
    if b == 0:
        return np.asarray(rhs, dtype=float) / a
    return spectral_solve(grid, rhs, a + b * grid.eigenvalues)


def integrate(grid: Grid, f: np.ndarray) -> float:
    """Midpoint quadrature of ``f`` over the domain."""
    return float(np.sum(f) * grid.cell_volume)


def inner(grid: Grid, f: np.ndarray, g: np.ndarray) -> float:
    return float(np.sum(f * g) * grid.cell_volume)


def l2(grid: Grid, f: np.ndarray) -> float:
    return float(np.sqrt(np.sum(f * f) * grid.cell_volume))


def grad_sq(grid: Grid, f: np.ndarray) -> float:
    """Squared discrete H1 seminorm, summed over interior faces."""
    total = 0.0
    for axis, h in enumerate(grid.h):
        d = np.diff(f, axis=axis) / h
        total += float(np.sum(d * d))
    return total * grid.cell_volume


def mean(grid: Grid, f: np.ndarray) -> float:
    return integrate(grid, f) / grid.measure


def h1_dual(grid: Grid, f: np.ndarray) -> float:
    c = grid.forward(f).ravel()
    nu = grid.eigenvalues.ravel()
    rest = np.sum(c[1:] ** 2 / nu[1:])
    return float(np.sqrt(rest + mean(grid, f) ** 2))


def h1(grid: Grid, f: np.ndarray) -> float:
    return float(np.sqrt(l2(grid, f) ** 2 + grad_sq(grid, f)))


def norms(grid: Grid, f: np.ndarray) -> dict[str, float]:
    """L2 norm, H1 seminorm, mean and the (H1)' norm of ``f``."""
    return {
        "l2": l2(grid, f),
        "h1_semi": float(np.sqrt(grad_sq(grid, f))),
        "mean": mean(grid, f),
        "h1_dual": h1_dual(grid, f),
    }
