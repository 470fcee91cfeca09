"""Double-well potential, proliferation function and the two energies."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .grid import Grid, grad_sq, integrate, laplacian, mean


class AssumptionWarning(UserWarning):
    """A user-supplied nonlinearity could not be checked against the growth bounds."""


@dataclass(frozen=True)
class ModelSpec:
    """Nonlinearities of the state system.

    ``potential`` is ``"quartic"`` (F = (s^2 - 1)^2 / 4) or ``"polynomial"``
    with ``poly_coeffs`` in increasing degree. ``proliferation`` is
    ``"constant"`` (P = P0) or ``"rational"`` (P = P0 / (1 + gamma s^2) + P1).
    """

    potential: str = "quartic"
    poly_coeffs: tuple[float, ...] = ()
    proliferation: str = "constant"
    P0: float = 1.0
    gamma: float = 1.0
    P1: float = 0.1
    _poly: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.potential == "quartic":
            coeffs = np.array([0.25, 0.0, -0.5, 0.0, 0.25])
        elif self.potential == "polynomial":
            coeffs = np.trim_zeros(np.asarray(self.poly_coeffs, dtype=float), "b")
            if coeffs.size == 0 or not np.all(np.isfinite(coeffs)):
                raise ValueError("polynomial potential needs finite, nonzero coefficients")
            deg = coeffs.size - 1
            if deg not in (2, 4) or coeffs[-1] <= 0:
                # growth exponent r must lie in [2, 6) and F must be coercive
                warnings.warn(
                    f"polynomial potential of degree {deg} with leading coefficient "
                    f"{coeffs[-1]:g} is outside the checked class; results unvalidated",
                    AssumptionWarning,
                    stacklevel=2,
                )
        else:
            raise ValueError(f"unknown potential {self.potential!r}")
        object.__setattr__(self, "_poly", coeffs)

        if self.proliferation not in ("constant", "rational"):
            raise ValueError(f"unknown proliferation {self.proliferation!r}")
        if not self.P0 > 0:
            raise ValueError(f"P0 must be positive, got {self.P0}")
        if self.proliferation == "rational":
            if self.gamma < 0:
                raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
            if not self.P1 > 0:
                raise ValueError(f"P1 must be positive, got {self.P1}")

    # potential ---------------------------------------------------------

    def F(self, s):
        return npoly.polyval(s, self._poly)

    def dF(self, s):
        if self.potential == "quartic":
            return s * s * s - s
        return npoly.polyval(s, npoly.polyder(self._poly))

    def d2F(self, s):
        if self.potential == "quartic":
            return 3.0 * s * s - 1.0
        return npoly.polyval(s, npoly.polyder(self._poly, 2))

    def potential_eval(self, s: float) -> dict[str, float]:
        return {"F": float(self.F(s)), "dF": float(self.dF(s)), "d2F": float(self.d2F(s))}

    def max_d2F(self, lo: float = -1.5, hi: float = 1.5) -> float:
        s = np.linspace(lo, hi, 3001)
        return float(np.max(self.d2F(s)))

    # proliferation -----------------------------------------------------

    def P(self, s):
        if self.proliferation == "constant":
            return np.full_like(np.asarray(s, dtype=float), self.P0)
        return self.P0 / (1.0 + self.gamma * s * s) + self.P1

    def dP(self, s):
        if self.proliferation == "constant":
            return np.zeros_like(np.asarray(s, dtype=float))
        d = 1.0 + self.gamma * s * s
        return -2.0 * self.gamma * self.P0 * s / (d * d)

    def proliferation_eval(self, s: float) -> dict[str, float]:
        return {"P": float(self.P(s)), "dP": float(self.dP(s))}

    @property
    def P_floor(self) -> float:
        return self.P0 if self.proliferation == "constant" else self.P1


def energy_total(grid: Grid, model: ModelSpec, phi: np.ndarray, sigma: np.ndarray) -> float:
    """Free energy: Dirichlet energy plus potential integral plus ½‖σ‖²."""
    if np.shape(phi) != grid.shape or np.shape(sigma) != grid.shape:
        raise ValueError("phi and sigma must live on the given grid")
    return (
        0.5 * grad_sq(grid, phi)
        + integrate(grid, model.F(phi))
        + 0.5 * integrate(grid, sigma * sigma)
    )


def upsilon(grid: Grid, model: ModelSpec, phi: np.ndarray, m: float) -> float:
    """Energy of the nonlocal elliptic problem with mass parameter ``m``."""
    return (
        0.5 * grad_sq(grid, phi)
        + integrate(grid, model.F(phi))
        + 0.5 * grid.measure * (m - mean(grid, phi)) ** 2
    )


def upsilon_change(grid: Grid, model: ModelSpec, phi: np.ndarray, delta: np.ndarray, m: float) -> float:
    """Υ(φ + δ) - Υ(φ) without cancellation: exact Taylor expansion of the
    polynomial potential plus the closed-form quadratic parts."""
    F_part = np.zeros(grid.shape)
    c = model._poly
    fact = 1.0
    for j in range(1, len(c)):
        c = npoly.polyder(c)
        fact *= j
        F_part += npoly.polyval(phi, c) / fact * delta**j
    a = mean(grid, phi)
    e = mean(grid, delta)
    return float(
        integrate(grid, -laplacian(grid, phi) * delta)
        + 0.5 * grad_sq(grid, delta)
        + integrate(grid, F_part)
        + 0.5 * grid.measure * e * (e - 2.0 * (m - a))
    )
