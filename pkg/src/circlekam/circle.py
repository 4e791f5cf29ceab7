"""Lifts of orientation-preserving circle diffeomorphisms ``f = Id + phi``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import RandomEnsemble
from .periodic import (DEFAULT_DEGREE, DEFAULT_GRID, PeriodicMap, SpectralUnderresolution,
                       _evaluate, ck_norm, grid)

ALIASING_TOL = 1e-8
NEWTON_TOL = 1e-13
NEWTON_MAX_ITER = 50
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class InversionError(ArithmeticError):
    """Newton inversion of a lift failed (derivative close to zero)."""


@dataclass(frozen=True)
class CircleDiffeo:
    """``f(x) = x + phi(x)`` with ``phi`` 1-periodic and ``1 + phi' > 0``."""

    phi: PeriodicMap

    def __post_init__(self):
        slope = 1.0 + self.phi.derivative().values
        if np.min(slope) <= 0:
            raise ValueError(f"not orientation preserving: min f' = {np.min(slope):.3g}")

    @classmethod
    def rotation(cls, alpha: float, degree: int = DEFAULT_DEGREE,
                 grid_size: int = DEFAULT_GRID) -> "CircleDiffeo":
        return cls(PeriodicMap.constant(alpha, degree, grid_size))

    @classmethod
    def identity(cls, degree: int = DEFAULT_DEGREE, grid_size: int = DEFAULT_GRID) -> "CircleDiffeo":
        return cls.rotation(0.0, degree, grid_size)

    @classmethod
    def perturbed_rotation(cls, alpha: float, zeta: PeriodicMap) -> "CircleDiffeo":
        return cls(zeta + alpha)

    @property
    def degree(self) -> int:
        return self.phi.degree

    @property
    def grid_size(self) -> int:
        return self.phi.grid_size

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x + self.phi(x)

    def slope(self, x):
        return 1.0 + self.phi.derivative()(x)

    def min_slope(self) -> float:
        return float(1.0 + np.min(self.phi.derivative().values))

    def max_slope(self) -> float:
        return float(1.0 + np.max(self.phi.derivative().values))

    def zeta(self, alpha: float) -> PeriodicMap:
        """Periodic deviation ``f - r_alpha``."""
        return self.phi - alpha


def distance(f: CircleDiffeo, g: CircleDiffeo, k: int = 0) -> float:
    """``d_k(f, g) = ||f - g||_k``."""
    return ck_norm(f.phi - g.phi, k)


def distance_to_rotation(f: CircleDiffeo, alpha: float, k: int = 0) -> float:
    return ck_norm(f.phi - alpha, k)


def compose(f: CircleDiffeo, g: CircleDiffeo, aliasing_tol: float = ALIASING_TOL) -> CircleDiffeo:
    """``f o g`` sampled on the grid and re-projected to the common degree."""
    x = grid(g.grid_size)
    gx = x + g.phi.values
    vals = g.phi.values + f.phi(gx)
    return CircleDiffeo(PeriodicMap.from_values(vals, g.degree, aliasing_tol))


def invert(f: CircleDiffeo, tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER,
           aliasing_tol: float = ALIASING_TOL) -> CircleDiffeo:
    """Inverse lift via per-point Newton on ``y + phi(y) = x``."""
    x = grid(f.grid_size)
    dphi = f.phi.derivative()
    y = x - f.phi.values
    for _ in range(max_iter):
        r = y + f.phi(y) - x
        y = y - r / (1.0 + dphi(y))
        if np.max(np.abs(r)) < tol:
            break
    else:
        res = np.max(np.abs(y + f.phi(y) - x))
        if res >= tol:
            raise InversionError(f"Newton did not converge (residual {res:.2e}); min f' = {f.min_slope():.3g}")
    return CircleDiffeo(PeriodicMap.from_values(y - x, f.degree, aliasing_tol))


def conjugate(h: CircleDiffeo, f: CircleDiffeo) -> CircleDiffeo:
    """``h o f o h^-1``."""
    return compose(compose(h, f), invert(h))


def rotation_number(f: CircleDiffeo, n_iter: int, n_starts: int = 8) -> float:
    """Birkhoff estimate ``(F^n(x0) - x0) / n`` averaged over equispaced ``x0``."""
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    deg = f.phi.effective_degree()
    if deg == 0:
        return f.phi.mean
    coeffs = f.phi.coeffs[: deg + 1]
    x0 = np.arange(n_starts) / n_starts
    x = x0.copy()
    for _ in range(n_iter):
        x = x + _evaluate(coeffs, x)
    return float(np.mean((x - x0) / n_iter))


@dataclass(frozen=True)
class DiophantineProfile:
    """``value(q) = ||dist(q alpha, Z)||_{L^2}`` for ``1 <= q <= q_max`` and a fitted envelope.

    The envelope is the least-slope line in log-log coordinates anchored at
    ``q = 1`` that stays below every probed value: ``value(q) >= A / q**sigma``.
    """

    q: np.ndarray
    values: np.ndarray
    A: float
    sigma: float
    q_max: int
    resonant_q: tuple[int, ...] = field(default=())

    @property
    def resonant(self) -> bool:
        return bool(self.resonant_q)

    def value(self, q: int) -> float:
        q = abs(int(q))
        if not 1 <= q <= self.q_max:
            raise ValueError(f"q={q} not probed (q_max={self.q_max})")
        return float(self.values[q - 1])

    @property
    def sigma_int(self) -> int:
        """Smallest integer exponent not below the fitted one."""
        return int(math.ceil(self.sigma - 1e-9))

    def constant_for(self, sigma: float) -> float:
        """Largest ``A`` with ``value(q) >= A / q**sigma`` on the probed range."""
        return float(np.min(self.q ** sigma * self.values))

    def satisfied(self, A: float, sigma: float) -> bool:
        return bool(np.all(self.values >= A / self.q ** sigma * (1 - 1e-12)))


def _dist_to_int(x):
    return np.abs(x - np.round(x))


def diophantine_profile(alpha: RandomEnsemble, q_max: int, resonance_tol: float = 1e-12) -> DiophantineProfile:
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    q = np.arange(1, q_max + 1, dtype=float)
    a = np.asarray(alpha.values, dtype=float)
    d = _dist_to_int(np.outer(q, a))
    values = np.sqrt(d ** 2 @ alpha.w)
    resonant = tuple(int(k) for k in q[values < resonance_tol])
    if resonant:
        return DiophantineProfile(q, values, 0.0, math.inf, q_max, resonant)
    if q_max == 1:
        sigma = 0.0
    else:
        slopes = (np.log(values[1:]) - np.log(values[0])) / np.log(q[1:])
        sigma = max(0.0, -float(np.min(slopes)))
    A = float(np.min(q ** sigma * values))
    return DiophantineProfile(q, values, A, sigma, q_max, ())


__all__ = [
    "CircleDiffeo", "DiophantineProfile", "GOLDEN", "InversionError", "SpectralUnderresolution",
    "compose", "conjugate", "diophantine_profile", "distance", "distance_to_rotation", "invert",
    "rotation_number",
]
