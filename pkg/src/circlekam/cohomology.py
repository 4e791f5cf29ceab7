"""Averaged transfer operators and the small-divisor solvers ``U`` and ``Ubar``.

For a random angle ``alpha`` the averaged rotation acts diagonally on Fourier
modes with multiplier ``m_q = E[exp(2 i pi q alpha)]``.  ``U`` inverts
``I - T0`` on zero-mean functions; ``Ubar`` is its adjoint for the
``L^2(dx)`` pairing.
"""
from __future__ import annotations

import numpy as np

from .circle import ALIASING_TOL, CircleDiffeo
from .ensemble import RandomEnsemble
from .periodic import PeriodicMap, _evaluate, grid

RESONANCE_FLOOR = 1e-10


class ResonanceError(ArithmeticError):
    """A small divisor ``1 - E[exp(+-2 i pi q alpha)]`` is below the resonance floor."""

    def __init__(self, q: int, divisor: float, floor: float):
        super().__init__(f"resonant mode q={q}: |1 - m_q| = {divisor:.3e} <= {floor:.1e}")
        self.q = q
        self.divisor = divisor


def averaged_multiplier(alpha: RandomEnsemble, degree: int) -> np.ndarray:
    """``m_q = E[exp(2 i pi q alpha)]`` for ``q = 0 .. degree``."""
    q = np.arange(degree + 1)
    a = np.asarray(alpha.values, dtype=float)
    return np.exp(2j * np.pi * np.outer(q, a)) @ alpha.w


def transfer_T0(phi: PeriodicMap, alpha: RandomEnsemble) -> PeriodicMap:
    """``T0 phi = E[phi o r_alpha]``."""
    return PeriodicMap(phi.coeffs * averaged_multiplier(alpha, phi.degree), phi.grid_size)


def transfer_T(phi: PeriodicMap, f: RandomEnsemble, aliasing_tol: float = ALIASING_TOL) -> PeriodicMap:
    """``T phi = E[phi o f]`` averaged on the grid and re-projected."""
    x = grid(phi.grid_size)
    deg = max(phi.effective_degree(), 1)
    acc = np.zeros_like(x)
    for w, fi in f:
        acc += w * _evaluate(phi.coeffs[: deg + 1], x + fi.phi.values)
    return PeriodicMap.from_values(acc, phi.degree, aliasing_tol)


def _divide(psi: PeriodicMap, divisor: np.ndarray, floor: float) -> PeriodicMap:
    c = psi.coeffs
    out = np.zeros_like(c)
    mag = np.abs(divisor)
    for q in range(1, c.size):
        if c[q] == 0:
            continue
        if mag[q] <= floor:
            raise ResonanceError(q, float(mag[q]), floor)
        out[q] = c[q] / divisor[q]
    return PeriodicMap(out, psi.grid_size)


def solve_U(psi: PeriodicMap, alpha: RandomEnsemble, resonance_floor: float = RESONANCE_FLOOR) -> PeriodicMap:
    """Zero-mean solution of ``phi - T0 phi = psi - int psi``."""
    m = averaged_multiplier(alpha, psi.degree)
    return _divide(psi, 1.0 - m, resonance_floor)


def solve_Ubar(psi: PeriodicMap, alpha: RandomEnsemble, resonance_floor: float = RESONANCE_FLOOR) -> PeriodicMap:
    """Adjoint solver: divides mode ``q`` by ``1 - E[exp(-2 i pi q alpha)]``."""
    m = averaged_multiplier(alpha, psi.degree)
    return _divide(psi, 1.0 - np.conj(m), resonance_floor)


def cohomological_residual(phi: PeriodicMap, psi: PeriodicMap, alpha: RandomEnsemble) -> float:
    """``||(phi - T0 phi) - (psi - int psi)||_0`` on the refined grid."""
    return ((phi - transfer_T0(phi, alpha)) - (psi - psi.mean)).sup()


def averaged_back_rotation(zetas: RandomEnsemble, alpha: RandomEnsemble) -> PeriodicMap:
    """``E[zeta o r_{-alpha}]`` for per-atom ``zeta_i`` paired with angles ``alpha_i``."""
    acc = None
    for (w, z), a in zip(zetas, alpha.values):
        term = z.shift(-a) * w
        acc = term if acc is None else acc + term
    return acc
