"""Lyapunov exponents and stationary measures of random circle diffeomorphisms.

Monte Carlo chains give the ground truth; the second-order expansion around a
random rotation gives the closed form it is compared with.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circle import CircleDiffeo, distance_to_rotation
from .cohomology import RESONANCE_FLOOR, averaged_back_rotation, solve_Ubar
from .ensemble import RandomEnsemble
from .periodic import PeriodicMap

CHUNK = 4096


@dataclass(frozen=True)
class LyapunovEstimate:
    value: float
    std_error: float
    n_steps: int
    n_samples: int
    seed: int
    # spread of the per-chain averages; a diagnostic for the choice of x0
    spread: float = 0.0

    def upper(self, k: float = 3.0) -> float:
        """``|value| + k * std_error``, the conservative magnitude."""
        return abs(self.value) + k * self.std_error


@dataclass(frozen=True)
class StationaryHistogram:
    masses: np.ndarray
    n_draws: int = 0

    @property
    def bins(self) -> int:
        return self.masses.size

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.bins + 1) / self.bins

    def density(self) -> np.ndarray:
        return self.masses * self.bins

    def integrate(self, phi: PeriodicMap) -> float:
        """``int phi d(mu_hist)`` with the histogram read as a piecewise-constant density."""
        w = 1.0 / self.bins
        left = np.arange(self.bins) * w
        p = np.arange(1, phi.degree + 1)
        # exact average of exp(2 i pi p x) over each bin
        avg = np.exp(2j * np.pi * np.outer(left, p)) * np.sinc(p * w) * np.exp(1j * np.pi * p * w)
        modes = avg @ phi.coeffs[1:]
        return float(phi.mean + 2.0 * np.dot(self.masses, modes.real))


class _AtomTable:
    """Stacked coefficients of ``phi_i`` and ``phi_i'`` for vectorized chains."""

    def __init__(self, f: RandomEnsemble):
        deg = max(max(fi.phi.effective_degree() for fi in f.values), 1)
        self.degree = deg
        p = np.arange(deg + 1)
        self.phi = np.array([fi.phi.coeffs[: deg + 1] for fi in f.values])
        self.dphi = self.phi * (2j * np.pi * p)
        self.cdf = f.cdf()
        self.w = f.w

    def _powers(self, x):
        z = np.exp(2j * np.pi * x)
        zp = np.empty(x.shape + (self.degree + 1,), dtype=complex)
        zp[..., 0] = 1.0
        np.cumprod(np.broadcast_to(z[..., None], x.shape + (self.degree,)), axis=-1, out=zp[..., 1:])
        return zp

    def eval(self, x):
        """``(phi_i(x), phi_i'(x))`` with shape ``x.shape + (m,)``."""
        zp = self._powers(x)
        c0 = self.phi[:, 0].real
        # einsum keeps each entry independent of the batch size
        phi = 2.0 * np.einsum("...k,mk->...m", zp, self.phi).real - c0
        dphi = 2.0 * np.einsum("...k,mk->...m", zp, self.dphi).real
        return phi, dphi


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _uniform_block(rngs, size: int) -> np.ndarray:
    return np.stack([r.random(size) for r in rngs])


def run_chains(worker, n_chains: int, threads: int = 1) -> list:
    """Apply ``worker(lo, hi)`` to contiguous chain ranges, in order.

    Chains own their random streams, so the split changes nothing but speed.
    """
    threads = max(1, min(int(threads), n_chains))
    cuts = np.linspace(0, n_chains, threads + 1).astype(int)
    ranges = list(zip(cuts[:-1], cuts[1:]))
    if threads == 1:
        return [worker(lo, hi) for lo, hi in ranges]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(lambda r: worker(*r), ranges))


def mc_lyapunov(f: RandomEnsemble, n_steps: int, n_samples: int, seed: int,
                estimator: str = "conditional", burn_in: int = 0, threads: int = 1) -> LyapunovEstimate:
    """Average of ``(1/n) ln g_n'(x0)`` over independent chains.

    Each chain draws its atoms from its own spawned seed, so results do not
    depend on how chains are batched.  ``estimator="pathwise"`` accumulates
    ``ln f_k'(x_k)`` for the drawn atom; ``"conditional"`` accumulates its
    expectation over the atom law at ``x_k``.  Both converge to the same
    exponent, the conditional one with far smaller variance near rotations.
    """
    if n_steps < 1 or n_samples < 1:
        raise ValueError("n_steps and n_samples must be positive")
    if estimator not in ("conditional", "pathwise"):
        raise ValueError(f"unknown estimator {estimator!r}")
    table = _AtomTable(f)
    rngs = _streams(seed, n_samples)
    x0 = (np.arange(n_samples) + 0.5) / n_samples
    total = burn_in + n_steps

    def worker(lo, hi):
        x = x0[lo:hi].copy()
        streams = rngs[lo:hi]
        rows = np.arange(hi - lo)
        acc = np.zeros(hi - lo)
        done = 0
        while done < total:
            size = min(CHUNK, total - done)
            idx = np.searchsorted(table.cdf, _uniform_block(streams, size), side="right")
            for k in range(size):
                phi, dphi = table.eval(x)
                i = idx[:, k]
                if done + k >= burn_in:
                    if estimator == "pathwise":
                        acc += np.log1p(dphi[rows, i])
                    else:
                        acc += np.einsum("sm,m->s", np.log1p(dphi), table.w)
                x = np.mod(x + phi[rows, i], 1.0)
            done += size
        return acc

    per_chain = np.concatenate(run_chains(worker, n_samples, threads)) / n_steps
    std = float(per_chain.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    return LyapunovEstimate(float(per_chain.mean()), std, n_steps, n_samples, seed,
                            float(np.ptp(per_chain)))


def mc_stationary(f: RandomEnsemble, burn_in: int, n_draws: int, bins: int, seed: int,
                  n_chains: int = 64, threads: int = 1) -> StationaryHistogram:
    """Histogram of ``n_draws`` chain states (split over ``n_chains``) after ``burn_in`` steps."""
    if burn_in < 1 or n_draws < 1:
        raise ValueError("burn_in and n_draws must be >= 1")
    n_chains = min(n_chains, n_draws)
    table = _AtomTable(f)
    rngs = _streams(seed, n_chains)
    per_chain = -(-n_draws // n_chains)
    x0 = (np.arange(n_chains) + 0.5) / n_chains
    total = burn_in + per_chain

    def worker(lo, hi):
        x = x0[lo:hi].copy()
        streams = rngs[lo:hi]
        rows = np.arange(hi - lo)
        counts = np.zeros(bins, dtype=np.int64)
        done = 0
        while done < total:
            size = min(CHUNK, total - done)
            idx = np.searchsorted(table.cdf, _uniform_block(streams, size), side="right")
            for k in range(size):
                phi, _ = table.eval(x)
                x = np.mod(x + phi[rows, idx[:, k]], 1.0)
                if done + k >= burn_in:
                    counts += np.bincount(np.minimum((x * bins).astype(np.int64), bins - 1),
                                          minlength=bins)
            done += size
        return counts

    counts = sum(run_chains(worker, n_chains, threads))
    return StationaryHistogram(counts / counts.sum(), int(counts.sum()))


def perturbations(f: RandomEnsemble, alpha: RandomEnsemble) -> RandomEnsemble:
    """Per-atom ``zeta_i = f_i - r_{alpha_i}``."""
    return f.zip_map(alpha, lambda fi, a: fi.zeta(a))


def stationary_density_order1(f: RandomEnsemble, alpha: RandomEnsemble,
                              resonance_floor: float = RESONANCE_FLOOR) -> PeriodicMap:
    """First-order density ``h1 = 1 - (Ubar zbar)'`` with ``zbar = E[zeta o r_{-alpha}]``."""
    zbar = averaged_back_rotation(perturbations(f, alpha), alpha)
    eta = solve_Ubar(zbar, alpha, resonance_floor)
    return 1.0 - eta.derivative()


def order2_corrector(f: RandomEnsemble, alpha: RandomEnsemble,
                     resonance_floor: float = RESONANCE_FLOOR) -> PeriodicMap:
    """``eta = Ubar E[zeta o r_{-alpha}]``, the deterministic map in the expansion."""
    zbar = averaged_back_rotation(perturbations(f, alpha), alpha)
    return solve_Ubar(zbar, alpha, resonance_floor)


def lyapunov_order2_forms(f: RandomEnsemble, alpha: RandomEnsemble,
                          resonance_floor: float = RESONANCE_FLOOR) -> tuple[float, float]:
    """Quadratic term by grid quadrature and by the Fourier-side sum.

    Quadrature: ``-1/2 sum_i w_i int (zeta_i' + eta' - eta' o r_{alpha_i})^2``.
    Fourier: ``-1/2 sum_i w_i sum_{p != 0} (2 pi p)^2 |zeta_i^(p) + eta^(p)(1 - e^{2 i pi p alpha_i})|^2``.
    """
    zetas = perturbations(f, alpha)
    eta = order2_corrector(f, alpha, resonance_floor)
    deta = eta.derivative()
    direct = 0.0
    fourier = 0.0
    p = np.arange(1, eta.degree + 1)
    for (w, z), a in zip(zetas, alpha.values):
        g = z.derivative() + deta - deta.shift(a)
        direct += w * float(np.mean(g.values ** 2))
        amp = z.coeffs[1:] + eta.coeffs[1:] * (1.0 - np.exp(2j * np.pi * p * a))
        fourier += w * 2.0 * float(np.sum((2 * np.pi * p) ** 2 * np.abs(amp) ** 2))
    return -0.5 * direct, -0.5 * fourier


def analytic_lyapunov_order2(f: RandomEnsemble, alpha: RandomEnsemble,
                             resonance_floor: float = RESONANCE_FLOOR, check_tol: float = 1e-10) -> float:
    direct, fourier = lyapunov_order2_forms(f, alpha, resonance_floor)
    if abs(direct - fourier) > check_tol * max(1.0, abs(direct)):
        raise ArithmeticError(f"quadrature and Fourier forms disagree: {direct!r} vs {fourier!r}")
    if direct > 0:
        raise ArithmeticError(f"second-order term must be non-positive, got {direct!r}")
    return direct


def perturbation_size(f: RandomEnsemble, alpha: RandomEnsemble, k: int = 3) -> float:
    """``||d_k(f, r_alpha)||_{L^3}``, the size entering the cubic remainder."""
    d = np.array([distance_to_rotation(fi, a, k) for fi, a in zip(f.values, alpha.values)])
    return float(np.dot(alpha.w, d ** 3) ** (1.0 / 3.0))


def perturbed_rotations(alpha: RandomEnsemble, zetas, scale: float = 1.0) -> RandomEnsemble:
    """Ensemble ``r_{alpha_i} + scale * zeta_i`` sharing the weights of ``alpha``."""
    return RandomEnsemble(alpha.weights, tuple(
        CircleDiffeo.perturbed_rotation(a, z * scale) for a, z in zip(alpha.values, zetas)))
