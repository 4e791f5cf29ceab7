"""KAM iteration conjugating a random circle diffeomorphism towards its rotations.

Each step solves the averaged cohomological equation for ``eta = Ubar zbar``,
conjugates every atom by the deterministic ``g = Id - S_T eta`` and measures
how far the result is from the rotations.  The Lyapunov exponent decides when
to stop: once it dominates the predicted quadratic gain the perturbation
cannot shrink any further.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .circle import CircleDiffeo, InversionError, compose, diophantine_profile, invert, rotation_number
from .cohomology import RESONANCE_FLOOR, ResonanceError, averaged_back_rotation, solve_Ubar
from .ensemble import RandomEnsemble
from .lyapunov import LyapunovEstimate, perturbations
from .periodic import DEFAULT_DEGREE, DEFAULT_GRID, PeriodicMap, ck_norm, random_trig, smooth_split

U0_RADIUS = 0.5
STOP_REASONS = ("converged", "obstruction", "left_U0", "max_iters", "resonance")


def triple_norm(z: RandomEnsemble, k: int) -> float:
    """``sqrt(E ||z||_k^2)``."""
    return float(math.sqrt(sum(w * ck_norm(zi, k) ** 2 for w, zi in z)))


def kam_k0(sigma_int: int) -> int:
    """Working regularity ``4 sigma + 7``."""
    return 4 * int(sigma_int) + 7


def schedule(n: int, Q: float) -> float:
    """Truncation level ``T_n = 2 ** (Q ** n)``."""
    return 2.0 ** (Q ** n)


@dataclass(frozen=True)
class KamConfig:
    C0: float
    k0: int
    K: int | None = None
    Q: float = 4.0 / 3.0
    max_iters: int = 12
    convergence_tol: float = 1e-9
    resonance_floor: float = RESONANCE_FLOOR
    # coefficients below this are treated as round-off after each conjugation
    coeff_floor: float = 1e-15
    N: int = DEFAULT_DEGREE
    M: int = DEFAULT_GRID

    def __post_init__(self):
        if not 1.0 < self.Q < 1.5:
            raise ValueError(f"Q must lie in (1, 3/2), got {self.Q!r}")
        if self.K is None:
            object.__setattr__(self, "K", self.k0)
        if self.K < self.k0:
            raise ValueError(f"K={self.K} is below k0={self.k0}")
        if self.C0 <= 0 or self.max_iters < 0:
            raise ValueError("C0 must be positive and max_iters non-negative")

    @classmethod
    def for_angles(cls, alpha: RandomEnsemble, C0: float, q_max: int = 64, **kw) -> "KamConfig":
        """Config whose ``k0`` follows the fitted diophantine exponent of ``alpha``."""
        prof = diophantine_profile(alpha, q_max)
        if prof.resonant:
            raise ResonanceError(prof.resonant_q[0], 0.0, 0.0)
        return cls(C0=C0, k0=kam_k0(prof.sigma_int), **kw)


@dataclass(frozen=True)
class KamStep:
    n: int
    T: float
    norm0: float
    normK: float
    action: str


@dataclass(frozen=True)
class KamReport:
    steps: tuple[KamStep, ...]
    stop_reason: str
    h: CircleDiffeo
    f_final: RandomEnsemble
    alpha: RandomEnsemble
    final_d0: float
    lyapunov: LyapunovEstimate
    config: KamConfig
    branches: tuple[str, ...] = field(default=())

    @property
    def ratio(self) -> float:
        lam = abs(self.lyapunov.value)
        return self.final_d0 / math.sqrt(lam) if lam > 0 else math.inf

    @property
    def iterations(self) -> int:
        return sum(s.action == "iterated" for s in self.steps)

    def to_text(self) -> str:
        """Columnar dump: a CSV header and one row per step, then ``# key = value`` summary lines."""
        out = io.StringIO()
        out.write("n,T_n,norm0,normK,action\n")
        for s in self.steps:
            out.write(f"{s.n},{s.T:.17g},{s.norm0:.17g},{s.normK:.17g},{s.action}\n")
        lam = self.lyapunov
        summary = {
            "stop_reason": self.stop_reason,
            "final_d0": f"{self.final_d0:.17g}",
            "lambda": f"{lam.value:.17g}",
            "lambda_std_error": f"{lam.std_error:.17g}",
            "ratio": f"{self.ratio:.17g}",
            "C0": f"{self.config.C0:.17g}",
            "k0": str(self.config.k0),
            "K": str(self.config.K),
            "Q": f"{self.config.Q:.17g}",
        }
        for key, value in summary.items():
            out.write(f"# {key} = {value}\n")
        return out.getvalue()


def _clean(phi: PeriodicMap, floor: float) -> PeriodicMap:
    c = np.array(phi.coeffs)
    c[1:][np.abs(c[1:]) < floor] = 0
    return PeriodicMap(c, phi.grid_size)


def corrector(f: RandomEnsemble, alpha: RandomEnsemble,
              resonance_floor: float = RESONANCE_FLOOR) -> PeriodicMap:
    """``eta = Ubar E[zeta o r_{-alpha}]``."""
    zbar = averaged_back_rotation(perturbations(f, alpha), alpha)
    return solve_Ubar(zbar, alpha, resonance_floor)


def _conjugate_all(eta: PeriodicMap, f: RandomEnsemble) -> tuple[CircleDiffeo, RandomEnsemble]:
    slope = ck_norm(eta.derivative(), 0)
    if slope >= 1.0:
        raise InversionError(f"||eta'||_0 = {slope:.3g} >= 1: Id - eta is not a diffeomorphism")
    g = CircleDiffeo(-eta)
    g_inv = invert(g)
    return g, f.map(lambda fi: compose(compose(g, fi), g_inv))


def first_conjugation(f: RandomEnsemble, alpha: RandomEnsemble, lam: float, C0: float, k0: int,
                      resonance_floor: float = RESONANCE_FLOOR):
    """Conjugate by ``g = Id - Ubar zbar``; returns ``(g, f_new, branch)``.

    ``branch`` names the bound that holds for ``|||zeta_new|||_0``:
    ``"small_by_lambda"`` (``<= 3 |lam|^1/2``), ``"small_by_power"``
    (``<= C0 |||zeta|||_k0^{3/2}``) or ``"neither"``.
    """
    eta = corrector(f, alpha, resonance_floor)
    g, f_new = _conjugate_all(eta, f)
    new0 = triple_norm(perturbations(f_new, alpha), 0)
    if new0 <= 3.0 * math.sqrt(abs(lam)):
        branch = "small_by_lambda"
    elif new0 <= C0 * triple_norm(perturbations(f, alpha), k0) ** 1.5:
        branch = "small_by_power"
    else:
        branch = "neither"
    return g, f_new, branch


def smoothed_conjugation(f: RandomEnsemble, alpha: RandomEnsemble, T: float,
                         resonance_floor: float = RESONANCE_FLOOR):
    """Conjugate by ``g_T = Id - S_T eta``; returns ``(g_T, f_T, ||R_T eta||_0)``."""
    eta = corrector(f, alpha, resonance_floor)
    low, high = smooth_split(eta, T)
    g, f_new = _conjugate_all(low, f)
    return g, f_new, high.sup()


def in_U0(f: RandomEnsemble) -> bool:
    """Every atom satisfies ``|f' - 1| < 1/2`` (the boundary counts as outside)."""
    return all(ck_norm(fi.phi.derivative(), 0) < U0_RADIUS for fi in f.values)


def obstructs(lam: LyapunovEstimate, C0: float, norm_k0: float) -> bool:
    """``sqrt(|lam| + 3 se) >= (C0 / 3) |||zeta|||_k0^{3/2}``."""
    return math.sqrt(abs(lam.value) + 3.0 * lam.std_error) >= C0 / 3.0 * norm_k0 ** 1.5


def final_distance(f: RandomEnsemble, alpha: RandomEnsemble) -> float:
    """``||d_0(f, r_alpha)||_{L^2}``."""
    return triple_norm(perturbations(f, alpha), 0)


def kam_run(f: RandomEnsemble, alpha: RandomEnsemble, config: KamConfig,
            lyapunov: LyapunovEstimate) -> KamReport:
    """Iterate smoothed conjugations with ``T_n = 2 ** (Q ** n)``.

    ``alpha`` carries the rotation number of each atom.  Row ``n`` of the
    report holds the norms of ``zeta_n = f_n - r_alpha`` and the level ``T_n``
    used to produce ``f_n`` (``0`` for the input).
    """
    h = CircleDiffeo.identity(config.N, config.M)
    steps: list[KamStep] = []
    branches: list[str] = []
    current = f
    reason = "max_iters"
    n = 0
    while True:
        zetas = perturbations(current, alpha)
        norm0 = triple_norm(zetas, 0)
        normK = triple_norm(zetas, config.K)
        T = schedule(n, config.Q) if n > 0 else 0.0
        norm_k0 = normK if config.K == config.k0 else triple_norm(zetas, config.k0)
        if norm0 < config.convergence_tol:
            reason = "converged"
        elif not in_U0(current):
            reason = "left_U0"
        elif obstructs(lyapunov, config.C0, norm_k0):
            reason = "obstruction"
        elif n >= config.max_iters:
            reason = "max_iters"
        else:
            try:
                g, nxt, _ = smoothed_conjugation(current, alpha, schedule(n + 1, config.Q),
                                                 config.resonance_floor)
            except ResonanceError:
                reason = "resonance"
            else:
                steps.append(KamStep(n, T, norm0, normK, "iterated"))
                current = nxt.map(lambda fi: CircleDiffeo(_clean(fi.phi, config.coeff_floor)))
                h = compose(g, h)
                n += 1
                continue
        steps.append(KamStep(n, T, norm0, normK, "stopped"))
        break
    if reason == "obstruction":
        # the unsmoothed step has nothing left to lose to truncation
        g, current, branch = first_conjugation(current, alpha, lyapunov.value, config.C0,
                                               config.k0, config.resonance_floor)
        branches.append(branch)
        h = compose(g, h)
    return KamReport(tuple(steps), reason, h, current, alpha, final_distance(current, alpha),
                     lyapunov, config, tuple(branches))


def commutator_defect(f: RandomEnsemble) -> float:
    """``sqrt(sum_ij w_i w_j ||f_i o f_j - f_j o f_i||_0^2)``."""
    total = 0.0
    for i, (wi, fi) in enumerate(f):
        for j, (wj, fj) in enumerate(f):
            if j <= i:
                continue
            d = ck_norm(compose(fi, fj).phi - compose(fj, fi).phi, 0)
            total += 2.0 * wi * wj * d * d
    return math.sqrt(total)


def calibrate_C0(alpha: RandomEnsemble, k0: int, seed: int, n_shapes: int = 8,
                 eps: tuple[float, ...] = (0.02, 0.01), degree: int = 3,
                 N: int = DEFAULT_DEGREE, M: int = DEFAULT_GRID) -> float:
    """Twice the largest ``|||zeta_new|||_0 / |||zeta|||_k0^{3/2}`` over coboundary perturbations.

    The calibration family is ``zeta_i = e (u o r_{alpha_i} - u)`` for random
    trigonometric ``u``, whose second-order exponent vanishes, so one step is
    governed by the quadratic branch alone.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_shapes):
        u = random_trig(rng, degree, decay=0.5, N=N, M=M, mean=False)
        u = u / ck_norm(u, 0)
        for e in eps:
            f = alpha.map(lambda a: CircleDiffeo.perturbed_rotation(a, (u.shift(a) - u) * e))
            _, f_new, _ = first_conjugation(f, alpha, 0.0, math.inf, k0)
            ratio = final_distance(f_new, alpha) / triple_norm(perturbations(f, alpha), k0) ** 1.5
            worst = max(worst, ratio)
    return 2.0 * worst


def rotation_numbers(f: RandomEnsemble, n_iter: int) -> RandomEnsemble:
    """Per-atom Birkhoff rotation numbers, as an angle ensemble."""
    return f.map(lambda fi: rotation_number(fi, n_iter))


def planted_ensemble(alpha: RandomEnsemble, h: CircleDiffeo) -> RandomEnsemble:
    """``f_i = h^-1 o r_{alpha_i} o h``, which commute and are linearizable."""
    h_inv = invert(h)
    return alpha.map(lambda a: compose(h_inv, compose(CircleDiffeo.rotation(a, h.degree, h.grid_size), h)))


def conjugacy_mismatch(h: CircleDiffeo, planted: CircleDiffeo) -> float:
    """``d_0`` between ``h`` and ``planted`` after removing the rotation ambiguity."""
    diff = h.phi - planted.phi
    return (diff - diff.mean).sup()


__all__ = [
    "KamConfig", "KamReport", "KamStep", "STOP_REASONS", "calibrate_C0", "commutator_defect",
    "conjugacy_mismatch", "corrector", "final_distance", "first_conjugation", "in_U0",
    "kam_k0", "kam_run", "obstructs", "planted_ensemble", "rotation_numbers", "schedule",
    "smoothed_conjugation", "triple_norm",
]
