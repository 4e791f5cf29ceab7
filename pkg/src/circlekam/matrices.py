"""Random products of 2x2 matrices near rotations, via their projective action.

``R_alpha`` rotates the plane by ``pi * alpha`` so that its action on directions
``exp(i pi x)`` is the circle rotation ``x -> x + alpha``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circle import ALIASING_TOL, CircleDiffeo
from .cohomology import ResonanceError, averaged_back_rotation, solve_Ubar
from .ensemble import RandomEnsemble
from .lyapunov import CHUNK, LyapunovEstimate, _streams, _uniform_block, run_chains
from .periodic import DEFAULT_DEGREE, DEFAULT_GRID, PeriodicMap, grid

SL2_TOL = 1e-12
RENORM_EVERY = 32
RENORM_BOUNDS = (2.0 ** -20, 2.0 ** 20)


@dataclass(frozen=True)
class Mat2:
    """``[[a, b], [c, d]]``."""

    a: float
    b: float
    c: float
    d: float

    @classmethod
    def from_array(cls, m) -> "Mat2":
        m = np.asarray(m, dtype=float)
        return cls(float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1]))

    @classmethod
    def identity(cls) -> "Mat2":
        return cls(1.0, 0.0, 0.0, 1.0)

    @property
    def array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    @property
    def trace(self) -> float:
        return self.a + self.d

    def is_sl2(self, tol: float = SL2_TOL) -> bool:
        return abs(self.det - 1.0) < tol

    def __matmul__(self, other: "Mat2") -> "Mat2":
        return Mat2.from_array(self.array @ other.array)

    def __add__(self, other: "Mat2") -> "Mat2":
        return Mat2(self.a + other.a, self.b + other.b, self.c + other.c, self.d + other.d)

    def __sub__(self, other: "Mat2") -> "Mat2":
        return Mat2(self.a - other.a, self.b - other.b, self.c - other.c, self.d - other.d)

    def __mul__(self, s: float) -> "Mat2":
        return Mat2(self.a * s, self.b * s, self.c * s, self.d * s)

    __rmul__ = __mul__

    def inv(self) -> "Mat2":
        det = self.det
        if det == 0:
            raise ZeroDivisionError("singular matrix")
        return Mat2(self.d / det, -self.b / det, -self.c / det, self.a / det)

    def norm(self, kind: str = "op") -> float:
        if kind == "op":
            return float(np.linalg.norm(self.array, 2))
        if kind == "fro":
            return float(np.linalg.norm(self.array, "fro"))
        raise ValueError(f"unknown norm {kind!r}")

    def act(self, x):
        """Images of the directions ``exp(i pi x)`` as complex numbers."""
        u = np.exp(1j * np.pi * np.asarray(x, dtype=float))
        return (self.a * u.real + self.b * u.imag) + 1j * (self.c * u.real + self.d * u.imag)


def rotation_matrix(alpha: float) -> Mat2:
    c, s = math.cos(math.pi * alpha), math.sin(math.pi * alpha)
    return Mat2(c, -s, s, c)


def nearest_rotation_angle(M: Mat2) -> float:
    """``alpha`` maximizing ``Tr(R_alpha^-1 M)``."""
    return math.atan2(M.c - M.b, M.a + M.d) / math.pi


def distance_to_rotations(M: Mat2, norm: str = "op") -> float:
    return (M - rotation_matrix(nearest_rotation_angle(M))).norm(norm)


def perturbation_Z(M: Mat2, alpha: float) -> complex:
    """``Z = (a + d) + i (b - c)`` for ``E = M - R_alpha``."""
    E = M - rotation_matrix(alpha)
    return complex(E.a + E.d, E.b - E.c)


def perturbation_Z_traces(M: Mat2, alpha: float) -> complex:
    """Same quantity as ``Tr(E) + i Tr(E R_{1/2})``."""
    E = M - rotation_matrix(alpha)
    return complex(E.trace, (E @ rotation_matrix(0.5)).trace)


def anticonformal_Z(M: Mat2, alpha: float) -> complex:
    """``(a - d) - i (b + c)`` for ``E = M - R_alpha``.

    Writing ``E(u) = W u + V conj(u)`` for ``u = exp(i pi x)``, the trace part
    ``W`` only moves the angle, while ``V`` drives the degree-one part of
    ``f_M - r_alpha``; this is ``2 conj(V)``.
    """
    E = M - rotation_matrix(alpha)
    return complex(E.a - E.d, -(E.b + E.c))


def sl2_normalize(M: Mat2) -> tuple[Mat2, float]:
    """``(M / sqrt(det M), ln(det M) / 2)``."""
    det = M.det
    if det <= 0:
        raise ValueError(f"det must be positive, got {det!r}")
    return M * (1.0 / math.sqrt(det)), 0.5 * math.log(det)


def projective_diffeo(M: Mat2, degree: int = DEFAULT_DEGREE, grid_size: int = DEFAULT_GRID,
                      reference: float | None = None) -> CircleDiffeo:
    """Continuous lift of ``x -> arg(M exp(i pi x)) / pi``.

    The lift is fixed modulo 2 by the action; the branch whose value at 0 is
    closest to ``reference`` (default: the nearest rotation angle) is used.
    """
    if M.det <= 0:
        raise ValueError("projective action needs det > 0")
    x = grid(grid_size)
    theta = np.unwrap(np.angle(M.act(x)), period=2 * np.pi) / np.pi
    phi = theta - x
    ref = nearest_rotation_angle(M) if reference is None else reference
    phi = phi - 2.0 * np.round((phi[0] - ref) / 2.0)
    return CircleDiffeo(PeriodicMap.from_values(phi, degree, ALIASING_TOL))


def _stack(Ms: RandomEnsemble) -> np.ndarray:
    return np.array([m.array for m in Ms.values])


def mc_matrix_lyapunov(Ms: RandomEnsemble, n_steps: int, n_samples: int, seed: int,
                       estimator: str = "conditional", threads: int = 1) -> LyapunovEstimate:
    """Growth rate of ``|M_{n-1} ... M_0 u|`` for unit ``u``, averaged over chains.

    ``"conditional"`` accumulates ``E_i ln |M_i u_k|`` along the direction
    chain; ``"pathwise"`` accumulates the log norm of the actual product.
    """
    if estimator not in ("conditional", "pathwise"):
        raise ValueError(f"unknown estimator {estimator!r}")
    A = _stack(Ms)
    if np.any(np.abs(np.linalg.det(A)) == 0):
        raise ValueError("all atoms must be invertible")
    w = Ms.w
    cdf = Ms.cdf()
    rngs = _streams(seed, n_samples)
    t = np.pi * (np.arange(n_samples) + 0.5) / n_samples
    u0 = np.stack([np.cos(t), np.sin(t)], axis=1)
    lo_b, hi_b = RENORM_BOUNDS

    def worker(lo, hi):
        u = u0[lo:hi].copy()
        streams = rngs[lo:hi]
        rows = np.arange(hi - lo)
        acc = np.zeros(hi - lo)
        done = 0
        while done < n_steps:
            size = min(CHUNK, n_steps - done)
            idx = np.searchsorted(cdf, _uniform_block(streams, size), side="right")
            for k in range(size):
                if estimator == "conditional":
                    images = np.einsum("mij,sj->smi", A, u)
                    norms = np.hypot(images[..., 0], images[..., 1])
                    acc += np.einsum("sm,m->s", np.log(norms), w)
                    i = idx[:, k]
                    u = images[rows, i] / norms[rows, i, None]
                else:
                    u = np.einsum("sij,sj->si", A[idx[:, k]], u)
                    n = np.hypot(u[:, 0], u[:, 1])
                    # decided per chain so that batching cannot change a chain's result
                    due = (n < lo_b) | (n > hi_b) | ((done + k + 1) % RENORM_EVERY == 0)
                    if due.any():
                        acc[due] += np.log(n[due])
                        u[due] /= n[due, None]
            done += size
        if estimator == "pathwise":
            acc += np.log(np.hypot(u[:, 0], u[:, 1]))
        return acc

    per_chain = np.concatenate(run_chains(worker, n_samples, threads)) / n_steps
    std = float(per_chain.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    return LyapunovEstimate(float(per_chain.mean()), std, n_steps, n_samples, seed,
                            float(np.ptp(per_chain)))


def analytic_matrix_lyapunov_order2(Ms: RandomEnsemble, alpha: RandomEnsemble,
                                    floor: float = 1e-10, check_tol: float = 1e-12,
                                    z_kind: str = "anticonformal") -> float:
    """Second-order exponent ``E|Z e - E[Z e] (1 - e^2) / (1 - E[e^2])|^2 / 8`` with ``e = exp(i pi alpha)``.

    ``z_kind="anticonformal"`` uses :func:`anticonformal_Z`, which matches the
    projective expansion; ``"trace"`` uses :func:`perturbation_Z`, which also
    charges pure changes of angle and is kept for comparison.  For a single
    angle the value reduces to ``Var(Z) / 8``, which is checked.
    """
    if z_kind == "anticonformal":
        zfun = anticonformal_Z
    elif z_kind == "trace":
        zfun = perturbation_Z
    else:
        raise ValueError(f"unknown z_kind {z_kind!r}")
    a = np.asarray(alpha.values, dtype=float)
    w = alpha.w
    Z = np.array([zfun(m, ai) for m, ai in zip(Ms.values, a)])
    e = np.exp(1j * np.pi * a)
    denom = 1.0 - np.dot(w, e ** 2)
    if abs(denom) <= floor:
        raise ResonanceError(2, float(abs(denom)), floor)
    mean_Ze = np.dot(w, Z * e)
    X = Z * e - mean_Ze * (1.0 - e ** 2) / denom
    value = float(np.dot(w, np.abs(X) ** 2) / 8.0)
    if np.ptp(a) == 0:
        var = variance_Z(Z, w)
        if abs(var - value) > check_tol * max(1.0, abs(value)):
            raise ArithmeticError(f"constant-angle reduction failed: {value!r} vs {var!r}")
    return value


def variance_Z(Z, weights) -> float:
    """``Var(Z) / 8``."""
    Z = np.asarray(Z, dtype=complex)
    w = np.asarray(weights, dtype=float)
    return float(np.dot(w, np.abs(Z - np.dot(w, Z)) ** 2) / 8.0)


def schrodinger_matrix(energy: float, potential: float, coupling: float) -> Mat2:
    return Mat2(energy - coupling * potential, -1.0, 1.0, 0.0)


@dataclass(frozen=True)
class SchrodingerResult:
    mc: LyapunovEstimate
    weak_disorder: float
    rotation: float


def schrodinger_lyapunov(energy: float, V: RandomEnsemble, g: float, n_steps: int,
                         n_samples: int, seed: int, threads: int = 1) -> SchrodingerResult:
    """Monte Carlo exponent of the transfer matrices and the weak-disorder law
    ``Var(V) g^2 / (2 (4 - E^2))``."""
    if not (-2.0 < energy < 2.0) or energy == 0.0:
        raise ValueError(f"energy must lie in (-2, 2) without 0, got {energy!r}")
    Ms = V.map(lambda v: schrodinger_matrix(energy, v, g))
    mc = mc_matrix_lyapunov(Ms, n_steps, n_samples, seed, threads=threads)
    v = np.asarray(V.values, dtype=float)
    var = float(np.dot(V.w, (v - np.dot(V.w, v)) ** 2))
    fp = var * g * g / (2.0 * (4.0 - energy * energy))
    return SchrodingerResult(mc, fp, math.acos(energy / 2.0) / math.pi)


def matrix_commutator_defect(Ms: RandomEnsemble, norm: str = "op") -> float:
    """``E ||M M~ - M~ M||^2`` over an independent copy ``M~``."""
    total = 0.0
    for wi, Mi in Ms:
        for wj, Mj in Ms:
            total += wi * wj * (Mi @ Mj - Mj @ Mi).norm(norm) ** 2
    return total


def first_order_part(M: Mat2, alpha: float, degree: int = DEFAULT_DEGREE,
                     grid_size: int = DEFAULT_GRID) -> PeriodicMap:
    """Degree-one part ``Im(E(e^{i pi x}) e^{-i pi (x + alpha)}) / pi`` of ``f_M - r_alpha``."""
    E = M - rotation_matrix(alpha)
    x = grid(grid_size)
    vals = np.imag(E.act(x) * np.exp(-1j * np.pi * (x + alpha))) / np.pi
    return PeriodicMap.from_values(vals, degree)


def matrix_from_degree_one(zeta: PeriodicMap) -> Mat2:
    """``P`` in SL2 whose projective action is ``Id + zeta`` to first order."""
    A = zeta.mean
    B = 2.0 * zeta.coeffs[1].real
    C = -2.0 * zeta.coeffs[1].imag
    a = -math.pi * C
    c = math.pi * (A + B)
    b = math.pi * (B - A)
    d = (1.0 + b * c) / (1.0 + a) - 1.0
    return Mat2(1.0 + a, b, c, 1.0 + d)


def ellipticity(Ms: RandomEnsemble) -> float:
    """``||Tr M||_{L^2}``."""
    return Ms.lp_norm(lambda m: m.trace, 2.0)


def in_neighborhood(M: Mat2) -> bool:
    """``|f_M' - 1| < 1/2`` everywhere, from the singular values of ``M``."""
    s = np.linalg.svd(M.array, compute_uv=False)
    det = M.det
    return bool(det / s[0] ** 2 > 0.5 and det / s[1] ** 2 < 1.5)


def first_order_ensemble(Ms: RandomEnsemble, degree: int = DEFAULT_DEGREE,
                         grid_size: int = DEFAULT_GRID) -> tuple[RandomEnsemble, RandomEnsemble]:
    """Nearest angles ``alpha_i`` and degree-one parts ``zeta_1`` of every atom."""
    alpha = Ms.map(nearest_rotation_angle)
    zetas = Ms.zip_map(alpha, lambda m, a: first_order_part(m, a, degree, grid_size))
    return alpha, zetas


def distance_L2(Ms: RandomEnsemble, norm: str = "op") -> float:
    """``||d(M, R)||_{L^2}`` with ``d(M, R) = ||M - R_alpha||`` at the nearest angle."""
    return Ms.lp_norm(lambda m: distance_to_rotations(m, norm), 2.0)


def calibrate_A0(seed: int, n_samples: int = 200, scale: float = 0.05, norm: str = "op",
                 degree: int = DEFAULT_DEGREE, grid_size: int = DEFAULT_GRID) -> float:
    """Largest ratio, in either direction, between ``||M - R_alpha||`` and ``d_0(f_M, r_alpha)``.

    Samples are ``R_alpha exp(X)`` with ``X`` traceless of size up to ``scale``
    and ``alpha`` the nearest angle, so both quantities measure the same gap.
    """
    rng = np.random.default_rng(seed)
    worst = 1.0
    for _ in range(n_samples):
        p, q, r = rng.uniform(-1.0, 1.0, 3) * scale * rng.uniform()
        X = np.array([[p, q + r], [q - r, -p]])
        w, V = np.linalg.eig(X)
        expX = (V @ np.diag(np.exp(w)) @ np.linalg.inv(V)).real
        M = rotation_matrix(rng.uniform()) @ Mat2.from_array(expX)
        M = sl2_normalize(M)[0]
        a = nearest_rotation_angle(M)
        gap = distance_to_rotations(M, norm)
        d0 = float(np.max(np.abs(projective_diffeo(M, degree, grid_size, a).phi.values - a)))
        if gap > 0 and d0 > 0:
            worst = max(worst, gap / d0, d0 / gap)
    return worst


@dataclass(frozen=True)
class MatrixKamStep:
    n: int
    distance: float
    action: str


@dataclass(frozen=True)
class MatrixKamReport:
    steps: tuple[MatrixKamStep, ...]
    stop_reason: str
    P: Mat2
    M_final: RandomEnsemble
    final_distance: float
    lyapunov: LyapunovEstimate
    A0: float
    norm: str

    @property
    def bound(self) -> float:
        """``4 A0 sqrt(Lambda + 3 se)``."""
        lam = self.lyapunov
        return 4.0 * self.A0 * math.sqrt(max(lam.value, 0.0) + 3.0 * lam.std_error)

    @property
    def constant(self) -> float:
        """Diagnosed ``C`` with ``final_distance = C sqrt(Lambda)``."""
        lam = self.lyapunov.value
        return self.final_distance / math.sqrt(lam) if lam > 0 else math.inf

    def to_text(self) -> str:
        out = ["n,distance,action"]
        out += [f"{s.n},{s.distance:.17g},{s.action}" for s in self.steps]
        P = self.P
        summary = {
            "stop_reason": self.stop_reason,
            "final_distance": f"{self.final_distance:.17g}",
            "Lambda": f"{self.lyapunov.value:.17g}",
            "Lambda_std_error": f"{self.lyapunov.std_error:.17g}",
            "A0": f"{self.A0:.17g}",
            "bound": f"{self.bound:.17g}",
            "C": f"{self.constant:.17g}",
            "norm": self.norm,
            "P": f"{P.a:.17g} {P.b:.17g} {P.c:.17g} {P.d:.17g}",
        }
        out += [f"# {k} = {v}" for k, v in summary.items()]
        return "\n".join(out) + "\n"


def matrix_kam(Ms: RandomEnsemble, lyapunov: LyapunovEstimate, A0: float, delta: float = 0.1,
               max_iters: int = 30, convergence_tol: float = 1e-12, norm: str = "op",
               resonance_floor: float = 1e-10) -> MatrixKamReport:
    """Conjugate ``M`` by ``P_n`` built from ``-Ubar zbar_1`` until it is within ``4 A0 sqrt(Lambda)`` of rotations.

    The stopping threshold uses ``Lambda + 3 se`` so that Monte Carlo noise
    can only make the iteration stop later in the bound, never claim more.
    """
    if not all(m.is_sl2(1e-10) for m in Ms.values):
        raise ValueError("matrix KAM needs every atom in SL2")
    tr = ellipticity(Ms)
    if tr > 2.0 - delta:
        raise ValueError(f"ellipticity violated: ||Tr M||_L2 = {tr:.6g} > 2 - delta = {2.0 - delta:.6g}")
    threshold = 4.0 * A0 * math.sqrt(max(lyapunov.value, 0.0) + 3.0 * lyapunov.std_error)
    total = Mat2.identity()
    current = Ms
    steps = []
    n = 0
    while True:
        eps = distance_L2(current, norm)
        if eps < convergence_tol:
            reason = "converged"
        elif eps <= threshold:
            reason = "obstruction"
        elif not all(in_neighborhood(m) for m in current.values):
            reason = "left_U0"
        elif n >= max_iters:
            reason = "max_iters"
        else:
            alpha, zetas = first_order_ensemble(current, degree=4, grid_size=16)
            try:
                eta = solve_Ubar(averaged_back_rotation(zetas, alpha), alpha, resonance_floor)
            except ResonanceError:
                reason = "resonance"
            else:
                P = matrix_from_degree_one(-eta)
                P_inv = P.inv()
                current = current.map(lambda m: P @ m @ P_inv)
                total = P @ total
                steps.append(MatrixKamStep(n, eps, "iterated"))
                n += 1
                continue
        steps.append(MatrixKamStep(n, eps, "stopped"))
        break
    return MatrixKamReport(tuple(steps), reason, total, current, distance_L2(current, norm),
                           lyapunov, A0, norm)


def elliptic_growth_bound(M: Mat2) -> float:
    """``sup_n ln |M^n u| / |u|`` for elliptic ``M`` in SL2.

    ``M`` preserves the quadratic form ``[[c, (d - a)/2], [(d - a)/2, -b]]``,
    so the iterates stay within half the log condition number of that form.
    """
    if not M.is_sl2(1e-10) or abs(M.trace) >= 2.0:
        raise ValueError("need an elliptic SL2 matrix")
    h = 0.5 * (M.d - M.a)
    eig = np.linalg.eigvalsh(np.array([[M.c, h], [h, -M.b]]))
    eig = np.abs(eig)
    return 0.5 * math.log(eig.max() / eig.min())
