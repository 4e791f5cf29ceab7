"""Real 1-periodic functions held as truncated Fourier series plus grid samples.

Coefficients follow ``c_p = int_0^1 phi(x) exp(-2 i pi p x) dx``.  Only the
non-negative half ``c_0 .. c_N`` is stored; ``c_{-p}`` is its conjugate, so the
realness invariant holds by construction.
"""
from __future__ import annotations

import numpy as np

DEFAULT_DEGREE = 64
DEFAULT_GRID = 256
SUP_REFINEMENT = 4
TWO_PI = 2.0 * np.pi


class SpectralUnderresolution(ArithmeticError):
    """Grid values carry energy above the retained degree."""


def _check_sizes(degree: int, grid_size: int) -> None:
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    if grid_size < 4 * max(degree, 1) or grid_size & (grid_size - 1):
        raise ValueError(
            f"grid size must be a power of two >= 4*degree, got M={grid_size}, N={degree}"
        )


class PeriodicMap:
    """Immutable band-limited real function on the circle R/Z."""

    __slots__ = ("_coeffs", "_grid_size", "_values")

    def __init__(self, coeffs, grid_size: int = DEFAULT_GRID):
        c = np.array(coeffs, dtype=complex).ravel()
        if c.size == 0:
            raise ValueError("need at least the mean coefficient")
        _check_sizes(c.size - 1, grid_size)
        c[0] = c[0].real
        c.flags.writeable = False
        self._coeffs = c
        self._grid_size = int(grid_size)
        self._values = None

    # -- constructors -------------------------------------------------------

    @classmethod
    def zeros(cls, degree: int = DEFAULT_DEGREE, grid_size: int = DEFAULT_GRID) -> "PeriodicMap":
        return cls(np.zeros(degree + 1), grid_size)

    @classmethod
    def constant(cls, value: float, degree: int = DEFAULT_DEGREE,
                 grid_size: int = DEFAULT_GRID) -> "PeriodicMap":
        c = np.zeros(degree + 1, dtype=complex)
        c[0] = value
        return cls(c, grid_size)

    @classmethod
    def from_trig(cls, cos=(), sin=(), mean: float = 0.0, degree: int = DEFAULT_DEGREE,
                  grid_size: int = DEFAULT_GRID) -> "PeriodicMap":
        """Build ``mean + sum_p a_p cos(2 pi p x) + b_p sin(2 pi p x)``.

        ``cos`` and ``sin`` are sequences of amplitudes for p = 1, 2, ...
        """
        c = np.zeros(degree + 1, dtype=complex)
        c[0] = mean
        for p, a in enumerate(cos, start=1):
            c[p] += a / 2
        for p, b in enumerate(sin, start=1):
            c[p] += b / 2j
        return cls(c, grid_size)

    @classmethod
    def from_values(cls, values, degree: int = DEFAULT_DEGREE,
                    aliasing_tol: float | None = None) -> "PeriodicMap":
        """Project uniform samples on [0, 1) onto modes ``|p| <= degree``.

        With ``aliasing_tol`` set, raise :class:`SpectralUnderresolution` when a
        discarded coefficient exceeds it.
        """
        v = np.asarray(values, dtype=float)
        spec = np.fft.rfft(v) / v.size
        if aliasing_tol is not None:
            tail = spec[degree + 1:]
            # the Nyquist bin is not a genuine complex mode, count it as well
            resid = float(np.max(np.abs(tail))) if tail.size else 0.0
            if resid > aliasing_tol:
                raise SpectralUnderresolution(
                    f"re-projection residual {resid:.3e} exceeds {aliasing_tol:.1e} "
                    f"at degree {degree}; increase N/M"
                )
        return cls(spec[: degree + 1], v.size)

    @classmethod
    def from_function(cls, func, degree: int = DEFAULT_DEGREE,
                      grid_size: int = DEFAULT_GRID) -> "PeriodicMap":
        return cls.from_values(func(grid(grid_size)), degree)

    # -- basic accessors ----------------------------------------------------

    @property
    def coeffs(self) -> np.ndarray:
        """Coefficients ``c_0 .. c_N`` (read-only)."""
        return self._coeffs

    @property
    def degree(self) -> int:
        return self._coeffs.size - 1

    @property
    def grid_size(self) -> int:
        return self._grid_size

    @property
    def values(self) -> np.ndarray:
        """Samples on the uniform grid ``j / M``."""
        if self._values is None:
            v = _synthesize(self._coeffs, self._grid_size)
            v.flags.writeable = False
            self._values = v
        return self._values

    @property
    def mean(self) -> float:
        return float(self._coeffs[0].real)

    def full_coeffs(self) -> np.ndarray:
        """Coefficients for ``p = -N .. N``."""
        c = self._coeffs
        return np.concatenate([np.conj(c[:0:-1]), c])

    def effective_degree(self, rtol: float = 1e-16) -> int:
        mag = np.abs(self._coeffs)
        scale = mag.max()
        if scale == 0:
            return 0
        nz = np.nonzero(mag > rtol * scale)[0]
        return int(nz[-1])

    # -- evaluation -----------------------------------------------------------

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        d = max(self.effective_degree(), 1)
        return _evaluate(self._coeffs[: d + 1], x)

    def sup(self, refine: int = SUP_REFINEMENT) -> float:
        """Grid supremum of ``|phi|`` on an ``refine*M`` grid."""
        return float(np.max(np.abs(_synthesize(self._coeffs, refine * self._grid_size))))

    # -- algebra --------------------------------------------------------------

    def _like(self, coeffs) -> "PeriodicMap":
        return PeriodicMap(coeffs, self._grid_size)

    def _aligned(self, other: "PeriodicMap"):
        if other.degree != self.degree:
            raise ValueError(f"degree mismatch: {self.degree} vs {other.degree}")
        return other._coeffs

    def __add__(self, other):
        if isinstance(other, PeriodicMap):
            return self._like(self._coeffs + self._aligned(other))
        c = self._coeffs.copy()
        c[0] += float(other)
        return self._like(c)

    __radd__ = __add__

    def __neg__(self):
        return self._like(-self._coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if isinstance(scalar, PeriodicMap):
            return NotImplemented
        return self._like(self._coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._like(self._coeffs / float(scalar))

    def multiply(self, other: "PeriodicMap") -> "PeriodicMap":
        """Pointwise product, re-projected to this degree."""
        return PeriodicMap.from_values(self.values * other.values, self.degree)

    def apply(self, func) -> "PeriodicMap":
        """Pointwise ``func(phi)`` on the grid, re-projected (e.g. ``np.log``)."""
        return PeriodicMap.from_values(func(self.values), self.degree)

    def derivative(self, order: int = 1) -> "PeriodicMap":
        p = np.arange(self.degree + 1)
        return self._like(self._coeffs * (2j * np.pi * p) ** order)

    def shift(self, alpha: float) -> "PeriodicMap":
        """``x -> phi(x + alpha)``, exact on the coefficients."""
        p = np.arange(self.degree + 1)
        return self._like(self._coeffs * np.exp(2j * np.pi * p * alpha))

    def resize(self, degree: int, grid_size: int | None = None) -> "PeriodicMap":
        grid_size = grid_size or max(self._grid_size, _next_pow2(4 * degree))
        c = np.zeros(degree + 1, dtype=complex)
        k = min(degree, self.degree) + 1
        c[:k] = self._coeffs[:k]
        return PeriodicMap(c, grid_size)

    def integral_against(self, other: "PeriodicMap") -> float:
        """``int_0^1 phi * psi dx`` by Parseval."""
        a, b = self._coeffs, self._aligned(other)
        return float((a[0] * b[0]).real + 2 * np.sum((a[1:] * np.conj(b[1:])).real))

    def allclose(self, other: "PeriodicMap", atol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self._coeffs - self._aligned(other)), initial=0.0) <= atol)

    def __repr__(self) -> str:
        return f"PeriodicMap(N={self.degree}, M={self.grid_size}, mean={self.mean:.3g})"


def grid(size: int) -> np.ndarray:
    return np.arange(size) / size


def _next_pow2(n: int) -> int:
    return 1 << max(int(n) - 1, 1).bit_length()


def _synthesize(coeffs: np.ndarray, size: int) -> np.ndarray:
    spec = np.zeros(size // 2 + 1, dtype=complex)
    k = min(coeffs.size, spec.size)
    spec[:k] = coeffs[:k]
    return np.fft.irfft(spec * size, n=size)


def _evaluate(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Direct Fourier sum at arbitrary points."""
    z = np.exp(2j * np.pi * x)
    # Horner in z on the positive half, then take twice the real part
    acc = np.zeros(z.shape, dtype=complex)
    for c in coeffs[:0:-1]:
        acc = (acc + c) * z
    return coeffs[0].real + 2.0 * acc.real


def ck_norm(phi: PeriodicMap, k: int, refine: int = SUP_REFINEMENT) -> float:
    """``max_{j<=k} sup |phi^(j)|`` with sups taken on a refined grid."""
    if k < 0:
        raise ValueError("k must be non-negative")
    p = np.arange(phi.degree + 1)
    size = refine * phi.grid_size
    best = 0.0
    for j in range(k + 1):
        cj = phi.coeffs * (2j * np.pi * p) ** j
        best = max(best, float(np.max(np.abs(_synthesize(cj, size)))))
    return best


def smooth_split(phi: PeriodicMap, T: float) -> tuple[PeriodicMap, PeriodicMap]:
    """Fourier truncation ``(S_T phi, R_T phi)``: modes ``|p| <= T`` and the rest."""
    if T < 0:
        raise ValueError("T must be non-negative")
    keep = np.arange(phi.degree + 1) <= T
    low = np.where(keep, phi.coeffs, 0)
    return PeriodicMap(low, phi.grid_size), PeriodicMap(phi.coeffs - low, phi.grid_size)


def random_trig(rng: np.random.Generator, degree: int, amplitude: float = 1.0,
                decay: float = 0.0, N: int = DEFAULT_DEGREE, M: int = DEFAULT_GRID,
                mean: bool = True) -> PeriodicMap:
    """Random real trigonometric polynomial of the given degree.

    Coefficients are complex Gaussians damped by ``exp(-decay * p)``.
    """
    c = np.zeros(N + 1, dtype=complex)
    p = np.arange(1, degree + 1)
    c[1: degree + 1] = (rng.standard_normal(degree) + 1j * rng.standard_normal(degree)) \
        * np.exp(-decay * p) * amplitude / 2
    if mean:
        c[0] = amplitude * rng.standard_normal()
    return PeriodicMap(c, M)
