"""SU(2) representation kernel.

Half-integers (j, m) are carried as doubled integers (``tj = 2j``,
``tm = 2m``) for all index arithmetic.  Public functions accept ``j`` and
``m`` as ints, floats or :class:`fractions.Fraction` and convert them with
:func:`twice`.  Matrices indexed by magnetic numbers use ascending order,
row/column ``k`` corresponding to ``m = -j + k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import DomainError

# Above this 2j the exact integer Wigner sum gets slow; the spectral route
# is accurate to a few ulps at any j.
EXACT_WIGNER_MAX_TJ = 40
# Products of ((1 +- r)/2)^k are formed in log space beyond this N.
LOG_SPACE_MIN_N = 60


def twice(x) -> int:
    """Return ``2*x`` as an int, rejecting values that are not half-integers."""
    if isinstance(x, (bool, np.bool_)):
        raise DomainError(f"not a half-integer: {x!r}")
    if isinstance(x, (int, np.integer)):
        return 2 * int(x)
    if isinstance(x, np.floating):
        x = float(x)
    y = Fraction(2 * x) if isinstance(x, float) else 2 * Fraction(x)
    if y.denominator != 1:
        raise DomainError(f"not a half-integer: {x!r}")
    return int(y)


def _check_block(N: int, tj: int, tm: int | None = None) -> None:
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    if tj < 0 or tj > N or (N - tj) % 2:
        raise DomainError(f"j={tj / 2} is not an irrep of N={N} qubits")
    if tm is not None and (abs(tm) > tj or (tj - tm) % 2):
        raise DomainError(f"m={tm / 2} is not a magnetic index of j={tj / 2}")


@dataclass(frozen=True)
class IrrepBlock:
    """One irrep ``j`` in the decomposition of N qubits, with multiplicity ``n``."""

    twice_j: int
    n: int
    d: int

    @property
    def j(self) -> float:
        return self.twice_j / 2

    def m_values(self) -> np.ndarray:
        return m_values(self.j)


def multiplicity(N: int, j) -> int:
    """Exact multiplicity of irrep ``j`` in N spin-1/2 factors."""
    tj = twice(j)
    _check_block(N, tj)
    k = (N - tj) // 2  # N/2 - j
    num = math.comb(N, k) * (tj + 1)
    den = (N + tj) // 2 + 1
    q, rem = divmod(num, den)
    assert rem == 0
    return q


def multiplicities(N: int) -> list[IrrepBlock]:
    """Irrep blocks of the N-qubit tensor power, from j = N/2 downward."""
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    return [IrrepBlock(tj, multiplicity(N, tj / 2), tj + 1)
            for tj in range(N, -1, -2)]


def m_values(j) -> np.ndarray:
    tj = twice(j)
    return (np.arange(tj + 1) * 2 - tj) / 2


# --- Wigner d(pi/2) -----------------------------------------------------

@lru_cache(maxsize=None)
def _factorials(n: int) -> tuple[int, ...]:
    out = [1]
    for k in range(1, n + 1):
        out.append(out[-1] * k)
    return tuple(out)


def _wigner_exact(tj: int) -> np.ndarray:
    """d^(j)(pi/2) from the Wigner sum evaluated in exact integers.

    Each term of the sum, multiplied by (2j)!, is a signed multinomial
    coefficient; the square of the entry is then an exact rational and a
    single correctly rounded square root gives the float.
    """
    fact = _factorials(tj)
    ftj = fact[tj]
    d = tj + 1
    out = np.zeros((d, d))
    den_base = (1 << tj) * ftj * ftj
    for a in range(d):          # a = j + m
        for b in range(a, d):   # b = j + m'
            jm, jmm, jmp = a, tj - a, b
            s = 0
            for i in range(max(0, jmp - jm), min(jmm, jmp) + 1):
                term = ftj // (fact[jmm - i] * fact[jmp - i] * fact[i + jm - jmp] * fact[i])
                # (-1)^i from the sum, (-1)^(m - m' + 2i) from (-sin)^(...)
                s += -term if (i + jm - jmp) % 2 else term
            if s:
                F = fact[jm] * fact[jmm] * fact[jmp] * fact[tj - jmp]
                val = math.sqrt(Fraction(F * s * s, den_base))
                out[a, b] = val if s > 0 else -val
            # d_{m'm} = (-1)^(m-m') d_{mm'}
            out[b, a] = out[a, b] if (b - a) % 2 == 0 else -out[a, b]
    return out


def _jplus(tj: int) -> np.ndarray:
    d = tj + 1
    J = tj / 2
    m = np.arange(d) - J
    jp = np.zeros((d, d))
    k = np.arange(d - 1)
    jp[k + 1, k] = np.sqrt(J * (J + 1) - m[k] * (m[k] + 1))
    return jp


def _wigner_spectral(tj: int) -> np.ndarray:
    """d^(j)(pi/2) = exp(-i (pi/2) J_y) through the eigenbasis of J_y."""
    jp = _jplus(tj)
    jy = (jp - jp.T) / 2j
    w, v = np.linalg.eigh(jy)
    # eigenvalues are exactly the integers/half-integers m
    w = np.round(2 * w) / 2
    D = (v * np.exp(-0.5j * np.pi * w)) @ v.conj().T
    return np.ascontiguousarray(D.real)


@lru_cache(maxsize=None)
def _wigner_cached(tj: int) -> np.ndarray:
    out = _wigner_exact(tj) if tj <= EXACT_WIGNER_MAX_TJ else _wigner_spectral(tj)
    out.setflags(write=False)
    return out


def wigner_d_half_pi(j) -> np.ndarray:
    """Reduced Wigner matrix d^(j)_{m m'}(pi/2), Edmonds phase convention.

    Returned read-only; index ``[m + j, m' + j]``.
    """
    tj = twice(j)
    if tj < 0:
        raise DomainError(f"j must be >= 0, got {j}")
    return _wigner_cached(tj)


# --- block weights -------------------------------------------------------

def _check_r(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r > 1) or np.any(~np.isfinite(r)):
        raise DomainError("purity r must lie in [0, 1]")
    return r


def log_weight_factors(r):
    """log((1-r^2)/4), log((1-r)/2), log((1+r)/2) for purity r (vectorized)."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        la = np.log1p(-r) - math.log(2)
        lb = np.log1p(r) - math.log(2)
    return la + lb, la, lb


def power_ab(N: int, tk_minus: int, tk_plus: int, r) -> np.ndarray:
    """((1-r)/2)^(k-) ((1+r)/2)^(k+) with doubled integer exponents.

    Direct products for small N, log space otherwise.  ``0**0 == 1``.
    """
    r = np.asarray(r, dtype=float)
    km, kp = tk_minus // 2, tk_plus // 2
    if N <= LOG_SPACE_MIN_N:
        return ((1 - r) / 2) ** km * ((1 + r) / 2) ** kp
    _, la, lb = log_weight_factors(r)
    return np.exp((km * la if km else 0.0) + (kp * lb if kp else 0.0))


def block_weight(N: int, j, m, r):
    """Diagonal block weight rho_{jm}(r) of the N-copy state along its axis.

    ((1-r^2)/4)^(N/2-j) ((1-r)/2)^(j-m) ((1+r)/2)^(j+m).
    """
    tj, tm = twice(j), twice(m)
    _check_block(N, tj, tm)
    r = _check_r(r)
    # (1-r^2)/4 = ((1-r)/2)((1+r)/2), so fold it into the two exponents
    k = N - tj
    out = power_ab(N, k + tj - tm, k + tj + tm, r)
    return float(out) if out.ndim == 0 else out


def block_matrix_2d(N: int, j, r) -> np.ndarray:
    """rho^j_{m m'}(r) for an equatorial state at angle 0, prefactor included.

    Entries ``sum_{m''} d_{m m''} d_{m' m''} ((1-r)/2)^(N/2-m'') ((1+r)/2)^(N/2+m'')``.
    """
    tj = twice(j)
    _check_block(N, tj)
    r = float(_check_r(r))
    D = wigner_d_half_pi(tj / 2)
    tms = np.arange(-tj, tj + 1, 2)
    diag = np.array([power_ab(N, N - tm, N + tm, r) for tm in tms])
    return (D * diag) @ D.T


# --- c coefficients ------------------------------------------------------

@lru_cache(maxsize=None)
def _c_cached(tj: int) -> np.ndarray:
    D = wigner_d_half_pi(tj / 2)
    # c_m = sum_{m'=-j}^{j-1} d_{m' m} d_{m'+1, m}
    out = np.einsum("km,km->m", D[:-1], D[1:])
    out.setflags(write=False)
    return out


def c_array(j) -> np.ndarray:
    """c^j_m for ascending m as an array."""
    tj = twice(j)
    if tj < 1:
        raise DomainError(f"c coefficients need j >= 1/2, got {j}")
    return _c_cached(tj)


def c_coefficients(j) -> dict[float, float]:
    """Map m -> c^j_m, the nearest-neighbour overlap sums of d^(j)(pi/2)."""
    c = c_array(j)
    return {float(m): float(v) for m, v in zip(m_values(j), c)}


def c_linear_approx(j, m) -> float:
    """Large-j linearization of c^j_m about m = j."""
    j = twice(j) / 2
    m = twice(m) / 2
    if j <= 0:
        raise DomainError("c_linear_approx needs j > 0")
    return 0.5 * (1 - 1 / (2 * j)) + m / (2 * j)
