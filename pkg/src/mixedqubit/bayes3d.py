"""Optimal Bayesian fidelity for N copies of a qubit anywhere in the Bloch ball.

For an isotropic prior the optimal covariant measurement acts blockwise,
one seed per irrep j, and the fidelity is F = (1 + Delta)/2 with

    Delta = sum_j n_j sqrt(v0_j^2 + vz_j^2),
    v0_j  = int dr w(r) sqrt(1 - r^2) sum_m rho_jm(r),
    vz_j  = int dr w(r) r/(j + 1)     sum_m m rho_jm(r).

Each block is integrated with its multiplicity and ((1-r^2)/4)^(N/2-j)
folded in, so nothing over- or underflows at large N.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import DomainError
from .priors import Prior, integrate
from .repr_core import _check_block, log_weight_factors, multiplicities, multiplicity, twice
from .reporting import BlockRow, FidelityReport3D

# below this r the geometric-series closed form loses digits to cancellation
DIRECT_SUM_MAX_R = 0.25


def _log_multiplicity(N: int, tj: int) -> float:
    k = (N - tj) // 2
    return (math.lgamma(N + 1) - math.lgamma(k + 1) - math.lgamma(N - k + 1)
            + math.log(tj + 1) - math.log((N + tj) // 2 + 1))


def _msums_direct(N, tj, log_n, la, lb):
    """n_j P^(J-j) * (sum_m a^(j-m) b^(j+m), sum_m m a^(j-m) b^(j+m))."""
    s0 = np.zeros_like(la)
    s1 = np.zeros_like(la)
    for tm in range(-tj, tj + 1, 2):
        km, kp = (N - tm) // 2, (N + tm) // 2
        e = log_n + (km * la if km else 0.0) + (kp * lb if kp else 0.0)
        t = np.exp(e)
        s0 += t
        s1 += 0.5 * tm * t
    return s0, s1


def _msums_closed(N, tj, log_n, r, la, lb):
    """Same sums from the geometric series; needs r bounded away from 0."""
    d = tj + 1
    j = tj / 2
    k = (N - tj) // 2
    # q = a/b; a^x = b^x q^x
    lq = la - lb
    qd = np.exp(d * lq)
    qd1 = qd * np.exp(lq)
    base = np.exp(log_n + (k * (la + lb) if k else 0.0) + d * lb)
    b = np.exp(lb)
    s0 = base * (-np.expm1(d * lq)) / r
    s1 = base * (d * b * (1 - qd1) - (j + 1) * (1 - qd)) / (r * r)
    return s0, s1


def _block_integrand(N, blocks, method, r, c):
    _, la, lb = log_weight_factors(r)
    out = np.empty(r.shape + (len(blocks), 2))
    if method == "direct":
        small = np.ones(r.shape, bool)
    elif method == "closed":
        small = np.zeros(r.shape, bool)
    else:
        small = r < DIRECT_SUM_MAX_R
    big = ~small
    for i, (tj, log_n) in enumerate(blocks):
        j = tj / 2
        if np.any(small):
            s0, s1 = _msums_direct(N, tj, log_n, la[small], lb[small])
            out[small, i, 0] = c[small] * s0
            out[small, i, 1] = r[small] / (j + 1) * s1
        if np.any(big):
            if tj == 0:
                s0, s1 = _msums_direct(N, tj, log_n, la[big], lb[big])
            else:
                s0, s1 = _msums_closed(N, tj, log_n, r[big], la[big], lb[big])
            out[big, i, 0] = c[big] * s0
            out[big, i, 1] = r[big] / (j + 1) * s1
    return out


def scaled_moments(N: int, prior: Prior, twice_js=None, method: str = "auto") -> np.ndarray:
    """Array of shape (blocks, 2) holding n_j v0_j and n_j vz_j.

    ``method`` picks the m-sum: ``"direct"``, ``"closed"`` (geometric series)
    or ``"auto"`` (direct for small r, closed otherwise).
    """
    if method not in ("auto", "direct", "closed"):
        raise DomainError(f"unknown method {method!r}")
    if twice_js is None:
        twice_js = [b.twice_j for b in multiplicities(N)]
    blocks = [(tj, _log_multiplicity(N, tj)) for tj in twice_js]
    for tj, _ in blocks:
        _check_block(N, tj)
    return np.asarray(integrate(prior, lambda r, c: _block_integrand(N, blocks, method, r, c),
                                pass_cos=True))


def v0_vz(N: int, j, prior: Prior, method: str = "auto") -> tuple[float, float]:
    """(v0_j, vz_j) for block j of N copies."""
    tj = twice(j)
    _check_block(N, tj)
    nv = scaled_moments(N, prior, [tj], method)[0]
    inv_n = math.exp(-_log_multiplicity(N, tj))
    return float(nv[0] * inv_n), float(nv[1] * inv_n)


def fidelity_3d(N: int, prior: Prior) -> FidelityReport3D:
    """Optimal fidelity with per-block v0, vz and purity estimates R_j."""
    blocks = multiplicities(N)
    nv = scaled_moments(N, prior, [b.twice_j for b in blocks])
    rows = []
    delta = 0.0
    for b, (nv0, nvz) in zip(blocks, nv):
        contrib = math.hypot(nv0, nvz)
        delta += contrib
        inv_n = math.exp(-_log_multiplicity(N, b.twice_j))
        R = abs(nvz) / contrib if contrib > 0 else 0.0
        rows.append(BlockRow(b.twice_j, b.n, float(nv0 * inv_n), float(nvz * inv_n),
                             float(contrib), float(R)))
    return FidelityReport3D("3d", N, prior.name, tuple(rows), float(delta),
                            float((1 + delta) / 2))


# --- Bures prior in closed form ---------------------------------------------

def _require_even(N: int) -> int:
    if not isinstance(N, (int, np.integer)) or N < 2 or N % 2:
        raise DomainError(f"closed form needs an even N >= 2, got {N!r}")
    return int(N) // 2


def bures_v0(N: int, j) -> float:
    """v0_j for the Bures prior and even N = 2n: 8 d/(pi (2n+3)) B(n-j+1, n+j+2)."""
    n = _require_even(N)
    tj = twice(j)
    _check_block(N, tj)
    j = tj // 2
    lb = math.lgamma(n - j + 1) + math.lgamma(n + j + 2) - math.lgamma(2 * n + 3)
    return 8 * (tj + 1) / (math.pi * (2 * n + 3)) * math.exp(lb)


def bures_closed_form(N: int) -> float:
    """Optimal 3D fidelity for the Bures prior, even N only."""
    n = _require_even(N)
    pref = (4 / math.pi) * 2 / ((2 * n + 3) * (2 * n + 2) * (2 * n + 1))
    delta = 0.0
    for j in range(n + 1):
        lg = (math.lgamma(n - j + 0.5) + math.lgamma(n + j + 1.5)
              - math.lgamma(n - j + 1) - math.lgamma(n + j + 1))
        ratio = j / (n + j + 1) * math.exp(lg)
        delta += (2 * j + 1) ** 2 * math.hypot(1.0, ratio)
    return (1 + pref * delta) / 2


# --- asymptotics and outcome law ----------------------------------------------

def asymptotic_constant_3d(prior: Prior) -> float:
    """lim N (1 - F) = (3 + 2<r>)/4."""
    return (3 + 2 * prior.mean_r) / 4


def asymptotic_f3d(N: int, prior: Prior) -> float:
    if N < 1:
        raise DomainError("N must be >= 1")
    return 1 - asymptotic_constant_3d(prior) / N


def extrapolate_limit(Ns, values) -> float:
    """Limit as N -> infinity of a sequence with corrections in powers of N^-1/2.

    Fits c + a N^-1/2 + b N^-1 + e N^-3/2 (least squares beyond four points)
    and returns c.  Half-integer powers arise from prior mass near r = 0.
    """
    Ns = np.asarray(Ns, float)
    y = np.asarray(values, float)
    if Ns.shape != y.shape or len(Ns) < 4:
        raise DomainError("need at least four (N, value) pairs")
    A = np.column_stack([Ns ** (-k / 2) for k in range(4)])
    return float(np.linalg.lstsq(A, y, rcond=None)[0][0])


def conditional_outcome_density(N: int, j, r, cos_gamma):
    """Density of outcome (j, mu) given a state of purity r.

    d_j ((1-r^2)/4)^(N/2-j) ((1 + r cos gamma)/2)^(2j), with respect to the
    normalized measure on the sphere of directions mu; gamma is the angle
    between the state's Bloch direction and mu.
    """
    tj = twice(j)
    _check_block(N, tj)
    r = np.asarray(r, dtype=float)
    cg = np.asarray(cos_gamma, dtype=float)
    if np.any(r < 0) or np.any(r > 1):
        raise DomainError("purity r must lie in [0, 1]")
    if np.any(np.abs(cg) > 1):
        raise DomainError("|cos gamma| must be <= 1")
    k = (N - tj) // 2
    logP, _, _ = log_weight_factors(r)
    with np.errstate(divide="ignore"):
        lx = np.log1p(r * cg) - math.log(2)
    e = (k * logP if k else 0.0) + (tj * lx if tj else 0.0)
    out = (tj + 1) * np.exp(np.broadcast_to(e, np.broadcast(r, cg).shape))
    return float(out) if out.ndim == 0 else out


def outcome_total_probability(N: int, r: float, nodes: int = 200) -> float:
    """sum_j n_j int dmu p(j, mu | r); equals 1."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for b in multiplicities(N):
        total += b.n * 0.5 * np.dot(w, conditional_outcome_density(N, b.j, r, x))
    return float(total)
