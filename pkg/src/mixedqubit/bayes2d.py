"""Optimal Bayesian fidelity for N copies of an equatorial-plane qubit.

A phase-covariant measurement is fixed by one seed per block j,
Omega_mm' = sum_chi u^chi_m u^chi_m', with sum_chi (u^chi_m)^2 = 1 so that
the covariant family resolves the identity.  Its fidelity is F = (1 + Delta)/2,

    Delta   = sum_j n_j Delta_j,
    Delta_j = sum_chi sqrt( (sum_m alpha_m u_m^2)^2 + (sum_m beta_m u_m u_m+1)^2 ),

with alpha_m = int w sqrt(1-r^2) rho^j_mm and beta_m = int w r rho^j_m,m+1.
The all-ones seed is prior independent and optimal for j <= 5/2.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .bayes3d import _log_multiplicity, scaled_moments
from .errors import DomainError, OptimizationWarning
from .priors import Prior, integrate
from .repr_core import _check_block, c_array, log_weight_factors, multiplicities, twice, wigner_d_half_pi
from .reporting import BlockRow, FidelityReport2D

NORMALIZATION_TOL = 1e-10
N_STARTS = 32
# relative improvement over all-ones below which all-ones is reported
ONES_TIE_RTOL = 1e-14
ACTIVE_COLUMN_TOL = 1e-10


@dataclass(frozen=True)
class SeedVectors:
    """Seed columns ``u[chi, k]`` for m = -j + k, real and column-normalized per m."""

    twice_j: int
    columns: np.ndarray
    converged: bool = True

    @property
    def j(self) -> float:
        return self.twice_j / 2

    @property
    def n_active(self) -> int:
        return int(np.sum(np.sum(self.columns ** 2, axis=1) > ACTIVE_COLUMN_TOL))

    @classmethod
    def all_ones(cls, j) -> "SeedVectors":
        tj = twice(j)
        return cls(tj, np.ones((1, tj + 1)))

    def as_dict(self) -> dict:
        m = (np.arange(self.twice_j + 1) * 2 - self.twice_j) / 2
        return {chi: {float(mm): float(v) for mm, v in zip(m, col)}
                for chi, col in enumerate(self.columns)}


def max_columns(j) -> int:
    """Largest number of seed columns that can be needed, floor(d_j/2) (at least 1)."""
    return max(1, (twice(j) + 1) // 2)


# --- block coefficients ------------------------------------------------------

def power_moments(N: int, prior: Prior):
    """A[k], B[k] = int w {sqrt(1-r^2), r} ((1-r)/2)^(N/2-m) ((1+r)/2)^(N/2+m), m = -N/2 + k."""
    tms = np.arange(-N, N + 1, 2)

    def f(r, c):
        _, la, lb = log_weight_factors(r)
        km = (N - tms)[None, :] // 2
        kp = (N + tms)[None, :] // 2
        with np.errstate(invalid="ignore"):
            e = np.where(km > 0, km * la[:, None], 0.0) + np.where(kp > 0, kp * lb[:, None], 0.0)
        t = np.exp(e)
        return np.stack([c[:, None] * t, r[:, None] * t], axis=-1)

    out = np.asarray(integrate(prior, f, pass_cos=True))
    return out[:, 0], out[:, 1]


def _block_slice(N: int, tj: int) -> slice:
    # m'' runs over -j..j inside the full -N/2..N/2 moment vector
    lo = (N - tj) // 2
    return slice(lo, lo + tj + 1)


def alpha_beta(N: int, j, prior: Prior, moments=None):
    """alpha^j_m (length d_j) and beta^j_m for m = -j..j-1 (length d_j - 1)."""
    tj = twice(j)
    _check_block(N, tj)
    A, B = power_moments(N, prior) if moments is None else moments
    s = _block_slice(N, tj)
    D = np.asarray(wigner_d_half_pi(tj / 2))
    alpha = (D * D) @ A[s]
    beta = np.einsum("ki,ki,i->k", D[:-1], D[1:], B[s])
    return alpha, beta


def block_matrices(N: int, j, prior: Prior, moments=None):
    """Full prior-averaged matrices int w sqrt(1-r^2) rho^j and int w r rho^j."""
    tj = twice(j)
    _check_block(N, tj)
    A, B = power_moments(N, prior) if moments is None else moments
    s = _block_slice(N, tj)
    D = np.asarray(wigner_d_half_pi(tj / 2))
    return (D * A[s]) @ D.T, (D * B[s]) @ D.T


def _check_seeds(u: np.ndarray, d: int) -> None:
    if u.ndim != 2 or u.shape[1] != d:
        raise DomainError(f"seed columns must have shape (chi, {d})")
    err = np.max(np.abs(np.sum(u * u, axis=0) - 1))
    if err > NORMALIZATION_TOL:
        raise DomainError(f"seed columns violate sum_chi u_m^2 = 1 by {err:.3g}")


def delta_j_2d(alpha, beta, seeds) -> float:
    """Delta_j for the given seed columns."""
    alpha = np.asarray(alpha, float)
    beta = np.asarray(beta, float)
    u = seeds.columns if isinstance(seeds, SeedVectors) else np.atleast_2d(np.asarray(seeds, float))
    _check_seeds(u, len(alpha))
    return _delta_value(alpha, beta, u)


def _delta_value(alpha, beta, u):
    A = (u * u) @ alpha
    B = (u[:, :-1] * u[:, 1:]) @ beta
    return float(np.sum(np.hypot(A, B)))


def _excess_value(alpha, beta, u):
    """Delta_j - sum(alpha), written without cancellation.

    On the constraint set sum_chi A_chi = sum(alpha), so
    Delta_j - sum(alpha) = sum_chi B^2 / (sqrt(A^2 + B^2) + A).  The
    optimization gain is a tiny fraction of Delta_j but not of this excess.
    """
    A = (u * u) @ alpha
    B = (u[:, :-1] * u[:, 1:]) @ beta
    h = np.hypot(A, B)
    return float(np.sum(np.where(h > 0, B * B / np.where(h > 0, h + A, 1.0), 0.0)))


def _objective(v, alpha, beta, K, d):
    """Minus the excess and its gradient, with u = v normalized over chi for each m."""
    V = v.reshape(K, d)
    norms = np.sqrt(np.sum(V * V, axis=0))
    norms = np.where(norms > 0, norms, 1.0)
    U = V / norms
    A = (U * U) @ alpha
    B = (U[:, :-1] * U[:, 1:]) @ beta
    h = np.hypot(A, B)
    pos = h > 0
    safe = np.where(pos, h, 1.0)
    val = np.sum(np.where(pos, B * B / (safe + A), 0.0))
    # d(h - A) = (A/h - 1) dA + (B/h) dB, and A/h - 1 = -B^2 / (h (h + A))
    ga = np.where(pos, -B * B / (safe * (safe + A)), 0.0)[:, None]
    gb = np.where(pos, B / safe, 0.0)[:, None]
    G = 2 * ga * alpha * U
    G[:, :-1] += gb * beta * U[:, 1:]
    G[:, 1:] += gb * beta * U[:, :-1]
    # project out the radial part, per m
    G = (G - U * np.sum(G * U, axis=0)) / norms
    return -val, -G.ravel()


def _n_active(u):
    return int(np.sum(np.sum(u * u, axis=1) > ACTIVE_COLUMN_TOL))


def _ascend(v0, alpha, beta, K, d):
    res = minimize(_objective, v0.ravel(), args=(alpha, beta, K, d), jac=True,
                   method="BFGS", options={"gtol": 1e-20, "maxiter": 20000})
    V = res.x.reshape(K, d)
    U = np.abs(V) / np.sqrt(np.sum(V * V, axis=0))
    # status 2 is precision loss, the normal way BFGS stops at a flat optimum
    return _excess_value(alpha, beta, U), U, bool(res.success) or res.status == 2


def dual_certificate(alpha, beta, u, n_theta: int = 2001):
    """Upper bound test for a candidate maximizer.

    Delta_j equals the minimum of sum(y) over y with
    diag(y) - cos(t) diag(alpha) - sin(t) T_beta >= 0 for all t in [0, pi/2],
    T_beta being tridiagonal with beta/2 off the diagonal.  The multipliers
    of a stationary point give a candidate y; returns sum(y) and the least
    eigenvalue found on a grid of t.  A nonnegative eigenvalue certifies
    that the candidate is a global maximum.
    """
    alpha = np.asarray(alpha, float)
    beta = np.asarray(beta, float)
    u = np.atleast_2d(u)
    T = np.diag(beta / 2, 1) + np.diag(beta / 2, -1)
    A = (u * u) @ alpha
    B = (u[:, :-1] * u[:, 1:]) @ beta
    th = np.arctan2(B, A)
    y = np.zeros(len(alpha))
    for k in range(u.shape[0]):
        Mk = math.cos(th[k]) * np.diag(alpha) + math.sin(th[k]) * T
        y += u[k] * (Mk @ u[k])
    ts = np.linspace(0, np.pi / 2, n_theta)
    worst = min(np.linalg.eigvalsh(np.diag(y) - math.cos(t) * np.diag(alpha) - math.sin(t) * T)[0]
                for t in ts)
    return float(np.sum(y)), float(worst)


def optimize_seeds(N: int, j, prior: Prior | None = None, *, alpha=None, beta=None,
                   n_starts: int = N_STARTS, seed: int = 0):
    """Maximize Delta_j over seed columns; returns (SeedVectors, value).

    Multistart quasi-Newton on the product of per-m unit spheres.  Starts:
    all-ones, all-ones with one extra column on a mirror pair or single m,
    then deterministic random points up to ``n_starts``; the best few are
    restarted once more.  The objective is the excess over sum(alpha), so
    relative gains far below machine epsilon of Delta_j stay resolvable.
    Among maximizers within 1e-10 of the best excess, the one with fewest
    active columns is returned; all-ones is returned exactly when nothing
    beats it by more than 1e-14 of Delta_j.  ``converged`` records whether the dual
    certificate accepts the result.
    """
    tj = twice(j)
    _check_block(N, tj)
    if alpha is None or beta is None:
        if prior is None:
            raise DomainError("optimize_seeds needs a prior or precomputed alpha, beta")
        alpha, beta = alpha_beta(N, tj / 2, prior)
    alpha = np.asarray(alpha, float)
    beta = np.asarray(beta, float)
    d = tj + 1
    ones = np.ones((1, d))
    base = float(np.sum(alpha))
    ones_ex = _excess_value(alpha, beta, ones)
    K = max_columns(tj / 2)
    if d == 1 or K == 1:
        # a single column must be all +-1; signs only matter through beta >= 0
        return SeedVectors(tj, ones), base + ones_ex
    rng = np.random.default_rng(seed)
    starts = [np.vstack([ones, np.zeros((K - 1, d))])]
    # all-ones plus one extra column on a mirror pair {m, -m} or a single m;
    # alpha and beta are symmetric under m -> -m, and optima split off a few m
    for support in [(k, d - 1 - k) for k in range(d // 2)] + [(k,) for k in range(d)]:
        v = np.vstack([ones, np.zeros((K - 1, d))])
        v[1, list(support)] = 0.4
        starts.append(v)
    for i in range(max(0, n_starts - len(starts))):
        if i % 2:
            starts.append(np.abs(rng.standard_normal((K, d))))
        else:
            # near all-ones with sparse extra columns; optima split off a few m
            extra = rng.uniform(0, 0.6, (K - 1, d)) * (rng.random((K - 1, d)) < 0.3)
            starts.append(np.vstack([ones, extra]))
    results = [_ascend(v0, alpha, beta, K, d) for v0 in starts]
    results.sort(key=lambda t: -t[0])
    results = [_ascend(U, alpha, beta, K, d) for _, U, _ in results[:3]] + results
    best = max(v for v, _, _ in results)
    scale = base + best
    if best - ones_ex <= ONES_TIE_RTOL * scale:
        return SeedVectors(tj, ones, True), base + ones_ex
    close = [t for t in results if t[0] >= best - 1e-10 * best]
    val, U, _ = min(close, key=lambda t: (_n_active(t[1]), -t[0]))
    U = U[np.sum(U * U, axis=1) > ACTIVE_COLUMN_TOL]
    _, worst = dual_certificate(alpha, beta, U)
    certified = worst >= -1e-10 * scale
    if not certified:
        warnings.warn(f"seed optimization for j={tj / 2} not certified optimal "
                      f"(dual residual {worst:.3g}); best value {base + val!r}",
                      OptimizationWarning, stacklevel=2)
    return SeedVectors(tj, U, certified), base + val


def relative_gain(alpha, beta, seeds) -> float:
    """(Delta_j(seeds) - Delta_j(all-ones)) / Delta_j(seeds), cancellation free."""
    u = seeds.columns if isinstance(seeds, SeedVectors) else np.atleast_2d(seeds)
    alpha = np.asarray(alpha, float)
    e = _excess_value(alpha, beta, u)
    e1 = _excess_value(alpha, beta, np.ones((1, len(alpha))))
    return (e - e1) / (float(np.sum(alpha)) + e)


# --- fidelity -----------------------------------------------------------------

def _vx_integrand(N, blocks, order, r):
    _, la, lb = log_weight_factors(r)
    lq = la - lb
    out = np.zeros(r.shape + (len(blocks),))
    for i, (tj, log_n) in enumerate(blocks):
        if tj == 0:
            continue
        c = c_array(tj / 2)
        if order == "full":
            for k, tm in enumerate(range(-tj, tj + 1, 2)):
                km, kp = (N - tm) // 2, (N + tm) // 2
                e = log_n + (km * la if km else 0.0) + (kp * lb if kp else 0.0)
                out[:, i] += c[k] * np.exp(e)
        else:
            # c_{-m} = -c_m: pair m with -m, a^(J-m) b^(J+m) (1 - q^(2m))
            for k, tm in enumerate(range(-tj, tj + 1, 2)):
                if tm <= 0:
                    continue
                km, kp = (N - tm) // 2, (N + tm) // 2
                e = log_n + (km * la if km else 0.0) + (kp * lb if kp else 0.0)
                out[:, i] += c[k] * np.exp(e) * (-np.expm1(tm * lq))
        out[:, i] *= r
    return out


def scaled_vx(N: int, prior: Prior, twice_js=None, order: str = "folded") -> np.ndarray:
    """n_j vx_j for the all-ones seed, summing over m in full or folded order."""
    if order not in ("full", "folded"):
        raise DomainError(f"unknown order {order!r}")
    if twice_js is None:
        twice_js = [b.twice_j for b in multiplicities(N)]
    blocks = [(tj, _log_multiplicity(N, tj)) for tj in twice_js]
    for tj, _ in blocks:
        _check_block(N, tj)
    return np.atleast_1d(np.asarray(integrate(prior, lambda r: _vx_integrand(N, blocks, order, r))))


def v0_vx(N: int, j, prior: Prior, order: str = "folded") -> tuple[float, float]:
    tj = twice(j)
    _check_block(N, tj)
    inv_n = math.exp(-_log_multiplicity(N, tj))
    nv0 = scaled_moments(N, prior, [tj])[0, 0]
    nvx = scaled_vx(N, prior, [tj], order)[0]
    return float(nv0 * inv_n), float(nvx * inv_n)


def _mode(mode: str) -> str:
    m = {"ones": "ones", "fixed": "ones", "opt": "opt", "optimized": "opt"}.get(mode)
    if m is None:
        raise DomainError(f"unknown 2D mode {mode!r} (ones or opt)")
    return m


def fidelity_2d(N: int, prior: Prior, mode: str = "ones", *, seed: int = 0) -> FidelityReport2D:
    """Fidelity of the all-ones (``"ones"``) or optimized (``"opt"``) covariant POVM."""
    mode = _mode(mode)
    blocks = multiplicities(N)
    tjs = [b.twice_j for b in blocks]
    rows = []
    delta = 0.0
    extra = {}
    if mode == "ones":
        nv0 = scaled_moments(N, prior, tjs)[:, 0]
        nvx = scaled_vx(N, prior, tjs)
        for b, a0, ax in zip(blocks, nv0, nvx):
            contrib = math.hypot(a0, ax)
            delta += contrib
            inv_n = math.exp(-_log_multiplicity(N, b.twice_j))
            R = abs(ax) / contrib if contrib > 0 else 0.0
            rows.append(BlockRow(b.twice_j, b.n, float(a0 * inv_n), float(ax * inv_n),
                                 float(contrib), float(R)))
    else:
        moments = power_moments(N, prior)
        seeds = {}
        for b in blocks:
            alpha, beta = alpha_beta(N, b.j, prior, moments)
            sv, val = optimize_seeds(N, b.j, alpha=alpha, beta=beta, seed=seed)
            contrib = b.n * val
            delta += contrib
            u = sv.columns
            A = (u * u) @ alpha
            B = (u[:, :-1] * u[:, 1:]) @ beta
            h = np.hypot(A, B)
            top = int(np.argmax(h))
            R = float(B[top] / h[top]) if h[top] > 0 else 0.0
            rows.append(BlockRow(b.twice_j, b.n, float(np.sum(alpha)), float(np.sum(beta)),
                                 float(contrib), R))
            seeds[b.j] = {"n_columns": int(u.shape[0]), "converged": sv.converged}
        extra["seeds"] = seeds
    return FidelityReport2D("2d", N, prior.name, tuple(rows), float(delta),
                            float((1 + delta) / 2), mode=mode, extra=extra)


def asymptotic_constant_2d(prior: Prior | None = None) -> float:
    """lim N (1 - F) = 1/2 for every prior."""
    return 0.5


def asymptotic_f2d(N: int) -> float:
    if N < 1:
        raise DomainError("N must be >= 1")
    return 1 - 0.5 / N


# --- finite covariant POVM ------------------------------------------------------

def discrete_seed(j, M: int) -> np.ndarray:
    """Seed for the M-outcome phase POVM built from the all-ones seed.

    For M >= d_j the all-ones seed already gives sum_a U(phi_a) Omega U^+ / M = 1.
    With fewer outcomes the entries with |m-m'| >= M would spoil that, so the
    seed is tapered by the Fejer triangle (1 - |m-m'|/M)^+, which is positive
    definite; M = 1 leaves the identity, a measurement with no phase content.
    """
    tj = twice(j)
    d = tj + 1
    if M < 1:
        raise DomainError("M must be >= 1")
    if M >= d:
        return np.ones((d, d))
    k = np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
    return np.clip(1 - k / M, 0, None)


def discretized_phase_povm_check(N: int, j, M: int, prior: Prior, n_phase: int | None = None) -> float:
    """Delta_j of the M-outcome covariant POVM, evaluated outcome by outcome.

    For every outcome a the optimal guess is formed from the signal-phase
    averages of tr(rho E_a) weighted by sqrt(1-r^2) and by r cos(phi - phi_a);
    the phase average is a trapezoid rule on ``n_phase`` points.
    """
    tj = twice(j)
    _check_block(N, tj)
    d = tj + 1
    if n_phase is None:
        n_phase = 4 * d + 4
    Mc, Mr = block_matrices(N, tj / 2, prior)
    omega = discrete_seed(tj / 2, M)
    m = np.arange(d) - tj / 2
    phis = 2 * np.pi * np.arange(n_phase) / n_phase
    total = 0.0
    for a in range(M):
        pa = 2 * np.pi * a / M
        z = x = 0.0
        for phi in phis:
            # U(phi) rho U(phi)^+ has entries e^{-i (m - m') phi} rho_mm'
            ph = np.exp(-1j * np.subtract.outer(m, m) * (phi - pa))
            # tr(U(phi) rho U^+ U(pa) Omega U^+(pa)) / M
            pc = np.real(np.sum(Mc * ph * omega.T)) / M
            pr = np.real(np.sum(Mr * ph * omega.T)) / M
            z += pc
            x += pr * math.cos(phi - pa)
        total += math.hypot(z / n_phase, x / n_phase)
    return total


def fit_counterexample(deltas=(0.05, 0.1, 0.2), N: int = 6, j=3, seed: int = 0) -> dict:
    """Relative gain of optimized over all-ones seeds for step priors.

    Returns the gaps and the least-squares line log(gap) = log(A) + p log(delta).
    """
    from .priors import step_prior
    gaps = []
    values = []
    for dl in deltas:
        prior = step_prior(dl)
        alpha, beta = alpha_beta(N, j, prior)
        ones = _delta_value(alpha, beta, np.ones((1, len(alpha))))
        sv, opt = optimize_seeds(N, j, alpha=alpha, beta=beta, seed=seed)
        gaps.append(relative_gain(alpha, beta, sv))
        values.append((ones, opt, sv.columns.shape[0]))
    x = np.log(np.asarray(deltas, float))
    y = np.log(np.asarray(gaps))
    slope, intercept = np.polyfit(x, y, 1)
    return {"deltas": list(map(float, deltas)), "gaps": list(map(float, gaps)),
            "ones": [v[0] for v in values], "opt": [v[1] for v in values],
            "n_columns": [v[2] for v in values], "slope": float(slope),
            "A": float(math.exp(intercept))}
