"""Local (pointwise) estimation theory for the 3D and 2D qubit models.

Parameters are theta = (r, theta, phi) for states anywhere in the Bloch
ball and theta = (r, theta) for equatorial states, where the 2D angle is
the azimuth in the x-y plane.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalFailure
from .priors import Prior, _leggauss
from .repr_core import log_weight_factors, multiplicities, wigner_d_half_pi

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SX, SY, SZ)
I2 = np.eye(2, dtype=complex)

RESIDUAL_TOL = 1e-10


def _dot_sigma(v) -> np.ndarray:
    return v[0] * SX + v[1] * SY + v[2] * SZ


@dataclass(frozen=True)
class ParamPoint:
    model: str
    r: float
    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if self.model not in ("3d", "2d"):
            raise DomainError(f"model must be '3d' or '2d', got {self.model!r}")
        if not (0 < self.r < 1):
            raise DomainError(f"r must lie strictly inside (0, 1), got {self.r}")

    @property
    def dim(self) -> int:
        return 3 if self.model == "3d" else 2

    def direction(self) -> np.ndarray:
        if self.model == "2d":
            return np.array([math.cos(self.theta), math.sin(self.theta), 0.0])
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])

    def direction_derivatives(self) -> list[np.ndarray]:
        """d n / d(angle) for each angular parameter."""
        if self.model == "2d":
            return [np.array([-math.sin(self.theta), math.cos(self.theta), 0.0])]
        st, ct = math.sin(self.theta), math.cos(self.theta)
        cp, sp = math.cos(self.phi), math.sin(self.phi)
        return [np.array([ct * cp, ct * sp, -st]), np.array([-st * sp, st * cp, 0.0])]

    def bloch(self) -> np.ndarray:
        return self.r * self.direction()

    def shifted(self, delta) -> "ParamPoint":
        delta = np.asarray(delta, float)
        if self.model == "2d":
            return ParamPoint("2d", self.r + delta[0], self.theta + delta[1])
        return ParamPoint("3d", self.r + delta[0], self.theta + delta[1], self.phi + delta[2])


def density(point: ParamPoint) -> np.ndarray:
    return 0.5 * (I2 + _dot_sigma(point.bloch()))


def density_derivatives(point: ParamPoint) -> list[np.ndarray]:
    n = point.direction()
    out = [0.5 * _dot_sigma(n)]
    out += [0.5 * point.r * _dot_sigma(dn) for dn in point.direction_derivatives()]
    return out


def sld(point: ParamPoint) -> list[np.ndarray]:
    """Symmetric logarithmic derivatives, in parameter order."""
    r = point.r
    ns = _dot_sigma(point.direction())
    pp, pm = 0.5 * (I2 + ns), 0.5 * (I2 - ns)
    out = [pp / (1 + r) - pm / (1 - r)]
    out += [r * _dot_sigma(dn) for dn in point.direction_derivatives()]
    return out


def sld_residual(point: ParamPoint) -> float:
    """max over parameters of |d rho - (rho L + L rho)/2|."""
    rho = density(point)
    res = 0.0
    for L, drho in zip(sld(point), density_derivatives(point)):
        res = max(res, float(np.max(np.abs(drho - 0.5 * (rho @ L + L @ rho)))))
    return res


def qfi(point: ParamPoint) -> np.ndarray:
    r = point.r
    if point.model == "2d":
        return np.diag([1 / (1 - r * r), r * r])
    return np.diag([1 / (1 - r * r), r * r, (r * math.sin(point.theta)) ** 2])


def qfi_from_sld(point: ParamPoint) -> np.ndarray:
    rho = density(point)
    Ls = sld(point)
    p = len(Ls)
    H = np.empty((p, p))
    for a in range(p):
        for b in range(p):
            H[a, b] = np.real(np.trace(rho @ Ls[a] @ Ls[b]))
    return H


# --- Holevo bound --------------------------------------------------------------

def holevo_matrices(point: ParamPoint) -> list[np.ndarray]:
    """Locally unbiased observables X_alpha attaining the Holevo bound at G = H."""
    if point.model == "2d":
        Hinv = np.linalg.inv(qfi(point))
        Ls = sld(point)
        return [sum(Hinv[a, b] * Ls[b] for b in range(2)) for a in range(2)]
    r = point.r
    st = math.sin(point.theta)
    if abs(st) < 1e-12:
        raise DomainError("3D Holevo matrices need sin(theta) != 0")
    n = point.direction()
    dth, dph = point.direction_derivatives()
    return [-r * I2 + _dot_sigma(n), _dot_sigma(dth) / r, _dot_sigma(dph) / (r * st * st)]


def holevo_z(point: ParamPoint, X=None) -> np.ndarray:
    rho = density(point)
    X = holevo_matrices(point) if X is None else X
    p = len(X)
    Z = np.empty((p, p), complex)
    for a in range(p):
        for b in range(p):
            Z[a, b] = np.trace(rho @ X[a] @ X[b])
    return Z


def holevo_conditions(point: ParamPoint, X=None) -> float:
    """Largest violation of tr(rho X_a) = 0, tr(d_a rho X_b) = delta_ab, X_a Hermitian."""
    rho = density(point)
    X = holevo_matrices(point) if X is None else X
    drho = density_derivatives(point)
    worst = 0.0
    for a, Xa in enumerate(X):
        worst = max(worst, float(np.max(np.abs(Xa - Xa.conj().T))),
                    abs(np.trace(rho @ Xa)))
        for b, db in enumerate(drho):
            worst = max(worst, abs(np.trace(db @ Xa) - (1.0 if a == b else 0.0)))
    return float(worst)


def _psd_sqrt(G: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(G)
    if np.min(w) < -1e-12 * max(1.0, np.max(np.abs(w))):
        raise DomainError("weight matrix G must be positive semidefinite")
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def holevo_bound(point: ParamPoint, G=None) -> float:
    """tr(G Re Z) + tr|sqrt(G) Im Z sqrt(G)| for the X set of the model.

    The 3D model admits a single locally unbiased X, so this is the bound for
    any G.  For the 2D model the X used is the SLD choice H^-1 lambda, which
    is the minimizer because Im tr(rho lambda_a lambda_b) = 0 there; the value
    then equals tr(G H^-1).
    """
    G = qfi(point) if G is None else np.asarray(G, float)
    if G.shape != (point.dim, point.dim) or not np.allclose(G, G.T, atol=1e-14):
        raise DomainError("G must be a symmetric matrix matching the model dimension")
    sG = _psd_sqrt(G)
    X = holevo_matrices(point)
    resid = holevo_conditions(point, X)
    if resid > RESIDUAL_TOL:
        raise NumericalFailure(f"Holevo X conditions violated by {resid:.3g}")
    Z = holevo_z(point, X)
    M = sG @ Z.imag @ sG
    return float(np.trace(G @ Z.real) + np.sum(np.abs(np.linalg.eigvals(M))))


# --- fidelity and its local expansion --------------------------------------------

def _cos_diff(a, b):
    # sqrt(1-a^2) - sqrt(1-b^2) without cancellation
    ca, cb = math.sqrt((1 - a) * (1 + a)), math.sqrt((1 - b) * (1 + b))
    return (b - a) * (b + a) / (ca + cb) if ca + cb > 0 else 0.0


def _direction_diff(p: ParamPoint, q: ParamPoint) -> np.ndarray:
    """n(p) - n(q) from half-angle products."""
    def cd(x, y):  # cos x - cos y
        return -2 * math.sin(0.5 * (x + y)) * math.sin(0.5 * (x - y))

    def sd(x, y):  # sin x - sin y
        return 2 * math.cos(0.5 * (x + y)) * math.sin(0.5 * (x - y))

    if p.model == "2d":
        return np.array([cd(p.theta, q.theta), sd(p.theta, q.theta), 0.0])
    st1, st2 = math.sin(p.theta), math.sin(q.theta)
    cp1, cp2 = math.cos(p.phi), math.cos(q.phi)
    sp1, sp2 = math.sin(p.phi), math.sin(q.phi)
    dst = sd(p.theta, q.theta)
    return np.array([dst * cp1 + st2 * cd(p.phi, q.phi),
                     dst * sp1 + st2 * sd(p.phi, q.phi),
                     cd(p.theta, q.theta)])


def infidelity(p: ParamPoint, q: ParamPoint) -> float:
    """1 - f = |R_p - R_q|^2 / 4 with R = (r n, sqrt(1 - r^2))."""
    dn = _direction_diff(p, q)
    d3 = p.r * dn + (p.r - q.r) * q.direction()
    d4 = _cos_diff(p.r, q.r)
    return 0.25 * (float(d3 @ d3) + d4 * d4)


def fidelity(p: ParamPoint, q: ParamPoint) -> float:
    """(1 + r.R + sqrt(1-r^2) sqrt(1-R^2)) / 2."""
    a, b = p.bloch(), q.bloch()
    return 0.5 * (1 + float(a @ b) + math.sqrt(1 - p.r ** 2) * math.sqrt(1 - q.r ** 2))


def fidelity_hessian_check(point: ParamPoint, direction=None, scales=(1e-3, 1e-4, 1e-5)) -> dict:
    """Compare 1 - f(theta, theta +- h v) with h^2 v^T H v / 4.

    Returns the relative errors per scale and the observed convergence
    order between successive scales.  Averaging the two signs removes the
    odd term, so the order should be 2.
    """
    v = np.ones(point.dim) if direction is None else np.asarray(direction, float)
    H = qfi(point)
    quad = 0.25 * float(v @ H @ v)
    errs = []
    for h in scales:
        g = 0.5 * (infidelity(point, point.shifted(h * v)) + infidelity(point, point.shifted(-h * v)))
        errs.append(abs(g / (h * h * quad) - 1))
    orders = [math.log(errs[i] / errs[i + 1]) / math.log(scales[i] / scales[i + 1])
              for i in range(len(scales) - 1)]
    return {"scales": list(scales), "rel_errors": errs, "orders": orders}


# --- Fisher information of the covariant protocols --------------------------------

def _fisher_3d(N: int, point: ParamPoint) -> np.ndarray:
    r = point.r
    t, wt = _leggauss(N + 8)
    logP, _, _ = log_weight_factors(r)
    lx = np.log1p(r * t) - math.log(2)
    Irr = Ith = 0.0
    for b in multiplicities(N):
        tj = b.twice_j
        k = (N - tj) // 2
        logpre = math.log(b.n) + math.log(tj + 1) + (k * logP if k else 0.0)
        p = np.exp(logpre + (tj * lx if tj else 0.0))
        sr = -2 * r * k / ((1 - r) * (1 + r)) + tj * t / (1 + r * t)
        Irr += 0.5 * np.dot(wt, p * sr * sr)
        # d/dtheta log p = 2j r (dn . mu)/(1 + r t); azimuthal average of cos^2 is 1/2
        Ith += 0.5 * np.dot(wt, p * (tj * r) ** 2 * (1 - t * t) / 2 / (1 + r * t) ** 2)
    s2 = math.sin(point.theta) ** 2
    return np.diag([Irr, Ith, s2 * Ith])


def _fisher_2d(N: int, point: ParamPoint, rtol: float = 1e-13) -> np.ndarray:
    r = point.r
    _, la, lb = log_weight_factors(r)
    dla, dlb = -1 / (1 - r), 1 / (1 + r)
    Irr = Ith = Irt = 0.0
    for b in multiplicities(N):
        tj = b.twice_j
        d = tj + 1
        D = np.asarray(wigner_d_half_pi(b.j))
        tms = np.arange(-tj, tj + 1, 2)
        km, kp = (N - tms) // 2, (N + tms) // 2
        lw = math.log(b.n) + km * la + kp * lb
        w = np.exp(lw)
        rho = (D * w) @ D.T
        drho = (D * (w * (km * dla + kp * dlb))) @ D.T
        # p(psi) = sum_k c_k cos(k psi): collect diagonals k = m - m'
        c = np.array([np.trace(rho, k) for k in range(d)])
        dc = np.array([np.trace(drho, k) for k in range(d)])
        c[1:] *= 2
        dc[1:] *= 2
        ks = np.arange(d)
        L = max(8, 2 * d)
        prev = None
        while True:
            psi = 2 * np.pi * np.arange(L) / L
            cos = np.cos(np.outer(psi, ks))
            sin = np.sin(np.outer(psi, ks))
            p = cos @ c
            pr = cos @ dc
            pp = -(sin @ (ks * c))
            est = np.array([np.mean(pr * pr / p), np.mean(pp * pp / p), np.mean(-pr * pp / p)])
            if prev is not None and np.all(np.abs(est - prev) <= rtol * np.abs(est).max()):
                break
            prev = est
            L *= 2
            if L > 1 << 16:
                raise NumericalFailure("phase quadrature for the 2D Fisher information did not converge")
        Irr += est[0]
        Ith += est[1]
        Irt += est[2]
    return np.array([[Irr, Irt], [Irt, Ith]])


def fisher_of_protocol(N: int, point: ParamPoint, protocol: str | None = None,
                       normalized: bool = False) -> np.ndarray:
    """Classical Fisher information of the covariant measurement on N copies.

    ``protocol`` is ``"covariant3d"`` (outcomes j and a direction) for the 3D
    model and ``"allones2d"`` (outcomes j and a phase) for the 2D model.
    """
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise DomainError("N must be a positive integer")
    protocol = protocol or ("covariant3d" if point.model == "3d" else "allones2d")
    if protocol == "covariant3d":
        if point.model != "3d":
            raise DomainError("covariant3d protocol needs a 3D point")
        I = _fisher_3d(N, point)
    elif protocol == "allones2d":
        if point.model != "2d":
            raise DomainError("allones2d protocol needs a 2D point")
        I = _fisher_2d(N, point)
    else:
        raise DomainError(f"unknown protocol {protocol!r}")
    return I / N if normalized else I


# --- van Trees bound -----------------------------------------------------------

def _smoothstep(x):
    # C^2: value, first and second derivative vanish at both ends
    x = np.clip(x, 0, 1)
    return x ** 3 * (10 - 15 * x + 6 * x * x)


def _smoothstep_d(x):
    inside = (x > 0) & (x < 1)
    x = np.clip(x, 0, 1)
    return np.where(inside, 30 * x * x * (1 - x) ** 2, 0.0)


@dataclass(frozen=True)
class VanTreesBound:
    floor: float        # asymptotic lower bound on N E[1 - f]
    rhs: float          # finite-N bound for the smoothed prior
    scaled_rhs: float   # bound for the original prior, rhs * mass kept by smoothing
    N: int
    eps: float
    information: float  # prior term E[|(w C)'|^2 / w^2]
    kept_mass: float


def smoothed_taper(prior: Prior, eps: float):
    """Taper factor s(r), s'(r) vanishing with two derivatives at both support ends.

    s = 0 on [0, eps] and beyond b - eps, s = 1 on [2 eps, b - 2 eps], with b
    the right end of the prior's support.
    """
    b = prior.upper
    if not (0 < eps < b / 4):
        raise DomainError(f"smoothing width eps={eps} must lie in (0, {b / 4})")

    def s(r):
        return _smoothstep((r - eps) / eps) * _smoothstep((b - eps - r) / eps)

    def ds(r):
        lo, hi = (r - eps) / eps, (b - eps - r) / eps
        return (_smoothstep_d(lo) * _smoothstep(hi) - _smoothstep(lo) * _smoothstep_d(hi)) / eps

    knots = (eps, 2 * eps, b - 2 * eps, b - eps)
    return s, ds, knots


def _panel_integral(f, knots, rtol=1e-12, atol=1e-15):
    n = 32
    prev = None
    while True:
        total = 0.0
        for lo, hi in zip(knots[:-1], knots[1:]):
            x, w = _leggauss(n)
            rr = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
            total += 0.5 * (hi - lo) * float(np.dot(w, f(rr)))
        if prev is not None and abs(total - prev) <= max(rtol * abs(total), atol):
            return total
        prev = total
        n *= 2
        if n > 8192:
            raise NumericalFailure("van Trees prior integral did not converge")


def van_trees_floor(prior: Prior, N: int, eps: float = 1e-2) -> VanTreesBound:
    """Van Trees lower bound on N E[1 - f] for the 2D model.

    With C = psi' H^-1 and the per-copy information bounded by H, the bound
    is (1/4) / (1/2 + T/N), with

        T = (1/4) int dr [((w r sqrt(1-r^2))')^2 + ((w (1-r^2))' - w/r)^2] / w

    for a prior w that vanishes smoothly at the ends of its support.  The
    prior is tapered at both ends (at r = 0 the polar chart makes the w/r
    term blow up unless w = o(r)); since w_eps <= w / kept_mass, the bound
    for the original prior is rhs * kept_mass.
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    s, ds, knots = smoothed_taper(prior, eps)
    pts = sorted(set(knots) | {b for b in prior.breakpoints if knots[0] < b < knots[-1]})

    def w_raw(r):
        return prior.density(r) * s(r)

    kept = _panel_integral(w_raw, pts)

    def integrand(r):
        w0 = prior.density(r)
        dw0 = prior.derivative(r)
        w = w0 * s(r) / kept
        dw = (dw0 * s(r) + w0 * ds(r)) / kept
        c2 = (1 - r) * (1 + r)
        c = np.sqrt(c2)
        t1 = dw * r * c + w * (1 - 2 * r * r) / c
        t2 = dw * c2 - 2 * r * w - w / r
        safe = np.where(w > 0, w, 1.0)
        return np.where(w > 0, 0.25 * (t1 * t1 + t2 * t2) / safe, 0.0)

    T = _panel_integral(integrand, pts)
    rhs = 0.25 / (0.5 + T / N)
    return VanTreesBound(0.5, float(rhs), float(rhs * kept), int(N), float(eps), float(T), float(kept))
