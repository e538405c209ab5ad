"""Isotropic purity priors w(r) on [0, 1] and the quadrature behind every r-integral.

Priors whose support reaches r = 1 are integrated in the variable
``t = arcsin r``.  That removes the Bures 1/sqrt(1-r^2) endpoint
singularity and, just as importantly, the sqrt(1-r^2) factors that appear
in every fidelity integrand, so Gauss-Legendre converges spectrally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, QuadratureError

DEFAULT_START_NODES = 64
DEFAULT_MAX_NODES = 4096
RTOL = 1e-10
ATOL = 1e-13
MIN_TABLE_POINTS = 4


@lru_cache(maxsize=64)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class Quadrature:
    """A fixed rule on r: ``sum(weights * f(nodes))``.

    ``cosines`` holds sqrt(1 - r^2) evaluated without cancellation.  For a
    prior's rule the weights already include the density and Jacobian.
    """

    nodes: np.ndarray
    weights: np.ndarray
    cosines: np.ndarray
    transform: str = "none"

    @classmethod
    def gauss_legendre(cls, n: int, a: float = 0.0, b: float = 1.0) -> "Quadrature":
        x, w = _leggauss(n)
        r = 0.5 * (b - a) * x + 0.5 * (a + b)
        return cls(r, 0.5 * (b - a) * w, np.sqrt((1 - r) * (1 + r)))

    def __call__(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


def _panel_rule(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (half * x + 0.5 * (hi + lo)).ravel()
    weights = (half * w).ravel()
    return nodes, weights


class Prior:
    """Purity density w(r) with its own quadrature rule.

    Parameters
    ----------
    kind : str
        ``"bures"``, ``"uniform"``, ``"step"``, ``"tabulated"`` or ``"smoothed"``.
    name : str
        Identifier used in reports (``"step:0.5"`` and so on).
    density, derivative : callable
        w(r) and w'(r), vectorized over r inside the support.
    upper : float
        Right end of the support; the density vanishes beyond it.
    t_density : callable, optional
        ``w(sin t) cos t`` written in a form free of cancellation near
        t = pi/2.  Only used when the support reaches 1.
    breakpoints : sequence of float
        Interior points where the density is not smooth.
    """

    def __init__(self, kind: str, name: str, density: Callable, derivative: Callable | None,
                 *, upper: float = 1.0, singular_at_one: bool = False,
                 t_density: Callable | None = None, breakpoints=(), scale: float = 1.0):
        self.kind = kind
        self.name = name
        self.upper = float(upper)
        self.singular_at_one = singular_at_one
        self.transform = "sin" if self.upper >= 1.0 else "none"
        self.breakpoints = tuple(sorted(float(b) for b in breakpoints if 0 < b < self.upper))
        self._density = density
        self._derivative = derivative
        self._t_density = t_density
        self.scale = float(scale)
        self._rules: dict[int, Quadrature] = {}
        # renormalize; for analytic priors this is a no-op up to rounding
        self.normalization = float(integrate(self, lambda r: np.ones_like(r)))
        if self.normalization <= 0:
            raise DomainError(f"prior {name} has zero mass")
        if kind == "tabulated":
            self.scale /= self.normalization
            self._rules.clear()
            self.renormalization_factor = 1 / self.normalization
        self.moments = {q: float(integrate(self, lambda r, q=q: r ** q)) for q in (1, 2, 3, 4)}
        self.mean_sqrt_one_minus_r2 = float(
            integrate(self, lambda r, c: c, pass_cos=True))

    def __repr__(self):
        return f"Prior({self.name!r})"

    @property
    def mean_r(self) -> float:
        return self.moments[1]

    def density(self, r):
        r = np.asarray(r, dtype=float)
        inside = (r >= 0) & (r <= self.upper)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(inside, self.scale * self._density(np.clip(r, 0, self.upper)), 0.0)
        return out

    def derivative(self, r):
        if self._derivative is None:
            raise NotImplementedError(f"prior {self.name} has no derivative")
        r = np.asarray(r, dtype=float)
        inside = (r >= 0) & (r <= self.upper)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(inside, self.scale * self._derivative(np.clip(r, 0, self.upper)), 0.0)

    def panel_edges(self) -> np.ndarray:
        pts = np.array((0.0,) + self.breakpoints + (self.upper,))
        if self.transform == "sin":
            return np.arcsin(pts)
        return pts

    def rule(self, order: int) -> Quadrature:
        """Composite Gauss-Legendre rule with ``order`` nodes per panel."""
        cached = self._rules.get(order)
        if cached is not None:
            return cached
        nodes, w = _panel_rule(self.panel_edges(), order)
        if self.transform == "sin":
            r, c = np.sin(nodes), np.cos(nodes)
            if self._t_density is not None:
                dens = self.scale * self._t_density(nodes)
            else:
                dens = self.density(r) * c
        else:
            r = nodes
            c = np.sqrt((1 - r) * (1 + r))
            dens = self.density(r)
        q = Quadrature(r, w * dens, c, self.transform)
        self._rules[order] = q
        return q

    def n_panels(self) -> int:
        return len(self.breakpoints) + 1


def integrate(prior: Prior, f: Callable, *, pass_cos: bool = False, rtol: float = RTOL,
              atol: float = ATOL, start_nodes: int = DEFAULT_START_NODES,
              max_nodes: int = DEFAULT_MAX_NODES):
    """Integral of ``w(r) f(r)`` over [0, 1] by node doubling.

    ``f`` is called with the node array (and sqrt(1-r^2) if ``pass_cos``)
    and may return an array with the node axis first; the result then has
    the remaining shape.  Convergence is elementwise: successive estimates
    agree to ``rtol`` relative or ``atol`` absolute.
    """
    panels = prior.n_panels()
    order = max(4, -(-start_nodes // panels))
    budget = max(max_nodes, 16 * panels)
    prev = None
    while True:
        q = prior.rule(order)
        vals = f(q.nodes, q.cosines) if pass_cos else f(q.nodes)
        est = q(np.asarray(vals, dtype=float))
        if prev is not None:
            err = np.abs(est - prev)
            if np.all(err <= np.maximum(rtol * np.abs(est), atol)):
                return est if np.ndim(est) else float(est)
        if order * panels * 2 > budget:
            raise QuadratureError(
                f"quadrature for prior {prior.name} did not converge with "
                f"{order * panels} nodes", last_estimates=(prev, est))
        prev = est
        order *= 2


# --- constructors ----------------------------------------------------------

def bures_prior() -> Prior:
    """w(r) = (4/pi) r^2 / sqrt(1 - r^2)."""
    k = 4 / math.pi
    return Prior(
        "bures", "bures",
        lambda r: k * r * r / np.sqrt((1 - r) * (1 + r)),
        lambda r: k * r * (2 - r * r) / ((1 - r) * (1 + r)) ** 1.5,
        singular_at_one=True,
        t_density=lambda t: k * np.sin(t) ** 2,
    )


def uniform_prior() -> Prior:
    return Prior("uniform", "uniform", lambda r: np.ones_like(r), lambda r: np.zeros_like(r),
                 t_density=np.cos)


def step_prior(delta: float) -> Prior:
    """w(r) = 2r/delta^2 on [0, delta], zero beyond."""
    delta = float(delta)
    if not (0 < delta <= 1):
        raise DomainError(f"step prior needs 0 < delta <= 1, got {delta}")
    k = 2 / delta ** 2
    return Prior("step", f"step:{delta:g}", lambda r: k * r, lambda r: np.full_like(r, k),
                 upper=delta,
                 t_density=(lambda t: k * np.sin(t) * np.cos(t)) if delta == 1 else None)


def tabulated_prior(samples, name: str = "tabulated") -> Prior:
    """Prior from (r, w) samples, interpolated by a monotone cubic.

    The interpolant is extended to all of [0, 1] (clipped at zero) and
    renormalized; the factor applied is kept in ``renormalization_factor``.
    Tables are taken as nonsingular: near an integrable r = 1 singularity
    the last cell is resolved only as well as the samples allow.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("tabulated prior needs a sequence of (r, w) pairs")
    r, w = arr[:, 0], arr[:, 1]
    if len(r) < MIN_TABLE_POINTS:
        raise DomainError(f"tabulated prior needs at least {MIN_TABLE_POINTS} samples, got {len(r)}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("tabulated prior samples must be finite")
    if np.any(r < 0) or np.any(r > 1):
        raise DomainError("tabulated prior r values must lie in [0, 1]")
    if np.any(np.diff(r) <= 0):
        bad = int(np.argmax(np.diff(r) <= 0)) + 1
        raise DomainError(f"tabulated prior r values must be strictly increasing (sample {bad})")
    if np.any(w < 0):
        raise DomainError(f"tabulated prior has negative density (sample {int(np.argmax(w < 0))})")
    interp = PchipInterpolator(r, w, extrapolate=True)
    dinterp = interp.derivative()

    def dens(x):
        return np.maximum(interp(x), 0.0)

    def deriv(x):
        return np.where(interp(x) > 0, dinterp(x), 0.0)

    return Prior("tabulated", name, dens, deriv, t_density=lambda t: dens(np.sin(t)) * np.cos(t),
                 breakpoints=r)


class PriorFileError(DomainError):
    """Malformed prior table; ``line`` is the 1-based offending line."""

    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


def load_prior_file(path) -> Prior:
    """Read a two-column ``r w`` table; ``#`` starts a comment."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise PriorFileError(f"cannot read prior file {path}: {exc}") from exc
    rows, lines = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise PriorFileError(f"expected two columns, got {len(parts)}", lineno)
        try:
            rv, wv = float(parts[0]), float(parts[1])
        except ValueError:
            raise PriorFileError(f"not a number: {line!r}", lineno) from None
        if not (0 <= rv <= 1):
            raise PriorFileError(f"r = {rv} outside [0, 1]", lineno)
        if wv < 0 or not math.isfinite(wv):
            raise PriorFileError(f"invalid density {wv}", lineno)
        if rows and rv <= rows[-1][0]:
            raise PriorFileError("r values must be strictly increasing", lineno)
        rows.append((rv, wv))
        lines.append(lineno)
    if len(rows) < MIN_TABLE_POINTS:
        raise PriorFileError(f"need at least {MIN_TABLE_POINTS} samples, found {len(rows)}",
                             lines[-1] if lines else None)
    return tabulated_prior(rows, name=f"file:{path.name}")


def parse_prior(spec: str) -> Prior:
    """``bures``, ``uniform``, ``step:DELTA`` or ``file:PATH``."""
    spec = spec.strip()
    if spec == "bures":
        return bures_prior()
    if spec == "uniform":
        return uniform_prior()
    if spec.startswith("step:"):
        try:
            delta = float(spec[5:])
        except ValueError:
            raise DomainError(f"bad step width in prior spec {spec!r}") from None
        return step_prior(delta)
    if spec.startswith("file:"):
        return load_prior_file(spec[5:])
    raise DomainError(f"unknown prior {spec!r} (bures, uniform, step:DELTA, file:PATH)")
