"""Monte Carlo run of the full protocol: draw a state, measure, guess, score.

Trials are cut into fixed-size chunks.  Chunk k draws from its own Philox
stream keyed by (seed, k), and chunk statistics are merged in chunk order,
so a run is bit-identical for any number of worker processes.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, NumericalFailure
from .priors import Prior, parse_prior
from .repr_core import log_weight_factors, multiplicities, wigner_d_half_pi

CHUNK_SIZE = 1 << 16
CDF_GRID = 4097
MIN_ACCEPTANCE = 1e-4
MAX_WORKERS_ENV = "MIXEDQUBIT_MAX_WORKERS"


@dataclass(frozen=True)
class SimConfig:
    N: int
    model: str = "3d"
    prior: str = "bures"
    trials: int = 100_000
    seed: int = 0
    workers: int = 1
    dump_path: str | None = None
    dump_cap: int = 100_000

    def validate(self) -> None:
        if not isinstance(self.N, (int, np.integer)) or self.N < 1:
            raise DomainError("N must be a positive integer")
        if self.model not in ("3d", "2d"):
            raise DomainError(f"model must be 3d or 2d, got {self.model!r}")
        if self.trials < 1:
            raise DomainError("trials must be >= 1")
        if self.workers < 1:
            raise DomainError("workers must be >= 1")
        if not (0 <= self.seed < 2 ** 64):
            raise DomainError("seed must be a 64-bit unsigned integer")


@dataclass
class SimResult:
    config: SimConfig
    mean_fidelity: float
    std_error: float | None
    std_error_defined: bool
    histogram: dict
    closed_form: float
    z_score: float | None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        c = self.config
        return {"N": c.N, "model": c.model, "prior": c.prior, "trials": c.trials,
                "seed": c.seed, "workers": c.workers, "mean_fidelity": self.mean_fidelity,
                "std_error": self.std_error, "std_error_defined": self.std_error_defined,
                "closed_form": self.closed_form, "z_score": self.z_score,
                "histogram": {str(k): v for k, v in self.histogram.items()}}


# --- state sampling ---------------------------------------------------------------

class PuritySampler:
    """Inverse-CDF sampler for r: monotone cubic through a fine table of the CDF.

    The table lives in t = arcsin r when the prior uses that variable, so the
    Bures endpoint behaves like the smooth density (4/pi) sin^2 t.
    """

    def __init__(self, prior: Prior, grid: int = CDF_GRID):
        edges = prior.panel_edges()
        # cumulative integral on a fine grid, 8-point Gauss per cell
        xs = np.unique(np.concatenate([np.linspace(lo, hi, max(3, int(grid * (hi - lo) / (edges[-1] - edges[0]))))
                                       for lo, hi in zip(edges[:-1], edges[1:])]))
        gx, gw = np.polynomial.legendre.leggauss(8)
        lo, hi = xs[:-1, None], xs[1:, None]
        nodes = 0.5 * (hi - lo) * gx + 0.5 * (hi + lo)
        dens = self._density_in_variable(prior, nodes)
        cells = np.sum(0.5 * (hi - lo) * gw * dens, axis=1)
        cdf = np.concatenate([[0.0], np.cumsum(cells)])
        cdf /= cdf[-1]
        keep = np.concatenate([[True], np.diff(cdf) > 0])
        self.transform = prior.transform
        self._inv = PchipInterpolator(cdf[keep], xs[keep])

    @staticmethod
    def _density_in_variable(prior, x):
        if prior.transform == "sin":
            if prior._t_density is not None:
                return prior.scale * prior._t_density(x)
            return prior.density(np.sin(x)) * np.cos(x)
        return prior.density(x)

    def __call__(self, rng, size):
        x = self._inv(rng.random(size))
        if self.transform == "sin":
            return np.clip(np.sin(x), 0.0, 1.0)
        return np.clip(x, 0.0, 1.0)


def sample_state(prior: Prior, model: str, rng, size: int = 1, sampler: PuritySampler | None = None):
    """(r, direction) for 3D (unit 3-vectors) or (r, angle) for 2D."""
    sampler = sampler or PuritySampler(prior)
    r = sampler(rng, size)
    if model == "3d":
        v = rng.standard_normal((size, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return r, v
    if model == "2d":
        return r, rng.uniform(0, 2 * np.pi, size)
    raise DomainError(f"unknown model {model!r}")


# --- outcome sampling -----------------------------------------------------------------

def block_probabilities(N: int, r) -> tuple[np.ndarray, np.ndarray]:
    """(twice_j array, matrix of P(j | r)) for an array of purities."""
    r = np.atleast_1d(np.asarray(r, float))
    blocks = multiplicities(N)
    tjs = np.array([b.twice_j for b in blocks])
    _, la, lb = log_weight_factors(r)
    P = np.zeros((len(r), len(blocks)))
    for i, b in enumerate(blocks):
        logn = math.log(b.n)
        for tm in range(-b.twice_j, b.twice_j + 1, 2):
            km, kp = (N - tm) // 2, (N + tm) // 2
            with np.errstate(invalid="ignore"):
                e = logn + (km * la if km else 0.0) + (kp * lb if kp else 0.0)
            P[:, i] += np.exp(e)
    return tjs, P


def _draw_blocks(N, r, rng):
    tjs, P = block_probabilities(N, r)
    cum = np.cumsum(P, axis=1)
    cum /= cum[:, -1:]
    u = rng.random(len(r))[:, None]
    idx = np.minimum(np.sum(cum < u, axis=1), len(tjs) - 1)
    return tjs[idx]


def _frame(n):
    """Orthonormal e1, e2 completing each row of n."""
    a = np.where(np.abs(n[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    e1 = np.cross(n, a)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    return e1, np.cross(n, e1)


def _draw_cos_gamma(tj, r, rng):
    """t in [-1, 1] with density proportional to ((1 + r t)/2)^(2j)."""
    d = tj + 1
    u = rng.random(len(r))
    flat = (tj == 0) | (r * d < 1e-12)
    t = np.empty(len(r))
    t[flat] = 2 * u[flat] - 1
    k = ~flat
    if np.any(k):
        rk, dk, uk = r[k], d[k], u[k]
        a, b = (1 - rk) / 2, (1 + rk) / 2
        # ((1 + r t)/2)^d = a^d + u (b^d - a^d)
        x = np.exp(np.log(a ** dk + uk * (b ** dk - a ** dk)) / dk)
        t[k] = np.clip((2 * x - 1) / rk, -1, 1)
    return t


def sample_outcome_3d(N: int, r, n, rng):
    """Outcome (twice_j, mu) of the covariant 3D measurement; vectorized over states."""
    r = np.atleast_1d(np.asarray(r, float))
    n = np.atleast_2d(np.asarray(n, float))
    tj = _draw_blocks(N, r, rng)
    t = _draw_cos_gamma(tj, r, rng)
    psi = rng.uniform(0, 2 * np.pi, len(r))
    s = np.sqrt(np.clip(1 - t * t, 0, None))
    e1, e2 = _frame(n)
    mu = t[:, None] * n + (s * np.cos(psi))[:, None] * e1 + (s * np.sin(psi))[:, None] * e2
    return tj, mu


@lru_cache(maxsize=None)
def _diag_sums(tj: int) -> np.ndarray:
    """G[m'', k] = sum_i d_{i m''} d_{i+k, m''}: with w the weights, c_k = w @ G[:, k]."""
    D = np.asarray(wigner_d_half_pi(tj / 2))
    d = tj + 1
    G = np.zeros((d, d))
    for k in range(d):
        G[:, k] = np.sum(D[: d - k] * D[k:], axis=0)
    return G


def phase_coefficients(N: int, tj: int, r) -> np.ndarray:
    """c_k with p(phi | j) proportional to c_0 + sum_k c_k cos(k (phi - theta))."""
    r = np.atleast_1d(np.asarray(r, float))
    _, la, lb = log_weight_factors(r)
    tms = np.arange(-tj, tj + 1, 2)
    km, kp = (N - tms) // 2, (N + tms) // 2
    with np.errstate(invalid="ignore"):
        e = np.where(km > 0, km * la[:, None], 0.0) + np.where(kp > 0, kp * lb[:, None], 0.0)
    c = np.exp(e) @ _diag_sums(tj)
    c[:, 1:] *= 2
    return c


def sample_outcome_2d(N: int, r, theta, rng, max_rounds: int = 100_000):
    """Outcome (twice_j, phi) of the all-ones phase-covariant measurement.

    phi is drawn by rejection from a uniform proposal under the envelope
    c_0 + sum_k |c_k|.
    """
    r = np.atleast_1d(np.asarray(r, float))
    theta = np.atleast_1d(np.asarray(theta, float))
    tj = _draw_blocks(N, r, rng)
    phi = np.empty(len(r))
    for t in np.unique(tj):
        idx = np.nonzero(tj == t)[0]
        c = phase_coefficients(N, int(t), r[idx])
        env = np.sum(np.abs(c), axis=1)
        ks = np.arange(c.shape[1])
        todo = np.arange(len(idx))
        proposed = accepted = 0
        rounds = 0
        while len(todo):
            x = rng.uniform(0, 2 * np.pi, len(todo))
            p = np.sum(c[todo] * np.cos(np.outer(x - theta[idx[todo]], ks)), axis=1)
            ok = rng.random(len(todo)) * env[todo] <= p
            phi[idx[todo[ok]]] = x[ok]
            proposed += len(todo)
            accepted += int(ok.sum())
            todo = todo[~ok]
            rounds += 1
            if rounds > 50 and accepted < MIN_ACCEPTANCE * proposed or rounds > max_rounds:
                raise NumericalFailure(
                    f"phase rejection sampling stalled for j={t / 2}: acceptance "
                    f"{accepted}/{proposed}, {len(todo)} outcomes pending")
    return tj, phi


# --- protocol ----------------------------------------------------------------------

@lru_cache(maxsize=16)
def _setup(model: str, N: int, prior_spec: str):
    from .bayes2d import fidelity_2d
    from .bayes3d import fidelity_3d
    prior = parse_prior(prior_spec)
    rep = fidelity_3d(N, prior) if model == "3d" else fidelity_2d(N, prior, "ones")
    R = np.zeros(N + 1)
    for b in rep.per_block:
        R[b.twice_j] = b.R
    return prior, PuritySampler(prior), R, rep.F


def _chunk_rng(seed: int, k: int):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(k,))))


def _run_chunk(args):
    model, N, prior_spec, seed, k, size, start, dump_cap = args
    prior, sampler, R, _ = _setup(model, N, prior_spec)
    rng = _chunk_rng(seed, k)
    r, ang = sample_state(prior, model, rng, size, sampler)
    c = np.sqrt((1 - r) * (1 + r))
    if model == "3d":
        tj, mu = sample_outcome_3d(N, r, ang, rng)
        align = np.einsum("ij,ij->i", ang, mu)
    else:
        tj, phi = sample_outcome_2d(N, r, ang, rng)
        align = np.cos(ang - phi)
    Rj = R[tj]
    f = 0.5 * (1 + r * Rj * align + c * np.sqrt((1 - Rj) * (1 + Rj)))
    mean = float(np.mean(f))
    m2 = float(np.sum((f - mean) ** 2))
    counts = np.bincount(tj, minlength=N + 1)
    rows = None
    if start < dump_cap:
        m = min(size, dump_cap - start)
        rows = [(start + i, float(r[i]), float(tj[i] / 2), float(f[i])) for i in range(m)]
    return size, mean, m2, counts, rows


def _max_workers(requested: int) -> int:
    cap = os.environ.get(MAX_WORKERS_ENV)
    if cap:
        try:
            requested = min(requested, max(1, int(cap)))
        except ValueError:
            raise DomainError(f"{MAX_WORKERS_ENV} must be an integer, got {cap!r}") from None
    return requested


def run(config: SimConfig) -> SimResult:
    config.validate()
    _, _, _, F = _setup(config.model, config.N, config.prior)
    chunks = []
    start = 0
    k = 0
    while start < config.trials:
        size = min(CHUNK_SIZE, config.trials - start)
        cap = config.dump_cap if config.dump_path else 0
        chunks.append((config.model, config.N, config.prior, config.seed, k, size, start, cap))
        start += size
        k += 1
    workers = min(_max_workers(config.workers), len(chunks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_chunk, chunks))
    else:
        results = [_run_chunk(c) for c in chunks]
    # merge (count, mean, M2) in chunk order
    n, mean, m2 = 0, 0.0, 0.0
    counts = np.zeros(config.N + 1, dtype=np.int64)
    rows = []
    for size, cm, cm2, cc, cr in results:
        tot = n + size
        delta = cm - mean
        mean += delta * size / tot
        m2 += cm2 + delta * delta * n * size / tot
        n = tot
        counts += cc
        if cr:
            rows.extend(cr)
    if n > 1:
        se = math.sqrt(m2 / (n - 1) / n)
        z = (mean - F) / se if se > 0 else None
    else:
        se, z = None, None
    hist = {tj / 2: int(counts[tj]) for tj in range(config.N % 2, config.N + 1, 2)}
    if config.dump_path:
        with open(config.dump_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "r", "j", "fidelity"])
            w.writerows((i, repr(a), repr(b), repr(c)) for i, a, b, c in rows)
    return SimResult(config, float(mean), se, se is not None, hist, float(F), z,
                     extra={"chunks": len(chunks), "workers_used": workers})


def normalization_estimate(N: int, r: float, samples: int, rng) -> tuple[float, float]:
    """Monte Carlo estimate (mean, std error) of sum_j n_j int dmu p(j, mu | r)."""
    from .bayes3d import conditional_outcome_density
    t = rng.uniform(-1, 1, samples)
    tot = np.zeros(samples)
    for b in multiplicities(N):
        tot += b.n * conditional_outcome_density(N, b.j, r, t)
    return float(tot.mean()), float(tot.std(ddof=1) / math.sqrt(samples))
