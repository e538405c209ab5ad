"""Command-line front end.

    python3 -m mixedqubit fidelity --model 3d --prior bures --n 2:40:2
    python3 -m mixedqubit asymptotics --model 2d --prior uniform --n 50:200:50
    python3 -m mixedqubit optimize2d --prior step:0.1 --n 6
    python3 -m mixedqubit bounds --model 3d --r 0.5 --n 20
    python3 -m mixedqubit simulate --model 3d --prior bures --n 4 --trials 1000000 --seed 7
    python3 -m mixedqubit counterexample --deltas 0.05,0.1,0.2

Exit status: 0 on success, 2 for invalid input, 3 for numerical failure.
"""
from __future__ import annotations

import argparse
import math
import sys
import warnings

import numpy as np

from .errors import DomainError, NumericalFailure, OptimizationWarning, QuadratureError
from .priors import parse_prior
from .reporting import make_document, serialize, validate_document

EXIT_USAGE = 2
EXIT_NUMERIC = 3


def parse_n_range(text: str) -> list[int]:
    """``N`` or ``start:stop[:step]`` with ``stop`` included."""
    parts = text.split(":")
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise DomainError(f"bad N range {text!r}") from None
    if len(vals) == 1:
        vals = [vals[0], vals[0], 1]
    elif len(vals) == 2:
        vals.append(1)
    elif len(vals) != 3:
        raise DomainError(f"bad N range {text!r}; use start:stop[:step]")
    start, stop, step = vals
    if step < 1:
        raise DomainError("N range step must be >= 1")
    out = list(range(start, stop + 1, step))
    if not out:
        raise DomainError(f"N range {text!r} is empty")
    if out[0] < 1:
        raise DomainError("N must be >= 1")
    return out


def _single_n(text: str) -> int:
    ns = parse_n_range(text)
    if len(ns) != 1:
        raise DomainError("this command takes a single N")
    return ns[0]


def _report(model, N, prior, mode, seed):
    from .bayes2d import fidelity_2d
    from .bayes3d import fidelity_3d
    if model == "3d":
        return fidelity_3d(N, prior)
    return fidelity_2d(N, prior, mode, seed=seed)


# --- subcommands ---------------------------------------------------------------

def cmd_fidelity(args) -> list[dict]:
    prior = parse_prior(args.prior)
    rows = []
    for N in parse_n_range(args.n):
        rep = _report(args.model, N, prior, args.mode, args.seed)
        r = rep.rows()
        rows.extend(r if args.per_block else r[-1:])
    return rows


def cmd_asymptotics(args) -> list[dict]:
    from .bayes2d import asymptotic_constant_2d
    from .bayes3d import asymptotic_constant_3d, extrapolate_limit
    prior = parse_prior(args.prior)
    const = asymptotic_constant_3d(prior) if args.model == "3d" else asymptotic_constant_2d(prior)
    Ns = parse_n_range(args.n)
    rows, ys = [], []
    for N in Ns:
        F = _report(args.model, N, prior, "ones", args.seed).F
        y = N * (1 - F)
        ys.append(y)
        rows.append({"row_type": "point", "model": args.model, "prior": prior.name, "N": N,
                     "F": F, "N_infidelity": y, "asymptotic_constant": const,
                     "ratio": y / const})
    if len(Ns) >= 4:
        lim = extrapolate_limit(Ns, ys)
        rows.append({"row_type": "fit", "model": args.model, "prior": prior.name,
                     "N": None, "extrapolated_limit": lim, "asymptotic_constant": const,
                     "relative_error": lim / const - 1})
    return rows


def cmd_optimize2d(args) -> list[dict]:
    from .bayes2d import alpha_beta, delta_j_2d, optimize_seeds, relative_gain, SeedVectors
    from .repr_core import multiplicities
    prior = parse_prior(args.prior)
    N = _single_n(args.n)
    blocks = multiplicities(N)
    if args.j is not None:
        blocks = [b for b in blocks if b.twice_j == round(2 * args.j)]
        if not blocks:
            raise DomainError(f"j = {args.j} is not a block of N = {N}")
    rows = []
    for b in blocks:
        alpha, beta = alpha_beta(N, b.j, prior)
        sv, val = optimize_seeds(N, b.j, alpha=alpha, beta=beta, seed=args.seed)
        ones = delta_j_2d(alpha, beta, SeedVectors.all_ones(b.j))
        rows.append({"row_type": "block", "N": N, "prior": prior.name, "j": b.j, "n_j": b.n,
                     "delta_ones": ones, "delta_opt": val,
                     "relative_gain": relative_gain(alpha, beta, sv),
                     "n_columns": sv.n_active, "certified": sv.converged})
    return rows


def cmd_bounds(args) -> list[dict]:
    from .pointwise import (ParamPoint, fisher_of_protocol, holevo_bound, qfi,
                            sld_residual, van_trees_floor)
    theta = args.theta if args.theta is not None else (math.pi / 3 if args.model == "3d" else 0.0)
    pt = ParamPoint(args.model, args.r, theta, args.phi)
    H = qfi(pt)
    row = {"row_type": "point", "model": args.model, "r": args.r, "theta": theta,
           "phi": args.phi, "holevo": holevo_bound(pt), "sld_residual": sld_residual(pt)}
    for i, h in enumerate(np.diag(H)):
        row[f"qfi_{i}"] = float(h)
    rows = [row]
    if args.n is not None:
        for N in parse_n_range(args.n):
            I = fisher_of_protocol(N, pt, normalized=True)
            rows.append({"row_type": "point", "model": args.model, "r": args.r, "theta": theta,
                         "phi": args.phi, "N": N,
                         "trace_H_Iinv": float(np.trace(H @ np.linalg.inv(I)))})
            if args.model == "2d":
                vt = van_trees_floor(parse_prior(args.prior), N, eps=args.eps)
                rows[-1].update({"prior": args.prior, "van_trees_floor": vt.floor,
                                 "van_trees_rhs": vt.rhs, "van_trees_scaled_rhs": vt.scaled_rhs,
                                 "eps": vt.eps})
    return rows


def cmd_simulate(args) -> list[dict]:
    from .simulate import SimConfig, run
    parse_prior(args.prior)  # validate before starting workers
    cfg = SimConfig(N=_single_n(args.n), model=args.model, prior=args.prior,
                    trials=args.trials, seed=args.seed, workers=args.workers,
                    dump_path=args.dump, dump_cap=args.dump_cap)
    res = run(cfg)
    d = res.to_dict()
    hist = d.pop("histogram")
    rows = [{"row_type": "summary", **d}]
    rows.extend({"row_type": "block", "j": float(j), "count": c} for j, c in hist.items())
    return rows


def cmd_counterexample(args) -> list[dict]:
    from .bayes2d import fit_counterexample
    try:
        deltas = tuple(float(x) for x in args.deltas.split(","))
    except ValueError:
        raise DomainError(f"bad delta list {args.deltas!r}") from None
    N = _single_n(args.n)
    j = args.j if args.j is not None else N / 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fit = fit_counterexample(deltas, N=N, j=j, seed=args.seed)
    rows = [{"row_type": "point", "N": N, "j": j, "delta": d, "gap": g, "delta_ones": o,
             "delta_opt": p, "n_columns": c}
            for d, g, o, p, c in zip(fit["deltas"], fit["gaps"], fit["ones"], fit["opt"],
                                     fit["n_columns"])]
    rows.append({"row_type": "fit", "N": N, "j": j, "slope": fit["slope"], "A": fit["A"]})
    return rows


COMMANDS = {
    "fidelity": cmd_fidelity,
    "asymptotics": cmd_asymptotics,
    "optimize2d": cmd_optimize2d,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "counterexample": cmd_counterexample,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise DomainError(message)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mixedqubit", description="Bayesian fidelity of N-copy mixed qubit estimation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, n_default=None, prior=True, model=True):
        if model:
            sp.add_argument("--model", choices=["3d", "2d"], default="3d",
                            help="3d: state anywhere in the Bloch ball; 2d: equatorial plane (default 3d)")
        if prior:
            sp.add_argument("--prior", default="bures",
                            help="bures | uniform | step:DELTA | file:PATH (default bures)")
        sp.add_argument("--n", default=n_default, required=n_default is None,
                        help="N or inclusive range start:stop[:step]")
        sp.add_argument("--format", choices=["json", "csv", "tsv"], default="json")
        sp.add_argument("--output", help="write here instead of standard output")
        sp.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")

    sp = sub.add_parser("fidelity", help="exact Bayesian fidelity per N")
    common(sp)
    sp.add_argument("--mode", choices=["ones", "opt"], default="ones",
                    help="2d seed choice: fixed all-ones or optimized (default ones)")
    sp.add_argument("--per-block", action="store_true", help="also emit one row per irrep block")

    sp = sub.add_parser("asymptotics", help="N(1-F) against its large-N constant")
    common(sp, n_default="50:200:50")

    sp = sub.add_parser("optimize2d", help="optimize 2d seed vectors block by block")
    common(sp, model=False)
    sp.add_argument("--j", type=float, help="only this block")

    sp = sub.add_parser("bounds", help="QFI, Holevo bound, protocol Fisher information, van Trees")
    common(sp, n_default=None)
    sp.set_defaults(n=None)
    for a in sp._actions:
        if a.dest == "n":
            a.required = False
    sp.add_argument("--r", type=float, required=True, help="purity, strictly inside (0, 1)")
    sp.add_argument("--theta", type=float, help="polar angle (3d) or phase (2d)")
    sp.add_argument("--phi", type=float, default=0.0, help="azimuth (3d only)")
    sp.add_argument("--eps", type=float, default=1e-2, help="van Trees smoothing width")

    sp = sub.add_parser("simulate", help="Monte Carlo run of the protocol")
    common(sp)
    sp.add_argument("--trials", type=int, default=100_000)
    sp.add_argument("--workers", type=int, default=1,
                    help="worker processes; capped by MIXEDQUBIT_MAX_WORKERS")
    sp.add_argument("--dump", help="per-trial CSV path")
    sp.add_argument("--dump-cap", type=int, default=100_000, help="row cap of the per-trial dump")

    sp = sub.add_parser("counterexample", help="relative gain of optimized seeds for step priors")
    common(sp, n_default="6", prior=False, model=False)
    sp.add_argument("--deltas", default="0.05,0.1,0.2", help="comma-separated step widths")
    sp.add_argument("--j", type=float, help="block (default N/2)")
    return p


def _parameters(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("output",)}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        with warnings.catch_warnings():
            warnings.simplefilter("always", OptimizationWarning)
            rows = COMMANDS[args.command](args)
        doc = make_document(args.command, _parameters(args), rows)
        validate_document(doc)
        text = serialize(doc, args.format)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, QuadratureError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
