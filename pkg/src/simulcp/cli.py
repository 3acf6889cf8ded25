"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .io import (DataError, Dataset, load_dataset, read_table, save_dataset, write_changepoints,
                 write_matrix, write_vector)
from .likelihood import FAMILIES, FAMILY_PARAMS, LikelihoodError, LikelihoodSpec
from .maximize import MapIterationWarning, map_estimate, round_marginals
from .model import generate_synthetic
from .oracle import EnumerationTooLarge, enumerate_posterior
from .pipeline import RunConfig, initial_priors, run
from .preprocess import preprocess
from .prior import ChangepointPrior, PriorError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# argument helpers

def _parse_eta(text, family):
    if text is None:
        return None
    params = {}
    for part in text.split(","):
        if "=" not in part:
            raise UsageError(f"--eta expects name=value pairs, got {part!r}")
        k, v = part.split("=", 1)
        try:
            params[k.strip()] = float(v)
        except ValueError:
            raise UsageError(f"--eta: cannot parse value {v!r}") from None
    try:
        return LikelihoodSpec.from_params(family, **params).eta
    except LikelihoodError as exc:
        raise UsageError(str(exc)) from None


def _parse_prior(args):
    if getattr(args, "prior", None) and getattr(args, "prior_points", None):
        raise UsageError("give either --prior or --prior-points, not both")
    if getattr(args, "prior", None):
        try:
            with open(args.prior) as fh:
                return ChangepointPrior.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError, KeyError, PriorError) as exc:
            raise DataError(f"cannot read prior file {args.prior}: {exc}") from None
    if getattr(args, "prior_points", None):
        locs, weights = [], []
        for part in args.prior_points.split(","):
            try:
                q, w = part.split(":")
                locs.append(float(q))
                weights.append(float(w))
            except ValueError:
                raise UsageError(f"--prior-points expects q:w pairs, got {part!r}") from None
        try:
            return ChangepointPrior.point_masses(locs, weights)
        except PriorError as exc:
            raise UsageError(str(exc)) from None
    return None


def _parse_schedule(text):
    if text is None:
        return None
    if text.strip().lower() in ("none", ""):
        return ()
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--mcem-schedule expects comma-separated integers, got {text!r}") from None


def _tri(text):
    return {"auto": "auto", "yes": True, "no": False}[text]


def _add_input(p):
    p.add_argument("input", help="delimited text matrix, one sequence per row")
    p.add_argument("--delimiter", default=None, help="cell delimiter (default: guess)")
    p.add_argument("--header", choices=("auto", "yes", "no"), default="auto",
                   help="first row holds position labels")
    p.add_argument("--ids", choices=("auto", "yes", "no"), default="auto",
                   help="first column holds sequence IDs")


def _add_model(p, eta_required=False):
    p.add_argument("--model", choices=FAMILIES, default="normal-mean", help="likelihood family")
    p.add_argument("--eta", default=None, required=eta_required,
                   help="hyperparameters as name=value pairs, e.g. mu0=0,lam=1,sigma2=1 "
                   "(default: moment-matched from the data)")
    p.add_argument("--prior", default=None, help="JSON file with the changepoint prior")
    p.add_argument("--prior-points", default=None,
                   help="point-mass prior as q:w pairs, e.g. 0:0.9,0.2:0.1")


def _add_preprocess(p):
    p.add_argument("--median-center", action="store_true",
                   help="subtract each sequence's median")
    p.add_argument("--remove-outliers", action="store_true",
                   help="replace isolated outliers by their window median")
    p.add_argument("--outlier-k", type=float, default=2.0,
                   help="outlier gap threshold in noise standard deviations")


def build_parser():
    ap = _Parser(prog="simulcp", description="Simultaneous changepoint detection across "
                 "aligned sequences.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("run", help="full inference pipeline")
    _add_input(p)
    _add_model(p)
    _add_preprocess(p)
    p.add_argument("--burnin", type=int, default=100)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--mcem-schedule", default=None,
                   help="comma-separated burn-in iterations for MCEM updates, or 'none'")
    p.add_argument("--block-size", type=int, default=50, help="row block size (0: whole rows)")
    p.add_argument("--swaps", type=int, default=None, help="swap proposals per iteration "
                   "(default 10*T)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--raw", action="store_true", help="full-precision output numbers")
    p.add_argument("--record-timings", action="store_true",
                   help="store wall-clock timings in the manifest (breaks byte-identity)")

    p = sub.add_parser("simulate", help="draw a synthetic data set")
    p.add_argument("--J", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    _add_model(p, eta_required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("oracle", help="exact enumeration on a tiny data set")
    _add_input(p)
    _add_model(p, eta_required=True)
    p.add_argument("--samples", type=int, default=0,
                   help="also run the sampler for this many iterations and compare")
    p.add_argument("--burnin", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=None,
                   help="fail (exit 3) if the sampler error exceeds this")

    p = sub.add_parser("map-only", help="MAP estimate under fixed priors")
    _add_input(p)
    _add_model(p)
    _add_preprocess(p)
    p.add_argument("--init", default=None,
                   help="marginal-probability table to round for the starting point")
    p.add_argument("--block-size", type=int, default=50)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("summarize", help="print a summary of a run directory")
    p.add_argument("run_dir")
    p.add_argument("--top", type=int, default=10, help="number of positions to list")
    return ap


# --------------------------------------------------------------------------
# commands

def _load(args, family):
    data = load_dataset(args.input, delimiter=args.delimiter, header=_tri(args.header),
                        ids=_tri(args.ids), family=family)
    if getattr(args, "median_center", False) or getattr(args, "remove_outliers", False):
        if family not in ("normal-mean", "normal-var", "normal-meanvar", "laplace-scale"):
            raise UsageError("preprocessing applies to real-valued families only")
        data.X = preprocess(data.X, center=args.median_center, outliers=args.remove_outliers,
                            k=args.outlier_k)
    return data


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_run(args):
    family = args.model
    data = _load(args, family)
    try:
        config = RunConfig(family=family, eta=_parse_eta(args.eta, family),
                           prior=_parse_prior(args), burnin=args.burnin, samples=args.samples,
                           schedule=_parse_schedule(args.mcem_schedule),
                           block_size=args.block_size, swaps=args.swaps, seed=args.seed,
                           chains=args.chains)
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise UsageError(str(exc)) from None
    t0 = time.perf_counter()
    summary = run(data.X, config)
    elapsed = time.perf_counter() - t0
    os.makedirs(args.out_dir, exist_ok=True)
    rows, cols = data.row_names, data.position_names
    outputs = []
    if summary.marginal is not None:
        write_matrix(os.path.join(args.out_dir, "marginal_probs.csv"), summary.marginal,
                     rows, cols, args.raw)
        write_vector(os.path.join(args.out_dir, "q_posterior.csv"), summary.q_mean, cols,
                     ("position", "q_mean"), args.raw)
        write_matrix(os.path.join(args.out_dir, "theta_posterior.csv"), summary.theta_mean,
                     rows, cols, args.raw)
        outputs += ["marginal_probs.csv", "q_posterior.csv", "theta_posterior.csv"]
    if summary.map_Z is not None:
        write_changepoints(os.path.join(args.out_dir, "map_changepoints.csv"), summary.map_Z,
                           rows, cols)
        outputs.append("map_changepoints.csv")
    manifest = {
        "software": {"name": "simulcp", "version": __version__},
        "command": "run",
        "input": {"path": os.path.basename(args.input), "sha256": _sha256(args.input),
                  "shape": list(data.X.shape)},
        "preprocess": {"median_center": args.median_center,
                       "remove_outliers": args.remove_outliers, "outlier_k": args.outlier_k},
        "config": config.to_dict(),
        "seed": args.seed,
        "final_prior": summary.prior.to_dict(),
        "final_eta": dict(zip(FAMILY_PARAMS[family], summary.spec.eta)),
        "mcem_trajectory": summary.trajectory,
        "n_samples": summary.n_samples,
        "pooled_chains": summary.diagnostics.get("pooled_chains", False),
        "map_log_joint": summary.diagnostics.get("map_log_joint"),
        "warnings": summary.warnings,
        "outputs": outputs,
    }
    if args.record_timings:
        manifest["timings"] = {**summary.timings, "total": elapsed}
    _write_json(os.path.join(args.out_dir, "manifest.json"), manifest)
    for w in summary.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {len(outputs) + 1} files to {args.out_dir} in {elapsed:.1f}s")
    return EXIT_OK


def _cmd_simulate(args):
    family = args.model
    if args.J < 1 or args.T < 1:
        raise UsageError("--J and --T must be positive")
    spec = LikelihoodSpec(family, _parse_eta(args.eta, family))
    prior = _parse_prior(args)
    if prior is None:
        raise UsageError("simulate needs --prior or --prior-points")
    syn = generate_synthetic(args.J, args.T, prior, spec, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    ds = Dataset(syn.X, None, None)
    save_dataset(os.path.join(args.out_dir, "data.csv"), ds)
    rows, cols = ds.row_names, ds.position_names
    write_changepoints(os.path.join(args.out_dir, "true_changepoints.csv"), syn.Z, rows, cols)
    write_vector(os.path.join(args.out_dir, "true_q.csv"), syn.q, cols, ("position", "q"), True)
    write_matrix(os.path.join(args.out_dir, "true_theta.csv"), syn.theta, rows, cols, True)
    _write_json(os.path.join(args.out_dir, "manifest.json"), {
        "software": {"name": "simulcp", "version": __version__}, "command": "simulate",
        "J": args.J, "T": args.T, "family": family,
        "eta": dict(zip(FAMILY_PARAMS[family], spec.eta)), "prior": prior.to_dict(),
        "seed": args.seed, "n_changepoints": int(syn.Z.sum()),
    })
    print(f"simulated {args.J}x{args.T} data with {int(syn.Z.sum())} changepoints "
          f"into {args.out_dir}")
    return EXIT_OK


def _cmd_oracle(args):
    family = args.model
    data = _load(args, family)
    spec = LikelihoodSpec(family, _parse_eta(args.eta, family))
    prior = _parse_prior(args)
    if prior is None:
        raise UsageError("oracle needs --prior or --prior-points")
    J, T = data.X.shape
    try:
        res = enumerate_posterior(data.X, prior.moments(J), spec)
    except EnumerationTooLarge as exc:
        raise UsageError(str(exc)) from None
    np.set_printoptions(precision=6, suppress=True)
    print(f"log evidence: {res.log_evidence:.10g}")
    print("marginal change probabilities:")
    print(res.marginal)
    print("E[q_t | X]:", res.q_mean)
    print("MAP changepoints:", [(int(j), int(t)) for j, t in zip(*np.nonzero(res.map_Z))])
    if args.samples > 0:
        cfg = RunConfig(family=family, eta=spec.eta, prior=prior, burnin=args.burnin,
                        samples=args.samples, schedule=(), seed=args.seed, run_map=False)
        summary = run(data.X, cfg)
        err = float(np.max(np.abs(summary.marginal - res.marginal)))
        print(f"max |marginal - sampler estimate|: {err:.6g} ({args.samples} samples)")
        if args.threshold is not None and err > args.threshold:
            print(f"sampler error above threshold {args.threshold}", file=sys.stderr)
            return EXIT_RUNTIME
    return EXIT_OK


def _cmd_map_only(args):
    family = args.model
    data = _load(args, family)
    J, T = data.X.shape
    config = RunConfig(family=family, eta=_parse_eta(args.eta, family), prior=_parse_prior(args))
    prior, spec = initial_priors(data.X, config)
    if args.init:
        header, body = read_table(args.init)
        try:
            marg = np.array([[float(c) for c in r[1:]] for r in body])
        except ValueError as exc:
            raise DataError(f"{args.init}: {exc}") from None
        if marg.shape != (J, T):
            raise DataError(f"{args.init}: shape {marg.shape} does not match data {(J, T)}")
        Z0 = round_marginals(marg)
    else:
        Z0 = np.zeros((J, T), dtype=np.int8)
    Z = map_estimate(Z0, data.X, prior.moments(J), spec, block_size=args.block_size)
    os.makedirs(args.out_dir, exist_ok=True)
    write_changepoints(os.path.join(args.out_dir, "map_changepoints.csv"), Z,
                       data.row_names, data.position_names)
    print(f"{int(Z.sum())} changepoints written to {args.out_dir}")
    return EXIT_OK


def _cmd_summarize(args):
    path = os.path.join(args.run_dir, "manifest.json")
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    print(f"input: {manifest['input']['path']} shape {manifest['input']['shape']}")
    print(f"family: {manifest['config']['family']}, samples: {manifest['n_samples']}")
    print("final eta:", ", ".join(f"{k}={v:.6g}" for k, v in manifest["final_eta"].items()))
    prior = ChangepointPrior.from_dict(manifest["final_prior"])
    print("final prior:", prior)
    cps = os.path.join(args.run_dir, "map_changepoints.csv")
    if os.path.exists(cps):
        _, rows = read_table(cps)
        print(f"MAP changepoints: {len(rows)} at {len({r[1] for r in rows})} positions")
    qp = os.path.join(args.run_dir, "q_posterior.csv")
    if os.path.exists(qp):
        _, rows = read_table(qp)
        vals = [(float(v), pos) for pos, v in rows if v != "nan"]
        vals.sort(key=lambda x: -x[0])
        print(f"top {min(args.top, len(vals))} positions by E[q_t | X]:")
        for v, pos in vals[:args.top]:
            print(f"  {pos}\t{v:.6g}")
    for w in manifest.get("warnings", []):
        print(f"warning: {w}")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "simulate": _cmd_simulate, "oracle": _cmd_oracle,
            "map-only": _cmd_map_only, "summarize": _cmd_summarize}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, LikelihoodError, PriorError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MapIterationWarning as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - categorized as a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
