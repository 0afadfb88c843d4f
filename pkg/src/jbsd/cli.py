"""Command line interface: ``jbsd {simulate,solve,recover,experiment,plot}``."""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .harness import ExperimentSpec, run_experiment
from .manifold import LowRankLift
from .plotting import plot_directory
from .recovery import RecoveryError, match_delays, recover_channel
from .sensing import decode_complex, dump_instance, encode_complex, load_instance, simulate_instance
from .solver import SolverConfig, solve

logger = logging.getLogger("jbsd")

PROFILES = {
    "phase_transition": dict(n_values=[160], r_values=list(range(2, 9)), separated=[True, False]),
    "timing": dict(n_values=list(range(160, 301, 20)), r_values=[2]),
    "convergence": dict(n_values=[160], r_values=[2], kappas=[1.0, 5.0, 10.0]),
    "diagnostics": dict(n_values=[32, 64, 128], r_values=[2]),
}
# n = 64 is outside the basin of the unit fixed step, hence the line search
SMALL_PROFILES = {
    "phase_transition": dict(n_values=[64], r_values=[2, 3, 4], separated=[True], step="linesearch"),
    "timing": dict(n_values=[64, 128], r_values=[2], trials=5),
    "convergence": dict(n_values=[64], r_values=[2], step="linesearch", trials=10),
    "diagnostics": dict(n_values=[32, 64], r_values=[2], trials=5),
}


def parse_step(text):
    """``fixed:<alpha>``, ``fixed`` or ``linesearch``."""
    if text == "linesearch":
        return "linesearch", 1.0
    kind, _, alpha = text.partition(":")
    if kind != "fixed":
        raise argparse.ArgumentTypeError(f"step must be fixed[:alpha] or linesearch, got {text!r}")
    try:
        return "fixed", float(alpha) if alpha else 1.0
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad step size in {text!r}") from None


def _out_dir(args):
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _lift_doc(Z):
    return {"U": encode_complex(Z.U), "S": Z.S.tolist(), "V": encode_complex(Z.V)}


def _lift_from_doc(doc):
    return LowRankLift(decode_complex(doc["U"]), np.asarray(doc["S"], dtype=float),
                       decode_complex(doc["V"]))


def cmd_simulate(args):
    m, truth = simulate_instance(args.n, args.s, args.K, args.r, args.seed,
                                 separated=args.separated, n1=args.n1)
    path = _out_dir(args) / "instance.json"
    path.write_text(dump_instance(m, truth))
    print(path)


def cmd_solve(args):
    m, truth = load_instance(Path(args.instance).read_text())
    rank = args.rank or m.meta.get("r")
    if rank is None:
        raise SystemExit("rank unknown: pass --rank")
    step, alpha = args.step
    cfg = SolverConfig(rank=int(rank), step=step, alpha=alpha, max_iters=args.max_iters,
                       tol_residual=args.tol, tol_truth=args.tol)
    result = solve(m, cfg, truth=truth if args.use_truth else None)
    doc = {
        "format": "jbsd-estimates/1",
        "instance": str(args.instance),
        "shape": {"n": m.shape.n, "s": m.shape.s, "n1": m.shape.n1},
        "rank": cfg.rank,
        "status": result.status,
        "iterations": result.n_iter,
        "signals": encode_complex(result.signals),
        "lifts": [_lift_doc(Z) for Z in result.lifts],
        "trace": result.trace.as_dict(),
    }
    path = _out_dir(args) / "estimates.json"
    path.write_text(json.dumps(doc))
    print(f"{result.status} after {result.n_iter} iterations; "
          f"relative residual {result.trace.residual[-1]:.3e}")
    print(path)
    return 0 if result.status == "converged" else 1


def cmd_recover(args):
    from .hankel_ops import LiftShape
    doc = json.loads(Path(args.estimates).read_text())
    sh = doc["shape"]
    shape = LiftShape(n=sh["n"], s=sh["s"], n1=sh["n1"])
    signals = decode_complex(doc["signals"])
    truth = None
    if args.instance:
        _, truth = load_instance(Path(args.instance).read_text())
    users, status = [], 0
    for k, lift_doc in enumerate(doc["lifts"]):
        lift = _lift_from_doc(lift_doc)
        try:
            ch = recover_channel(lift, shape, doc["rank"], grid_size=args.grid_factor * shape.n,
                                 X_hat=signals[k])
        except RecoveryError as exc:
            logger.error("user %d: %s", k, exc)
            users.append({"error": str(exc), "taus": np.asarray(exc.partial).tolist()})
            status = 1
            continue
        entry = {"taus": ch.taus.tolist(), "amps": encode_complex(ch.amps), "h": encode_complex(ch.h),
                 "residual": ch.residual, "warnings": ch.warnings}
        if truth is not None:
            entry["delay_errors"] = match_delays(ch.taus, truth.users[k].taus).tolist()
        users.append(entry)
    path = _out_dir(args) / "channels.json"
    path.write_text(json.dumps({"format": "jbsd-channels/1", "users": users}, indent=1))
    print(path)
    return status


def cmd_experiment(args):
    kind = args.kind.replace("-", "_")
    base = {"kind": kind, **(SMALL_PROFILES if args.small else PROFILES)[kind]}
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        base.update(doc.get("spec", doc))
        base["kind"] = kind
    if args.seed is not None:
        base["seed"] = args.seed
    if args.threads is not None:
        base["threads"] = args.threads
    if args.step is not None:
        base["step"], base["alpha"] = args.step
    if args.trials is not None:
        base["trials"] = args.trials
    out = args.out or base.get("out") or f"results/{kind}"
    base["out"] = str(out)
    spec = ExperimentSpec.from_dict(base)
    tables = run_experiment(spec, out, plots=not args.no_plots)
    main_table = tables[kind][0]
    for row in main_table:
        print(", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    print(f"results written to {out}")


def cmd_plot(args):
    for path in plot_directory(args.data, args.out):
        print(path)


def build_parser():
    p = argparse.ArgumentParser(prog="jbsd", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw and save a synthetic instance")
    s.add_argument("--n", type=int, default=64)
    s.add_argument("--s", type=int, default=2)
    s.add_argument("--K", type=int, default=2)
    s.add_argument("--r", type=int, default=2)
    s.add_argument("--n1", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--separated", action=argparse.BooleanOptionalAction, default=True)
    s.add_argument("--out", default=None, help="output directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("solve", help="recover signals from an instance file")
    s.add_argument("instance")
    s.add_argument("--rank", type=int, default=None)
    s.add_argument("--step", type=parse_step, default=("fixed", 1.0))
    s.add_argument("--max-iters", type=int, default=2000)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--use-truth", action="store_true",
                   help="stop on relative error against the stored ground truth")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("recover", help="estimate delays and gains from solver output")
    s.add_argument("estimates")
    s.add_argument("--instance", default=None, help="instance file, to report delay errors")
    s.add_argument("--grid-factor", type=int, default=16)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_recover)

    s = sub.add_parser("experiment", help="run a Monte Carlo experiment")
    s.add_argument("kind", choices=["phase-transition", "timing", "convergence", "diagnostics"])
    s.add_argument("--config", default=None, help="JSON spec or run manifest")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default=None)
    s.add_argument("--small", action="store_true", help="n=64 profile for quick runs")
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--step", type=parse_step, default=None)
    s.add_argument("--trials", type=int, default=None)
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("plot", help="render SVG figures from experiment tables")
    s.add_argument("--data", required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
