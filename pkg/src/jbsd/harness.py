"""Monte Carlo experiment driver.

Every experiment is a pure function of its :class:`ExperimentSpec`.  Trial
seeds come from ``numpy.random.SeedSequence(master_seed, spawn_key=key)``
with ``key = (experiment code, n, s, K, r, separated, trial)`` (``r`` is
replaced by the index of the condition-number target in convergence runs), so
results do not depend on execution order or worker count.
"""
import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .hankel_ops import LiftShape, hankel_lift
from .manifold import condition_number, truncated_svd
from .recovery import estimate_trip, incoherence_mu0, incoherence_mu1
from .sensing import (
    ChannelGroundTruth,
    MeasurementSet,
    UserChannel,
    measure,
    sample_coefficients,
    sample_delays,
    sample_subspace,
    simulate_instance,
)
from .solver import SolverConfig, relative_error, solve

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentSpec",
    "TrialRecord",
    "KappaTarget",
    "trial_seed",
    "run_trial",
    "run_phase_transition",
    "run_timing",
    "run_convergence",
    "run_diagnostics",
    "construct_kappa_instance",
    "log_linear_fit",
    "emit_outputs",
    "run_experiment",
    "KINDS",
]

KINDS = ("phase_transition", "timing", "convergence", "diagnostics")
_KIND_CODE = {k: i for i, k in enumerate(KINDS)}

PHASE_COLUMNS = ["r", "separated", "trials", "successes", "rate"]
TRIAL_COLUMNS = ["n", "s", "K", "r", "separated", "trial", "seed", "iterations", "status",
                 "rel_error", "success", "threshold", "kappa"]
TIMING_COLUMNS = ["n", "trials", "mean_iterations", "mean_time", "mean_iter_time"]
CONVERGENCE_COLUMNS = ["kappa", "trials", "feasible", "achieved_kappa", "median_iterations",
                       "median_r2", "converged"]
CURVE_COLUMNS = ["kappa", "trial", "iteration", "rel_error"]
DIAGNOSTIC_COLUMNS = ["n", "trials", "median_trip", "median_mu0", "median_mu1"]


@dataclass
class ExperimentSpec:
    """Configuration of one experiment (JSON-serializable)."""

    kind: str = "phase_transition"
    n_values: list = field(default_factory=lambda: [160])
    s: int = 2
    K: int = 2
    r_values: list = field(default_factory=lambda: [2])
    separated: list = field(default_factory=lambda: [True])
    trials: int = 20
    success_threshold: float = 1e-3
    kappas: list = field(default_factory=lambda: [1.0, 5.0, 10.0])
    kappa_tol: float = 0.1
    burn_in: int = 5
    step: str = "fixed"
    alpha: float = 1.0
    max_iters: int = 2000
    tol_truth: float = 1e-4
    power_iters: int = 200
    seed: int = 0
    threads: int = 1
    out: str | None = None

    def __post_init__(self):
        self.kind = self.kind.replace("-", "_")
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.success_threshold <= 0 or self.tol_truth <= 0:
            raise ValueError("thresholds must be positive")
        if isinstance(self.separated, bool):
            self.separated = [self.separated]

    def solver_config(self, rank):
        return SolverConfig(rank=rank, step=self.step, alpha=self.alpha,
                            max_iters=self.max_iters, tol_truth=self.tol_truth)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        doc = json.loads(Path(path).read_text())
        # a run manifest embeds the spec it was produced from
        return cls.from_dict(doc.get("spec", doc))


@dataclass
class TrialRecord:
    n: int
    s: int
    K: int
    r: int
    separated: bool
    trial: int
    seed: int
    iterations: int
    status: str
    rel_error: float
    success: bool
    threshold: float
    kappa: float
    wall_time: float = 0.0
    iter_time: float = 0.0
    curve: list = field(default_factory=list, repr=False)
    target: float = float("nan")


@dataclass
class KappaTarget:
    target: float
    achieved: float = float("nan")
    tolerance: float = 0.1

    @property
    def accepted(self):
        return abs(self.achieved - self.target) <= self.tolerance * self.target


def trial_seed(master, kind, n, s, K, r, separated, trial):
    """64-bit seed for one trial, independent of scheduling."""
    key = (_KIND_CODE[kind], int(n), int(s), int(K), int(r), int(bool(separated)), int(trial))
    ss = np.random.SeedSequence(int(master), spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])


def _truth_kappa(truth, shape, r):
    lifts = [truncated_svd(hankel_lift(X, shape), r) for X in truth.signals]
    return condition_number(lifts)


def _iter_time(trace):
    # first iteration is warm-up
    times = trace.time[2:] if len(trace.time) > 2 else trace.time[1:]
    return float(np.mean(times)) if times else 0.0


def run_trial(task):
    """Solve one synthetic instance; ``task`` is a plain tuple for pickling."""
    kind, spec_dict, n, r, separated, trial, kappa_target, slot = task
    spec = ExperimentSpec.from_dict(spec_dict)
    seed = trial_seed(spec.seed, kind, n, spec.s, spec.K, r if slot is None else slot,
                      separated, trial)
    shape = LiftShape(n=n, s=spec.s)
    if kappa_target is None:
        m, truth = simulate_instance(n, spec.s, spec.K, r, seed, separated=separated)
    else:
        rng = np.random.default_rng(seed)
        try:
            truth, _ = construct_kappa_instance(n, spec.s, spec.K, r, kappa_target, rng,
                                                tol=spec.kappa_tol)
        except RuntimeError:
            return TrialRecord(n, spec.s, spec.K, r, separated, trial, seed, 0, "infeasible",
                               float("nan"), False, spec.success_threshold, float("nan"),
                               target=kappa_target)
        B = np.stack([sample_subspace(n, spec.s, rng) for _ in range(spec.K)])
        m = MeasurementSet(measure(truth.signals, B), B, shape)
    kappa = _truth_kappa(truth, shape, r)
    t0 = time.perf_counter()
    result = solve(m, spec.solver_config(r), truth=truth)
    wall = time.perf_counter() - t0
    err = relative_error(result.signals, truth.signals)
    return TrialRecord(
        n=n, s=spec.s, K=spec.K, r=r, separated=bool(separated), trial=trial, seed=seed,
        iterations=result.n_iter, status=result.status, rel_error=err,
        success=bool(err <= spec.success_threshold), threshold=spec.success_threshold,
        kappa=float(kappa), wall_time=wall, iter_time=_iter_time(result.trace),
        curve=list(result.trace.rel_error),
        target=float("nan") if kappa_target is None else kappa_target,
    )


def _run_tasks(tasks, threads):
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run_trial, tasks, chunksize=1))
    return [run_trial(t) for t in tasks]


def run_phase_transition(spec):
    """Success rate for every ``(n, r, separated)`` cell.

    Returns ``(table, trials)``: one row per cell and one record per trial.
    """
    d = spec.to_dict()
    tasks = [("phase_transition", d, n, r, sep, t, None, None)
             for n in spec.n_values for sep in spec.separated for r in spec.r_values
             for t in range(spec.trials)]
    records = _run_tasks(tasks, spec.threads)
    table = []
    for n in spec.n_values:
        for sep in spec.separated:
            for r in spec.r_values:
                cell = [rec for rec in records if rec.n == n and rec.r == r and rec.separated == sep]
                wins = sum(rec.success for rec in cell)
                row = {"r": r, "separated": bool(sep), "trials": len(cell), "successes": wins,
                       "rate": wins / len(cell)}
                if len(spec.n_values) > 1:
                    row = {"n": n, **row}
                table.append(row)
    return table, records


def run_timing(spec):
    """Mean wall time and per-iteration time for each ``n``."""
    d = spec.to_dict()
    r = spec.r_values[0]
    sep = spec.separated[0]
    tasks = [("timing", d, n, r, sep, t, None, None) for n in spec.n_values for t in range(spec.trials)]
    # timing runs stay serial: parallel workers would contend for the same cores
    records = [run_trial(t) for t in tasks]
    table = []
    for n in spec.n_values:
        cell = [rec for rec in records if rec.n == n]
        table.append({
            "n": n,
            "trials": len(cell),
            "mean_iterations": float(np.mean([c.iterations for c in cell])),
            "mean_time": float(np.mean([c.wall_time for c in cell])),
            "mean_iter_time": float(np.mean([c.iter_time for c in cell])),
        })
    return table, records


def log_linear_fit(curve, burn_in=5):
    """Slope and ``R^2`` of ``log10(error)`` against iteration after ``burn_in``."""
    e = np.log10(np.asarray(curve, dtype=float)[burn_in:])
    if e.size < 3 or not np.all(np.isfinite(e)):
        return float("nan"), float("nan")
    t = np.arange(e.size)
    slope, icpt = np.polyfit(t, e, 1)
    ss_res = np.sum((e - (slope * t + icpt)) ** 2)
    ss_tot = np.sum((e - e.mean()) ** 2)
    return float(slope), float(1.0 - ss_res / ss_tot) if ss_tot > 0 else 1.0


def run_convergence(spec):
    """Error-versus-iteration curves for each condition-number target."""
    d = spec.to_dict()
    n = spec.n_values[0]
    r = spec.r_values[0]
    tasks = [("convergence", d, n, r, True, t, kap, i)
             for i, kap in enumerate(spec.kappas) for t in range(spec.trials)]
    records = _run_tasks(tasks, spec.threads)
    table, curves = [], []
    for kap in spec.kappas:
        cell = [rec for rec in records if rec.target == kap]
        ok = [c for c in cell if c.status != "infeasible"]
        conv = [c for c in ok if c.status == "converged"]
        r2 = [log_linear_fit(c.curve, spec.burn_in)[1] for c in conv]
        table.append({
            "kappa": kap,
            "trials": len(cell),
            "feasible": len(ok),
            "achieved_kappa": float(np.median([c.kappa for c in ok])) if ok else float("nan"),
            "median_iterations": float(np.median([c.iterations for c in conv])) if conv else float("nan"),
            "median_r2": float(np.nanmedian(r2)) if r2 else float("nan"),
            "converged": len(conv),
        })
        for c in ok:
            curves.extend({"kappa": kap, "trial": c.trial, "iteration": it, "rel_error": e}
                          for it, e in enumerate(c.curve))
    return table, curves, records


def construct_kappa_instance(n, s, K, r, target, rng, tol=0.1, rounds=20, resamples=100):
    """Ground truth whose lifted condition number is close to ``target``.

    Path magnitudes follow a geometric sequence ``q^{-i/(K r - 1)}`` over all
    ``K r`` paths; ``q`` is bisected until ``max_k sigma_1 / min_k sigma_r``
    of the lifts is within ``tol`` (relative) of ``target``.  Delays are
    redrawn when the target is unreachable.

    Returns
    -------
    truth : ChannelGroundTruth
    kappa : KappaTarget
    """
    if target < 1:
        raise ValueError(f"condition number target must be >= 1, got {target}")
    shape = LiftShape(n=n, s=s)
    steps = np.arange(K * r).reshape(K, r) / max(K * r - 1, 1)

    def build(taus, phases, hs, q):
        users = [UserChannel(taus[k], q ** -steps[k] * phases[k], hs[k], n) for k in range(K)]
        truth = ChannelGroundTruth(users)
        return truth, _truth_kappa(truth, shape, r)

    for _ in range(resamples):
        taus = [sample_delays(r, n, rng, separated=True) for _ in range(K)]
        phases = [np.exp(-1j * rng.uniform(0, 2 * np.pi, size=r)) for _ in range(K)]
        hs = [sample_coefficients(s, rng) for _ in range(K)]
        truth, kap = build(taus, phases, hs, 1.0)
        if kap > target * (1 + tol):
            continue
        lo, hi = 1.0, max(2.0 * target, 2.0)
        for _ in range(rounds):
            if abs(kap - target) <= 1e-3 * target:
                break
            mid = 0.5 * (lo + hi)
            truth, kap = build(taus, phases, hs, mid)
            if kap < target:
                lo = mid
            else:
                hi = mid
        res = KappaTarget(target, kap, tol)
        if res.accepted:
            return truth, res
    raise RuntimeError(f"could not reach condition number {target} within {resamples} resamples")


def run_diagnostics(spec):
    """Incoherence constants and the restricted-isometry estimate per ``n``."""
    r = spec.r_values[0]
    rows, per_trial = [], []
    for n in spec.n_values:
        trips, mu0s, mu1s = [], [], []
        for t in range(spec.trials):
            seed = trial_seed(spec.seed, "diagnostics", n, spec.s, spec.K, r, True, t)
            m, truth = simulate_instance(n, spec.s, spec.K, r, seed, separated=True)
            bases = [truncated_svd(hankel_lift(X, m.shape), r) for X in truth.signals]
            trip = estimate_trip(m.B, bases, m.shape, power_iters=spec.power_iters,
                                 rng=np.random.default_rng(seed))
            mu0 = incoherence_mu0(m.B)
            mu1 = incoherence_mu1(bases, m.shape)
            trips.append(trip)
            mu0s.append(mu0)
            mu1s.append(mu1)
            per_trial.append({"n": n, "trial": t, "seed": seed, "trip": trip, "mu0": mu0, "mu1": mu1})
        rows.append({"n": n, "trials": spec.trials, "median_trip": float(np.median(trips)),
                     "median_mu0": float(np.median(mu0s)), "median_mu1": float(np.median(mu1s))})
    return rows, per_trial


# -- output -------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def to_csv(rows, columns=None):
    if not rows:
        raise ValueError("no rows to write")
    columns = columns or list(rows[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _trial_rows(records):
    return [{c: getattr(rec, c) for c in TRIAL_COLUMNS} for rec in records]


def emit_outputs(spec, tables, out_dir, plots=True):
    """Write CSV tables, a JSON manifest and SVG plots.

    ``tables`` maps file stems to ``(rows, columns)``.  Everything is rendered
    in memory first so that an error leaves no partial output behind.
    """
    if not tables or any(not rows for rows, _ in tables.values()):
        raise ValueError("refusing to write empty results")
    rendered = {f"{stem}.csv": to_csv(rows, cols) for stem, (rows, cols) in tables.items()}
    manifest = {
        "format": "jbsd-manifest/1",
        "software": {"package": "jbsd", "version": __version__, "numpy": np.__version__},
        "spec": spec.to_dict(),
        "seeding": "SeedSequence(seed, spawn_key=(kind, n, s, K, r, separated, trial))",
        "files": sorted(rendered),
    }
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in rendered.items():
            (out / name).write_text(text)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    written = [out / name for name in rendered] + [out / "manifest.json"]
    if plots:
        from .plotting import plot_directory
        written += plot_directory(out)
    return written


def run_experiment(spec, out_dir=None, plots=True):
    """Run ``spec`` and write its outputs; returns the tables."""
    if spec.kind == "phase_transition":
        table, records = run_phase_transition(spec)
        cols = (["n"] if len(spec.n_values) > 1 else []) + PHASE_COLUMNS
        tables = {"phase_transition": (table, cols), "trials": (_trial_rows(records), TRIAL_COLUMNS)}
    elif spec.kind == "timing":
        table, records = run_timing(spec)
        tables = {"timing": (table, TIMING_COLUMNS)}
    elif spec.kind == "convergence":
        table, curves, _ = run_convergence(spec)
        tables = {"convergence": (table, CONVERGENCE_COLUMNS), "curves": (curves, CURVE_COLUMNS)}
    else:
        table, per_trial = run_diagnostics(spec)
        tables = {"diagnostics": (table, DIAGNOSTIC_COLUMNS),
                  "diagnostics_trials": (per_trial, ["n", "trial", "seed", "trip", "mu0", "mu1"])}
    out_dir = out_dir or spec.out
    if out_dir is not None:
        emit_outputs(spec, tables, out_dir, plots=plots)
    return tables
