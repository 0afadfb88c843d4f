"""Static SVG figures rendered from the CSV tables an experiment writes."""
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# stable ids so identical data gives identical files
matplotlib.rcParams["svg.hashsalt"] = "jbsd"
_META = {"Date": None}


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def plot_phase_transition(rows, path):
    fig, ax = plt.subplots(figsize=(4, 3))
    for sep in ("true", "false"):
        sub = [row for row in rows if row["separated"] == sep]
        if not sub:
            continue
        label = "separated" if sep == "true" else "no separation"
        ax.plot([int(row["r"]) for row in sub], [float(row["rate"]) for row in sub], "o-", label=label)
    ax.set_xlabel("r")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.05, 1.05)
    ax.legend()
    return _save(fig, path)


def plot_timing(rows, path):
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot([int(row["n"]) for row in rows], [float(row["mean_time"]) for row in rows], "o-")
    ax.set_xlabel("n")
    ax.set_ylabel("mean time (s)")
    return _save(fig, path)


def plot_curves(rows, path):
    fig, ax = plt.subplots(figsize=(4, 3))
    groups = {}
    for row in rows:
        groups.setdefault((row["kappa"], row["trial"]), []).append(float(row["rel_error"]))
    colors = {}
    for (kap, _), errs in groups.items():
        first = kap not in colors
        colors.setdefault(kap, f"C{len(colors)}")
        ax.semilogy(errs, color=colors[kap], alpha=0.5, lw=0.8,
                    label=f"kappa={float(kap):g}" if first else None)
    ax.set_xlabel("iteration")
    ax.set_ylabel("relative error")
    ax.legend()
    return _save(fig, path)


def plot_diagnostics(rows, path):
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot([int(row["n"]) for row in rows], [float(row["median_trip"]) for row in rows], "o-")
    ax.set_xlabel("n")
    ax.set_ylabel("median isometry defect")
    return _save(fig, path)


_PLOTTERS = {
    "phase_transition.csv": plot_phase_transition,
    "timing.csv": plot_timing,
    "curves.csv": plot_curves,
    "diagnostics.csv": plot_diagnostics,
}


def plot_directory(data_dir, out_dir=None):
    """Render every recognised table in ``data_dir``; returns the SVG paths."""
    data_dir = Path(data_dir)
    out_dir = Path(out_dir) if out_dir is not None else data_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, plotter in _PLOTTERS.items():
        src = data_dir / name
        if src.exists():
            written.append(plotter(read_csv(src), out_dir / (src.stem + ".svg")))
    return written
