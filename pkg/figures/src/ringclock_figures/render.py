"""Render figure analogs from the CSV + metadata files of a ringclock run.

This package is strictly a consumer: it reads the data files the simulator
CLI wrote (documented in the simulator README) and never recomputes any
physics.  Figure ids:

* ``fig2`` — momentum populations vs time: exact-solution curves overlaid
  with integration markers (log-t axis).
* ``fig3`` — normalized steady-state correlators vs tau/T, one curve per run
  (e.g. per dissipation rate).
* ``fig4`` — histogram of the net probability current.
* ``fig5`` — histogram of the IPR, plus the mask-state IPR vs sigma when
  runs with several sigmas are available (read from metadata, not computed).
* ``fig6`` — power spectral density of the peak-angle signal, one curve per
  run, with the metadata's clock frequency marked.
* ``fig7`` — momentum/position density heatmaps of one trajectory
  (requires snapshot files).

Every inconsistency (missing inputs, empty CSV, mismatched lattice metadata
across overlaid inputs) aborts before any output file is written.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGURE_IDS = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig7")


class RenderError(RuntimeError):
    """Missing, empty, or inconsistent inputs."""


@dataclass
class FigureSpec:
    """One figure to render: id, input CSV paths, axis/scale options."""

    figure_id: str
    inputs: list[Path]
    options: dict = field(default_factory=dict)


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise RenderError(f"input {path} does not exist")
    with open(path) as fh:
        header = fh.readline().strip()
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not header or not rows:
        raise RenderError(f"input {path} is empty")
    return header.split(","), np.array(rows, dtype=float)


def run_metadata(csv_path: Path) -> dict:
    meta_path = Path(csv_path).parent / "metadata.json"
    if not meta_path.exists():
        raise RenderError(f"no metadata.json next to {csv_path}")
    with open(meta_path) as fh:
        return json.load(fh)


def _require_matching(metas: list[dict], keys=("n_sites", "sigma")) -> None:
    """Overlaid inputs must come from the same lattice."""
    ref = metas[0]["runspec"]["model"]
    for meta in metas[1:]:
        model = meta["runspec"]["model"]
        for key in keys:
            if model[key] != ref[key]:
                raise RenderError(
                    f"metadata mismatch across inputs: {key}={model[key]} vs {ref[key]}"
                )


def _finish(fig, out_path: Path) -> Path:
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def _gamma_label(meta: dict) -> str:
    gamma = meta["runspec"]["model"]["gamma"]
    return f"gamma={gamma}"


def _fig2(spec: FigureSpec):
    # exact curves as lines, integrated populations as markers, log-t axis
    exact = [p for p in spec.inputs if run_metadata(p)["runspec"]["kind"] == "diagonal-exact"]
    marks = [p for p in spec.inputs if run_metadata(p)["runspec"]["kind"] == "evolve"]
    if not exact or not marks:
        raise RenderError("fig2 needs one diagonal-exact and one evolve diagonals.csv")
    metas = [run_metadata(p) for p in exact + marks]
    _require_matching(metas)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    _, sol = read_csv(exact[0])
    colors = plt.cm.viridis(np.linspace(0, 1, sol.shape[1] - 1))
    positive = sol[:, 0] > 0
    for j in range(1, sol.shape[1]):
        ax.plot(sol[positive, 0], sol[positive, j], "-", color=colors[j - 1], lw=1.2)
    _, num = read_csv(marks[0])
    stride = max(1, len(num) // 25)
    positive = num[:, 0] > 0
    for j in range(1, num.shape[1]):
        pts = num[positive][::stride]
        ax.plot(pts[:, 0], pts[:, j], "o", color=colors[j - 1], ms=4, mfc="none")
    if spec.options.get("log_t", True):
        ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("momentum populations")
    ax.set_title("relaxation: exact solution (lines) vs integration (markers)")
    return fig


def _fig3(spec: FigureSpec):
    metas = [run_metadata(p) for p in spec.inputs]
    _require_matching(metas)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for path, meta in zip(spec.inputs, metas):
        _, data = read_csv(path)
        t_ref = meta["derived"]["ring_period"]
        ax.plot(data[:, 0] / t_ref, data[:, 1], lw=1.2, label=_gamma_label(meta))
    ax.axhline(0.0, color="0.7", lw=0.6)
    ax.set_xlabel("tau / T")
    ax.set_ylabel("normalized correlation")
    ax.legend()
    ax.set_title("steady-state mask correlator")
    return fig


def _hist_panel(ax, path: Path, xlabel: str):
    _, data = read_csv(path)
    if data.shape[0] < 2:
        raise RenderError(f"{path} has fewer than 2 bins")
    width = data[1, 0] - data[0, 0]
    total = max(data[:, 1].sum(), 1.0)
    ax.bar(data[:, 0], data[:, 1] / (total * width), width=0.9 * width)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("distribution density")


def _fig4(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(6, 4))
    _hist_panel(ax, spec.inputs[0], "net probability current J")
    ax.set_title("current distribution at late time")
    return fig


def _fig5(spec: FigureSpec):
    sweep = spec.options.get("sigma_sweep", [])
    if sweep:
        fig, (ax_a, ax_b) = plt.subplots(1, 2, figsize=(10, 4))
    else:
        fig, ax_a = plt.subplots(figsize=(6, 4))
    _hist_panel(ax_a, spec.inputs[0], "IPR")
    ax_a.set_title("(a) trajectory IPR at late time")
    if sweep:
        sigmas, values = zip(*sorted(sweep))
        ax_b.plot(sigmas, values, "o-")
        ax_b.set_xlabel("sigma")
        ax_b.set_ylabel("IPR of mask-collapsed momentum state")
        ax_b.set_title("(b) mask width dependence")
    return fig


def _fig6(spec: FigureSpec):
    metas = [run_metadata(p) for p in spec.inputs]
    _require_matching(metas, keys=("n_sites",))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for path, meta in zip(spec.inputs, metas):
        _, data = read_csv(path)
        model = meta["runspec"]["model"]
        clock = 4.0 * np.pi * model["t_hop"] / model["n_sites"]
        line, = ax.plot(data[1:, 0], data[1:, 1], lw=1.0,
                        label=f"t_hop={model['t_hop']}")
        ax.axvline(clock, color=line.get_color(), ls=":", lw=0.8)
    ax.set_yscale("log")
    ax.set_xlabel("omega")
    ax.set_ylabel("S(omega)")
    ax.legend()
    ax.set_title("peak-angle spectrum (dotted: max group-velocity frequency)")
    return fig


def _fig7(spec: FigureSpec):
    mom = [p for p in spec.inputs if p.name.endswith("_momentum.csv")]
    pos = [p for p in spec.inputs if p.name.endswith("_position.csv")]
    if not mom or not pos:
        raise RenderError("fig7 needs snapshots_<i>_momentum.csv and _position.csv")
    meta = run_metadata(mom[0])
    _require_matching([meta, run_metadata(pos[0])])
    t_ref = meta["derived"]["ring_period"]
    fig, (ax_m, ax_p) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for ax, path, label in ((ax_m, mom[0], "momentum index"), (ax_p, pos[0], "site")):
        _, data = read_csv(path)
        dens = data[:, 1:].T  # (N, n_snapshots)
        extent = (data[0, 0] / t_ref, data[-1, 0] / t_ref, 0, dens.shape[0])
        ax.imshow(dens, aspect="auto", origin="lower", extent=extent, cmap="magma")
        ax.set_ylabel(label)
    ax_p.set_xlabel("t / T")
    ax_m.set_title("sample trajectory density")
    return fig


_RENDERERS = {
    "fig2": _fig2,
    "fig3": _fig3,
    "fig4": _fig4,
    "fig5": _fig5,
    "fig6": _fig6,
    "fig7": _fig7,
}


def render(spec: FigureSpec, out_dir: Path, fmt: str = "png") -> Path:
    """Render one figure; writes ``<out_dir>/<figure_id>.<fmt>``."""
    if spec.figure_id not in _RENDERERS:
        raise RenderError(f"unknown figure id {spec.figure_id!r} (know {FIGURE_IDS})")
    if not spec.inputs:
        raise RenderError(f"{spec.figure_id} has no inputs")
    for path in spec.inputs:
        if not Path(path).exists():
            raise RenderError(f"input {path} does not exist")
    fig = _RENDERERS[spec.figure_id](spec)
    return _finish(fig, Path(out_dir) / f"{spec.figure_id}.{fmt}")


def _find_runs(data_dir: Path) -> list[tuple[Path, dict]]:
    runs = []
    for meta_path in sorted(Path(data_dir).rglob("metadata.json")):
        with open(meta_path) as fh:
            runs.append((meta_path.parent, json.load(fh)))
    if not runs:
        raise RenderError(f"no metadata.json found under {data_dir}")
    return runs


def build_figure_spec(figure_id: str, data_dir: Path) -> FigureSpec:
    """Locate the inputs for one figure by scanning run metadata."""
    runs = _find_runs(data_dir)
    by_kind = {}
    for run_dir, meta in runs:
        by_kind.setdefault(meta["runspec"]["kind"], []).append((run_dir, meta))

    def paths(kind, name):
        return [d / name for d, _ in by_kind.get(kind, []) if (d / name).exists()]

    if figure_id == "fig2":
        inputs = paths("diagonal-exact", "diagonals.csv") + paths("evolve", "diagonals.csv")
        return FigureSpec(figure_id, inputs, {"log_t": True})
    if figure_id == "fig3":
        inputs = []
        for run_dir, _ in by_kind.get("correlate", []):
            inputs.extend(sorted(run_dir.glob("correlator_a*.csv")))
        return FigureSpec(figure_id, inputs, {"tau_over_t": True})
    if figure_id == "fig4":
        return FigureSpec(figure_id, paths("trajectories", "hist_J.csv")[:1])
    if figure_id == "fig5":
        sweep = {}
        for _, meta in runs:
            sweep[meta["runspec"]["model"]["sigma"]] = meta["derived"][
                "mask_momentum_state_ipr"
            ]
        options = {"sigma_sweep": sorted(sweep.items()) if len(sweep) > 1 else []}
        return FigureSpec(figure_id, paths("trajectories", "hist_IPR.csv")[:1], options)
    if figure_id == "fig6":
        return FigureSpec(figure_id, paths("spectrum", "spectrum.csv"))
    if figure_id == "fig7":
        inputs = []
        for run_dir, _ in by_kind.get("trajectories", []):
            mom = sorted(run_dir.glob("snapshots_*_momentum.csv"))
            pos = sorted(run_dir.glob("snapshots_*_position.csv"))
            if mom and pos:
                inputs = [mom[0], pos[0]]
                break
        return FigureSpec(figure_id, inputs)
    raise RenderError(f"unknown figure id {figure_id!r} (know {FIGURE_IDS})")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render_figures",
        description="Render figure analogs from ringclock CSV output directories.",
    )
    parser.add_argument("data_dir", help="directory tree containing run outputs")
    parser.add_argument(
        "--figures",
        default=",".join(FIGURE_IDS),
        help="comma-separated figure ids (default: all)",
    )
    parser.add_argument("--out", default=None, help="output directory (default: <data_dir>/figures)")
    parser.add_argument("--format", default="png", choices=("png", "svg"))
    args = parser.parse_args(argv)

    out_dir = Path(args.out) if args.out else Path(args.data_dir) / "figures"
    wanted = [f.strip() for f in args.figures.split(",") if f.strip()]
    try:
        for figure_id in wanted:
            spec = build_figure_spec(figure_id, Path(args.data_dir))
            path = render(spec, out_dir, args.format)
            print(f"wrote {path}")
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
