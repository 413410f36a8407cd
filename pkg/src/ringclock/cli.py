"""Command-line runner: parse a YAML run spec, execute, write CSV + metadata.

Subcommands: ``evolve``, ``diagonal-exact``, ``trajectories``, ``correlate``,
``spectrum``.  Every run writes ``metadata.json`` echoing the fully resolved
spec (defaults included, so a run is reproducible from its metadata alone)
plus the derived constants, and one CSV family per observable.  Floats are
written with ``repr`` (shortest round-trip form), which makes outputs
byte-identical across repeated runs and worker counts.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, NumericalError
from .liouville import (
    DensityMatrix,
    DiagonalDistribution,
    integrate,
    solve_diagonal_exact,
)
from .model import (
    ModelConfig,
    PureState,
    build_amplitude_table,
    momentum_state,
    position_state,
    uniform_state,
)
from .observables import (
    correlator_ss,
    histogram,
    peak_angle_series,
    power_spectral_density,
)
from .trajectory import run_ensemble, run_trajectory

KINDS = ("evolve", "diagonal-exact", "trajectories", "correlate", "spectrum")

# numerics keys: per kind, which are accepted and which must be present
_NUMERICS_ALLOWED = {
    "evolve": {"t_final", "sample_dt", "dt"},
    "diagonal-exact": {"t_final", "sample_dt"},
    "trajectories": {"t_final", "sample_dt", "n_traj", "bins", "snapshot_stride", "n_detail"},
    "correlate": {"tau_max", "sample_dt", "dt"},
    "spectrum": {"t_final", "sample_dt"},
}
_NUMERICS_REQUIRED = {
    "evolve": {"t_final", "sample_dt"},
    "diagonal-exact": {"t_final", "sample_dt"},
    "trajectories": {"t_final", "sample_dt", "n_traj"},
    "correlate": {"tau_max", "sample_dt"},
    "spectrum": {"t_final", "sample_dt"},
}
_SEED_REQUIRED = {"trajectories", "spectrum"}
_INIT_REQUIRED = {"evolve", "diagonal-exact", "trajectories", "spectrum"}


@dataclass
class RunSpec:
    """Fully resolved description of one experiment."""

    kind: str
    model: ModelConfig
    init_kind: str | None  # momentum | uniform | position; None for correlate
    init_m: int | None
    init_site: int | None  # 1-based
    t_final: float | None
    sample_dt: float
    dt: float | str
    tau_max: float | None
    n_traj: int | None
    bins: int
    snapshot_stride: int
    n_detail: int
    master_seed: int | None
    sites: list[int] = field(default_factory=list)  # 1-based, correlate only

    def to_dict(self) -> dict:
        model = {
            "n_sites": self.model.n_sites,
            "t_hop": self.model.t_hop,
            "sigma": self.model.sigma,
            "gamma": self.model.rates
            if self.model.is_uniform
            else [float(g) for g in self.model.rate_vector],
        }
        init = None
        if self.init_kind is not None:
            init = {"kind": self.init_kind}
            if self.init_kind == "momentum":
                init["m"] = self.init_m
            elif self.init_kind == "position":
                init["site"] = self.init_site
        numerics = {"sample_dt": self.sample_dt}
        if self.kind in ("evolve", "correlate"):
            numerics["dt"] = self.dt
        if self.kind == "correlate":
            numerics["tau_max"] = self.tau_max
        else:
            numerics["t_final"] = self.t_final
        if self.kind == "trajectories":
            numerics.update(
                n_traj=self.n_traj,
                bins=self.bins,
                snapshot_stride=self.snapshot_stride,
                n_detail=self.n_detail,
            )
        out = {"kind": self.kind, "model": model, "numerics": numerics}
        if init is not None:
            out["init"] = init
        if self.master_seed is not None:
            out["master_seed"] = self.master_seed
        if self.kind == "correlate":
            out["sites"] = list(self.sites)
        return out

    def __eq__(self, other) -> bool:
        return isinstance(other, RunSpec) and self.to_dict() == other.to_dict()


def _require_mapping(obj, name: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigError(f"{name} must be a mapping, got {type(obj).__name__}")
    return obj


def _reject_unknown(mapping: dict, allowed, name: str) -> None:
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in {name}")


def _get_number(mapping, key, name, required=False, minimum=None, integer=False):
    if key not in mapping or mapping[key] is None:
        if required:
            raise ConfigError(f"missing required key {key!r} in {name}")
        return None
    val = mapping[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{name}.{key} must be a number, got {val!r}")
    if integer:
        if int(val) != val:
            raise ConfigError(f"{name}.{key} must be an integer, got {val!r}")
        val = int(val)
    if minimum is not None and val < minimum:
        raise ConfigError(f"{name}.{key} must be >= {minimum}, got {val!r}")
    return val


def parse_runspec(text: str, expected_kind: str | None = None) -> RunSpec:
    """Parse and validate a YAML run spec; every error names its key."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    raw = _require_mapping(raw, "config")
    _reject_unknown(raw, {"kind", "model", "init", "numerics", "master_seed", "sites"}, "config")

    kind = raw.get("kind", expected_kind)
    if kind is None:
        raise ConfigError("missing required key 'kind'")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    if expected_kind is not None and kind != expected_kind:
        raise ConfigError(f"config kind {kind!r} does not match subcommand {expected_kind!r}")

    model_raw = _require_mapping(raw.get("model"), "model")
    if not model_raw:
        raise ConfigError("missing required key 'model'")
    _reject_unknown(model_raw, {"n_sites", "t_hop", "sigma", "gamma"}, "model")
    n_sites = _get_number(model_raw, "n_sites", "model", required=True, integer=True)
    t_hop = _get_number(model_raw, "t_hop", "model")
    t_hop = 1.0 if t_hop is None else float(t_hop)
    sigma = _get_number(model_raw, "sigma", "model", required=True)
    if "gamma" not in model_raw:
        raise ConfigError("missing required key 'gamma' in model")
    gamma = model_raw["gamma"]
    if isinstance(gamma, list):
        rates = np.asarray(gamma, dtype=float)
    elif isinstance(gamma, (int, float)) and not isinstance(gamma, bool):
        rates = float(gamma)
    else:
        raise ConfigError(f"model.gamma must be a number or list, got {gamma!r}")
    model = ModelConfig(n_sites=n_sites, t_hop=t_hop, sigma=float(sigma), rates=rates)

    init_raw = raw.get("init")
    init_kind = init_m = init_site = None
    if kind in _INIT_REQUIRED:
        init_raw = _require_mapping(init_raw, "init")
        if not init_raw:
            raise ConfigError("missing required key 'init'")
        _reject_unknown(init_raw, {"kind", "m", "site"}, "init")
        init_kind = init_raw.get("kind")
        if init_kind not in ("momentum", "uniform", "position"):
            raise ConfigError(
                f"init.kind must be momentum|uniform|position, got {init_kind!r}"
            )
        if init_kind == "momentum":
            init_m = _get_number(init_raw, "m", "init", required=True, integer=True)
            if "site" in init_raw:
                raise ConfigError("unknown key 'site' in init (kind=momentum)")
        elif init_kind == "position":
            init_site = _get_number(init_raw, "site", "init", required=True, integer=True)
            if not 1 <= init_site <= model.n_sites:
                raise ConfigError(f"init.site must be in 1..{model.n_sites}, got {init_site}")
            if "m" in init_raw:
                raise ConfigError("unknown key 'm' in init (kind=position)")
        else:
            if "m" in init_raw or "site" in init_raw:
                raise ConfigError("init kind=uniform takes no further keys")
    elif init_raw is not None:
        raise ConfigError(f"key 'init' is not used by kind={kind}")

    numerics = _require_mapping(raw.get("numerics"), "numerics")
    if not numerics:
        raise ConfigError("missing required key 'numerics'")
    _reject_unknown(numerics, _NUMERICS_ALLOWED[kind], f"numerics (kind={kind})")
    for key in _NUMERICS_REQUIRED[kind]:
        if key not in numerics:
            raise ConfigError(f"missing required key {key!r} in numerics (kind={kind})")

    t_final = _get_number(numerics, "t_final", "numerics", minimum=0.0)
    sample_dt = _get_number(numerics, "sample_dt", "numerics", required=True)
    if not sample_dt > 0:
        raise ConfigError(f"numerics.sample_dt must be > 0, got {sample_dt}")
    tau_max = _get_number(numerics, "tau_max", "numerics", minimum=0.0)
    n_traj = _get_number(numerics, "n_traj", "numerics", integer=True, minimum=1)
    bins = _get_number(numerics, "bins", "numerics", integer=True, minimum=2) or 41
    snapshot_stride = (
        _get_number(numerics, "snapshot_stride", "numerics", integer=True, minimum=0) or 0
    )
    n_detail = _get_number(numerics, "n_detail", "numerics", integer=True, minimum=0)
    if n_detail is None:
        n_detail = 1
    dt = numerics.get("dt", "auto")
    if dt != "auto":
        dt = _get_number(numerics, "dt", "numerics")
        if not dt > 0:
            raise ConfigError(f"numerics.dt must be > 0, got {dt}")

    master_seed = raw.get("master_seed")
    if master_seed is not None:
        if isinstance(master_seed, bool) or not isinstance(master_seed, int) or master_seed < 0:
            raise ConfigError(f"master_seed must be a non-negative integer, got {master_seed!r}")
    elif kind in _SEED_REQUIRED:
        raise ConfigError(f"missing required key 'master_seed' for kind={kind}")

    sites = raw.get("sites")
    if kind == "correlate":
        if sites is None:
            sites = [1]
        if not isinstance(sites, list) or not sites:
            raise ConfigError(f"sites must be a non-empty list, got {sites!r}")
        for s in sites:
            if isinstance(s, bool) or not isinstance(s, int) or not 1 <= s <= model.n_sites:
                raise ConfigError(f"sites entries must be in 1..{model.n_sites}, got {s!r}")
    elif sites is not None:
        raise ConfigError(f"key 'sites' is not used by kind={kind}")
    else:
        sites = []

    return RunSpec(
        kind=kind,
        model=model,
        init_kind=init_kind,
        init_m=init_m,
        init_site=init_site,
        t_final=t_final,
        sample_dt=float(sample_dt),
        dt=dt,
        tau_max=tau_max,
        n_traj=n_traj,
        bins=bins,
        snapshot_stride=snapshot_stride,
        n_detail=n_detail,
        master_seed=master_seed,
        sites=list(sites),
    )


def serialize_runspec(spec: RunSpec) -> str:
    return yaml.safe_dump(spec.to_dict(), sort_keys=False)


def apply_overrides(text: str, overrides: list[str]) -> str:
    """Apply ``--override dotted.key=value`` entries onto the YAML document."""
    data = yaml.safe_load(text)
    data = _require_mapping(data, "config")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, value = item.split("=", 1)
        keys = path.split(".")
        node = data
        for k in keys[:-1]:
            nxt = node.get(k)
            if nxt is None:
                nxt = {}
                node[k] = nxt
            if not isinstance(nxt, dict):
                raise ConfigError(f"override path {path!r} crosses non-mapping key {k!r}")
            node = nxt
        node[keys[-1]] = yaml.safe_load(value)
    return yaml.safe_dump(data)


def _initial_pure_state(spec: RunSpec) -> PureState:
    n = spec.model.n_sites
    if spec.init_kind == "momentum":
        return momentum_state(n, spec.init_m)
    if spec.init_kind == "uniform":
        return uniform_state(n)
    if spec.init_kind == "position":
        return position_state(n, spec.init_site - 1)
    raise ConfigError(f"kind={spec.kind} needs an initial state")


def _fmt(x) -> str:
    return repr(float(x))


class OutputSet:
    """Tracks written files so a failed run leaves no partial outputs."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    def write_csv(self, name: str, header: list[str], rows) -> Path:
        path = self.out_dir / name
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(x) if not isinstance(x, str) else x for x in row) + "\n")
        self.written.append(path)
        return path

    def write_json(self, name: str, payload: dict) -> Path:
        path = self.out_dir / name
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.written.append(path)
        return path

    def discard(self) -> None:
        for path in self.written:
            path.unlink(missing_ok=True)


def _metadata(spec: RunSpec, table) -> dict:
    model = spec.model
    return {
        "format_version": 1,
        "code_version": __version__,
        "runspec": spec.to_dict(),
        "derived": {
            "ring_period": model.ring_period,
            "momentum_grid": [float(k) for k in model.momentum_grid()],
            "mask_momentum_state_ipr": float(1.0 / table.h4sum[0]),
            "units": "hbar = 1, lattice constant = 1; t_hop sets the energy scale",
            "site_indexing": "CSV site columns are 1-based",
            "momentum_ordering": "FFT order: k_j = 2*pi*j/N mod 2*pi",
        },
    }


def _write_diagonals(out: OutputSet, times, populations) -> None:
    n = populations.shape[1]
    header = ["t"] + [f"rho_{j}_{j}" for j in range(n)]
    rows = (
        [t] + list(DiagonalDistribution(populations[i]).clamped())
        for i, t in enumerate(times)
    )
    out.write_csv("diagonals.csv", header, rows)


def _write_trajectory(out: OutputSet, i: int, rec) -> None:
    counts = rec.jump_counts_at(rec.times)
    out.write_csv(
        f"trajectory_{i}.csv",
        ["t", "J", "IPR", "phi", "jump_count"],
        (
            [rec.times[j], rec.current[j], rec.ipr[j], rec.phi[j], int(counts[j])]
            for j in range(len(rec.times))
        ),
    )
    out.write_csv(
        f"jumps_{i}.csv",
        ["t", "site"],
        ([t, int(s) + 1] for t, s in zip(rec.jump_times, rec.jump_sites)),
    )
    if rec.snapshots_position is not None:
        n = rec.snapshots_position.shape[1]
        out.write_csv(
            f"snapshots_{i}_position.csv",
            ["t"] + [f"p_{b}" for b in range(n)],
            ([t] + list(rec.snapshots_position[j]) for j, t in enumerate(rec.snapshot_times)),
        )
        out.write_csv(
            f"snapshots_{i}_momentum.csv",
            ["t"] + [f"p_{b}" for b in range(n)],
            ([t] + list(rec.snapshots_momentum[j]) for j, t in enumerate(rec.snapshot_times)),
        )


def _write_histogram(out: OutputSet, name: str, values, bins: int) -> None:
    hist = histogram(values, bins)
    out.write_csv(
        name,
        ["bin_center", "count"],
        ([c, int(k)] for c, k in zip(hist.centers, hist.counts)),
    )


def run(spec: RunSpec, out_dir, threads: int = 1) -> list[Path]:
    """Execute one experiment; returns the written files."""
    out = OutputSet(Path(out_dir))
    try:
        table = build_amplitude_table(spec.model)
        out.write_json("metadata.json", _metadata(spec, table))
        model = spec.model

        if spec.kind == "evolve":
            rho0 = DensityMatrix.from_pure(_initial_pure_state(spec))
            rho0.validate(check_psd=True)
            series = integrate(
                model, table, rho0, spec.t_final, spec.sample_dt, dt=spec.dt, store="diagonal"
            )
            _write_diagonals(out, series.times, series.diagonals)

        elif spec.kind == "diagonal-exact":
            if not model.is_uniform:
                raise ConfigError("diagonal-exact requires a uniform gamma")
            if spec.init_kind == "position":
                raise ConfigError(
                    "init.kind=position is not diagonal in the momentum basis; "
                    "use kind=evolve"
                )
            p0 = np.zeros(model.n_sites)
            p0[(spec.init_m or 0) % model.n_sites] = 1.0
            n_samples = int(np.floor(spec.t_final / spec.sample_dt + 1e-9)) + 1
            times = np.arange(n_samples) * spec.sample_dt
            populations = solve_diagonal_exact(table, p0, model.gamma, times)
            _write_diagonals(out, times, populations)

        elif spec.kind == "trajectories":
            psi0 = _initial_pure_state(spec)
            result = run_ensemble(
                model,
                table,
                psi0,
                spec.t_final,
                spec.sample_dt,
                spec.n_traj,
                spec.master_seed,
                threads=threads,
                keep_records=min(spec.n_detail, spec.n_traj),
                snapshot_stride=spec.snapshot_stride,
            )
            for i, rec in enumerate(result.records):
                _write_trajectory(out, i, rec)
            if spec.n_traj >= 2:  # histograms need at least two values
                _write_histogram(out, "hist_J.csv", result.current_values[-1], spec.bins)
                _write_histogram(out, "hist_IPR.csv", result.ipr_values[-1], spec.bins)

        elif spec.kind == "correlate":
            if spec.sample_dt > spec.tau_max:
                raise ConfigError("numerics.sample_dt exceeds tau_max")
            n_tau = int(np.floor(spec.tau_max / spec.sample_dt + 1e-9)) + 1
            tau = np.arange(n_tau) * spec.sample_dt
            for site in spec.sites:
                series = correlator_ss(model, table, site - 1, tau, dt=spec.dt)
                out.write_csv(
                    f"correlator_a{site}.csv",
                    ["tau", "C_norm", "Im_C"],
                    (
                        [series.tau[i], series.c_norm[i], float(series.c_raw[i].imag)]
                        for i in range(len(series.tau))
                    ),
                )

        elif spec.kind == "spectrum":
            psi0 = _initial_pure_state(spec)
            rec = run_trajectory(
                model,
                table,
                psi0,
                spec.t_final,
                spec.sample_dt,
                (spec.master_seed, 0),
                snapshot_stride=spec.snapshot_stride,
            )
            _write_trajectory(out, 0, rec)
            times, y = peak_angle_series(rec)
            spectrum = power_spectral_density(y, spec.sample_dt)
            out.write_csv(
                "spectrum.csv",
                ["omega", "S"],
                ([spectrum.omega[i], spectrum.s[i]] for i in range(len(spectrum.omega))),
            )

        else:
            raise ConfigError(f"unknown kind {spec.kind!r}")
    except BaseException:
        out.discard()
        raise
    return out.written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ringclock",
        description="Simulate a measured tight-binding ring and write CSV data files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="YAML run spec")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--threads", type=int, default=1, help="ensemble worker count")
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config entry (dotted path), repeatable",
        )
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        if args.override:
            text = apply_overrides(text, args.override)
        if args.seed is not None:
            text = apply_overrides(text, [f"master_seed={args.seed}"])
        spec = parse_runspec(text, expected_kind=args.command)
        run(spec, args.out, threads=max(1, args.threads))
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
