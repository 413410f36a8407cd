"""Generate a small tree of simulator outputs through the ringclock CLI.

The figures package consumes the primary simulator only through its
command-line interface and data files, so the fixtures shell out to it.
"""

import subprocess
import sys

import pytest

EVOLVE = """
kind: evolve
model: {n_sites: 10, t_hop: 1.0, sigma: 1.0, gamma: 1.0}
init: {kind: momentum, m: 0}
numerics: {t_final: 4.0, sample_dt: 0.2}
"""

EXACT = EVOLVE.replace("kind: evolve", "kind: diagonal-exact").replace(
    "numerics: {t_final: 4.0, sample_dt: 0.2}",
    "numerics: {t_final: 4.0, sample_dt: 0.2}",
)

CORRELATE = """
kind: correlate
model: {{n_sites: 12, t_hop: 1.0, sigma: 1.2, gamma: {gamma}}}
numerics: {{tau_max: 4.0, sample_dt: 0.25}}
sites: [1]
"""

TRAJECTORIES = """
kind: trajectories
model: {n_sites: 16, t_hop: 1.0, sigma: 2.0, gamma: 1.0}
init: {kind: momentum, m: 0}
numerics: {t_final: 3.0, sample_dt: 0.5, n_traj: 24, bins: 11, n_detail: 1, snapshot_stride: 2}
master_seed: 7
"""

SPECTRUM = """
kind: spectrum
model: {{n_sites: 16, t_hop: {t_hop}, sigma: 1.6, gamma: 1.0}}
init: {{kind: uniform}}
numerics: {{t_final: 20.0, sample_dt: 0.25}}
master_seed: 5
"""


def run_cli(kind: str, config_text: str, out_dir) -> None:
    config = out_dir.parent / f"{out_dir.name}.yaml"
    config.write_text(config_text)
    result = subprocess.run(
        [sys.executable, "-m", "ringclock.cli", kind,
         "--config", str(config), "--out", str(out_dir)],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0, result.stderr


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    run_cli("evolve", EVOLVE, root / "evolve")
    run_cli("diagonal-exact", EXACT, root / "exact")
    run_cli("correlate", CORRELATE.format(gamma=1.0), root / "corr_g1")
    run_cli("correlate", CORRELATE.format(gamma=2.0), root / "corr_g2")
    run_cli("trajectories", TRAJECTORIES, root / "traj")
    run_cli("spectrum", SPECTRUM.format(t_hop=2.0), root / "spec_t2")
    run_cli("spectrum", SPECTRUM.format(t_hop=4.0), root / "spec_t4")
    return root
