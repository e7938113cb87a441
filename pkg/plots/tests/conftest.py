"""Shared fixture: real artifacts produced by driving the gramflow CLI.

The rendering package consumes gramflow only through its published file
formats, so the tests do the same: they shell out to ``python -m
gramflow run`` with small configs and hand the resulting CSV/JSON
artifacts to the renderer.
"""

import subprocess
import sys
from pathlib import Path

import pytest

_CONFIGS = {
    "convergence-envelope": "n=6\nd=4\nm=200\nseeds=0,1\nT=1.0\nrecord_every=5\n",
    "lambda-floor": "n=6\nd=4\nm=300\nseeds=0\nT=1.0\nrecord_every=5\n",
    "gram-concentration": "n=6\nd=4\nm_values=50,500\nseeds=0,1,2,3,4\n",
    "width-sweep": "n=8\nd=4\nm_values=50,200,800\nseeds=0\nstep_cap=5000\n",
    "linear-landscape": "n_inits=8\nseeds=0\n",
}


def run_gramflow(args: list[str]) -> None:
    proc = subprocess.run(
        [sys.executable, "-m", "gramflow", *args],
        capture_output=True,
        text=True,
    )
    if proc.returncode != 0:
        raise RuntimeError(f"gramflow {' '.join(args)} failed:\n{proc.stderr}")


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory) -> dict[str, Path]:
    """Experiment name -> directory of that experiment's real outputs."""
    root = tmp_path_factory.mktemp("gramflow_artifacts")
    dirs: dict[str, Path] = {}
    for name, text in _CONFIGS.items():
        cfg = root / f"{name}.cfg"
        cfg.write_text(text)
        out = root / name.replace("-", "_")
        run_gramflow(
            ["run", "--experiment", name, "--config", str(cfg), "--out", str(out)]
        )
        dirs[name] = out
    return dirs
