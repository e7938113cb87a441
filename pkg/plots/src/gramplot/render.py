"""Turn experiment CSV artifacts into fixed-geometry PNG panels.

Input contracts, by plot kind (column names are exact):

- ``envelope``:       t, residual_sq     + JSON sidecar with "lambda0"
- ``floor``:          t, lambda_min_H    + JSON sidecar with "lambda0"
- ``concentration``:  m, seed, spectral_error
- ``width-sweep``:    step, loss         (one CSV per width, labeled by stem)
- ``landscape-hist``: final_loss         (optional sidecar with "global_loss")

A sidecar is the JSON file sharing the CSV's stem. Rendering is
read-only over inputs, and reruns are byte-identical: Agg backend,
pinned figure size and DPI, and the Software metadata chunk (the one
varying default) stripped from the PNG.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGSIZE = (7.0, 4.5)
DPI = 120
KINDS = ("envelope", "floor", "concentration", "width-sweep", "landscape-hist")

# kind -> (log_x default, log_y default)
_SCALE_DEFAULTS = {
    "envelope": (False, True),
    "floor": (False, False),
    "concentration": (True, True),
    "width-sweep": (False, True),
    "landscape-hist": (False, False),
}


class PlotSchemaError(ValueError):
    """The inputs do not match what the requested plot kind consumes."""


@dataclass(frozen=True)
class PlotSpec:
    """One render request: what to draw, from which CSVs, to which file.

    log_x/log_y of None pick the kind's default scale (envelope and
    width-sweep default to log-y, concentration to log-log).
    """

    kind: str
    inputs: tuple[Path, ...]
    out: Path
    log_x: bool | None = None
    log_y: bool | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlotSchemaError(f"unknown plot kind {self.kind!r}; known: {', '.join(KINDS)}")
        object.__setattr__(self, "inputs", tuple(Path(p) for p in self.inputs))
        object.__setattr__(self, "out", Path(self.out))
        if len(self.inputs) == 0:
            raise PlotSchemaError("at least one input CSV is required")
        if self.kind != "width-sweep" and len(self.inputs) != 1:
            raise PlotSchemaError(
                f"kind {self.kind!r} takes exactly one CSV, got {len(self.inputs)}"
            )


def _read_columns(path: Path, required: tuple[str, ...], kind: str) -> dict[str, np.ndarray]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in required if c not in header]
            if missing:
                raise PlotSchemaError(
                    f"{path}: kind {kind!r} needs column(s) {', '.join(missing)}; "
                    f"found {', '.join(header) or 'nothing'}"
                )
            rows = list(reader)
    except OSError as exc:
        raise PlotSchemaError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise PlotSchemaError(f"{path}: no data rows")
    out: dict[str, np.ndarray] = {}
    for col in required:
        try:
            out[col] = np.array([float(r[col]) for r in rows])
        except (TypeError, ValueError) as exc:
            raise PlotSchemaError(f"{path}: column {col!r} has a non-numeric entry") from exc
    return out


def _sidecar(path: Path) -> dict | None:
    side = path.with_suffix(".json")
    if not side.exists():
        return None
    try:
        return json.loads(side.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PlotSchemaError(f"cannot parse sidecar {side}: {exc}") from exc


def _lambda0_from_sidecar(path: Path, kind: str) -> float:
    meta = _sidecar(path)
    if meta is None or "lambda0" not in meta:
        raise PlotSchemaError(
            f"{path}: kind {kind!r} needs a JSON sidecar ({path.with_suffix('.json').name}) "
            "with a lambda0 entry"
        )
    return float(meta["lambda0"])


def _draw_envelope(spec: PlotSpec, ax) -> None:
    path = spec.inputs[0]
    cols = _read_columns(path, ("t", "residual_sq"), spec.kind)
    lam0 = _lambda0_from_sidecar(path, spec.kind)
    t = cols["t"]
    ax.plot(t, cols["residual_sq"], color="#1f77b4", lw=1.8, label="residual_sq")
    ax.plot(
        t,
        cols["residual_sq"][0] * np.exp(-lam0 * t),
        color="#d62728",
        lw=1.5,
        ls="--",
        label="exp(-lambda0 t) envelope",
    )
    ax.set_xlabel("t")
    ax.set_ylabel("squared residual")


def _draw_floor(spec: PlotSpec, ax) -> None:
    path = spec.inputs[0]
    cols = _read_columns(path, ("t", "lambda_min_H"), spec.kind)
    lam0 = _lambda0_from_sidecar(path, spec.kind)
    ax.plot(cols["t"], cols["lambda_min_H"], color="#1f77b4", lw=1.8, label="lambda_min(H(t))")
    ax.axhline(lam0 / 2.0, color="#d62728", lw=1.5, ls="--", label="lambda0 / 2")
    ax.set_xlabel("t")
    ax.set_ylabel("smallest Gram eigenvalue")
    ax.set_ylim(bottom=0.0)


def _draw_concentration(spec: PlotSpec, ax) -> None:
    cols = _read_columns(spec.inputs[0], ("m", "seed", "spectral_error"), spec.kind)
    ax.plot(
        cols["m"], cols["spectral_error"], ls="", marker=".", color="#9ecae1",
        alpha=0.8, label="seeds",
    )
    widths = np.unique(cols["m"])
    medians = [float(np.median(cols["spectral_error"][cols["m"] == m])) for m in widths]
    ax.plot(widths, medians, marker="o", color="#1f77b4", lw=1.8, label="median")
    ax.set_xlabel("width m")
    ax.set_ylabel("||H(0) - H_inf||_2")


def _draw_width_sweep(spec: PlotSpec, ax) -> None:
    for path in spec.inputs:
        cols = _read_columns(path, ("step", "loss"), spec.kind)
        ax.plot(cols["step"], cols["loss"], lw=1.6, label=path.stem)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")


def _draw_landscape_hist(spec: PlotSpec, ax) -> None:
    path = spec.inputs[0]
    cols = _read_columns(path, ("final_loss",), spec.kind)
    vals = cols["final_loss"]
    lo, hi = float(np.min(vals)), float(np.max(vals))
    # All runs at one loss value (the expected outcome) leaves no data
    # range to bin; pad it so the histogram still draws.
    if hi - lo <= max(abs(hi), 1.0) * 1e-9:
        pad = max(abs(hi), 1.0) * 1e-6
        bins = np.linspace(lo - pad, hi + pad, 25)
        ax.hist(vals, bins=bins, color="#9ecae1", edgecolor="#1f77b4")
    else:
        ax.hist(vals, bins=24, color="#9ecae1", edgecolor="#1f77b4")
    meta = _sidecar(path)
    if meta is not None and "global_loss" in meta:
        ax.axvline(
            float(meta["global_loss"]), color="#d62728", lw=1.5, ls="--", label="global optimum"
        )
    ax.set_xlabel("final loss")
    ax.set_ylabel("runs")


_DRAWERS = {
    "envelope": _draw_envelope,
    "floor": _draw_floor,
    "concentration": _draw_concentration,
    "width-sweep": _draw_width_sweep,
    "landscape-hist": _draw_landscape_hist,
}


def build_figure(spec: PlotSpec):
    """The figure render() saves; exposed so tests can inspect curves."""
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    try:
        _DRAWERS[spec.kind](spec, ax)
        log_x, log_y = _SCALE_DEFAULTS[spec.kind]
        if spec.log_x is not None:
            log_x = spec.log_x
        if spec.log_y is not None:
            log_y = spec.log_y
        if log_x:
            ax.set_xscale("log")
        if log_y:
            ax.set_yscale("log")
        ax.set_title(spec.kind)
        handles, _ = ax.get_legend_handles_labels()
        if handles:
            ax.legend(loc="best")
        fig.tight_layout()
    except Exception:
        plt.close(fig)
        raise
    return fig


def render(spec: PlotSpec) -> Path:
    """Render one spec to its PNG and return the output path.

    Reruns overwrite the output with byte-identical content for the
    same inputs; the output directory is created when absent.
    """
    fig = build_figure(spec)
    try:
        spec.out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.out, dpi=DPI, metadata={"Software": None})
    finally:
        plt.close(fig)
    return spec.out
