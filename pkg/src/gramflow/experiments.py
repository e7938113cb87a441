"""Named, seeded, file-producing experiment runs over the core modules.

Each experiment checks one mathematical claim end to end: it builds its
own data, runs the relevant routine per seed, writes every artifact it
produces (CSV series plus JSON sidecars), and records a per-seed verdict
in a single RunSummary JSON. A failed verdict is a *result*, not an
error: callers only see exceptions for broken inputs or I/O.

Config resolution: experiment defaults, then a flat ``key=value`` file,
then explicit flags (seeds, output directory), last writer wins. Keys a
flag displaced are echoed in the summary so a run's provenance is
auditable from its output alone.
"""

from __future__ import annotations

import json
import os
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import Dataset, generate_sphere_dataset
from .linear_landscape import multi_init_gd
from .relu_dynamics import (
    TrainingDiverged,
    _grad_at,
    check_convergence_bound,
    check_gradient_decay,
    check_lambda_floor,
    gram,
    gram_infinity,
    hessian,
    init_net,
    lambda0,
    train_discrete,
    train_ode,
)
from .sigmoid_rank import measure_zero_trials, sigmoid, top_layer_fit

DEFAULT_OUT_ENV = "GRAMFLOW_OUT"
DEFAULT_OUT_DIR = "gramflow_out"


class HarnessError(RuntimeError):
    """A run could not be carried out (bad name, bad config, bad I/O)."""


class ConfigError(HarnessError):
    """A config file or flag value failed to parse or validate."""


# --------------------------------------------------------------------------
# parameter schema


@dataclass(frozen=True)
class ParamSpec:
    default: object
    kind: str  # "int" | "float" | "ints"
    check: Callable[[object], str | None] | None = None


def _positive_int(v) -> str | None:
    return None if v >= 1 else "must be >= 1"


def _positive(v) -> str | None:
    return None if v > 0 else "must be > 0"


def _nonneg(v) -> str | None:
    return None if v >= 0 else "must be >= 0 (0 means automatic)"


def _seed_list(v) -> str | None:
    if len(v) == 0:
        return "must list at least one seed"
    if any(s < 0 for s in v):
        return "seeds must be >= 0"
    if len(set(v)) != len(v):
        return "seeds must be distinct"
    return None


def _increasing_sizes(v) -> str | None:
    if len(v) == 0:
        return "must list at least one size"
    if any(s < 1 for s in v):
        return "sizes must be >= 1"
    if any(b <= a for a, b in zip(v, v[1:])):
        return "sizes must be strictly increasing"
    return None


def _dims_list(v) -> str | None:
    if len(v) < 2:
        return "needs at least input and output widths"
    if any(s < 1 for s in v):
        return "widths must be >= 1"
    return None


def _parse_value(key: str, raw: str, kind: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "ints":
            toks = [t.strip() for t in raw.split(",")]
            return tuple(int(t) for t in toks if t)
    except ValueError:
        pass
    raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}")


# --------------------------------------------------------------------------
# config and summary containers


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved inputs for one run_experiment call."""

    experiment: str
    params: dict
    out_dir: Path
    overridden: tuple[str, ...] = ()


@dataclass(frozen=True)
class RunSummary:
    """One run's verdicts, artifacts, and provenance.

    pass_rate is exactly the number of true verdicts divided by the
    number of verdicts. checks carries aggregate (cross-seed) booleans
    that have no single-seed owner, e.g. monotonicity of medians.
    """

    experiment: str
    version: str
    config: dict
    overridden: tuple[str, ...]
    verdicts: dict
    pass_rate: float
    checks: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    files: tuple[str, ...] = ()
    wall_clock_s: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "version": self.version,
            "config": self.config,
            "overridden": list(self.overridden),
            "verdicts": self.verdicts,
            "pass_rate": self.pass_rate,
            "checks": self.checks,
            "details": self.details,
            "files": list(self.files),
            "wall_clock_s": self.wall_clock_s,
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n")
        return path


def load_run_summary(path: str | Path) -> dict:
    """Read a summary back as a plain dict (used by tests and plotting)."""
    return json.loads(Path(path).read_text())


def summary_filename(experiment: str) -> str:
    return experiment.replace("-", "_") + "_summary.json"


# --------------------------------------------------------------------------
# shared helpers


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header: str, rows: Sequence[Sequence]) -> Path:
    lines = [header]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def _auto(value: float, fallback: float) -> float:
    return fallback if value == 0.0 else value


def _gd_loss_series(
    net, data: Dataset, eta: float, step_cap: int, target: float
) -> tuple[list[float], int | None]:
    """Loss after each plain GD step, stopping once below target.

    Returns the series and the first step index with loss < target, or
    None when the cap hits first. Records loss only, so it stays cheap
    enough for per-step resolution at large widths.
    """
    W = net.W.copy()
    losses: list[float] = []
    for step in range(step_cap + 1):
        G, _, e, _ = _grad_at(W, net.a, data)
        L = 0.5 * float(e @ e)
        if not np.isfinite(L):
            raise TrainingDiverged(step, f"loss became non-finite at step {step}")
        losses.append(L)
        if L < target:
            return losses, step
        W -= eta * G
    return losses, None


# --------------------------------------------------------------------------
# experiment runners
#
# Each returns (verdicts, files, checks, details). verdicts has exactly
# one boolean per seed; checks holds aggregate booleans; details holds
# numbers worth reading back without re-running.


def _flow_runs(params: dict, out: Path, prefix: str, checker) -> tuple[dict, list, dict, dict]:
    data = generate_sphere_dataset(n=params["n"], d=params["d"], seed=params["data_seed"])
    lam0 = lambda0(gram_infinity(data.X))
    T = _auto(params["T"], 20.0 / lam0)
    h = None if params["h"] == 0.0 else params["h"]
    verdicts: dict = {}
    details: dict = {"lambda0": lam0, "T": T}
    files: list[Path] = []
    for s in params["seeds"]:
        net = init_net(d=params["d"], m=params["m"], seed=s)
        traj = train_ode(
            net, data, T=T, h=h, record_every=params["record_every"], lambda0_value=lam0
        )
        csv_path = out / f"{prefix}_seed{s}.csv"
        sidecar = traj.save(csv_path)
        files += [csv_path, sidecar]
        rep = checker(traj, lam0, params)
        verdicts[f"seed_{s}"] = rep.passed
        details[f"seed_{s}"] = {
            "margin": rep.margin,
            "n_violations": rep.n_violations,
            "first_violation_time": rep.first_violation_time,
        }
    return verdicts, files, {}, details


def _run_convergence_envelope(params: dict, out: Path):
    return _flow_runs(
        params,
        out,
        "envelope",
        lambda traj, lam0, p: check_convergence_bound(traj, lam0, slack=p["slack"]),
    )


def _run_lambda_floor(params: dict, out: Path):
    return _flow_runs(params, out, "floor", lambda traj, lam0, p: check_lambda_floor(traj, lam0))


def _run_gram_concentration(params: dict, out: Path):
    data = generate_sphere_dataset(n=params["n"], d=params["d"], seed=params["data_seed"])
    hinf = gram_infinity(data.X)
    m_values = params["m_values"]
    errs: dict[int, dict[int, float]] = {m: {} for m in m_values}
    rows = []
    for m in m_values:
        for s in params["seeds"]:
            net = init_net(d=params["d"], m=m, seed=s)
            err = float(np.linalg.norm(gram(net, data.X).H - hinf.H, 2))
            errs[m][s] = err
            rows.append((m, s, err))
    csv_path = _write_csv(out / "concentration.csv", "m,seed,spectral_error", rows)
    verdicts = {
        f"seed_{s}": all(
            errs[b][s] < errs[a][s] for a, b in zip(m_values, m_values[1:])
        )
        for s in params["seeds"]
    }
    medians = {m: float(np.median(list(errs[m].values()))) for m in m_values}
    checks = {}
    for a, b in zip(m_values, m_values[1:]):
        ratio = medians[a] / medians[b] if medians[b] > 0 else float("inf")
        checks[f"median_ratio_{a}_to_{b}"] = bool(ratio >= params["factor"])
    details = {"medians": {str(m): medians[m] for m in m_values}, "factor": params["factor"]}
    return verdicts, [csv_path], checks, details


def _run_width_sweep(params: dict, out: Path):
    data = generate_sphere_dataset(n=params["n"], d=params["d"], seed=params["data_seed"])
    hinf = gram_infinity(data.X)
    lam_max = float(np.linalg.eigvalsh(hinf.H)[-1])
    eta = _auto(params["eta"], 1.0 / (2.0 * lam_max))
    m_values = params["m_values"]
    seeds = params["seeds"]
    target = params["loss_target"]
    iters: dict[int, dict[int, int | None]] = {m: {} for m in m_values}
    files: list[Path] = []
    rows = []
    for m in m_values:
        for s in seeds:
            net = init_net(d=params["d"], m=m, seed=s)
            losses, hit = _gd_loss_series(net, data, eta, params["step_cap"], target)
            iters[m][s] = hit
            rows.append((m, s, -1 if hit is None else hit))
            if s == seeds[0]:
                files.append(
                    _write_csv(
                        out / f"width{m}_seed{s}.csv",
                        "step,loss",
                        list(enumerate(losses)),
                    )
                )
    files.append(_write_csv(out / "width_iters.csv", "m,seed,iters_to_target", rows))
    verdicts = {
        f"seed_{s}": all(iters[m][s] is not None for m in m_values) for s in seeds
    }
    checks = {}
    details: dict = {"eta": eta, "loss_target": target}
    if all(verdicts.values()):
        medians = {m: float(np.median([iters[m][s] for s in seeds])) for m in m_values}
        checks["median_iters_nonincreasing"] = all(
            medians[b] <= medians[a] for a, b in zip(m_values, m_values[1:])
        )
        details["median_iters"] = {str(m): medians[m] for m in m_values}
    else:
        checks["median_iters_nonincreasing"] = False
    return verdicts, files, checks, details


def _run_gradient_decay(params: dict, out: Path):
    data = generate_sphere_dataset(n=params["n"], d=params["d"], seed=params["data_seed"])
    lam0 = lambda0(gram_infinity(data.X))
    eta = None if params["eta"] == 0.0 else params["eta"]
    verdicts: dict = {}
    details: dict = {"lambda0": lam0}
    files: list[Path] = []
    for s in params["seeds"]:
        net = init_net(d=params["d"], m=params["m"], seed=s)
        traj = train_discrete(
            net,
            data,
            eta=eta,
            steps=params["steps"],
            record_every=params["record_every"],
            lambda0_value=lam0,
        )
        csv_path = out / f"decay_seed{s}.csv"
        files += [csv_path, traj.save(csv_path)]
        rep = check_gradient_decay(traj)
        verdicts[f"seed_{s}"] = rep.passed
        details[f"seed_{s}"] = {"margin": rep.margin, "n_violations": rep.n_violations}
    return verdicts, files, {}, details


def _run_hessian_psd(params: dict, out: Path):
    rows = []
    verdicts: dict = {}
    worst = float("inf")
    for s in params["seeds"]:
        rng = np.random.default_rng([s, 7])
        d = int(rng.integers(params["d_min"], params["d_max"] + 1))
        m = int(rng.integers(params["m_min"], params["m_max"] + 1))
        n = int(rng.integers(params["n_min"], params["n_max"] + 1))
        data = generate_sphere_dataset(n=n, d=d, seed=s)
        net = init_net(d=d, m=m, seed=10_000 + s)
        _, lam_min = hessian(net, data)
        rows.append((s, n, d, m, lam_min))
        verdicts[f"seed_{s}"] = bool(lam_min >= params["floor"])
        worst = min(worst, lam_min)
    csv_path = _write_csv(out / "hessian_psd.csv", "seed,n,d,m,lambda_min", rows)
    return verdicts, [csv_path], {}, {"floor": params["floor"], "worst_lambda_min": worst}


def _run_linear_landscape(params: dict, out: Path):
    rng = np.random.default_rng([params["data_seed"], 0])
    dims = params["dims"]
    X = rng.standard_normal((dims[0], params["n_samples"]))
    Y = rng.standard_normal((dims[-1], params["n_samples"]))
    verdicts: dict = {}
    details: dict = {}
    files: list[Path] = []
    for s in params["seeds"]:
        res = multi_init_gd(
            dims,
            X,
            Y,
            n_inits=params["n_inits"],
            steps=params["steps"],
            eta=params["eta"],
            seed=s,
            tol=params["tol"],
        )
        csv_path = out / f"landscape_seed{s}.csv"
        json_path = out / f"landscape_seed{s}.json"
        res.save_csv(csv_path)
        res.save_json(json_path)
        files += [csv_path, json_path]
        verdicts[f"seed_{s}"] = res.verdict
        status_counts: dict[str, int] = {}
        for run in res.runs:
            status_counts[run.status] = status_counts.get(run.status, 0) + 1
        details[f"seed_{s}"] = {
            "global_loss": res.global_loss,
            "status_counts": status_counts,
        }
    return verdicts, files, {}, details


def _run_sigmoid_rank(params: dict, out: Path):
    verdicts: dict = {}
    details: dict = {}
    files: list[Path] = []
    for s in params["seeds"]:
        clean = measure_zero_trials(
            params["d0"], params["d1"], params["n"], params["trials"], seed=s
        )
        X = np.random.default_rng([s, 0]).standard_normal((params["d0"], params["n"]))
        X[:, -1] = X[:, 0]
        dup = measure_zero_trials(
            params["d0"], params["d1"], params["n"], params["trials"], seed=s, X=X
        )
        clean_csv = out / f"rank_seed{s}.csv"
        dup_csv = out / f"rank_dup_seed{s}.csv"
        clean.save_csv(clean_csv)
        dup.save_csv(dup_csv)
        files += [clean_csv, dup_csv]
        verdicts[f"seed_{s}"] = (
            clean.fraction_full_rank == 1.0 and dup.fraction_full_rank == 0.0
        )
        details[f"seed_{s}"] = {
            "fraction_full_rank": clean.fraction_full_rank,
            "fraction_full_rank_duplicated": dup.fraction_full_rank,
        }
    return verdicts, files, {}, details


def _run_topfit_zeroloss(params: dict, out: Path):
    rows = []
    verdicts: dict = {}
    worst = 0.0
    for s in params["seeds"]:
        rng = np.random.default_rng([s, 3])
        X = rng.standard_normal((params["d0"], params["n"]))
        W1 = rng.standard_normal((params["d1"], params["d0"]))
        Y = rng.standard_normal((params["d_out"], params["n"]))
        fit = top_layer_fit(sigmoid(W1 @ X), Y)
        scaled = fit.residual / max(float(np.linalg.norm(Y)), 1e-300)
        rows.append((s, scaled, fit.rank, int(fit.deficient)))
        verdicts[f"seed_{s}"] = bool(not fit.deficient and scaled < params["residual_tol"])
        worst = max(worst, scaled)
    csv_path = _write_csv(out / "topfit.csv", "seed,residual_scaled,rank,deficient", rows)
    details = {"worst_residual_scaled": worst, "residual_tol": params["residual_tol"]}
    return verdicts, [csv_path], {}, details


# --------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class ExperimentDef:
    name: str
    claim: str
    schema: dict
    runner: Callable


_FLOW_SCHEMA = {
    "n": ParamSpec(10, "int", _positive_int),
    "d": ParamSpec(5, "int", _positive_int),
    "m": ParamSpec(10_000, "int", _positive_int),
    "data_seed": ParamSpec(0, "int", _nonneg),
    "seeds": ParamSpec((0,), "ints", _seed_list),
    "T": ParamSpec(0.0, "float", _nonneg),
    "h": ParamSpec(0.0, "float", _nonneg),
    "record_every": ParamSpec(10, "int", _positive_int),
}

_EXPERIMENTS: dict[str, ExperimentDef] = {}


def _register(name: str, claim: str, schema: dict, runner: Callable) -> None:
    _EXPERIMENTS[name] = ExperimentDef(name, claim, schema, runner)


_register(
    "convergence-envelope",
    "squared training residual stays below slack * exp(-lambda0 * t) times its "
    "initial value along the gradient flow of a wide two-layer ReLU net",
    {**_FLOW_SCHEMA, "slack": ParamSpec(1.0, "float", _positive)},
    _run_convergence_envelope,
)
_register(
    "lambda-floor",
    "the smallest eigenvalue of the time-t Gram matrix stays above half the "
    "infinite-width value lambda0 throughout training",
    dict(_FLOW_SCHEMA),
    _run_lambda_floor,
)
_register(
    "gram-concentration",
    "the spectral distance between the width-m Gram matrix at initialization "
    "and its infinite-width limit shrinks like 1/sqrt(m)",
    {
        "n": ParamSpec(10, "int", _positive_int),
        "d": ParamSpec(5, "int", _positive_int),
        "m_values": ParamSpec((100, 1_000, 10_000), "ints", _increasing_sizes),
        "data_seed": ParamSpec(0, "int", _nonneg),
        "seeds": ParamSpec(tuple(range(20)), "ints", _seed_list),
        "factor": ParamSpec(2.5, "float", _positive),
    },
    _run_gram_concentration,
)
_register(
    "width-sweep",
    "iterations for gradient descent to reach a fixed loss level do not grow "
    "as the hidden width increases",
    {
        "n": ParamSpec(16, "int", _positive_int),
        "d": ParamSpec(5, "int", _positive_int),
        "m_values": ParamSpec((100, 400, 1_600, 6_400), "ints", _increasing_sizes),
        "data_seed": ParamSpec(0, "int", _nonneg),
        "seeds": ParamSpec(tuple(range(20)), "ints", _seed_list),
        "eta": ParamSpec(0.0, "float", _nonneg),
        "loss_target": ParamSpec(1e-3, "float", _positive),
        "step_cap": ParamSpec(20_000, "int", _positive_int),
    },
    _run_width_sweep,
)
_register(
    "gradient-decay",
    "no recorded state ever violates the per-neuron gradient bound "
    "sqrt(n/m) times the residual norm",
    {
        "n": ParamSpec(8, "int", _positive_int),
        "d": ParamSpec(5, "int", _positive_int),
        "m": ParamSpec(64, "int", _positive_int),
        "data_seed": ParamSpec(0, "int", _nonneg),
        "seeds": ParamSpec((0, 1, 2, 3, 4), "ints", _seed_list),
        "steps": ParamSpec(100, "int", _positive_int),
        "eta": ParamSpec(0.0, "float", _nonneg),
        "record_every": ParamSpec(10, "int", _positive_int),
    },
    _run_gradient_decay,
)
_register(
    "hessian-psd",
    "the Gauss-Newton Hessian of the squared loss in the hidden weights is "
    "positive semi-definite at any weight setting",
    {
        "seeds": ParamSpec(tuple(range(50)), "ints", _seed_list),
        "d_min": ParamSpec(2, "int", _positive_int),
        "d_max": ParamSpec(6, "int", _positive_int),
        "m_min": ParamSpec(8, "int", _positive_int),
        "m_max": ParamSpec(64, "int", _positive_int),
        "n_min": ParamSpec(3, "int", _positive_int),
        "n_max": ParamSpec(12, "int", _positive_int),
        "floor": ParamSpec(-1e-8, "float", None),
    },
    _run_hessian_psd,
)
_register(
    "linear-landscape",
    "gradient descent on a linear chain lands at the rank-constrained "
    "least-squares optimum from every initialization that converges",
    {
        "dims": ParamSpec((3, 2, 2, 3), "ints", _dims_list),
        "n_samples": ParamSpec(8, "int", _positive_int),
        "n_inits": ParamSpec(50, "int", _positive_int),
        "eta": ParamSpec(0.1, "float", _positive),
        "steps": ParamSpec(200_000, "int", _positive_int),
        "tol": ParamSpec(1e-4, "float", _positive),
        "data_seed": ParamSpec(42, "int", _nonneg),
        "seeds": ParamSpec((0,), "ints", _seed_list),
    },
    _run_linear_landscape,
)
_register(
    "sigmoid-rank",
    "a wide sigmoid feature matrix is full rank for almost every weight draw, "
    "and duplicating one input column forces rank deficiency in every draw",
    {
        "d0": ParamSpec(5, "int", _positive_int),
        "d1": ParamSpec(20, "int", _positive_int),
        "n": ParamSpec(20, "int", _positive_int),
        "trials": ParamSpec(1_000, "int", _positive_int),
        "seeds": ParamSpec((0,), "ints", _seed_list),
    },
    _run_sigmoid_rank,
)
_register(
    "topfit-zeroloss",
    "with a full-rank feature matrix the top layer alone interpolates "
    "arbitrary labels to near machine precision",
    {
        "d0": ParamSpec(5, "int", _positive_int),
        "d1": ParamSpec(20, "int", _positive_int),
        "n": ParamSpec(20, "int", _positive_int),
        "d_out": ParamSpec(3, "int", _positive_int),
        "residual_tol": ParamSpec(1e-10, "float", _positive),
        "seeds": ParamSpec(tuple(range(20)), "ints", _seed_list),
    },
    _run_topfit_zeroloss,
)


def list_experiments() -> dict[str, str]:
    """Name -> one-line claim for every registered experiment."""
    return {name: d.claim for name, d in sorted(_EXPERIMENTS.items())}


# --------------------------------------------------------------------------
# config resolution


def _read_config_file(path: Path) -> dict[str, str]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        pairs[key] = value.strip()
    return pairs


def parse_config(
    experiment: str,
    config_file: str | Path | None = None,
    seeds: Sequence[int] | None = None,
    out_dir: str | Path | None = None,
) -> ExperimentConfig:
    """Resolve defaults, config file, and flags into an ExperimentConfig.

    Precedence, lowest to highest: schema defaults, config file pairs,
    explicit flags. A flag that displaces a file value is recorded in
    ``overridden``. Unknown keys and out-of-range values raise
    ConfigError; an unknown experiment name raises HarnessError.
    """
    if experiment not in _EXPERIMENTS:
        known = ", ".join(sorted(_EXPERIMENTS))
        raise HarnessError(f"unknown experiment {experiment!r}; known: {known}")
    schema = _EXPERIMENTS[experiment].schema
    params = {k: spec.default for k, spec in schema.items()}
    file_out: str | None = None
    file_set: set[str] = set()

    if config_file is not None:
        for key, raw in _read_config_file(Path(config_file)).items():
            if key == "out_dir":
                file_out = raw
                continue
            if key not in schema:
                known = ", ".join(sorted(schema) + ["out_dir"])
                raise ConfigError(
                    f"unknown key {key!r} for experiment {experiment!r}; known: {known}"
                )
            params[key] = _parse_value(key, raw, schema[key].kind)
            file_set.add(key)

    overridden: list[str] = []
    if seeds is not None:
        if "seeds" not in schema:
            raise ConfigError(f"experiment {experiment!r} takes no seeds")
        cleaned = tuple(int(s) for s in seeds)
        if "seeds" in file_set and params["seeds"] != cleaned:
            overridden.append("seeds")
        params["seeds"] = cleaned

    for key, value in params.items():
        check = schema[key].check
        if check is not None:
            problem = check(value)
            if problem is not None:
                raise ConfigError(f"{key}={value!r}: {problem}")

    if out_dir is not None:
        resolved_out = Path(out_dir)
        if file_out is not None and file_out != str(out_dir):
            overridden.append("out_dir")
    elif file_out is not None:
        resolved_out = Path(file_out)
    else:
        resolved_out = Path(os.environ.get(DEFAULT_OUT_ENV, DEFAULT_OUT_DIR))

    return ExperimentConfig(
        experiment=experiment,
        params=params,
        out_dir=resolved_out,
        overridden=tuple(overridden),
    )


# --------------------------------------------------------------------------
# runner


def run_experiment(cfg: ExperimentConfig) -> RunSummary:
    """Run one experiment, write all artifacts plus a summary, return it.

    Failed verdicts do not raise; only unusable configs, numerical
    blow-ups, and I/O problems escape as exceptions. The summary file
    lands at out_dir/summary_filename(experiment) and references every
    other file the run produced, each exactly once.
    """
    if cfg.experiment not in _EXPERIMENTS:
        known = ", ".join(sorted(_EXPERIMENTS))
        raise HarnessError(f"unknown experiment {cfg.experiment!r}; known: {known}")
    definition = _EXPERIMENTS[cfg.experiment]
    t0 = time.perf_counter()
    try:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise HarnessError(f"cannot create output directory {cfg.out_dir}: {exc}") from exc

    verdicts, files, checks, details = definition.runner(cfg.params, cfg.out_dir)
    names = sorted(str(Path(f).name) for f in files)
    if len(set(names)) != len(names):
        raise HarnessError(f"internal error: duplicate artifact names in {names}")

    config_echo = {
        k: list(v) if isinstance(v, tuple) else v for k, v in sorted(cfg.params.items())
    }
    config_echo["out_dir"] = str(cfg.out_dir)
    summary = RunSummary(
        experiment=cfg.experiment,
        version=__version__,
        config=config_echo,
        overridden=cfg.overridden,
        verdicts=dict(sorted(verdicts.items())),
        pass_rate=sum(verdicts.values()) / len(verdicts),
        checks=dict(sorted(checks.items())),
        details=details,
        files=tuple(names),
        wall_clock_s=time.perf_counter() - t0,
    )
    summary.save(cfg.out_dir / summary_filename(cfg.experiment))
    return summary
