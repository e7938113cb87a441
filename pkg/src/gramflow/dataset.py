"""Synthetic datasets: unit-norm input columns with bounded labels.

Every experiment in this package runs on a :class:`Dataset`: a ``d x n``
real matrix ``X`` whose columns are data points of Euclidean norm 1,
together with a length-``n`` label vector ``y`` with ``|y_i| < C``.
No two columns may be parallel; the separation margin on the cosine is
``eps_parallel`` (default 1e-6).

Randomness everywhere in this package comes from ``numpy.random.default_rng``
(PCG64), so a given seed reproduces the exact same dataset bytes on any
machine running the same build.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NORM_TOL = 1e-12
DEFAULT_EPS_PARALLEL = 1e-6

# Generation retries are cheap (one Gaussian draw each); this cap only trips
# when n is large relative to the sphere in dimension d.
MAX_RETRIES_PER_POINT = 200


def frozen_f64(a) -> np.ndarray:
    """Contiguous read-only float64 copy that never freezes the caller's array.

    ascontiguousarray returns its input unchanged when it already matches,
    so setting writeable=False on it directly would freeze shared buffers.
    """
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out is a and out.flags.writeable:
        out = out.copy()
    out.flags.writeable = False
    return out


class DatasetError(ValueError):
    """Malformed dataset file or impossible generation request."""


class DatasetValidationError(DatasetError):
    """A loaded or constructed dataset violates a required invariant."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__(str(report))


@dataclass(frozen=True)
class Dataset:
    """Immutable design matrix plus labels.

    ``X`` has one data point per column. Arrays are marked read-only at
    construction so instances are safe to share across threads.
    """

    X: np.ndarray
    y: np.ndarray
    C: float

    def __post_init__(self):
        X = frozen_f64(self.X)
        y = frozen_f64(self.y)
        if X.ndim != 2:
            raise DatasetError(f"X must be a 2-d matrix, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[1]:
            raise DatasetError(
                f"y must have one entry per column of X: X is {X.shape}, y is {y.shape}"
            )
        if not self.C > 0:
            raise DatasetError(f"label bound C must be positive, got {self.C}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one invariant check, with its worst offender."""

    name: str
    passed: bool
    worst: tuple[int, ...] | None
    worst_value: float | None
    message: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self) -> str:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            lines.append(f"{c.name}: {status} ({c.message})")
        return "\n".join(lines)


def validate(data: Dataset, eps_parallel: float = DEFAULT_EPS_PARALLEL) -> ValidationReport:
    """Check every dataset invariant; failures go in the report, never raise.

    Checks: unit column norms (to 1e-12), strict label bound |y_i| < C, and
    pairwise non-parallel columns |x_i^T x_j| < 1 - eps_parallel. Each check
    records the worst offending index or pair.
    """
    checks = []

    norms = np.linalg.norm(data.X, axis=0)
    dev = np.abs(norms - 1.0)
    i = int(np.argmax(dev))
    checks.append(
        CheckResult(
            name="unit_norm_columns",
            passed=bool(dev[i] <= NORM_TOL),
            worst=(i,),
            worst_value=float(norms[i]),
            message=f"worst column {i} has norm {norms[i]:.17g}",
        )
    )

    overshoot = np.abs(data.y) - data.C
    j = int(np.argmax(overshoot))
    checks.append(
        CheckResult(
            name="label_bound",
            passed=bool(np.abs(data.y[j]) < data.C),
            worst=(j,),
            worst_value=float(data.y[j]),
            message=f"worst label index {j}: |y|={abs(data.y[j]):.17g} vs C={data.C:.17g}",
        )
    )

    if data.n >= 2:
        G = data.X.T @ data.X
        np.fill_diagonal(G, 0.0)
        flat = int(np.argmax(np.abs(G)))
        a, b = divmod(flat, data.n)
        pair = (min(a, b), max(a, b))
        cos = float(G[a, b])
        checks.append(
            CheckResult(
                name="non_parallel_columns",
                passed=bool(abs(cos) < 1.0 - eps_parallel),
                worst=pair,
                worst_value=cos,
                message=f"worst pair {pair}: |cos|={abs(cos):.17g} vs bound {1.0 - eps_parallel:.17g}",
            )
        )
    else:
        checks.append(
            CheckResult(
                name="non_parallel_columns",
                passed=True,
                worst=None,
                worst_value=None,
                message="single point is trivially non-parallel",
            )
        )

    return ValidationReport(checks=tuple(checks))


def generate_sphere_dataset(
    n: int,
    d: int,
    C: float = 1.0,
    seed: int = 0,
    eps_parallel: float = DEFAULT_EPS_PARALLEL,
) -> Dataset:
    """Draw n unit-norm points in dimension d and labels uniform on (-C, C).

    Points are standard Gaussians normalized to the sphere; any draw that
    lands within the parallel margin of an already-accepted point is
    redrawn (at most MAX_RETRIES_PER_POINT times per point).
    """
    if n < 1:
        raise DatasetError(f"need n >= 1 points, got {n}")
    if d < 2:
        raise DatasetError(f"need input dimension d >= 2, got {d}")
    if not C > 0:
        raise DatasetError(f"label bound C must be positive, got {C}")

    rng = np.random.default_rng(seed)
    cols = np.empty((d, n))
    for i in range(n):
        for attempt in range(MAX_RETRIES_PER_POINT + 1):
            v = rng.standard_normal(d)
            norm = np.linalg.norm(v)
            if norm <= NORM_TOL:
                continue
            v /= norm
            if i == 0 or np.max(np.abs(cols[:, :i].T @ v)) < 1.0 - eps_parallel:
                cols[:, i] = v
                break
        else:
            raise DatasetError(
                f"could not place point {i} after {MAX_RETRIES_PER_POINT} retries; "
                f"n={n} may be too large for the margin in dimension d={d}"
            )

    y = rng.uniform(-C, C, size=n)
    while np.any(np.abs(y) >= C):  # uniform() includes the low endpoint
        bad = np.abs(y) >= C
        y[bad] = rng.uniform(-C, C, size=int(bad.sum()))

    data = Dataset(X=cols, y=y, C=float(C))
    report = validate(data, eps_parallel=eps_parallel)
    if not report.ok:
        raise DatasetValidationError(report)
    return data


def _fmt(x: float) -> str:
    # 17 significant digits: enough for an exact float64 round trip.
    return f"{x:.17g}"


def save_dataset(data: Dataset, path: str | Path) -> None:
    """Write the CSV form: header ``d,n,C``, then d rows of X, then y."""
    buf = io.StringIO()
    buf.write(f"{data.d},{data.n},{_fmt(data.C)}\n")
    for row in data.X:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    buf.write(",".join(_fmt(v) for v in data.y) + "\n")
    Path(path).write_text(buf.getvalue())


def load_dataset(path: str | Path, eps_parallel: float = DEFAULT_EPS_PARALLEL) -> Dataset:
    """Read a dataset CSV and re-run validation; invalid files are rejected."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DatasetError(f"{path}: empty dataset file")

    header = lines[0].split(",")
    if len(header) != 3:
        raise DatasetError(f"{path}: header must be 'd,n,C', got {lines[0]!r}")
    try:
        d, n, C = int(header[0]), int(header[1]), float(header[2])
    except ValueError as exc:
        raise DatasetError(f"{path}: bad header values: {exc}") from exc

    if len(lines) != 1 + d + 1:
        raise DatasetError(
            f"{path}: expected {1 + d + 1} lines (header, {d} rows of X, y), got {len(lines)}"
        )

    try:
        X = np.array([[float(v) for v in lines[1 + r].split(",")] for r in range(d)])
        y = np.array([float(v) for v in lines[1 + d].split(",")])
    except ValueError as exc:
        raise DatasetError(f"{path}: malformed numeric row: {exc}") from exc

    if X.shape != (d, n) or y.shape != (n,):
        raise DatasetError(
            f"{path}: row lengths disagree with header: X is {X.shape}, y is {y.shape}"
        )

    data = Dataset(X=X, y=y, C=C)
    report = validate(data, eps_parallel=eps_parallel)
    if not report.ok:
        raise DatasetValidationError(report)
    return data
