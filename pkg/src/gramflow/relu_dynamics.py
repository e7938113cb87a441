"""Shallow ReLU nets, their Gram-matrix flow, and the bounds it obeys.

The model is ``f(W, a, x) = (1/sqrt(m)) sum_r a_r * max(0, w_r^T x)`` with
the output signs ``a`` frozen after initialization; only ``W`` trains, on
the squared loss ``L = (1/2) ||u - y||^2``. Training runs either as plain
discrete gradient descent or as fixed-step RK4 integration of the gradient
flow. Alongside the weights we track the empirical Gram matrix

    H_ij(t) = (1/m) x_i^T x_j * #{r : w_r^T x_i >= 0 and w_r^T x_j >= 0}

whose infinite-width limit H^inf controls the convergence rate through its
smallest eigenvalue lambda_0.

Convention: the ReLU indicator at a preactivation of exactly 0 evaluates
to 1. This is measure-zero in practice but is fixed for reproducibility.

The closed-form H^inf used here,

    H^inf_ij = x_i^T x_j * (pi - arccos(x_i^T x_j)) / (2*pi),

is a derived expression for the Gaussian orthant probability, not a quoted
one; the test suite gates it behind agreement with a Monte Carlo estimate
of the defining expectation before anything else trusts it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gramflow.dataset import Dataset, frozen_f64

UNIT_NORM_TOL = 1e-8
HESSIAN_GUARD = 4096  # largest m*d we are willing to densify

# Relative slop applied when flagging bound violations. The gradient-decay
# inequality is exact algebra, so anything beyond float rounding is a bug.
BOUND_REL_TOL = 1e-12


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, step: int, message: str):
        self.step = step
        super().__init__(message)


@dataclass(frozen=True)
class ShallowReluNet:
    """Width-m one-hidden-layer ReLU net with fixed sign output layer."""

    W: np.ndarray  # m x d, row r is w_r
    a: np.ndarray  # length m, entries in {-1, +1}
    seed: int | None = None

    def __post_init__(self):
        W = frozen_f64(self.W)
        a = frozen_f64(self.a)
        if W.ndim != 2:
            raise ValueError(f"W must be m x d, got shape {W.shape}")
        if a.shape != (W.shape[0],):
            raise ValueError(f"a must have one sign per row of W: W is {W.shape}, a is {a.shape}")
        if not np.all(np.abs(a) == 1.0):
            raise ValueError("a entries must be exactly +1 or -1")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "a", a)

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric PSD n x n matrix with its smallest eigenvalue cached."""

    H: np.ndarray
    kind: str  # "empirical" or "infinite"
    lambda_min: float = field(init=False)

    def __post_init__(self):
        H = frozen_f64(self.H)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError(f"Gram matrix must be square, got shape {H.shape}")
        if self.kind not in ("empirical", "infinite"):
            raise ValueError(f"kind must be 'empirical' or 'infinite', got {self.kind!r}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "lambda_min", float(np.linalg.eigvalsh(H)[0]))

    @property
    def n(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class Trajectory:
    """Quantities recorded along one training run, one row per record point.

    ``times`` is continuous time for the flow integrator and step * eta for
    discrete descent. ``meta`` carries n, m, d, lambda0, seed, integrator.
    """

    times: np.ndarray
    loss: np.ndarray
    residual_sq: np.ndarray
    lambda_min_H: np.ndarray
    max_weight_drift: np.ndarray
    max_grad_norm: np.ndarray
    meta: dict
    final_net: ShallowReluNet | None = None

    def __post_init__(self):
        for name in ("times", "loss", "residual_sq", "lambda_min_H",
                     "max_weight_drift", "max_grad_norm"):
            object.__setattr__(self, name, frozen_f64(getattr(self, name)))
        k = len(self.times)
        for name in ("loss", "residual_sq", "lambda_min_H", "max_weight_drift", "max_grad_norm"):
            if len(getattr(self, name)) != k:
                raise ValueError(f"trajectory field {name} has length "
                                 f"{len(getattr(self, name))}, expected {k}")
        if k > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def save(self, csv_path: str | Path) -> Path:
        """Write the record table as CSV plus a JSON sidecar with meta.

        The sidecar lands next to the CSV with the same stem and a .json
        suffix; its path is returned.
        """
        csv_path = Path(csv_path)
        cols = ("t", "loss", "residual_sq", "lambda_min_H", "max_weight_drift", "max_grad_norm")
        arrays = (self.times, self.loss, self.residual_sq, self.lambda_min_H,
                  self.max_weight_drift, self.max_grad_norm)
        lines = [",".join(cols)]
        for i in range(len(self)):
            lines.append(",".join(f"{arr[i]:.17g}" for arr in arrays))
        csv_path.write_text("\n".join(lines) + "\n")
        sidecar = csv_path.with_suffix(".json")
        sidecar.write_text(json.dumps(self.meta, sort_keys=True, indent=2) + "\n")
        return sidecar


def load_trajectory(csv_path: str | Path) -> Trajectory:
    """Read a trajectory CSV written by :meth:`Trajectory.save`."""
    csv_path = Path(csv_path)
    lines = [ln for ln in csv_path.read_text().splitlines() if ln.strip()]
    header = lines[0].split(",")
    expected = ["t", "loss", "residual_sq", "lambda_min_H", "max_weight_drift", "max_grad_norm"]
    if header != expected:
        raise ValueError(f"{csv_path}: unexpected header {header}")
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if rows.ndim != 2 or rows.shape[1] != len(expected):
        raise ValueError(f"{csv_path}: malformed rows")
    sidecar = csv_path.with_suffix(".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return Trajectory(times=rows[:, 0], loss=rows[:, 1], residual_sq=rows[:, 2],
                      lambda_min_H=rows[:, 3], max_weight_drift=rows[:, 4],
                      max_grad_norm=rows[:, 5], meta=meta)


@dataclass(frozen=True)
class BoundReport:
    """Outcome of checking one inequality along a trajectory.

    ``margin`` is the minimum over recorded points of (room left) as a
    ratio: allowed/observed for upper bounds, observed/required for lower
    bounds. Values >= 1 mean the bound held everywhere; the worst point is
    at ``worst_time``.
    """

    name: str
    passed: bool
    n_points: int
    n_violations: int
    first_violation_time: float | None
    margin: float
    worst_time: float
    extras: dict = field(default_factory=dict)

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (f"{self.name}: {status} over {self.n_points} points, "
                f"{self.n_violations} violations, margin {self.margin:.6g} "
                f"at t={self.worst_time:.6g}")


def init_net(d: int, m: int, seed: int = 0) -> ShallowReluNet:
    """Rows of W i.i.d. standard Gaussian; signs a_r i.i.d. uniform."""
    if m < 1 or d < 1:
        raise ValueError(f"need m >= 1 and d >= 1, got m={m}, d={d}")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((m, d))
    a = rng.choice(np.array([-1.0, 1.0]), size=m)
    return ShallowReluNet(W=W, a=a, seed=seed)


def _forward(W: np.ndarray, a: np.ndarray, X: np.ndarray):
    """Preactivations, active-set indicators, and predictions in one pass."""
    Z = W @ X                      # m x n
    A = (Z >= 0.0).astype(np.float64)
    u = (a @ np.maximum(Z, 0.0)) / np.sqrt(W.shape[0])
    return Z, A, u


def predict(net: ShallowReluNet, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != net.d:
        raise ValueError(f"X must be d x n with d={net.d}, got shape {X.shape}")
    _, _, u = _forward(net.W, net.a, X)
    return u


def loss(net: ShallowReluNet, data: Dataset) -> float:
    u = predict(net, data.X)
    return 0.5 * float(np.sum((u - data.y) ** 2))


def _grad_at(W: np.ndarray, a: np.ndarray, data: Dataset):
    """Gradient of the squared loss wrt W, plus the forward pass products."""
    m = W.shape[0]
    _, A, u = _forward(W, a, data.X)
    e = u - data.y
    # row r: (1/sqrt(m)) sum_j e_j a_r x_j [w_r^T x_j >= 0]
    G = ((a[:, None] * (A * e[None, :])) @ data.X.T) / np.sqrt(m)
    return G, u, e, A


def grad_w(net: ShallowReluNet, data: Dataset) -> np.ndarray:
    if data.d != net.d:
        raise ValueError(f"net expects dimension {net.d}, dataset has {data.d}")
    G, _, _, _ = _grad_at(net.W, net.a, data)
    return G


def gram(net: ShallowReluNet, X: np.ndarray) -> GramMatrix:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != net.d:
        raise ValueError(f"X must be d x n with d={net.d}, got shape {X.shape}")
    A = (net.W @ X >= 0.0).astype(np.float64)   # m x n
    H = (X.T @ X) * (A.T @ A) / net.m
    return GramMatrix(H=H, kind="empirical")


def _require_unit_columns(X: np.ndarray) -> None:
    norms = np.linalg.norm(X, axis=0)
    worst = float(np.max(np.abs(norms - 1.0)))
    if worst > UNIT_NORM_TOL:
        raise ValueError(f"columns must be unit norm, worst deviation {worst:.3g}")


def gram_infinity(
    X: np.ndarray,
    method: str = "closed_form",
    n_samples: int = 1_000_000,
    seed: int = 0,
) -> GramMatrix:
    """Infinite-width Gram limit E_w[x_i^T x_j 1{w^T x_i >= 0, w^T x_j >= 0}].

    ``closed_form`` evaluates the arc-cosine expression in the module
    docstring; ``monte_carlo`` averages the indicator product over Gaussian
    draws of w and is the oracle the closed form is validated against.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be d x n, got shape {X.shape}")
    _require_unit_columns(X)

    if method == "closed_form":
        G = np.clip(X.T @ X, -1.0, 1.0)
        H = G * (np.pi - np.arccos(G)) / (2.0 * np.pi)
    elif method == "monte_carlo":
        d, n = X.shape
        rng = np.random.default_rng(seed)
        counts = np.zeros((n, n))
        done = 0
        while done < n_samples:
            chunk = min(200_000, n_samples - done)
            S = (rng.standard_normal((chunk, d)) @ X >= 0.0).astype(np.float64)
            counts += S.T @ S
            done += chunk
        H = (X.T @ X) * (counts / n_samples)
    else:
        raise ValueError(f"method must be 'closed_form' or 'monte_carlo', got {method!r}")

    H = (H + H.T) / 2.0
    return GramMatrix(H=H, kind="infinite")


def lambda0(hinf: GramMatrix) -> float:
    """Smallest eigenvalue of the infinite-width Gram matrix."""
    if hinf.kind != "infinite":
        raise ValueError(f"lambda0 is defined for the infinite-width Gram, got kind={hinf.kind!r}")
    return hinf.lambda_min


def hessian(net: ShallowReluNet, data: Dataset) -> tuple[np.ndarray, float]:
    """Dense loss Hessian in the form that drops ReLU second-derivative terms.

    Block (r, s) is (1/m) a_r a_s sum_j 1{w_r^T x_j >= 0} 1{w_s^T x_j >= 0}
    x_j x_j^T, i.e. the Gauss-Newton product J^T J of the prediction
    Jacobian. Returns the (m*d) x (m*d) matrix and its smallest eigenvalue.
    """
    m, d = net.m, net.d
    if m * d > HESSIAN_GUARD:
        raise ValueError(f"hessian guard: m*d = {m * d} exceeds {HESSIAN_GUARD}")
    if data.d != d:
        raise ValueError(f"net expects dimension {d}, dataset has {data.d}")
    A = (net.W @ data.X >= 0.0).astype(np.float64)  # m x n
    B = net.a[:, None] * A                          # m x n
    blocks = np.einsum("rj,sj,ij,kj->risk", B, B, data.X, data.X) / m
    Hfull = blocks.reshape(m * d, m * d)
    Hfull = (Hfull + Hfull.T) / 2.0
    lam_min = float(np.linalg.eigvalsh(Hfull)[0])
    return Hfull, lam_min


def _record_plan(steps: int, record_every: int) -> list[int]:
    if record_every < 1:
        raise ValueError(f"record_every must be >= 1, got {record_every}")
    ks = list(range(0, steps + 1, record_every))
    if ks[-1] != steps:
        ks.append(steps)
    return ks


def _lambda0_or_compute(data: Dataset, lambda0_value: float | None) -> float:
    if lambda0_value is not None:
        return float(lambda0_value)
    return lambda0(gram_infinity(data.X, method="closed_form"))


class _Recorder:
    """Accumulates the per-step trajectory rows for both trainers."""

    def __init__(self, W0: np.ndarray, a: np.ndarray, data: Dataset):
        self.W0 = W0
        self.a = a
        self.data = data
        self.rows: list[tuple[float, float, float, float, float, float]] = []

    def take(self, t: float, W: np.ndarray) -> None:
        G, u, e, _ = _grad_at(W, self.a, self.data)
        rsq = float(np.sum(e**2))
        lam = gram(ShallowReluNet(W=W, a=self.a), self.data.X).lambda_min
        drift = float(np.max(np.linalg.norm(W - self.W0, axis=1)))
        gmax = float(np.max(np.linalg.norm(G, axis=1)))
        self.rows.append((t, 0.5 * rsq, rsq, lam, drift, gmax))

    def build(self, meta: dict, final_net: ShallowReluNet) -> Trajectory:
        cols = np.array(self.rows, dtype=np.float64)
        return Trajectory(times=cols[:, 0], loss=cols[:, 1], residual_sq=cols[:, 2],
                          lambda_min_H=cols[:, 3], max_weight_drift=cols[:, 4],
                          max_grad_norm=cols[:, 5], meta=meta, final_net=final_net)


def train_discrete(
    net: ShallowReluNet,
    data: Dataset,
    eta: float | None = None,
    steps: int = 1000,
    record_every: int = 10,
    lambda0_value: float | None = None,
) -> Trajectory:
    """Plain gradient descent on W; a stays frozen.

    Default step size is lambda0 / n^2, a conservative choice that keeps
    every test problem in the stable regime; pass eta to override. A
    non-finite loss aborts with the offending step index.
    """
    if eta is not None and not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    lam0 = _lambda0_or_compute(data, lambda0_value)
    if eta is None:
        eta = lam0 / data.n**2

    W = net.W.copy()
    rec = _Recorder(net.W, net.a, data)
    plan = set(_record_plan(steps, record_every))
    if 0 in plan:
        rec.take(0.0, W)
    for step in range(1, steps + 1):
        G, _, e, _ = _grad_at(W, net.a, data)
        W -= eta * G
        with np.errstate(over="ignore", invalid="ignore"):
            current = float(np.sum((_forward(W, net.a, data.X)[2] - data.y) ** 2))
        if not np.isfinite(current):
            raise TrainingDiverged(step, f"loss became non-finite at step {step} (eta={eta:g})")
        if step in plan:
            rec.take(step * eta, W)

    meta = {"n": data.n, "m": net.m, "d": net.d, "lambda0": lam0,
            "seed": net.seed, "integrator": "discrete_gd", "eta": eta, "steps": steps}
    return rec.build(meta, ShallowReluNet(W=W, a=net.a, seed=net.seed))


def train_ode(
    net: ShallowReluNet,
    data: Dataset,
    T: float,
    h: float | None = None,
    record_every: int = 10,
    lambda0_value: float | None = None,
) -> Trajectory:
    """Integrate the gradient flow dW/dt = -grad L with classical RK4.

    Default step is h = 0.05 / lambda0. The exact flow cannot diverge
    (loss is non-increasing), so a non-finite loss means the integrator
    step is too large and raises.
    """
    if not T > 0:
        raise ValueError(f"horizon T must be positive, got {T}")
    if h is not None and not h > 0:
        raise ValueError(f"step h must be positive, got {h}")
    lam0 = _lambda0_or_compute(data, lambda0_value)
    if h is None:
        h = 0.05 / lam0 if lam0 > 0 else 1e-2

    n_full, rem = divmod(T, h)
    sizes = [h] * int(n_full)
    if rem > 1e-12 * h:
        sizes.append(rem)
    steps = len(sizes)

    def F(W: np.ndarray) -> np.ndarray:
        return -_grad_at(W, net.a, data)[0]

    W = net.W.copy()
    rec = _Recorder(net.W, net.a, data)
    plan = set(_record_plan(steps, record_every))
    if 0 in plan:
        rec.take(0.0, W)
    t = 0.0
    for step, hs in enumerate(sizes, start=1):
        k1 = F(W)
        k2 = F(W + 0.5 * hs * k1)
        k3 = F(W + 0.5 * hs * k2)
        k4 = F(W + hs * k3)
        W = W + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += hs
        with np.errstate(over="ignore", invalid="ignore"):
            current = float(np.sum((_forward(W, net.a, data.X)[2] - data.y) ** 2))
        if not np.isfinite(current):
            raise TrainingDiverged(step, f"flow integration blew up at step {step} (h={hs:g}); "
                                         "reduce the integrator step")
        if step in plan:
            rec.take(t, W)

    meta = {"n": data.n, "m": net.m, "d": net.d, "lambda0": lam0,
            "seed": net.seed, "integrator": "rk4", "h": h, "T": T}
    return rec.build(meta, ShallowReluNet(W=W, a=net.a, seed=net.seed))


def _ratio(allowed: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """allowed/observed with 0/0 counting as infinite room."""
    out = np.full(len(allowed), np.inf)
    nz = observed > 0
    out[nz] = allowed[nz] / observed[nz]
    # observed > 0 against a zero allowance is an outright violation
    out[(observed > 0) & (allowed == 0)] = 0.0
    return out


def _report(name: str, times: np.ndarray, room: np.ndarray, extras: dict) -> BoundReport:
    violated = room < 1.0 - BOUND_REL_TOL
    worst = int(np.argmin(room))
    first = float(times[np.argmax(violated)]) if np.any(violated) else None
    return BoundReport(
        name=name,
        passed=not bool(np.any(violated)),
        n_points=len(times),
        n_violations=int(np.sum(violated)),
        first_violation_time=first,
        margin=float(room[worst]),
        worst_time=float(times[worst]),
        extras=extras,
    )


def check_convergence_bound(traj: Trajectory, lambda0_value: float, slack: float = 1.0) -> BoundReport:
    """Flag residual_sq(t) <= slack * exp(-lambda0 * t) * residual_sq(0)."""
    r0 = traj.residual_sq[0]
    allowed = slack * np.exp(-lambda0_value * traj.times) * r0
    room = _ratio(allowed, traj.residual_sq)
    return _report("convergence_envelope", traj.times, room,
                   {"residual_sq_0": float(r0), "slack": float(slack),
                    "lambda0": float(lambda0_value)})


def check_lambda_floor(traj: Trajectory, lambda0_value: float) -> BoundReport:
    """Flag lambda_min(H(t)) >= lambda0 / 2 at every recorded time."""
    floor = lambda0_value / 2.0
    observed = traj.lambda_min_H
    room = observed / floor if floor > 0 else np.full(len(observed), np.inf)
    worst = int(np.argmin(room))
    return _report("lambda_min_floor", traj.times, np.asarray(room),
                   {"floor": floor,
                    "min_lambda_min": float(np.min(observed)),
                    "drift_at_worst": float(traj.max_weight_drift[worst])})


def check_gradient_decay(traj: Trajectory) -> BoundReport:
    """Flag max_r ||dL/dw_r|| <= sqrt(n/m) * ||u - y|| at every record.

    This inequality is algebraic, not probabilistic; any violation beyond
    float rounding indicates an implementation bug.
    """
    n, m = traj.meta["n"], traj.meta["m"]
    allowed = np.sqrt(n / m) * np.sqrt(traj.residual_sq)
    room = _ratio(allowed, traj.max_grad_norm)
    return _report("gradient_row_decay", traj.times, room,
                   {"n": n, "m": m})
