"""Deep linear networks: every local minimum should be global.

The object of study is L(W_1..H) = (1/2) ||Y - W_H ... W_1 X||_F^2 / N for
a chain of H weight matrices. The product R = W_H ... W_1 can realize any
matrix of rank at most d_p, where p indexes a narrowest dimension of the
chain, so the best the chain can do is the rank-constrained optimum

    min { (1/2) ||Y - R X||_F^2 / N  :  rank(R) <= d_p }.

``multi_init_gd`` hammers the nonconvex problem with many random
initializations and compares every endpoint against that optimum; the
claim under test is that none of them gets stuck strictly above it.

``rank_constrained_optimum`` uses the reduced-rank regression construction
(truncate the SVD of the fitted values of the unconstrained least-squares
solution, then map back through the sample space). That construction is
derived, not quoted, so the tests validate it against a brute-force search
over rank-1 matrices on tiny instances before anything else relies on it.

Indices are 0-based throughout: layers run k = 0..H-1 and dims has H+1
entries (d_0, ..., d_H).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gramflow.dataset import frozen_f64

GRAD_STOP = 1e-10       # gradient Frobenius norm declaring convergence
RANK_REL_TOL = 1e-10    # singular values below this times sigma_max count as zero
DEFAULT_STEP_CAP = 1_000_000


@dataclass(frozen=True)
class DeepLinearNet:
    """Chain of H weight matrices; Ws[k] maps dimension d_k to d_{k+1}."""

    Ws: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.Ws) < 1:
            raise ValueError("need at least one layer")
        Ws = tuple(frozen_f64(W) for W in self.Ws)
        for k, W in enumerate(Ws):
            if W.ndim != 2:
                raise ValueError(f"layer {k} is not a matrix: shape {W.shape}")
        for k in range(len(Ws) - 1):
            if Ws[k + 1].shape[1] != Ws[k].shape[0]:
                raise ValueError(
                    f"chain break between layers {k} and {k + 1}: "
                    f"{Ws[k].shape} then {Ws[k + 1].shape}"
                )
        object.__setattr__(self, "Ws", Ws)

    @property
    def depth(self) -> int:
        return len(self.Ws)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.Ws[0].shape[1],) + tuple(W.shape[0] for W in self.Ws)

    @property
    def p(self) -> int:
        """Index of a narrowest dimension in the chain (first argmin)."""
        dims = self.dims
        return int(np.argmin(dims))

    @property
    def bottleneck(self) -> int:
        return min(self.dims)


@dataclass(frozen=True)
class RunRecord:
    """One GD run: where it ended and why it stopped.

    status is one of "converged" (gradient below GRAD_STOP and loss at the
    global optimum), "suspect" (gradient below GRAD_STOP but loss strictly
    above the optimum: a stall, not a counterexample), "step_cap", or
    "diverged".
    """

    init_index: int
    final_loss: float
    steps_used: int
    grad_norm: float
    status: str


@dataclass(frozen=True)
class LandscapeResult:
    runs: tuple[RunRecord, ...]
    global_loss: float
    verdict: bool
    tol: float
    meta: dict = field(default_factory=dict)

    @property
    def final_losses(self) -> list[float]:
        return [r.final_loss for r in self.runs]

    def save_json(self, path: str | Path) -> None:
        payload = {
            "global_loss": self.global_loss,
            "verdict": self.verdict,
            "tol": self.tol,
            "meta": self.meta,
            "runs": [
                {"init_index": r.init_index, "final_loss": r.final_loss,
                 "steps_used": r.steps_used, "grad_norm": r.grad_norm,
                 "converged": r.status == "converged", "status": r.status}
                for r in self.runs
            ],
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")

    def save_csv(self, path: str | Path) -> None:
        lines = ["init_index,final_loss,steps_used,grad_norm,status"]
        for r in self.runs:
            lines.append(f"{r.init_index},{r.final_loss:.17g},{r.steps_used},"
                         f"{r.grad_norm:.17g},{r.status}")
        Path(path).write_text("\n".join(lines) + "\n")


def _check_data_shapes(net_or_dims, X: np.ndarray, Y: np.ndarray):
    if X.ndim != 2 or Y.ndim != 2:
        raise ValueError(f"X and Y must be matrices, got {X.shape} and {Y.shape}")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"X and Y must share the sample count: {X.shape} vs {Y.shape}")


def deep_linear_loss(net: DeepLinearNet, X: np.ndarray, Y: np.ndarray) -> float:
    """(1/2) ||Y - W_H...W_1 X||_F^2 / N with N the number of samples."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    _check_data_shapes(net, X, Y)
    dims = net.dims
    if X.shape[0] != dims[0] or Y.shape[0] != dims[-1]:
        raise ValueError(f"chain maps {dims[0]} -> {dims[-1]}, data is "
                         f"{X.shape[0]} -> {Y.shape[0]}")
    R = product_map(net)
    return 0.5 * float(np.sum((Y - R @ X) ** 2)) / X.shape[1]


def product_map(net: DeepLinearNet) -> np.ndarray:
    """The end-to-end matrix W_H ... W_1; rank is at most the bottleneck."""
    R = net.Ws[0]
    for W in net.Ws[1:]:
        R = W @ R
    return R


def rank_constrained_optimum(X: np.ndarray, Y: np.ndarray, p: int) -> tuple[np.ndarray, float]:
    """Best fit of Y by R X over matrices R with rank(R) <= p.

    Reduced-rank regression: B = Y X^T (X X^T)^{-1} is the unconstrained
    least-squares solution; truncating the SVD of its fitted values F = B X
    to rank p and mapping back through X^T (X X^T)^{-1} gives the
    constrained optimizer. Requires X of full row rank.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    _check_data_shapes(None, X, Y)
    if p < 1:
        raise ValueError(f"rank bound must be >= 1, got {p}")

    sv = np.linalg.svd(X, compute_uv=False)
    if sv[-1] <= RANK_REL_TOL * sv[0]:
        raise ValueError("X must have full row rank")

    XXt = X @ X.T
    B = np.linalg.solve(XXt, X @ Y.T).T      # Y X^T (X X^T)^{-1}
    F = B @ X
    U, s, Vt = np.linalg.svd(F, full_matrices=False)
    k = min(p, len(s))
    Fp = (U[:, :k] * s[:k]) @ Vt[:k]
    R_star = np.linalg.solve(XXt, X @ Fp.T).T  # F_p X^T (X X^T)^{-1}
    loss_star = 0.5 * float(np.sum((Y - R_star @ X) ** 2)) / X.shape[1]
    return R_star, loss_star


def _chain_grads(Ws: list[np.ndarray], X: np.ndarray, Y: np.ndarray):
    """Loss and per-layer gradients for the chain, one forward-backward pass."""
    N = X.shape[1]
    P = [X]
    for W in Ws:
        P.append(W @ P[-1])
    E = (P[-1] - Y) / N
    lossval = 0.5 * float(np.sum((P[-1] - Y) ** 2)) / N
    grads = [np.empty(0)] * len(Ws)
    back = E
    for k in reversed(range(len(Ws))):
        grads[k] = back @ P[k].T
        back = Ws[k].T @ back
    return lossval, grads


def init_chain(dims: tuple[int, ...], rng: np.random.Generator) -> list[np.ndarray]:
    """Gaussian layers with entry variance 1/fan-in, keeping products O(1)."""
    return [rng.standard_normal((dims[k + 1], dims[k])) / np.sqrt(dims[k])
            for k in range(len(dims) - 1)]


def _within_tol(final: float, star: float, tol: float) -> bool:
    return final - star <= tol * max(abs(star), 1e-9) + 1e-12


def multi_init_gd(
    dims: tuple[int, ...],
    X: np.ndarray,
    Y: np.ndarray,
    n_inits: int = 50,
    steps: int = DEFAULT_STEP_CAP,
    eta: float = 0.1,
    seed: int = 0,
    tol: float = 1e-4,
) -> LandscapeResult:
    """Run GD from many Gaussian initializations and compare endpoints.

    Each run stops when the stacked gradient Frobenius norm drops below
    GRAD_STOP or the step cap hits. The verdict is true iff every
    non-diverged run lands within tol (relative) of the rank-constrained
    optimum; a run with a small gradient but a high loss is labeled
    "suspect" (a stall) and still counts against the verdict.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(dims) < 2:
        raise ValueError("dims must list at least input and output sizes")
    if X.shape[0] != dims[0] or Y.shape[0] != dims[-1]:
        raise ValueError(f"dims {dims} do not match data {X.shape[0]} -> {Y.shape[0]}")
    if n_inits < 1 or steps < 1 or not eta > 0:
        raise ValueError("need n_inits >= 1, steps >= 1, eta > 0")

    p_dim = int(min(dims))
    _, loss_star = rank_constrained_optimum(X, Y, p_dim)

    records = []
    for idx in range(n_inits):
        rng = np.random.default_rng([seed, idx])
        Ws = init_chain(tuple(dims), rng)
        used = steps
        gnorm = np.inf
        lossval = np.inf
        for step in range(1, steps + 1):
            lossval, grads = _chain_grads(Ws, X, Y)
            if not np.isfinite(lossval):
                used = step
                break
            gnorm = float(np.sqrt(sum(float(np.sum(g**2)) for g in grads)))
            if gnorm < GRAD_STOP:
                used = step - 1
                break
            for W, g in zip(Ws, grads):
                W -= eta * g
        else:
            lossval, grads = _chain_grads(Ws, X, Y)
            gnorm = float(np.sqrt(sum(float(np.sum(g**2)) for g in grads)))

        if not np.isfinite(lossval):
            status = "diverged"
        elif gnorm < GRAD_STOP:
            status = "converged" if _within_tol(lossval, loss_star, tol) else "suspect"
        else:
            status = "step_cap"
        records.append(RunRecord(init_index=idx, final_loss=float(lossval),
                                 steps_used=used, grad_norm=gnorm, status=status))

    considered = [r for r in records if r.status != "diverged"]
    verdict = bool(considered) and all(
        _within_tol(r.final_loss, loss_star, tol) for r in considered
    )
    meta = {"dims": list(dims), "n_inits": n_inits, "eta": eta, "seed": seed,
            "steps_cap": steps, "grad_stop": GRAD_STOP, "rank_bound": p_dim}
    return LandscapeResult(runs=tuple(records), global_loss=loss_star,
                           verdict=verdict, tol=tol, meta=meta)


def scale_symmetry_check(
    net: DeepLinearNet, k: int, c: float, X: np.ndarray, Y: np.ndarray
) -> bool:
    """Scale layer k by c and layer k+1 by 1/c; the loss must not move.

    k is the 0-based index of the lower layer, so k ranges over
    0..depth-2. Returns whether the two losses agree to 1e-12 relative.
    """
    if c == 0:
        raise ValueError("scale factor must be nonzero")
    if not 0 <= k < net.depth - 1:
        raise ValueError(f"k must index a layer below the top: 0 <= {k} < {net.depth - 1}")
    base = deep_linear_loss(net, X, Y)
    Ws = list(net.Ws)
    Ws[k] = Ws[k] * c
    Ws[k + 1] = Ws[k + 1] / c
    scaled = deep_linear_loss(DeepLinearNet(Ws=tuple(Ws)), X, Y)
    return abs(scaled - base) <= 1e-12 * max(abs(base), abs(scaled), 1e-300)
