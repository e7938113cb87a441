"""Wide sigmoid layers: feature rank, zero-loss fits, and a four-condition checklist.

The experiments here probe one mechanism: if some hidden layer is at least
as wide as the dataset and its feature matrix F_k = sigma(W_k ... sigma(W_1 X))
has full rank n, the layers above it form a linear regression that fits the
labels exactly. The interesting claims are about *rank*: Gaussian weights
give full-rank features almost surely (the deficient set has Lebesgue
measure zero), duplicate data columns kill full rank outright, and a
deficient weight matrix can be repaired by an arbitrarily small
perturbation.

All rank statements are exact-arithmetic in origin; numerically a singular
value counts as nonzero when it exceeds ``rel_tol * sigma_max`` with
rel_tol = 1e-10 by default.

Layer counting: ``feature_matrix(net, X, k)`` uses k = number of sigmoid
layers applied, so k=1 is sigma(W_1 X) and valid k runs 1..H-1; the output
layer W_H stays linear.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from gramflow.dataset import frozen_f64

RANK_REL_TOL = 1e-10
SIGMOID_CLAMP = 40.0  # |z| beyond this saturates within 1e-17 of {0, 1}


class PerturbationFailed(RuntimeError):
    """No tried perturbation produced full-rank features within budget."""


@dataclass(frozen=True)
class SigmoidNet:
    """Chain with logistic sigmoid on every layer except the last (linear)."""

    Ws: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.Ws) < 1:
            raise ValueError("need at least one layer")
        Ws = tuple(frozen_f64(W) for W in self.Ws)
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


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function with preactivations clamped to |z| <= 40."""
    return 1.0 / (1.0 + np.exp(-np.clip(z, -SIGMOID_CLAMP, SIGMOID_CLAMP)))


def feature_matrix(net: SigmoidNet, X: np.ndarray, k: int) -> np.ndarray:
    """F_k after k sigmoid layers; k runs from 1 to depth-1."""
    X = np.asarray(X, dtype=np.float64)
    if not 1 <= k <= net.depth - 1:
        raise ValueError(f"k must satisfy 1 <= k <= {net.depth - 1}, got {k}")
    if X.shape[0] != net.dims[0]:
        raise ValueError(f"X must have {net.dims[0]} rows, got {X.shape[0]}")
    F = X
    for layer in range(k):
        F = sigmoid(net.Ws[layer] @ F)
    return F


def forward(net: SigmoidNet, X: np.ndarray) -> np.ndarray:
    """Network output: sigmoid layers below, linear top layer."""
    if net.depth == 1:
        return net.Ws[0] @ np.asarray(X, dtype=np.float64)
    F = feature_matrix(net, X, net.depth - 1)
    return net.Ws[-1] @ F


def rank_with_tol(F: np.ndarray, rel_tol: float = RANK_REL_TOL) -> int:
    """Number of singular values above rel_tol times the largest one."""
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    F = np.asarray(F, dtype=np.float64)
    if F.size == 0:
        return 0
    s = np.linalg.svd(F, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


@dataclass(frozen=True)
class RankTrials:
    """Per-trial feature ranks from repeated Gaussian weight draws."""

    ranks: np.ndarray    # achieved rank per trial
    min_sv: np.ndarray   # smallest singular value per trial
    n_target: int        # full rank means rank == n_target

    def __post_init__(self):
        ranks = np.array(self.ranks, dtype=np.int64)
        min_sv = np.array(self.min_sv, dtype=np.float64)
        ranks.flags.writeable = False
        min_sv.flags.writeable = False
        object.__setattr__(self, "ranks", ranks)
        object.__setattr__(self, "min_sv", min_sv)

    @property
    def fraction_full_rank(self) -> float:
        return float(np.mean(self.ranks == self.n_target))

    def save_csv(self, path: str | Path) -> None:
        lines = ["trial,rank,min_singular_value"]
        for i in range(len(self.ranks)):
            lines.append(f"{i},{self.ranks[i]},{self.min_sv[i]:.17g}")
        Path(path).write_text("\n".join(lines) + "\n")

    def summary(self) -> dict:
        return {
            "trials": int(len(self.ranks)),
            "n_target": self.n_target,
            "fraction_full_rank": self.fraction_full_rank,
            "min_rank": int(np.min(self.ranks)),
            "smallest_min_sv": float(np.min(self.min_sv)),
        }


def measure_zero_trials(
    d0: int,
    d1: int,
    n: int,
    trials: int,
    seed: int = 0,
    X: np.ndarray | None = None,
    rel_tol: float = RANK_REL_TOL,
) -> RankTrials:
    """Rank of sigma(W_1 X) over repeated Gaussian draws of W_1.

    X defaults to a Gaussian d0 x n sample (columns distinct almost
    surely); pass an explicit X to study degenerate data, e.g. a
    duplicated column, which forces rank < n in every trial.
    """
    if d1 < n:
        raise ValueError(f"wide-layer hypothesis requires d1 >= n, got d1={d1} < n={n}")
    if trials < 1:
        raise ValueError(f"need trials >= 1, got {trials}")
    if X is None:
        X = np.random.default_rng([seed, 0]).standard_normal((d0, n))
    else:
        X = np.asarray(X, dtype=np.float64)
        if X.shape != (d0, n):
            raise ValueError(f"X must be {d0} x {n}, got {X.shape}")

    ranks = np.empty(trials, dtype=np.int64)
    min_sv = np.empty(trials)
    for t in range(trials):
        W1 = np.random.default_rng([seed, 1 + t]).standard_normal((d1, d0))
        s = np.linalg.svd(sigmoid(W1 @ X), compute_uv=False)
        ranks[t] = int(np.sum(s > rel_tol * s[0])) if s[0] > 0 else 0
        min_sv[t] = float(s[-1])
    return RankTrials(ranks=ranks, min_sv=min_sv, n_target=n)


def measure_zero_experiment(
    d0: int,
    d1: int,
    n: int,
    trials: int,
    seed: int = 0,
    X: np.ndarray | None = None,
    rel_tol: float = RANK_REL_TOL,
) -> float:
    """Fraction of trials in which sigma(W_1 X) reaches full rank n."""
    return measure_zero_trials(d0, d1, n, trials, seed=seed, X=X,
                               rel_tol=rel_tol).fraction_full_rank


class TopLayerFit(NamedTuple):
    W2: np.ndarray
    residual: float       # ||Y - W2 F1||_F
    deficient: bool       # F1 rank below n: only the minimum-norm fit exists
    rank: int


def top_layer_fit(F1: np.ndarray, Y: np.ndarray) -> TopLayerFit:
    """Least-squares top layer: min over W2 of ||Y - W2 F1||_F.

    Solved by SVD-backed least squares plus iterative refinement, so a
    full-rank F1 yields a residual at the rounding floor rather than at
    the conditioning floor. Rank-deficient F1 is not an error: the
    minimum-norm solution comes back with ``deficient=True``.
    """
    F1 = np.asarray(F1, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if F1.ndim != 2 or Y.ndim != 2 or F1.shape[1] != Y.shape[1]:
        raise ValueError(f"shape mismatch: F1 {F1.shape}, Y {Y.shape}")
    n = F1.shape[1]
    rank = rank_with_tol(F1)

    W2 = np.linalg.lstsq(F1.T, Y.T, rcond=None)[0].T
    yscale = max(float(np.linalg.norm(Y)), 1e-300)
    for _ in range(3):
        E = Y - W2 @ F1
        res = float(np.linalg.norm(E))
        if res <= 1e-14 * yscale:
            break
        D = np.linalg.lstsq(F1.T, E.T, rcond=None)[0].T
        if not np.all(np.isfinite(D)):
            break
        W2_new = W2 + D
        if float(np.linalg.norm(Y - W2_new @ F1)) >= res:
            break
        W2 = W2_new
    residual = float(np.linalg.norm(Y - W2 @ F1))
    return TopLayerFit(W2=W2, residual=residual, deficient=rank < n, rank=rank)


def perturb_to_full_rank(
    W1: np.ndarray,
    X: np.ndarray,
    epsilon: float,
    seed: int = 0,
    max_tries: int = 50,
) -> np.ndarray:
    """Nudge W1 by at most epsilon (Frobenius) until sigma(W1_hat X) has rank n.

    A W1 whose features are already full rank comes back unchanged. Each
    try adds an independent Gaussian direction scaled to the full budget;
    by the measure-zero property a single try should almost surely work,
    so exhausting max_tries raises.
    """
    W1 = np.asarray(W1, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[1]
    if W1.shape[0] < n:
        raise ValueError(f"wide-layer hypothesis requires d1 >= n, got {W1.shape[0]} < {n}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")

    if rank_with_tol(sigmoid(W1 @ X)) == n:
        return W1.copy()

    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        D = rng.standard_normal(W1.shape)
        norm = float(np.linalg.norm(D))
        if norm == 0.0:
            continue
        W1_hat = W1 + (epsilon / norm) * D
        if rank_with_tol(sigmoid(W1_hat @ X)) == n:
            return W1_hat
    raise PerturbationFailed(
        f"no full-rank perturbation found in {max_tries} tries with budget {epsilon:g}"
    )


@dataclass(frozen=True)
class ConditionReport:
    """Checklist for the zero-loss-minima conditions on one (net, data) pair.

    Conditions 1-3 are evaluated numerically; the fourth (non-degeneracy
    of the Hessian over the layers above k) has no numerical procedure
    here and is recorded as "not-evaluated". ``width_monotone`` reports
    the derived necessary condition d_l <= d_{l-1} for l >= k+2.
    """

    distinct_columns: bool
    wide_layer_index: int | None          # 1-based hidden layer with d_k >= n
    downstream_full_rank: dict[int, bool]  # l -> rank(W_l) == d_l for l in k+2..H
    hessian_checked: str
    width_monotone: bool | None

    @property
    def conditions_1_to_3(self) -> bool:
        return (self.distinct_columns
                and self.wide_layer_index is not None
                and all(self.downstream_full_rank.values()))

    def to_json_dict(self) -> dict:
        return {
            "distinct_columns": self.distinct_columns,
            "wide_layer_index": self.wide_layer_index,
            "downstream_full_rank": {str(k): v for k, v in self.downstream_full_rank.items()},
            "hessian_checked": self.hessian_checked,
            "width_monotone": self.width_monotone,
            "conditions_1_to_3": self.conditions_1_to_3,
        }


def check_nguyen_conditions(net: SigmoidNet, X: np.ndarray, n: int) -> ConditionReport:
    """Evaluate the checklist: distinct data, a wide layer, full-rank layers above.

    The wide layer is the first hidden k (1-based) with width >= n.
    Distinctness is exact: two columns fail it only when equal entrywise,
    matching the duplicated-column constructions this is used against.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != n:
        raise ValueError(f"X has {X.shape[1]} columns, expected n={n}")

    distinct = True
    for i in range(n):
        for j in range(i + 1, n):
            if np.array_equal(X[:, i], X[:, j]):
                distinct = False
                break
        if not distinct:
            break

    dims = net.dims
    H = net.depth
    wide_k = None
    for k in range(1, H):  # hidden layers only
        if dims[k] >= n:
            wide_k = k
            break

    downstream: dict[int, bool] = {}
    monotone: bool | None = None
    if wide_k is not None:
        for layer in range(wide_k + 2, H + 1):
            W = net.Ws[layer - 1]
            downstream[layer] = rank_with_tol(W) == dims[layer]
        monotone = all(dims[layer] <= dims[layer - 1] for layer in range(wide_k + 2, H + 1))

    return ConditionReport(
        distinct_columns=distinct,
        wide_layer_index=wide_k,
        downstream_full_rank=downstream,
        hessian_checked="not-evaluated",
        width_monotone=monotone,
    )


def save_condition_report(report: ConditionReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n")
