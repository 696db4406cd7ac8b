"""Evaluation protocol: SRCC / PLCC / KRCC / RMSE and the repeated-split harness.

Ties use the standard robust definitions: fractional (tie-averaged) ranks
for SRCC and tau-b for KRCC. Experiments repeat over seeded splits
(21 by default) and each metric's median is reported independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import ConfigError, FormatError
from .regressor import TrainConfig, TrainLog, forward, train


@dataclass(frozen=True)
class EvalResult:
    srcc: float
    plcc: float
    krcc: float
    rmse: float
    n: int
    repeat_index: int = 0

    def as_dict(self) -> dict:
        return {
            "srcc": self.srcc, "plcc": self.plcc, "krcc": self.krcc,
            "rmse": self.rmse, "n": self.n, "repeat_index": self.repeat_index,
        }


def _validated(pred, truth, min_n: int) -> Tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(truth, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise FormatError(f"length mismatch: {p.shape} vs {t.shape}")
    if len(p) < min_n:
        raise FormatError(f"need at least {min_n} samples, got {len(p)}")
    return p, t


def fractional_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged."""
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def plcc(pred, truth) -> float:
    """Pearson linear correlation on raw values."""
    p, t = _validated(pred, truth, 2)
    pc, tc = p - p.mean(), t - t.mean()
    denom = math.sqrt(float(pc @ pc)) * math.sqrt(float(tc @ tc))
    if denom == 0.0:
        raise FormatError("correlation undefined: constant input vector")
    return float(pc @ tc) / denom


def srcc(pred, truth) -> float:
    """Spearman: Pearson correlation of fractional ranks."""
    p, t = _validated(pred, truth, 2)
    return plcc(fractional_ranks(p), fractional_ranks(t))


def krcc(pred, truth) -> float:
    """Kendall tau-b (tie corrected), computed exactly over all pairs."""
    p, t = _validated(pred, truth, 2)
    dp = np.sign(p[:, None] - p[None, :])
    dt = np.sign(t[:, None] - t[None, :])
    iu = np.triu_indices(len(p), k=1)
    concordance = dp[iu] * dt[iu]
    n_pairs = len(concordance)
    tied_p = int(np.sum(dp[iu] == 0))
    tied_t = int(np.sum(dt[iu] == 0))
    if tied_p == n_pairs or tied_t == n_pairs:
        raise FormatError("KRCC undefined: all pairs tied in one vector")
    num = float(np.sum(concordance))
    # single sqrt of the integer product keeps tie-free perfect agreement at 1.0
    denom = math.sqrt(float((n_pairs - tied_p) * (n_pairs - tied_t)))
    return num / denom


def rmse(pred, truth) -> float:
    p, t = _validated(pred, truth, 1)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def evaluate(pred, truth, repeat_index: int = 0) -> EvalResult:
    p, t = _validated(pred, truth, 2)
    return EvalResult(
        srcc=srcc(p, t), plcc=plcc(p, t), krcc=krcc(p, t), rmse=rmse(p, t),
        n=len(p), repeat_index=repeat_index,
    )


@dataclass
class RepeatedEvalOutcome:
    median: EvalResult
    repeats: List[EvalResult]
    logs: List[TrainLog] = field(default_factory=list)


def repeated_eval(features: np.ndarray, labels: np.ndarray, cfg: TrainConfig,
                  repeats: int = 21,
                  run_one: Optional[Callable[[TrainConfig, int], EvalResult]] = None
                  ) -> RepeatedEvalOutcome:
    """Train/test over `repeats` seeded splits; report per-metric medians.

    Each repeat derives its seed as cfg.seed + repeat_index, trains on the
    80% split and evaluates on the held-out 20%. `run_one` can replace the
    default train+test body (used by tests to inject results).
    """
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    results: List[EvalResult] = []
    logs: List[TrainLog] = []
    for rep in range(repeats):
        rep_cfg = TrainConfig(**{**cfg.__dict__, "seed": cfg.seed + rep})
        if run_one is not None:
            results.append(run_one(rep_cfg, rep))
            continue
        model, log = train(features, labels, rep_cfg)
        pred = forward(model, np.asarray(features, np.float64)[log.val_indices])
        results.append(evaluate(pred, np.asarray(labels, np.float64)[log.val_indices], rep))
        logs.append(log)
    med = EvalResult(
        srcc=float(np.median([r.srcc for r in results])),
        plcc=float(np.median([r.plcc for r in results])),
        krcc=float(np.median([r.krcc for r in results])),
        rmse=float(np.median([r.rmse for r in results])),
        n=results[0].n,
        repeat_index=-1,
    )
    return RepeatedEvalOutcome(median=med, repeats=results, logs=logs)


def kfold_indices(n: int, k: int, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Seeded k-fold partition; fold sizes differ by at most one."""
    if not 2 <= k <= n:
        raise ConfigError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    out = []
    for i in range(k):
        test = folds[i]
        trainp = np.concatenate([folds[j] for j in range(k) if j != i])
        out.append((trainp, test))
    return out


def kfold_eval(features: np.ndarray, labels: np.ndarray, cfg: TrainConfig, k: int = 10
               ) -> List[EvalResult]:
    """Cross-validation harness: one train+test per fold (desk-scale sizes)."""
    features = np.asarray(features, np.float64)
    labels = np.asarray(labels, np.float64)
    results = []
    for i, (train_idx, test_idx) in enumerate(kfold_indices(len(labels), k, cfg.seed)):
        model, _ = train(features, labels, cfg, split_indices=(train_idx, test_idx))
        pred = forward(model, features[test_idx])
        results.append(evaluate(pred, labels[test_idx], repeat_index=i))
    return results
