"""Reduce replicate ensembles to pointwise quantile trajectories.

The quantile estimator is the lower order statistic x_(k), k = ceil(alpha*n):
the empirical plug-in of inf{x : P(X <= x) >= alpha}.  No interpolation, so
re-quantiling the n_alpha quantile rows at the same levels is exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from quantcal.design import AugmentedDesign, _check_alphas
from quantcal.simulator import TrajectoryEnsemble


def pointwise_quantile(samples, alpha: float) -> float:
    """Smallest order statistic x_(k) with k = ceil(alpha * n)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("samples must be nonempty")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0,1)")
    k = min(max(math.ceil(alpha * x.size), 1), x.size)
    return float(np.sort(x)[k - 1])


@dataclass(frozen=True)
class QuantileEnsemble:
    """(m*n_alpha) x T matrix of log-cumulative quantile curves.

    Rows follow AugmentedDesign order: design point major, alpha minor.
    """

    eta: np.ndarray
    alphas: np.ndarray
    m: int
    design: AugmentedDesign | None = None

    def __post_init__(self):
        object.__setattr__(self, "eta", np.asarray(self.eta, dtype=float))
        object.__setattr__(self, "alphas", np.asarray(self.alphas, dtype=float))
        if self.eta.shape[0] != self.m * self.alphas.size:
            raise ValueError("eta row count must equal m * n_alpha")

    @property
    def n_alpha(self) -> int:
        return self.alphas.size

    @property
    def weeks(self) -> int:
        return self.eta.shape[1]

    def rows_for_point(self, i: int) -> np.ndarray:
        return self.eta[i * self.n_alpha : (i + 1) * self.n_alpha]


def build_quantile_ensemble(
    ens: TrajectoryEnsemble, alphas, design: AugmentedDesign | None = None
) -> QuantileEnsemble:
    """Pointwise quantiles of the log replicates at each (design point, week)."""
    alphas = _check_alphas(alphas)
    if ens.r < 2:
        raise ValueError("need at least 2 replicates to estimate quantiles")
    if ens.r < alphas.size:
        raise ValueError("need at least n_alpha replicates")
    logs = ens.log_cumulative()  # (m, r, T)
    srt = np.sort(logs, axis=1)
    ks = np.array([min(max(math.ceil(a * ens.r), 1), ens.r) - 1 for a in alphas])
    # (m, n_alpha, T) -> flatten design-point major
    eta = srt[:, ks, :].reshape(ens.m * alphas.size, ens.weeks)
    return QuantileEnsemble(eta, alphas, ens.m, design)


def save_quantiles_csv(qe: QuantileEnsemble, path) -> None:
    """Long-format CSV: design_index, alpha, week, value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["design_index", "alpha", "week", "value"])
        for i in range(qe.m):
            for j, a in enumerate(qe.alphas):
                row = qe.eta[i * qe.n_alpha + j]
                for t in range(qe.weeks):
                    writer.writerow([i, repr(float(a)), t + 1, repr(float(row[t]))])


def load_quantiles_csv(path) -> QuantileEnsemble:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [(int(r[0]), float(r[1]), int(r[2]), float(r[3])) for r in reader]
    m = max(r[0] for r in rows) + 1
    alphas = np.array(sorted({r[1] for r in rows}))
    T = max(r[2] for r in rows)
    eta = np.empty((m * alphas.size, T))
    a_index = {a: j for j, a in enumerate(alphas)}
    for i, a, t, v in rows:
        eta[i * alphas.size + a_index[a], t - 1] = v
    return QuantileEnsemble(eta, alphas, m)
