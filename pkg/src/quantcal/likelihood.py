"""Observation model, priors, and the calibration data likelihood.

Weekly reported counts are treated as independent with sd max(5, 0.2*count);
the floor applies to every week, which keeps the induced covariance positive
definite even when the epidemic has died out.  The covariance of the
log-cumulative observations follows by first-order (delta-method) propagation
through count -> log(cumsum(count)).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import gammaln

from quantcal.gp import GPHyperparams, chol_with_jitter
from quantcal.simulator import LOG_FLOOR

COUNT_SD_FLOOR = 5.0
COUNT_SD_FRACTION = 0.2


def count_sd(c) -> np.ndarray:
    """Weekly-count sd: max(5, 0.2 c), floored for every week."""
    c = np.asarray(c, dtype=float)
    return np.maximum(COUNT_SD_FLOOR, COUNT_SD_FRACTION * c)


def build_sigma_y(weekly_counts) -> np.ndarray:
    """Delta-method covariance of log-cumulative counts.

    V = diag(count_sd^2) propagated through the lower-triangular Jacobian
    J[t,s] = 1{s<=t} / cumulative[t].
    """
    c = np.asarray(weekly_counts, dtype=float)
    if (c < 0).any():
        raise ValueError("weekly counts must be nonnegative")
    if not (c > 0).any():
        raise ValueError("all-zero counts: log-cumulative observations are undefined")
    cum = np.maximum(np.cumsum(c), LOG_FLOOR)
    J = np.tril(np.ones((c.size, c.size))) / cum[:, None]
    V = np.diag(count_sd(c) ** 2)
    return J @ V @ J.T


@dataclass(frozen=True)
class Observations:
    """Observed weekly counts and derived log-cumulative vector with its covariance."""

    weekly_counts: np.ndarray
    y: np.ndarray
    Sigma_y: np.ndarray

    @classmethod
    def from_counts(cls, weekly_counts) -> "Observations":
        c = np.asarray(weekly_counts, dtype=float)
        y = np.log(np.maximum(np.cumsum(c), LOG_FLOOR))
        return cls(c, y, build_sigma_y(c))

    @property
    def n_y(self) -> int:
        return self.y.size


def load_observations_csv(path) -> Observations:
    """CSV with header week,weekly_count; weeks must be consecutive from 1."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = sorted((int(r[0]), float(r[1])) for r in reader)
    weeks = [r[0] for r in rows]
    if weeks != list(range(1, len(weeks) + 1)):
        raise ValueError("observation weeks must be consecutive starting at week 1")
    return Observations.from_counts([r[1] for r in rows])


def save_observations_csv(weekly_counts, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["week", "weekly_count"])
        for t, c in enumerate(np.asarray(weekly_counts), start=1):
            writer.writerow([t, int(c)])


@dataclass(frozen=True)
class PriorConfig:
    """Gamma/beta prior hyperparameters for the precision and correlation parameters.

    lam_w is centered at 1 to match the unit-variance basis scaling; the
    correlation beta prior puts mass near 1 (smooth response); discrepancy and
    truncation precisions are diffuse.
    """

    a_w: float = 5.0
    b_w: float = 5.0
    a_eps: float = 1.0
    b_eps: float = 0.001
    a_w0: float = 1.0
    b_w0: float = 0.001
    a_y: float = 10.0
    b_y: float = 10.0
    a_delta: float = 1.0
    b_delta: float = 0.001
    a_rho: float = 1.0
    b_rho: float = 0.5

    def __post_init__(self):
        vals = [getattr(self, f) for f in self.__dataclass_fields__]
        if any(v <= 0 for v in vals):
            raise ValueError("all prior hyperparameters must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "PriorConfig":
        pairs = {
            "lambda_w": ("a_w", "b_w"),
            "lambda_eps": ("a_eps", "b_eps"),
            "lambda_w0": ("a_w0", "b_w0"),
            "lambda_y": ("a_y", "b_y"),
            "lambda_delta": ("a_delta", "b_delta"),
            "rho_w": ("a_rho", "b_rho"),
        }
        kwargs = {}
        for key, (fa, fb) in pairs.items():
            if key in d:
                kwargs[fa], kwargs[fb] = float(d[key][0]), float(d[key][1])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "lambda_w": [self.a_w, self.b_w],
            "lambda_eps": [self.a_eps, self.b_eps],
            "lambda_w0": [self.a_w0, self.b_w0],
            "lambda_y": [self.a_y, self.b_y],
            "lambda_delta": [self.a_delta, self.b_delta],
            "rho_w": [self.a_rho, self.b_rho],
        }


@dataclass
class CalibrationState:
    """One point in the joint posterior: inputs, error scales, discrepancy weights."""

    theta_alpha: np.ndarray  # (p+1,) unit-cube coordinates, last is the quantile level
    lam_y: float
    v: np.ndarray  # (p_delta,)
    lam_delta: float
    hp: GPHyperparams

    def in_support(self) -> bool:
        ok = (self.theta_alpha >= 0).all() and (self.theta_alpha <= 1).all()
        return bool(ok and self.lam_y > 0 and self.lam_delta > 0)


def gamma_logpdf(x: float, a: float, b: float) -> float:
    """log Gamma(a, rate=b) density; -inf outside support."""
    if x <= 0 or not math.isfinite(x):
        return -math.inf
    return a * math.log(b) - math.lgamma(a) + (a - 1.0) * math.log(x) - b * x


def beta_logpdf(x: float, a: float, b: float) -> float:
    if x <= 0 or x >= 1:
        return -math.inf
    return (
        (a - 1.0) * math.log(x)
        + (b - 1.0) * math.log1p(-x)
        + math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
    )


def normal_logpdf(x: float, mean: float, precision: float) -> float:
    return 0.5 * (math.log(precision) - math.log(2.0 * math.pi)) - 0.5 * precision * (x - mean) ** 2


def log_prior(state: CalibrationState, cfg: PriorConfig) -> float:
    """Joint log prior: gammas on precisions, betas on correlations, normal on
    discrepancy weights, uniform on the unit cube for (theta, alpha)."""
    if not state.in_support():
        return -math.inf
    hp = state.hp
    total = 0.0
    total += float(np.sum(_gamma_logpdf_vec(hp.lam_w, cfg.a_w, cfg.b_w)))
    total += float(np.sum(_gamma_logpdf_vec(hp.lam_eps, cfg.a_eps, cfg.b_eps)))
    total += gamma_logpdf(hp.lam_w0, cfg.a_w0, cfg.b_w0)
    total += gamma_logpdf(state.lam_y, cfg.a_y, cfg.b_y)
    total += gamma_logpdf(state.lam_delta, cfg.a_delta, cfg.b_delta)
    total += float(np.sum(_beta_logpdf_vec(hp.rho_w, cfg.a_rho, cfg.b_rho)))
    v = state.v
    total += float(
        0.5 * v.size * (np.log(state.lam_delta) - np.log(2.0 * np.pi))
        - 0.5 * state.lam_delta * np.sum(v**2)
    )
    return total


def _gamma_logpdf_vec(x, a, b):
    x = np.asarray(x, dtype=float)
    return a * np.log(b) - gammaln(a) + (a - 1.0) * np.log(x) - b * x


def _beta_logpdf_vec(x, a, b):
    x = np.asarray(x, dtype=float)
    return (
        (a - 1.0) * np.log(x)
        + (b - 1.0) * np.log1p(-x)
        + gammaln(a + b)
        - gammaln(a)
        - gammaln(b)
    )


def residual_weight_matrix(Sigma_y: np.ndarray, lam_y: float, lam_w0: float) -> np.ndarray:
    """The likelihood weight matrix lam_y Sigma_y^-1 + lam_w0 I."""
    n = Sigma_y.shape[0]
    L, _ = chol_with_jitter(Sigma_y)
    Sy_inv = cho_solve((L, True), np.eye(n))
    return lam_y * Sy_inv + lam_w0 * np.eye(n)


def gaussian_data_loglik(
    resid: np.ndarray,
    Sigma_y: np.ndarray,
    lam_y: float,
    lam_w0: float,
    extra_cov: np.ndarray | None = None,
) -> float:
    """Data log likelihood for the residual under the weighted-quadratic model.

    The normalizer convention is pinned here and nowhere else: the value is
    0.5*logdet(Sigma_y) - 0.5*logdet(C) - 0.5 r^T C^-1 r with
    C = (lam_y Sigma_y^-1 + lam_w0 I)^-1 + extra_cov, which reduces to the
    bare (n_y/2) log(lam_y) - 0.5 r^T (lam_y Sigma_y^-1 + lam_w0 I) r form
    when lam_w0 = 0 and extra_cov is absent, and keeps the truncation
    precision lam_w0 properly normalized otherwise.
    """
    r = np.asarray(resid, dtype=float)
    n = r.size
    Ly, _ = chol_with_jitter(Sigma_y)
    logdet_sy = 2.0 * float(np.sum(np.log(np.diag(Ly))))
    W = lam_y * cho_solve((Ly, True), np.eye(n)) + lam_w0 * np.eye(n)
    if extra_cov is None:
        Lw, _ = chol_with_jitter(W)
        logdet_w = 2.0 * float(np.sum(np.log(np.diag(Lw))))
        quad = float(r @ W @ r)
        return 0.5 * logdet_sy + 0.5 * logdet_w - 0.5 * quad
    Lw, _ = chol_with_jitter(W)
    C = cho_solve((Lw, True), np.eye(n)) + extra_cov
    Lc, _ = chol_with_jitter(C)
    logdet_c = 2.0 * float(np.sum(np.log(np.diag(Lc))))
    z = solve_triangular(Lc, r, lower=True)
    return 0.5 * logdet_sy - 0.5 * logdet_c - 0.5 * float(z @ z)


def log_likelihood(
    state: CalibrationState,
    obs: Observations,
    emu_mean: np.ndarray,
    basis,
    disc,
    emu_var: np.ndarray | None = None,
) -> float:
    """Log likelihood of the observations given the emulator mean at the state.

    emu_mean is the emulator curve restricted to the observed weeks; emu_var,
    when given, holds per-basis predictive variances that are folded into the
    residual covariance through the output basis.
    """
    n_y = obs.n_y
    if emu_mean.size != n_y:
        raise ValueError("emulator mean must be restricted to the observed weeks")
    D = disc.D[:n_y]
    r = obs.y - emu_mean - D @ state.v
    extra = None
    if emu_var is not None:
        Phi_o = basis.Phi[:n_y]
        extra = (Phi_o * np.asarray(emu_var)) @ Phi_o.T
    return gaussian_data_loglik(r, obs.Sigma_y, state.lam_y, state.hp.lam_w0, extra)
