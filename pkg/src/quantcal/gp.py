"""Gaussian-process machinery over the (parameters, quantile) input space.

Each basis weight gets an independent zero-mean GP with the product
correlation R(x, x') = prod_k rho_k^(4 (x_k - x'_k)^2) on unit-scaled inputs,
so rho_k is the correlation induced by a half-range displacement in
dimension k.  Observed (projected) weights add an iid nugget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

JITTER_START = 1e-8
JITTER_MAX = 1e-4


class ConditioningError(RuntimeError):
    """Covariance factorization failed even after jitter escalation."""


@dataclass(frozen=True)
class GPHyperparams:
    """Per-basis marginal precisions, correlation parameters and nugget
    precisions, plus the shared basis-truncation precision."""

    lam_w: np.ndarray  # (p_eta,)
    rho_w: np.ndarray  # (p_eta, p_inputs), entries in (0,1)
    lam_eps: np.ndarray  # (p_eta,) nugget precisions
    lam_w0: float  # truncation-error precision

    def __post_init__(self):
        object.__setattr__(self, "lam_w", np.asarray(self.lam_w, dtype=float))
        object.__setattr__(self, "rho_w", np.atleast_2d(np.asarray(self.rho_w, dtype=float)))
        object.__setattr__(self, "lam_eps", np.asarray(self.lam_eps, dtype=float))
        object.__setattr__(self, "lam_w0", float(self.lam_w0))
        if (self.lam_w <= 0).any() or (self.lam_eps <= 0).any() or self.lam_w0 <= 0:
            raise ValueError("precisions must be positive")
        if (self.rho_w <= 0).any() or (self.rho_w >= 1).any():
            raise ValueError("correlation parameters must lie strictly in (0,1)")
        if self.rho_w.shape[0] != self.lam_w.size or self.lam_eps.size != self.lam_w.size:
            raise ValueError("hyperparameter shapes disagree")

    @property
    def p_eta(self) -> int:
        return self.lam_w.size


def correlation(x, x_other, rho) -> float:
    """prod_k rho_k^(4 dk^2) for unit-scaled inputs; 1 at zero displacement."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(x_other, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if (rho <= 0).any() or (rho >= 1).any():
        raise ValueError("rho must lie strictly in (0,1)")
    return float(np.exp(np.sum(4.0 * (x - y) ** 2 * np.log(rho))))


def corr_matrix(X, Y, rho) -> np.ndarray:
    """Cross-correlation matrix of rows of X versus rows of Y."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    d2 = (X[:, None, :] - Y[None, :, :]) ** 2
    return np.exp(d2 @ (4.0 * np.log(np.asarray(rho, dtype=float))))


def chol_with_jitter(C: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky factor with escalating diagonal jitter; raises ConditioningError."""
    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(C if jitter == 0.0 else C + jitter * np.eye(C.shape[0]))
            return L, jitter
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX:
                raise ConditioningError(
                    f"Cholesky failed at jitter {JITTER_MAX:g}; covariance too ill-conditioned"
                ) from None


def _design_rows(design) -> np.ndarray:
    return design.rows if hasattr(design, "rows") else np.atleast_2d(np.asarray(design, dtype=float))


def build_sigma_w(design, hp: GPHyperparams) -> list[np.ndarray]:
    """Prior covariance blocks lam_w[i]^-1 R(rho_w[i]), one per basis weight."""
    X = _design_rows(design)
    return [corr_matrix(X, X, hp.rho_w[i]) / hp.lam_w[i] for i in range(hp.p_eta)]


@dataclass
class WeightPrediction:
    """Conditional Gaussians for each basis weight at the test inputs."""

    mean: np.ndarray  # (p_eta, n_test)
    cov: np.ndarray  # (p_eta, n_test, n_test)

    def variances(self) -> np.ndarray:
        return np.maximum(np.diagonal(self.cov, axis1=1, axis2=2), 0.0)


@dataclass
class BlockFactor:
    """Factorized marginal covariance of one basis weight's training values."""

    R: np.ndarray
    L: np.ndarray
    alpha: np.ndarray  # C^-1 w*_i
    logdet: float
    quad: float

    def log_marginal(self, n: int) -> float:
        return -0.5 * (n * np.log(2.0 * np.pi) + self.logdet + self.quad)


class EmulatorFactors:
    """Cached per-basis Cholesky factors of lam_w^-1 R + lam_eps^-1 I.

    Training factorizations persist across predictions; single-block
    hyperparameter moves rebuild one block (reusing its correlation matrix
    when rho is unchanged).  Mutation is single-writer.
    """

    def __init__(self, design, w_star: np.ndarray, hp: GPHyperparams):
        self.X = _design_rows(design)
        self.w_star = np.atleast_2d(np.asarray(w_star, dtype=float))
        if self.w_star.shape[0] != hp.p_eta:
            raise ValueError("w_star must have one row per basis")
        if self.w_star.shape[1] != self.X.shape[0]:
            raise ValueError("w_star columns must match design rows")
        self.hp = hp
        self.n = self.X.shape[0]
        self._d2 = (self.X[:, None, :] - self.X[None, :, :]) ** 2
        self.blocks = [
            self.build_block(i, hp.lam_w[i], hp.rho_w[i], hp.lam_eps[i]) for i in range(hp.p_eta)
        ]

    def build_block(self, i: int, lam_w: float, rho: np.ndarray, lam_eps: float,
                    reuse_R: np.ndarray | None = None) -> BlockFactor:
        R = reuse_R if reuse_R is not None else np.exp(self._d2 @ (4.0 * np.log(rho)))
        C = R / lam_w + np.eye(self.n) / lam_eps
        L, _ = chol_with_jitter(C)
        y = solve_triangular(L, self.w_star[i], lower=True)
        return BlockFactor(R, L, cho_solve((L, True), self.w_star[i]),
                           2.0 * float(np.sum(np.log(np.diag(L)))), float(y @ y))

    def commit_block(self, i: int, block: BlockFactor, lam_w: float, rho: np.ndarray,
                     lam_eps: float) -> None:
        lam_w_new = self.hp.lam_w.copy()
        rho_new = self.hp.rho_w.copy()
        lam_eps_new = self.hp.lam_eps.copy()
        lam_w_new[i], rho_new[i], lam_eps_new[i] = lam_w, rho, lam_eps
        self.hp = GPHyperparams(lam_w_new, rho_new, lam_eps_new, self.hp.lam_w0)
        self.blocks[i] = block

    def set_lam_w0(self, lam_w0: float) -> None:
        self.hp = GPHyperparams(self.hp.lam_w, self.hp.rho_w, self.hp.lam_eps, lam_w0)

    def log_marginal(self) -> float:
        """Sum over bases of log N(w*_i; 0, lam_w^-1 R + lam_eps^-1 I)."""
        return float(sum(b.log_marginal(self.n) for b in self.blocks))

    def predict(self, new_inputs) -> WeightPrediction:
        """Conditional mean/covariance of each latent weight at the new inputs."""
        Xn = np.atleast_2d(np.asarray(new_inputs, dtype=float))
        hp = self.hp
        mean = np.empty((hp.p_eta, Xn.shape[0]))
        cov = np.empty((hp.p_eta, Xn.shape[0], Xn.shape[0]))
        d2 = (Xn[:, None, :] - self.X[None, :, :]) ** 2
        d2_test = (Xn[:, None, :] - Xn[None, :, :]) ** 2
        for i in range(hp.p_eta):
            blk = self.blocks[i]
            k = np.exp(d2 @ (4.0 * np.log(hp.rho_w[i]))) / hp.lam_w[i]
            prior = np.exp(d2_test @ (4.0 * np.log(hp.rho_w[i]))) / hp.lam_w[i]
            mean[i] = k @ blk.alpha
            v = solve_triangular(blk.L, k.T, lower=True)
            cov[i] = prior - v.T @ v
        return WeightPrediction(mean, cov)

    def predict_point_block(self, x_row: np.ndarray, i: int,
                            block: BlockFactor | None = None,
                            lam_w: float | None = None,
                            rho: np.ndarray | None = None) -> tuple[float, float]:
        """Mean and variance of weight i at a single input (fast path)."""
        blk = block if block is not None else self.blocks[i]
        lam = self.hp.lam_w[i] if lam_w is None else lam_w
        rr = self.hp.rho_w[i] if rho is None else rho
        d2 = (x_row - self.X) ** 2
        k = np.exp(d2 @ (4.0 * np.log(rr))) / lam
        v = solve_triangular(blk.L, k, lower=True)
        return float(k @ blk.alpha), max(float(1.0 / lam - v @ v), 0.0)


def log_marginal_w(w_star, design, hp: GPHyperparams) -> float:
    """Marginal log density of projected weights under the GP-plus-nugget prior."""
    w = w_star.w_star if hasattr(w_star, "w_star") else w_star
    return EmulatorFactors(design, w, hp).log_marginal()


def predict_weights(new_inputs, design, w_star, hp: GPHyperparams) -> WeightPrediction:
    """Conditional weight distributions at new inputs given projected training weights."""
    w = w_star.w_star if hasattr(w_star, "w_star") else w_star
    return EmulatorFactors(design, w, hp).predict(new_inputs)
