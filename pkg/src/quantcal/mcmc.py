"""Metropolis-within-Gibbs sampler for the joint calibration posterior.

Single-site Gaussian random walks on each unit-cube input coordinate, each
logit correlation parameter and each log precision; the discrepancy weights
are drawn from their exact Gaussian full conditional.  The latent basis
weights are never sampled: the emulator enters through its marginal density
of the projected training weights and through conditional mean/variance
prediction at the current input point.  Step sizes adapt during burn-in only.

Sweep order: input coordinates, correlations, precisions, discrepancy weights.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from quantcal.basis import BasisDecomposition, DiscrepancyBasis
from quantcal.gp import EmulatorFactors, GPHyperparams, chol_with_jitter
from quantcal.likelihood import (
    CalibrationState,
    Observations,
    PriorConfig,
    beta_logpdf,
    gamma_logpdf,
    log_likelihood,
    log_prior,
)

ACCEPT_LOW = 0.25
ACCEPT_HIGH = 0.40
ADAPT_GROW = 1.4
ADAPT_SHRINK = 0.7


@dataclass
class SamplerConfig:
    n_burn: int = 500
    n_draws: int = 1000
    thin: int = 1
    seed: int = 0
    adapt_window: int = 50
    # initial proposal sds: ~0.1 of each parameter class's prior scale
    step_theta: float = 0.1
    step_rho: float = 0.3
    step_logprec: float = 0.15

    def __post_init__(self):
        if self.n_burn < 0 or self.n_draws < 1 or self.thin < 1 or self.adapt_window < 1:
            raise ValueError("sampler counts must be positive")
        if min(self.step_theta, self.step_rho, self.step_logprec) <= 0:
            raise ValueError("step sizes must be positive")


@dataclass
class CalibrationProblem:
    """Everything the posterior needs: design, projected outputs, bases, data, priors.

    obs=None drops the data likelihood (emulator-only fit); w_star=None also
    drops the emulator marginal (prior sampling).
    """

    design: object  # AugmentedDesign or raw (n, p+1) rows
    w_star: object | None  # ProjectedOutputs, raw (p_eta, n) array, or None
    basis: BasisDecomposition | None
    disc: DiscrepancyBasis
    obs: Observations | None
    priors: PriorConfig
    param_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.obs is not None and self.w_star is None:
            raise ValueError("calibration against observations requires projected outputs")

    @property
    def rows(self) -> np.ndarray:
        return self.design.rows if hasattr(self.design, "rows") else np.atleast_2d(self.design)

    @property
    def w_star_matrix(self) -> np.ndarray | None:
        if self.w_star is None:
            return None
        return self.w_star.w_star if hasattr(self.w_star, "w_star") else np.atleast_2d(self.w_star)


def propose_transformed(rng, x: float, step: float, kind: str) -> tuple[float, float]:
    """Symmetric RW on the transformed scale; returns candidate and the log
    Jacobian correction to add to the target-density difference."""
    z = rng.standard_normal()
    if kind == "unit":
        return x + step * z, 0.0
    if kind == "log":
        cand = x * math.exp(step * z)
        return cand, math.log(cand) - math.log(x)
    if kind == "logit":
        g = math.log(x / (1.0 - x)) + step * z
        cand = 1.0 / (1.0 + math.exp(-g))
        if cand <= 0.0 or cand >= 1.0:
            return cand, 0.0  # saturated in float; candidate has zero density
        return cand, (math.log(cand) + math.log1p(-cand)) - (math.log(x) + math.log1p(-x))
    raise ValueError(f"unknown proposal kind {kind!r}")


def metropolis_accept(rng, log_ratio: float) -> bool:
    """Accept with probability min(1, exp(log_ratio)); always consumes one uniform."""
    u = rng.uniform()
    return math.log(u) < log_ratio if u > 0.0 else True


def sample_scalar_target(logpdf, x0: float, kind: str, step: float, n_draws: int,
                         thin: int = 1, n_burn: int = 0, seed=0) -> np.ndarray:
    """Generic single-site RW Metropolis driver (used for sampler oracle checks)."""
    rng = np.random.default_rng(seed)
    x = x0
    lp = logpdf(x)
    out = np.empty(n_draws)
    kept = 0
    for it in range(n_burn + n_draws * thin):
        cand, jac = propose_transformed(rng, x, step, kind)
        lp_c = logpdf(cand)
        if metropolis_accept(rng, lp_c - lp + jac):
            x, lp = cand, lp_c
        if it >= n_burn and (it - n_burn) % thin == thin - 1:
            out[kept] = x
            kept += 1
    return out


class _DataEvaluator:
    """Precomputed pieces of the observation likelihood and the v full conditional."""

    def __init__(self, obs: Observations, basis: BasisDecomposition, disc: DiscrepancyBasis):
        self.y = obs.y
        self.n_y = obs.n_y
        Ly, _ = chol_with_jitter(obs.Sigma_y)
        self.logdet_sy = 2.0 * float(np.sum(np.log(np.diag(Ly))))
        self.Sy_inv = cho_solve((Ly, True), np.eye(self.n_y))
        self.phi0_o = basis.phi0[: self.n_y]
        self.Phi_o = basis.Phi[: self.n_y]
        self.D_o = disc.D[: self.n_y]

    def w_inv(self, lam_y: float, lam_w0: float) -> np.ndarray:
        W = lam_y * self.Sy_inv + lam_w0 * np.eye(self.n_y)
        Lw, _ = chol_with_jitter(W)
        return cho_solve((Lw, True), np.eye(self.n_y))

    def _resid_cov(self, pred_var: np.ndarray, W_inv: np.ndarray) -> np.ndarray:
        return W_inv + (self.Phi_o * pred_var) @ self.Phi_o.T

    def loglik(self, pred_mean, pred_var, v, W_inv) -> float:
        r = self.y - self.phi0_o - self.Phi_o @ pred_mean - self.D_o @ v
        Lc, _ = chol_with_jitter(self._resid_cov(pred_var, W_inv))
        z = solve_triangular(Lc, r, lower=True)
        return 0.5 * self.logdet_sy - float(np.sum(np.log(np.diag(Lc)))) - 0.5 * float(z @ z)

    def draw_v(self, pred_mean, pred_var, W_inv, lam_delta, rng) -> np.ndarray:
        """Exact Gaussian full-conditional draw of the discrepancy weights."""
        ytil = self.y - self.phi0_o - self.Phi_o @ pred_mean
        C = self._resid_cov(pred_var, W_inv)
        Lc, _ = chol_with_jitter(C)
        Ci_D = cho_solve((Lc, True), self.D_o)
        A = self.D_o.T @ Ci_D + lam_delta * np.eye(self.D_o.shape[1])
        La, _ = chol_with_jitter(A)
        mean = cho_solve((La, True), Ci_D.T @ ytil)
        z = rng.standard_normal(mean.size)
        return mean + solve_triangular(La.T, z, lower=False)


def initial_state(problem: CalibrationProblem, p_eta: int, p_inputs: int) -> CalibrationState:
    """Deterministic starting point: cube center, unit-ish precisions."""
    hp = GPHyperparams(
        lam_w=np.ones(p_eta),
        rho_w=np.full((p_eta, p_inputs), 0.5),
        lam_eps=np.full(p_eta, 20.0),
        lam_w0=100.0,
    )
    return CalibrationState(
        theta_alpha=np.full(p_inputs, 0.5),
        lam_y=1.0,
        v=np.zeros(problem.disc.p_delta),
        lam_delta=100.0,
        hp=hp,
    )


def log_posterior(state: CalibrationState, problem: CalibrationProblem) -> float:
    """Fresh composition: emulator marginal + data likelihood + prior."""
    lp = log_prior(state, problem.priors)
    if not math.isfinite(lp):
        return -math.inf
    w = problem.w_star_matrix
    if w is not None:
        factors = EmulatorFactors(problem.rows, w, state.hp)
        lp += factors.log_marginal()
        if problem.obs is not None:
            pred = factors.predict(state.theta_alpha[None, :])
            mean_curve = (
                problem.basis.phi0[: problem.obs.n_y]
                + problem.basis.Phi[: problem.obs.n_y] @ pred.mean[:, 0]
            )
            lp += log_likelihood(
                state, problem.obs, mean_curve, problem.basis, problem.disc,
                emu_var=pred.variances()[:, 0],
            )
    return lp


@dataclass
class PosteriorDraws:
    theta_alpha: np.ndarray  # (n, p+1)
    lam_y: np.ndarray
    lam_delta: np.ndarray
    v: np.ndarray  # (n, p_delta)
    lam_w: np.ndarray  # (n, p_eta)
    lam_eps: np.ndarray  # (n, p_eta)
    lam_w0: np.ndarray
    rho: np.ndarray  # (n, p_eta, p_inputs)
    log_post: np.ndarray
    acceptance: dict = field(default_factory=dict)
    param_names: tuple[str, ...] | None = None

    @property
    def n_draws(self) -> int:
        return self.log_post.size

    def state_at(self, idx: int) -> CalibrationState:
        hp = GPHyperparams(self.lam_w[idx], self.rho[idx], self.lam_eps[idx], self.lam_w0[idx])
        return CalibrationState(
            self.theta_alpha[idx].copy(), float(self.lam_y[idx]), self.v[idx].copy(),
            float(self.lam_delta[idx]), hp,
        )

    def input_names(self) -> list[str]:
        p = self.theta_alpha.shape[1] - 1
        if self.param_names is not None and len(self.param_names) == p:
            return list(self.param_names) + ["alpha"]
        return [f"theta_{i+1}" for i in range(p)] + ["alpha"]

    def column_names(self) -> list[str]:
        names = self.input_names()
        names += ["lambda_y", "lambda_delta"]
        names += [f"v_{k+1}" for k in range(self.v.shape[1])]
        names += [f"lambda_w_{i+1}" for i in range(self.lam_w.shape[1])]
        names += [f"lambda_eps_{i+1}" for i in range(self.lam_eps.shape[1])]
        names += ["lambda_w0"]
        pe, pi = self.rho.shape[1], self.rho.shape[2]
        names += [f"rho_{i+1}_{k+1}" for i in range(pe) for k in range(pi)]
        names += ["log_posterior"]
        return names

    def as_matrix(self) -> np.ndarray:
        n = self.n_draws
        return np.column_stack([
            self.theta_alpha, self.lam_y, self.lam_delta, self.v, self.lam_w,
            self.lam_eps, self.lam_w0, self.rho.reshape(n, -1), self.log_post,
        ])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.column_names())
            for row in self.as_matrix():
                writer.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path, p_inputs: int, p_eta: int, p_delta: int) -> "PosteriorDraws":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            mat = np.array([[float(x) for x in row] for row in reader])
        n = mat.shape[0]
        c = 0
        ta = mat[:, c : c + p_inputs]; c += p_inputs
        lam_y = mat[:, c]; c += 1
        lam_delta = mat[:, c]; c += 1
        v = mat[:, c : c + p_delta]; c += p_delta
        lam_w = mat[:, c : c + p_eta]; c += p_eta
        lam_eps = mat[:, c : c + p_eta]; c += p_eta
        lam_w0 = mat[:, c]; c += 1
        rho = mat[:, c : c + p_eta * p_inputs].reshape(n, p_eta, p_inputs); c += p_eta * p_inputs
        log_post = mat[:, c]
        names = tuple(header[: p_inputs - 1])
        return cls(ta, lam_y, lam_delta, v, lam_w, lam_eps, lam_w0, rho, log_post,
                   param_names=names)


class _Sampler:
    def __init__(self, cfg: SamplerConfig, problem: CalibrationProblem, p_eta: int):
        self.cfg = cfg
        self.problem = problem
        self.rng = np.random.default_rng(cfg.seed)
        rows = problem.rows
        self.p_inputs = rows.shape[1]
        self.p_eta = p_eta
        self.p_delta = problem.disc.p_delta
        st = initial_state(problem, p_eta, self.p_inputs)
        self.ta = st.theta_alpha
        self.lam_y = st.lam_y
        self.lam_delta = st.lam_delta
        self.v = st.v
        self.lam_w = st.hp.lam_w.copy()
        self.lam_eps = st.hp.lam_eps.copy()
        self.lam_w0 = st.hp.lam_w0
        self.rho = st.hp.rho_w.copy()
        pr = problem.priors
        self.pr = pr

        w = problem.w_star_matrix
        self.factors = EmulatorFactors(rows, w, st.hp) if w is not None else None
        self.emu_ll = (
            np.array([b.log_marginal(self.factors.n) for b in self.factors.blocks])
            if self.factors is not None else np.zeros(p_eta)
        )
        self.data = (
            _DataEvaluator(problem.obs, problem.basis, problem.disc)
            if problem.obs is not None else None
        )
        if self.data is not None:
            self.W_inv = self.data.w_inv(self.lam_y, self.lam_w0)
            self.pred_mean, self.pred_var = self._predict_all(self.ta)
            self.data_ll = self.data.loglik(self.pred_mean, self.pred_var, self.v, self.W_inv)
        else:
            self.W_inv = None
            self.pred_mean = np.zeros(p_eta)
            self.pred_var = np.zeros(p_eta)
            self.data_ll = 0.0

        # per-site prior terms (theta/alpha are uniform: constant 0 inside the cube)
        self.pr_rho = np.vectorize(lambda x: beta_logpdf(x, pr.a_rho, pr.b_rho))(self.rho)
        self.pr_lam_w = np.array([gamma_logpdf(x, pr.a_w, pr.b_w) for x in self.lam_w])
        self.pr_lam_eps = np.array([gamma_logpdf(x, pr.a_eps, pr.b_eps) for x in self.lam_eps])
        self.pr_w0 = gamma_logpdf(self.lam_w0, pr.a_w0, pr.b_w0)
        self.pr_y = gamma_logpdf(self.lam_y, pr.a_y, pr.b_y)
        self.pr_delta = gamma_logpdf(self.lam_delta, pr.a_delta, pr.b_delta)
        self.pr_v = self._v_prior(self.v, self.lam_delta)

        # per-site steps and adaptation counters
        self.step_ta = np.full(self.p_inputs, cfg.step_theta)
        self.step_rho = np.full((p_eta, self.p_inputs), cfg.step_rho)
        self.step_lam_w = np.full(p_eta, cfg.step_logprec)
        self.step_lam_eps = np.full(p_eta, cfg.step_logprec)
        self.step_w0 = cfg.step_logprec
        self.step_y = cfg.step_logprec
        self.step_delta = cfg.step_logprec
        self._win_acc: dict = {}
        self._win_try: dict = {}
        self.accept_count: dict = {}
        self.try_count: dict = {}

    @staticmethod
    def _v_prior(v: np.ndarray, lam_delta: float) -> float:
        return float(
            0.5 * v.size * (math.log(lam_delta) - math.log(2.0 * math.pi))
            - 0.5 * lam_delta * np.sum(v**2)
        )

    def total_log_post(self) -> float:
        prior = (
            float(self.pr_rho.sum()) + float(self.pr_lam_w.sum()) + float(self.pr_lam_eps.sum())
            + self.pr_w0 + self.pr_y + self.pr_delta + self.pr_v
        )
        return prior + float(self.emu_ll.sum()) + self.data_ll

    def _predict_all(self, ta_row: np.ndarray):
        mean = np.empty(self.p_eta)
        var = np.empty(self.p_eta)
        for i in range(self.p_eta):
            mean[i], var[i] = self.factors.predict_point_block(ta_row, i)
        return mean, var

    def _tally(self, key, site, accepted: bool, adapting: bool):
        self.try_count[key] = self.try_count.get(key, 0) + 1
        self.accept_count[key] = self.accept_count.get(key, 0) + int(accepted)
        if adapting:
            sk = (key, site)
            self._win_try[sk] = self._win_try.get(sk, 0) + 1
            self._win_acc[sk] = self._win_acc.get(sk, 0) + int(accepted)

    def _adapt(self):
        for (key, site), tries in self._win_try.items():
            if tries == 0:
                continue
            rate = self._win_acc[(key, site)] / tries
            factor = ADAPT_GROW if rate > ACCEPT_HIGH else (ADAPT_SHRINK if rate < ACCEPT_LOW else 1.0)
            if factor == 1.0:
                continue
            if key == "theta":
                self.step_ta[site] *= factor
            elif key == "rho":
                self.step_rho[site] *= factor
            elif key == "lam_w":
                self.step_lam_w[site] *= factor
            elif key == "lam_eps":
                self.step_lam_eps[site] *= factor
            elif key == "lam_w0":
                self.step_w0 *= factor
            elif key == "lam_y":
                self.step_y *= factor
            elif key == "lam_delta":
                self.step_delta *= factor
        self._win_try.clear()
        self._win_acc.clear()

    # --- site updates -----------------------------------------------------

    def _update_theta(self, j: int, adapting: bool):
        cand, _ = propose_transformed(self.rng, self.ta[j], self.step_ta[j], "unit")
        if not 0.0 <= cand <= 1.0:
            self._consume_accept_draw()
            self._tally("theta", j, False, adapting)
            return
        if self.data is not None:
            ta_c = self.ta.copy()
            ta_c[j] = cand
            pm, pv = self._predict_all(ta_c)
            dll = self.data.loglik(pm, pv, self.v, self.W_inv)
            delta = dll - self.data_ll
        else:
            delta = 0.0
        if metropolis_accept(self.rng, delta):
            self.ta[j] = cand
            if self.data is not None:
                self.pred_mean, self.pred_var, self.data_ll = pm, pv, dll
            self._tally("theta", j, True, adapting)
        else:
            self._tally("theta", j, False, adapting)

    def _consume_accept_draw(self):
        # keep one uniform per proposal so the stream doesn't depend on rejects
        self.rng.uniform()

    def _update_rho(self, i: int, k: int, adapting: bool):
        cand, jac = propose_transformed(self.rng, self.rho[i, k], self.step_rho[i, k], "logit")
        if not 0.0 < cand < 1.0:
            self._consume_accept_draw()
            self._tally("rho", (i, k), False, adapting)
            return
        pr_new = beta_logpdf(cand, self.pr.a_rho, self.pr.b_rho)
        delta = pr_new - self.pr_rho[i, k] + jac
        blk = None
        pm = pv = dll = None
        if self.factors is not None:
            rho_row = self.rho[i].copy()
            rho_row[k] = cand
            blk = self.factors.build_block(i, self.lam_w[i], rho_row, self.lam_eps[i])
            emu_new = blk.log_marginal(self.factors.n)
            delta += emu_new - self.emu_ll[i]
            if self.data is not None:
                m_i, v_i = self.factors.predict_point_block(self.ta, i, block=blk, rho=rho_row)
                pm = self.pred_mean.copy(); pm[i] = m_i
                pv = self.pred_var.copy(); pv[i] = v_i
                dll = self.data.loglik(pm, pv, self.v, self.W_inv)
                delta += dll - self.data_ll
        if metropolis_accept(self.rng, delta):
            self.rho[i, k] = cand
            self.pr_rho[i, k] = pr_new
            if blk is not None:
                self.factors.commit_block(i, blk, self.lam_w[i], self.rho[i], self.lam_eps[i])
                self.emu_ll[i] = blk.log_marginal(self.factors.n)
            if dll is not None:
                self.pred_mean, self.pred_var, self.data_ll = pm, pv, dll
            self._tally("rho", (i, k), True, adapting)
        else:
            self._tally("rho", (i, k), False, adapting)

    def _update_block_precision(self, i: int, which: str, adapting: bool):
        if which == "lam_w":
            cur, step, a, b = self.lam_w[i], self.step_lam_w[i], self.pr.a_w, self.pr.b_w
        else:
            cur, step, a, b = self.lam_eps[i], self.step_lam_eps[i], self.pr.a_eps, self.pr.b_eps
        cand, jac = propose_transformed(self.rng, cur, step, "log")
        pr_new = gamma_logpdf(cand, a, b)
        delta = pr_new - (self.pr_lam_w[i] if which == "lam_w" else self.pr_lam_eps[i]) + jac
        blk = None
        pm = pv = dll = None
        if self.factors is not None:
            lam_w_c = cand if which == "lam_w" else self.lam_w[i]
            lam_eps_c = cand if which == "lam_eps" else self.lam_eps[i]
            blk = self.factors.build_block(
                i, lam_w_c, self.rho[i], lam_eps_c, reuse_R=self.factors.blocks[i].R
            )
            delta += blk.log_marginal(self.factors.n) - self.emu_ll[i]
            if self.data is not None:
                m_i, v_i = self.factors.predict_point_block(self.ta, i, block=blk, lam_w=lam_w_c)
                pm = self.pred_mean.copy(); pm[i] = m_i
                pv = self.pred_var.copy(); pv[i] = v_i
                dll = self.data.loglik(pm, pv, self.v, self.W_inv)
                delta += dll - self.data_ll
        if metropolis_accept(self.rng, delta):
            if which == "lam_w":
                self.lam_w[i] = cand
                self.pr_lam_w[i] = pr_new
            else:
                self.lam_eps[i] = cand
                self.pr_lam_eps[i] = pr_new
            if blk is not None:
                self.factors.commit_block(i, blk, self.lam_w[i], self.rho[i], self.lam_eps[i])
                self.emu_ll[i] = blk.log_marginal(self.factors.n)
            if dll is not None:
                self.pred_mean, self.pred_var, self.data_ll = pm, pv, dll
            self._tally(which, i, True, adapting)
        else:
            self._tally(which, i, False, adapting)

    def _update_scalar_precision(self, which: str, adapting: bool):
        if which == "lam_w0":
            cur, step, a, b = self.lam_w0, self.step_w0, self.pr.a_w0, self.pr.b_w0
            pr_cur = self.pr_w0
        elif which == "lam_y":
            cur, step, a, b = self.lam_y, self.step_y, self.pr.a_y, self.pr.b_y
            pr_cur = self.pr_y
        else:
            cur, step, a, b = self.lam_delta, self.step_delta, self.pr.a_delta, self.pr.b_delta
            pr_cur = self.pr_delta
        cand, jac = propose_transformed(self.rng, cur, step, "log")
        pr_new = gamma_logpdf(cand, a, b)
        delta = pr_new - pr_cur + jac
        W_inv_c = dll = pr_v_new = None
        if which == "lam_delta":
            pr_v_new = self._v_prior(self.v, cand)
            delta += pr_v_new - self.pr_v
        elif self.data is not None:
            lam_y_c = cand if which == "lam_y" else self.lam_y
            lam_w0_c = cand if which == "lam_w0" else self.lam_w0
            W_inv_c = self.data.w_inv(lam_y_c, lam_w0_c)
            dll = self.data.loglik(self.pred_mean, self.pred_var, self.v, W_inv_c)
            delta += dll - self.data_ll
        if metropolis_accept(self.rng, delta):
            if which == "lam_w0":
                self.lam_w0 = cand
                self.pr_w0 = pr_new
                if self.factors is not None:
                    self.factors.set_lam_w0(cand)
            elif which == "lam_y":
                self.lam_y = cand
                self.pr_y = pr_new
            else:
                self.lam_delta = cand
                self.pr_delta = pr_new
                self.pr_v = pr_v_new
            if dll is not None:
                self.W_inv, self.data_ll = W_inv_c, dll
            self._tally(which, 0, True, adapting)
        else:
            self._tally(which, 0, False, adapting)

    def _update_v(self):
        if self.data is not None:
            self.v = self.data.draw_v(
                self.pred_mean, self.pred_var, self.W_inv, self.lam_delta, self.rng
            )
            self.data_ll = self.data.loglik(self.pred_mean, self.pred_var, self.v, self.W_inv)
        else:
            self.v = self.rng.standard_normal(self.p_delta) / math.sqrt(self.lam_delta)
        self.pr_v = self._v_prior(self.v, self.lam_delta)

    def sweep(self, adapting: bool):
        for j in range(self.p_inputs):
            self._update_theta(j, adapting)
        for i in range(self.p_eta):
            for k in range(self.p_inputs):
                self._update_rho(i, k, adapting)
        for i in range(self.p_eta):
            self._update_block_precision(i, "lam_w", adapting)
        for i in range(self.p_eta):
            self._update_block_precision(i, "lam_eps", adapting)
        self._update_scalar_precision("lam_w0", adapting)
        self._update_scalar_precision("lam_y", adapting)
        self._update_scalar_precision("lam_delta", adapting)
        self._update_v()


def run_chain(cfg: SamplerConfig, problem: CalibrationProblem, p_eta: int | None = None) -> PosteriorDraws:
    """Run one chain and return thinned post-burn-in draws.

    p_eta defaults to the basis dimension (or the w_star row count).
    """
    if p_eta is None:
        if problem.basis is not None:
            p_eta = problem.basis.p_eta
        elif problem.w_star_matrix is not None:
            p_eta = problem.w_star_matrix.shape[0]
        else:
            raise ValueError("p_eta is required when neither basis nor w_star is given")
    s = _Sampler(cfg, problem, p_eta)
    n = cfg.n_draws
    ta = np.empty((n, s.p_inputs))
    lam_y = np.empty(n)
    lam_delta = np.empty(n)
    v = np.empty((n, s.p_delta))
    lam_w = np.empty((n, p_eta))
    lam_eps = np.empty((n, p_eta))
    lam_w0 = np.empty(n)
    rho = np.empty((n, p_eta, s.p_inputs))
    log_post = np.empty(n)

    for it in range(cfg.n_burn):
        s.sweep(adapting=True)
        if (it + 1) % cfg.adapt_window == 0:
            s._adapt()
    s.accept_count.clear()
    s.try_count.clear()
    kept = 0
    for it in range(n * cfg.thin):
        s.sweep(adapting=False)
        if it % cfg.thin == cfg.thin - 1:
            ta[kept] = s.ta
            lam_y[kept] = s.lam_y
            lam_delta[kept] = s.lam_delta
            v[kept] = s.v
            lam_w[kept] = s.lam_w
            lam_eps[kept] = s.lam_eps
            lam_w0[kept] = s.lam_w0
            rho[kept] = s.rho
            log_post[kept] = s.total_log_post()
            kept += 1
    acceptance = {
        key: s.accept_count[key] / s.try_count[key] for key in sorted(s.try_count)
    }
    return PosteriorDraws(ta, lam_y, lam_delta, v, lam_w, lam_eps, lam_w0, rho, log_post,
                          acceptance=acceptance, param_names=problem.param_names)


# --- chain diagnostics ----------------------------------------------------


def effective_sample_size(x) -> float:
    """Geyer initial-positive-sequence ESS; nan for (near-)constant chains."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or np.ptp(x) == 0.0 or not np.isfinite(x).all():
        return float("nan")
    xc = x - x.mean()
    f = np.fft.rfft(xc, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n].real / n
    if acov[0] <= 0:
        return float("nan")
    rho = acov / acov[0]
    tau = -1.0
    m = 0
    while 2 * m + 1 < n:
        gamma = rho[2 * m] + rho[2 * m + 1]
        if gamma <= 0:
            break
        tau += 2.0 * gamma
        m += 1
    tau = max(tau, 1.0 / n)
    return float(n / tau)


def split_rhat(x) -> float:
    """Potential scale reduction from the two halves of a single chain."""
    x = np.asarray(x, dtype=float)
    n = (x.size // 2) * 2
    if n < 8:
        return float("nan")
    halves = x[:n].reshape(2, n // 2)
    w = halves.var(axis=1, ddof=1).mean()
    if w == 0:
        return float("nan")
    b = (n // 2) * halves.mean(axis=1).var(ddof=1)
    var_plus = (n // 2 - 1) / (n // 2) * w + b / (n // 2)
    return float(np.sqrt(var_plus / w))


def diagnostics(draws: PosteriorDraws) -> dict:
    """Acceptance rates plus per-parameter ESS and split-chain PSRF."""
    if draws.n_draws < 100:
        raise ValueError("need at least 100 draws for diagnostics")
    names = draws.input_names()
    series = {name: draws.theta_alpha[:, j] for j, name in enumerate(names)}
    series["lambda_y"] = draws.lam_y
    series["lambda_delta"] = draws.lam_delta
    series["lambda_w0"] = draws.lam_w0
    for i in range(draws.lam_w.shape[1]):
        series[f"lambda_w_{i+1}"] = draws.lam_w[:, i]
    series["log_posterior"] = draws.log_post
    params = {}
    for name, x in series.items():
        ess = effective_sample_size(x)
        params[name] = {
            "mean": float(np.mean(x)),
            "sd": float(np.std(x)),
            "ess": None if math.isnan(ess) else float(ess),
            "degenerate": bool(np.ptp(x) == 0.0),
            "split_rhat": None if math.isnan(split_rhat(x)) else float(split_rhat(x)),
        }
    return {"acceptance": {str(k): float(v) for k, v in draws.acceptance.items()},
            "parameters": params}
