"""Posterior predictive curves, weekly-count realizations and epidemic summaries.

Each posterior draw yields an emulator curve (basis weights sampled from
their conditional Gaussian at that draw's input point, plus basis-truncation
noise), a discrepancy curve, and their sum: the predicted course of the
actual epidemic on the log-cumulative scale.  Observation error is excluded
from the combined curves.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from quantcal.basis import BasisDecomposition, DiscrepancyBasis
from quantcal.gp import EmulatorFactors
from quantcal.mcmc import PosteriorDraws


@dataclass(frozen=True)
class PredictiveCurveSet:
    """Per-draw predictive curves; combined = eta + delta row by row."""

    eta_draws: np.ndarray  # (n, T) log-cumulative
    delta_draws: np.ndarray  # (n, T)
    combined_draws: np.ndarray  # (n, T)
    weekly_draws: np.ndarray  # (n, T) count scale

    @property
    def n_draws(self) -> int:
        return self.eta_draws.shape[0]

    @property
    def weeks(self) -> int:
        return self.eta_draws.shape[1]


@dataclass(frozen=True)
class EpidemicSummary:
    """Scalar epidemic summaries per draw."""

    peak_week: np.ndarray  # (n,) 1-based
    peak_cases: np.ndarray  # (n,)
    total_size: np.ndarray  # (n,)


def to_weekly(curve: np.ndarray) -> np.ndarray:
    """Exponentiate and first-difference a log-cumulative curve.

    Week 1 carries the first cumulative value; negative differences from
    non-monotone draws are clamped to zero.
    """
    c = np.exp(np.asarray(curve, dtype=float))
    weekly = np.empty_like(c)
    weekly[..., 0] = c[..., 0]
    weekly[..., 1:] = np.diff(c, axis=-1)
    return np.maximum(weekly, 0.0)


def predict_curves(
    draws: PosteriorDraws,
    design,
    w_star,
    basis: BasisDecomposition,
    disc: DiscrepancyBasis,
    seed=0,
    max_draws: int | None = None,
    include_truncation_noise: bool = True,
) -> PredictiveCurveSet:
    """Sample predictive curves for (a thinned subset of) the posterior draws."""
    if draws.n_draws == 0:
        raise ValueError("need at least one posterior draw")
    rng = np.random.default_rng(seed)
    idx = np.arange(draws.n_draws)
    if max_draws is not None and max_draws < draws.n_draws:
        idx = np.linspace(0, draws.n_draws - 1, max_draws).round().astype(int)
    w_mat = w_star.w_star if hasattr(w_star, "w_star") else np.atleast_2d(w_star)
    T = basis.weeks
    eta = np.empty((idx.size, T))
    delta = np.empty((idx.size, T))
    factors = None
    for out_i, i in enumerate(idx):
        state = draws.state_at(int(i))
        if factors is None or not _same_hp(factors.hp, state.hp):
            factors = EmulatorFactors(design, w_mat, state.hp)
        pred = factors.predict(state.theta_alpha[None, :])
        w = pred.mean[:, 0] + np.sqrt(pred.variances()[:, 0]) * rng.standard_normal(basis.p_eta)
        curve = basis.phi0 + basis.Phi @ w
        if include_truncation_noise:
            curve = curve + rng.standard_normal(T) / math.sqrt(state.hp.lam_w0)
        eta[out_i] = curve
        delta[out_i] = disc.D @ state.v
    combined = eta + delta
    return PredictiveCurveSet(eta, delta, combined, to_weekly(combined))


def _same_hp(a, b) -> bool:
    return (
        np.array_equal(a.lam_w, b.lam_w)
        and np.array_equal(a.rho_w, b.rho_w)
        and np.array_equal(a.lam_eps, b.lam_eps)
        and a.lam_w0 == b.lam_w0
    )


def summarize(weekly_draws: np.ndarray) -> EpidemicSummary:
    """Peak week (earliest tie), its count, and total cases for each draw."""
    w = np.atleast_2d(np.asarray(weekly_draws, dtype=float))
    if w.size == 0:
        raise ValueError("need at least one weekly draw")
    peak_week = np.argmax(w, axis=1) + 1
    peak_cases = w[np.arange(w.shape[0]), peak_week - 1]
    total = w.sum(axis=1)
    return EpidemicSummary(peak_week, peak_cases, total)


def pooled_densities(summary: EpidemicSummary, bins: int = 30) -> dict:
    """Histogram summaries of the three epidemic quantities, JSON-ready."""
    out = {}
    for name, vals in [
        ("peak_week", summary.peak_week),
        ("peak_cases", summary.peak_cases),
        ("total_size", summary.total_size),
    ]:
        counts, edges = np.histogram(vals, bins=bins)
        out[name] = {
            "counts": counts.tolist(),
            "edges": edges.tolist(),
            "mean": float(np.mean(vals)),
            "q05": float(np.quantile(vals, 0.05)),
            "q50": float(np.quantile(vals, 0.50)),
            "q95": float(np.quantile(vals, 0.95)),
        }
    return out


def main_effect_sweep(
    draws: PosteriorDraws,
    design,
    w_star,
    basis: BasisDecomposition,
    dim: int,
    grid: int,
    max_draws: int = 50,
) -> np.ndarray:
    """Posterior-mean emulator curves varying one input over [0,1].

    Input `dim` takes `grid` evenly spaced values; the other coordinates stay
    at their posterior means.  Returns a (grid, T) matrix.
    """
    if grid < 1:
        raise ValueError("grid must be positive")
    w_mat = w_star.w_star if hasattr(w_star, "w_star") else np.atleast_2d(w_star)
    base = draws.theta_alpha.mean(axis=0)
    values = np.linspace(0.0, 1.0, grid) if grid > 1 else np.array([base[dim]])
    inputs = np.tile(base, (values.size, 1))
    inputs[:, dim] = values
    idx = np.linspace(0, draws.n_draws - 1, min(max_draws, draws.n_draws)).round().astype(int)
    total = np.zeros((values.size, basis.weeks))
    factors = None
    for i in idx:
        state = draws.state_at(int(i))
        if factors is None or not _same_hp(factors.hp, state.hp):
            factors = EmulatorFactors(design, w_mat, state.hp)
        pred = factors.predict(inputs)
        total += (basis.phi0[None, :] + pred.mean.T @ basis.Phi.T)
    return total / idx.size


def alpha_monotonicity_diagnostic(
    draws: PosteriorDraws,
    design,
    w_star,
    basis: BasisDecomposition,
    alpha_low: float = 0.05,
    alpha_high: float = 0.95,
    max_draws: int = 50,
) -> dict:
    """Fraction of (draw, week) cells where the predicted mean curve at the low
    quantile exceeds the one at the high quantile.  Reported, never corrected."""
    w_mat = w_star.w_star if hasattr(w_star, "w_star") else np.atleast_2d(w_star)
    idx = np.linspace(0, draws.n_draws - 1, min(max_draws, draws.n_draws)).round().astype(int)
    violations = 0
    cells = 0
    factors = None
    for i in idx:
        state = draws.state_at(int(i))
        if factors is None or not _same_hp(factors.hp, state.hp):
            factors = EmulatorFactors(design, w_mat, state.hp)
        x = np.tile(state.theta_alpha, (2, 1))
        x[0, -1] = alpha_low
        x[1, -1] = alpha_high
        pred = factors.predict(x)
        low = basis.phi0 + basis.Phi @ pred.mean[:, 0]
        high = basis.phi0 + basis.Phi @ pred.mean[:, 1]
        violations += int(np.sum(low > high))
        cells += low.size
    return {"violation_fraction": violations / cells, "cells": cells,
            "alpha_low": alpha_low, "alpha_high": alpha_high}


def eta_delta_correlation(curves: PredictiveCurveSet, week: int | None = None) -> float:
    """Draw-level correlation between emulator and discrepancy curves."""
    t = (curves.weeks // 2 if week is None else week - 1)
    e = curves.eta_draws[:, t]
    d = curves.delta_draws[:, t]
    if np.ptp(e) == 0 or np.ptp(d) == 0:
        return float("nan")
    return float(np.corrcoef(e, d)[0, 1])


def band(curves: np.ndarray, lo: float = 0.05, hi: float = 0.95) -> np.ndarray:
    """Pointwise quantile band of a (draws, T) curve matrix: rows (lo, median, hi)."""
    return np.quantile(curves, [lo, 0.5, hi], axis=0)


def save_curves_csv(curves: PredictiveCurveSet, path) -> None:
    """Plot-ready pointwise bands: week + (lo, median, hi) per curve family."""
    bands = {
        "eta": band(curves.eta_draws),
        "delta": band(curves.delta_draws),
        "combined": band(curves.combined_draws),
        "weekly": band(curves.weekly_draws),
    }
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["week"]
        for name in bands:
            header += [f"{name}_q05", f"{name}_q50", f"{name}_q95"]
        writer.writerow(header)
        for t in range(curves.weeks):
            row = [t + 1]
            for name in bands:
                row += [repr(float(bands[name][k, t])) for k in range(3)]
            writer.writerow(row)


def save_summaries_csv(summary: EpidemicSummary, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["draw", "peak_week", "peak_cases", "total_size"])
        for i in range(summary.peak_week.size):
            writer.writerow([
                i, int(summary.peak_week[i]),
                repr(float(summary.peak_cases[i])), repr(float(summary.total_size[i])),
            ])


def save_densities_json(summary: EpidemicSummary, path, extra: dict | None = None) -> None:
    payload = pooled_densities(summary)
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
