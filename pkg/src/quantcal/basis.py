"""Output bases: principal components for the emulator, normal kernels for discrepancy.

The principal-component basis is scaled so that projected training weights
have empirical variance 1, which lets unit-scale gamma priors act on the
weight precisions downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from quantcal.quantiles import QuantileEnsemble


@dataclass(frozen=True)
class BasisDecomposition:
    """Mean curve plus scaled principal-component basis of an output ensemble."""

    phi0: np.ndarray  # (T,)
    Phi: np.ndarray  # (T, p_eta), columns orthogonal, scaled by s_k/sqrt(n)
    scale: np.ndarray  # (p_eta,) the s_k/sqrt(n) factors
    explained_variance: np.ndarray  # (p_eta,) fractions of total variance

    @property
    def p_eta(self) -> int:
        return self.Phi.shape[1]

    @property
    def weeks(self) -> int:
        return self.phi0.size

    def reconstruct(self, w: np.ndarray) -> np.ndarray:
        """Curves phi0 + Phi @ w for weight columns w (p_eta, n)."""
        return self.phi0[:, None] + self.Phi @ np.atleast_2d(w)


@dataclass(frozen=True)
class ProjectedOutputs:
    """Least-squares basis weights of ensemble rows, shape (p_eta, n_rows)."""

    w_star: np.ndarray


@dataclass(frozen=True)
class DiscrepancyBasis:
    """Normal-density kernel columns on the week grid, unit maximum each."""

    D: np.ndarray  # (T, p_delta)
    kernel_sd: float
    spacing: float
    centers: np.ndarray

    @property
    def p_delta(self) -> int:
        return self.D.shape[1]


def build_basis(eta: QuantileEnsemble | np.ndarray, p_eta: int) -> BasisDecomposition:
    """Principal-component decomposition of the (rows x weeks) ensemble.

    phi0 is the columnwise mean; basis k is the k-th right singular vector of
    the centered ensemble scaled by s_k/sqrt(n_rows), so training-weight
    variances are exactly 1.
    """
    mat = eta.eta if isinstance(eta, QuantileEnsemble) else np.asarray(eta, dtype=float)
    n = mat.shape[0]
    if p_eta < 1:
        raise ValueError("need at least one basis vector")
    phi0 = mat.mean(axis=0)
    centered = mat - phi0
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    total = float(np.sum(s**2))
    if total <= 0 or s[0] <= 0:
        raise ValueError("ensemble has zero variance; no basis can be built")
    rank = int(np.sum(s > s[0] * 1e-12))
    if p_eta > rank:
        raise ValueError(f"p_eta={p_eta} exceeds ensemble rank {rank}")
    scale = s[:p_eta] / np.sqrt(n)
    Phi = vt[:p_eta].T * scale
    explained = s[:p_eta] ** 2 / total
    return BasisDecomposition(phi0, Phi, scale, explained)


def project(eta: QuantileEnsemble | np.ndarray, basis: BasisDecomposition) -> ProjectedOutputs:
    """Least-squares weights for each ensemble row given (phi0, Phi)."""
    mat = eta.eta if isinstance(eta, QuantileEnsemble) else np.asarray(eta, dtype=float)
    if mat.ndim == 1:
        mat = mat[None, :]
    if mat.shape[1] != basis.weeks:
        raise ValueError("ensemble width does not match basis")
    centered = (mat - basis.phi0).T  # (T, n)
    w, *_ = np.linalg.lstsq(basis.Phi, centered, rcond=None)
    return ProjectedOutputs(w)


def build_discrepancy_basis(T: int, kernel_sd: float, spacing: float) -> DiscrepancyBasis:
    """Normal kernels spaced `spacing` weeks apart spanning the week grid.

    Centers start half a spacing before week 1 and extend through the first
    center at or past T + spacing/2 (57 weeks with sd 18 / spacing 12 gives 7
    kernels).  A single-week grid degenerates to one constant column.
    """
    if T < 1 or kernel_sd <= 0 or spacing <= 0:
        raise ValueError("T, kernel_sd and spacing must be positive")
    weeks = np.arange(1, T + 1, dtype=float)
    if T == 1:
        return DiscrepancyBasis(np.ones((1, 1)), kernel_sd, spacing, np.array([1.0]))
    centers = [1.0 - spacing / 2.0]
    while centers[-1] < T + spacing / 2.0:
        centers.append(centers[-1] + spacing)
    centers = np.array(centers)
    D = np.exp(-((weeks[:, None] - centers[None, :]) ** 2) / (2.0 * kernel_sd**2))
    D = D / D.max(axis=0)
    return DiscrepancyBasis(D, kernel_sd, spacing, centers)


def save_basis_json(basis: BasisDecomposition, disc: DiscrepancyBasis, path) -> None:
    payload = {
        "phi0": basis.phi0.tolist(),
        "Phi": basis.Phi.tolist(),
        "scale": basis.scale.tolist(),
        "explained_variance": basis.explained_variance.tolist(),
        "discrepancy": {
            "kernel_sd": disc.kernel_sd,
            "spacing": disc.spacing,
            "centers": disc.centers.tolist(),
            "weeks": basis.weeks,
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_basis_json(path) -> tuple[BasisDecomposition, DiscrepancyBasis]:
    with open(path) as fh:
        payload = json.load(fh)
    basis = BasisDecomposition(
        np.array(payload["phi0"]),
        np.array(payload["Phi"]),
        np.array(payload["scale"]),
        np.array(payload["explained_variance"]),
    )
    d = payload["discrepancy"]
    disc = build_discrepancy_basis(d["weeks"], d["kernel_sd"], d["spacing"])
    return basis, disc
