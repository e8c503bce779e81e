"""Space-filling designs over a parameter hyper-rectangle.

Designs live on the unit cube; native parameter units appear only at the
simulator boundary.  The symmetric Latin hypercube here uses random
bin-pairing plus mirroring (not an orthogonal-array construction), which is
sufficient space-filling at the scales this package targets.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ParameterSpace:
    """Named hyper-rectangle of simulator inputs, bounds in native units."""

    names: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if len(self.names) != self.lower.size or self.lower.size != self.upper.size:
            raise ValueError("names, lower and upper must have equal length")
        if self.p < 1:
            raise ValueError("parameter space must have at least one dimension")
        bad = np.nonzero(~(self.lower < self.upper))[0]
        if bad.size:
            raise ValueError(f"lower >= upper for component {bad[0]} ({self.names[bad[0]]})")

    @property
    def p(self) -> int:
        return len(self.names)


def scale_to_unit(x, space: ParameterSpace) -> np.ndarray:
    """Map native-unit coordinates into [0,1]^p; rejects out-of-range input."""
    x = np.asarray(x, dtype=float)
    lo, hi = space.lower, space.upper
    below = x < lo
    above = x > hi
    if below.any() or above.any():
        k = int(np.nonzero(below | above)[-1][0])
        raise ValueError(f"component {k} ({space.names[k]}) outside [{lo[k]}, {hi[k]}]")
    return (x - lo) / (hi - lo)


def unit_to_native(u, space: ParameterSpace) -> np.ndarray:
    """Inverse of scale_to_unit."""
    u = np.asarray(u, dtype=float)
    return space.lower + u * (space.upper - space.lower)


@dataclass(frozen=True)
class DesignMatrix:
    """m x p design on the unit cube plus the space it scales back into."""

    points: np.ndarray
    space: ParameterSpace

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if pts.shape[1] != self.space.p:
            raise ValueError("design width does not match parameter space dimension")
        if (pts < 0).any() or (pts > 1).any():
            raise ValueError("design entries must lie in [0,1]")

    @property
    def m(self) -> int:
        return self.points.shape[0]

    def native(self) -> np.ndarray:
        return unit_to_native(self.points, self.space)


@dataclass(frozen=True)
class AugmentedDesign:
    """Design crossed with quantile levels: (m*n_alpha) x (p+1) rows.

    Each design point is repeated n_alpha times with the last column cycling
    through `alphas`, in design-point-major order.
    """

    rows: np.ndarray
    alphas: np.ndarray
    m: int

    def __post_init__(self):
        object.__setattr__(self, "rows", np.asarray(self.rows, dtype=float))
        object.__setattr__(self, "alphas", np.asarray(self.alphas, dtype=float))
        if self.rows.shape[0] != self.m * self.alphas.size:
            raise ValueError("row count must equal m * n_alpha")

    @property
    def n_alpha(self) -> int:
        return self.alphas.size

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def theta_points(self) -> np.ndarray:
        """The m distinct design points, recovered by stripping the alpha column."""
        return self.rows[:: self.n_alpha, :-1].copy()


def _check_alphas(alphas) -> np.ndarray:
    alphas = np.asarray(alphas, dtype=float)
    if alphas.size == 0:
        raise ValueError("alphas must be nonempty")
    if (alphas <= 0).any() or (alphas >= 1).any():
        raise ValueError("alphas must lie strictly inside (0,1)")
    if alphas.size > 1 and (np.diff(alphas) <= 0).any():
        raise ValueError("alphas must be strictly increasing")
    return alphas


def generate_lhs(space: ParameterSpace, m: int, seed, symmetric: bool = True) -> DesignMatrix:
    """Latin hypercube design on [0,1]^p, stratified into m bins per margin.

    With ``symmetric=True`` rows pair up as x and 1-x (odd m places one point
    at the center).  Points are jittered uniformly within their bins, driven
    entirely by `seed`.
    """
    if m < 2:
        raise ValueError("need at least m=2 design points")
    rng = np.random.default_rng(seed)
    p = space.p
    if not symmetric:
        cols = [(rng.permutation(m) + rng.uniform(size=m)) / m for _ in range(p)]
        return DesignMatrix(np.column_stack(cols), space)

    half = m // 2
    first = np.empty((half, p))
    for k in range(p):
        # assign each first-half row one side of a mirror pair of bins
        pair = rng.permutation(half)
        take_low = rng.integers(0, 2, size=half).astype(bool)
        bins = np.where(take_low, pair, m - 1 - pair)
        first[:, k] = (bins + rng.uniform(size=half)) / m
    blocks = [first, 1.0 - first]
    if m % 2 == 1:
        blocks.append(np.full((1, p), 0.5))
    return DesignMatrix(np.vstack(blocks), space)


def augment_with_quantiles(design: DesignMatrix, alphas) -> AugmentedDesign:
    """Cross every design point with every quantile level (alpha-minor order)."""
    alphas = _check_alphas(alphas)
    n_a = alphas.size
    theta = np.repeat(design.points, n_a, axis=0)
    a_col = np.tile(alphas, design.m)
    return AugmentedDesign(np.column_stack([theta, a_col]), alphas, design.m)


def lhs_bin_counts(column: np.ndarray, m: int) -> np.ndarray:
    """Occupancy of the m equal bins for one design column (1 each for a valid LHS)."""
    idx = np.clip((np.asarray(column) * m).astype(int), 0, m - 1)
    return np.bincount(idx, minlength=m)


def save_design(design: DesignMatrix | AugmentedDesign, path) -> None:
    """Write a design as CSV in native units, with an `alpha` column if augmented."""
    if isinstance(design, AugmentedDesign):
        raise ValueError("augmented designs need the parameter space; use save_augmented_design")
    header = list(design.space.names)
    _write_csv(path, header, design.native())


def save_augmented_design(design: AugmentedDesign, space: ParameterSpace, path) -> None:
    native = unit_to_native(design.rows[:, :-1], space)
    rows = np.column_stack([native, design.rows[:, -1]])
    _write_csv(path, list(space.names) + ["alpha"], rows)


def load_design(path, space: ParameterSpace) -> DesignMatrix:
    """Read a native-unit design CSV back onto the unit cube."""
    header, rows = _read_csv(path)
    if header != list(space.names):
        raise ValueError(f"CSV columns {header} do not match space {list(space.names)}")
    return DesignMatrix(scale_to_unit(rows, space), space)


def load_augmented_design(path, space: ParameterSpace) -> AugmentedDesign:
    header, rows = _read_csv(path)
    if header != list(space.names) + ["alpha"]:
        raise ValueError("CSV columns do not match parameter names + alpha")
    theta = scale_to_unit(rows[:, :-1], space)
    alphas = np.unique(rows[:, -1])
    m = rows.shape[0] // alphas.size
    return AugmentedDesign(np.column_stack([theta, rows[:, -1]]), np.sort(alphas), m)


def _write_csv(path, header: list[str], rows: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in np.atleast_2d(rows):
            writer.writerow([repr(float(v)) for v in row])


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in row] for row in reader])
    return header, rows
