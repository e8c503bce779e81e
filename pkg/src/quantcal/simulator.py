"""Stochastic epidemic simulator used as the calibration target.

A discrete-time chain-binomial SEIR process on a well-mixed population: weekly
binomial transmission draws, a one-week exposed stage, and a geometric
infectious period with mean two weeks.  An intervention switches on after a
delay, damping transmission by (1 - efficacy) and contacts by
exp(-travel_reduction).  Low seeding produces the die-out/growth bimodality
typical of agent-based epidemic runs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

POPULATION = 10_000
# transmissibility (order 1e-5) -> weekly transmission pressure in (0,1);
# fixed unit conversion, not a tuning knob
TRANSMISSIBILITY_SCALE = 1.0e4
RECOVERY_PROB = 0.5  # geometric infectious period, mean 2 weeks
LOG_FLOOR = 0.5  # zero counts enter logs as log(0.5)

PARAMETER_NAMES = (
    "transmissibility",
    "initial_infected",
    "intervention_delay",
    "intervention_efficacy",
    "travel_reduction",
)


def epidemic_parameter_space():
    """Default bounds for the five simulator inputs."""
    from quantcal.design import ParameterSpace

    return ParameterSpace(
        names=PARAMETER_NAMES,
        lower=[3e-5, 1.0, 2.0, 0.1, 0.0],
        upper=[8e-5, 20.0, 10.0, 0.8, 2.0],
    )


@dataclass(frozen=True)
class SimParams:
    transmissibility: float
    initial_infected: int
    intervention_delay: float
    intervention_efficacy: float
    travel_reduction: float

    def __post_init__(self):
        if self.transmissibility < 0:
            raise ValueError("transmissibility must be nonnegative")
        if self.initial_infected < 1 or self.initial_infected > POPULATION:
            raise ValueError("initial_infected must be in [1, population]")
        if not 0.0 <= self.intervention_efficacy <= 1.0:
            raise ValueError("intervention_efficacy must be in [0,1]")
        if self.travel_reduction < 0:
            raise ValueError("travel_reduction must be nonnegative")

    @classmethod
    def from_native(cls, values) -> "SimParams":
        """Build from a native-unit vector ordered like PARAMETER_NAMES."""
        v = np.asarray(values, dtype=float)
        if v.size != 5:
            raise ValueError("simulator expects exactly 5 parameters")
        return cls(
            transmissibility=float(v[0]),
            initial_infected=int(round(v[1])),
            intervention_delay=float(v[2]),
            intervention_efficacy=float(v[3]),
            travel_reduction=float(v[4]),
        )


def simulate(params: SimParams, T: int, seed) -> np.ndarray:
    """One replicate: cumulative infection counts for weeks 1..T.

    The trajectory starts at initial_infected and is nondecreasing; identical
    (params, T, seed) give byte-identical output.
    """
    if T < 1:
        raise ValueError("need at least one week")
    rng = np.random.default_rng(seed)
    n = POPULATION
    i0 = params.initial_infected
    s, e, i = n - i0, 0, i0
    cum = np.empty(T, dtype=np.int64)
    cum[0] = i0
    for t in range(T - 1):
        active = 1.0 if t >= params.intervention_delay else 0.0
        beta = (
            params.transmissibility
            * TRANSMISSIBILITY_SCALE
            * (1.0 - params.intervention_efficacy * active)
            * np.exp(-params.travel_reduction * active)
        )
        p_infect = 0.0 if i == 0 else 1.0 - (1.0 - beta / n) ** i
        new_e = rng.binomial(s, p_infect)
        recovered = rng.binomial(i, RECOVERY_PROB)
        s -= new_e
        i = i - recovered + e
        e = new_e
        cum[t + 1] = cum[t] + new_e
    return cum


def expected_first_step_infections(params: SimParams) -> float:
    """Analytic one-step mean of new infections from the initial state."""
    beta = params.transmissibility * TRANSMISSIBILITY_SCALE
    i0 = params.initial_infected
    q = 1.0 - (1.0 - beta / POPULATION) ** i0
    return (POPULATION - i0) * q


def cell_seed(seed, design_index: int, replicate: int) -> np.random.SeedSequence:
    """Seed for one (design point, replicate) cell, reproducible in isolation."""
    return np.random.SeedSequence(seed, spawn_key=(design_index, replicate))


def stochastic_round(x: float, rng) -> int:
    """Round x to floor(x) or floor(x)+1 with probability equal to its fraction.

    Keeps the replicate distribution continuous in a real-valued seeding
    parameter, where deterministic rounding would introduce steps.
    """
    lo = math.floor(x)
    frac = x - lo
    return int(lo + (rng.uniform() < frac))


def cell_params(native_row, seed, design_index: int, replicate: int) -> SimParams:
    """Simulator parameters for one ensemble cell.

    The real-valued initial-infected coordinate is rounded stochastically with
    randomness derived from (seed, design_index, replicate), independent of
    the trajectory stream, so any cell is reproducible in isolation.
    """
    v = np.asarray(native_row, dtype=float)
    rng = np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(design_index, replicate, 1))
    )
    return SimParams(
        transmissibility=float(v[0]),
        initial_infected=max(stochastic_round(float(v[1]), rng), 1),
        intervention_delay=float(v[2]),
        intervention_efficacy=float(v[3]),
        travel_reduction=float(v[4]),
    )


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Replicated weekly cumulative counts: shape (m, r, T)."""

    cumulative: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.cumulative)
        if arr.ndim != 3:
            raise ValueError("ensemble must be m x r x T")
        object.__setattr__(self, "cumulative", arr)

    @property
    def m(self) -> int:
        return self.cumulative.shape[0]

    @property
    def r(self) -> int:
        return self.cumulative.shape[1]

    @property
    def weeks(self) -> int:
        return self.cumulative.shape[2]

    def log_cumulative(self) -> np.ndarray:
        return to_log(self.cumulative)


def to_log(counts) -> np.ndarray:
    """Entrywise log of counts, with zeros floored at LOG_FLOOR."""
    arr = np.asarray(counts, dtype=float)
    if (arr < 0).any():
        raise ValueError("counts must be nonnegative")
    return np.log(np.maximum(arr, LOG_FLOOR))


def run_ensemble(design, space, r: int, T: int, seed) -> TrajectoryEnsemble:
    """Simulate r replicates at each design point.

    Cell (i, j) runs simulate(cell_params(native[i], seed, i, j), T,
    cell_seed(seed, i, j)), so any cell can be reproduced in isolation and
    parallel execution would give identical results.
    """
    if r < 2:
        raise ValueError("need at least 2 replicates")
    native = design.native() if hasattr(design, "native") else np.asarray(design)
    m = native.shape[0]
    cum = np.empty((m, r, T), dtype=np.int64)
    for i in range(m):
        for j in range(r):
            params = cell_params(native[i], seed, i, j)
            cum[i, j] = simulate(params, T, cell_seed(seed, i, j))
    return TrajectoryEnsemble(cum)


def save_ensemble_csv(ens: TrajectoryEnsemble, path) -> None:
    """Long-format CSV: design_index, replicate, week, count."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["design_index", "replicate", "week", "count"])
        for i in range(ens.m):
            for j in range(ens.r):
                for t in range(ens.weeks):
                    writer.writerow([i, j, t + 1, int(ens.cumulative[i, j, t])])


def load_ensemble_csv(path) -> TrajectoryEnsemble:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = np.array([[int(v) for v in row] for row in reader])
    m, r, T = rows[:, 0].max() + 1, rows[:, 1].max() + 1, rows[:, 2].max()
    cum = np.empty((m, r, T), dtype=np.int64)
    cum[rows[:, 0], rows[:, 1], rows[:, 2] - 1] = rows[:, 3]
    return TrajectoryEnsemble(cum)


def save_ensemble_npz(ens: TrajectoryEnsemble, path) -> None:
    np.savez_compressed(path, cumulative=ens.cumulative)


def load_ensemble_npz(path) -> TrajectoryEnsemble:
    with np.load(path) as data:
        return TrajectoryEnsemble(data["cumulative"])
