"""Scenario projections with parameter-uncertainty fans.

A projection iterates the deterministic temperature block forward under an
exogenous total-forcing path, starting from the filtered end-of-sample
state. Parameter uncertainty enters by drawing physical-parameter vectors
from their estimated Gaussian; each retained draw re-runs the historical
filter (so its initial condition is consistent with its parameters) and
contributes one path. Quantiles across draws form the fan.
"""

from __future__ import annotations

import csv
import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimation import FitResult
from .model import PhysicalParams, STATE_TD, STATE_TM, build_system
from .ssm import ObservationPanel
from .ssm.filter import loglik_final_state
from .ssm.simulate import psd_sqrt


@dataclass
class ScenarioPath:
    """Exogenous total-forcing path (W m^-2) over contiguous years."""

    name: str
    years: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        self.years = np.asarray(self.years, dtype=int).ravel()
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.years.size != self.values.size:
            raise ValueError("years and values must have equal length")
        if self.years.size == 0:
            raise ValueError("scenario must cover at least one year")
        if self.years.size > 1 and np.any(np.diff(self.years) != 1):
            raise ValueError("scenario years must be contiguous")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scenario forcing must be finite")


@dataclass
class ProjectionFan:
    """Per-horizon quantiles of projected mixed-layer temperature."""

    scenario: str
    years: np.ndarray
    quantiles: dict[float, np.ndarray]
    draws: int
    seed: int
    rejected_draws: int = 0
    high_rejection: bool = False
    paths: np.ndarray | None = field(default=None, repr=False)


def deterministic_forward(
    physical: PhysicalParams,
    init_state: tuple[float, float],
    scenario: ScenarioPath,
) -> np.ndarray:
    """Noise-free temperature path under a scenario forcing path.

    The state steps once per scenario year; the forcing value of a year
    drives the transition into that year. Returns the mixed-layer
    temperature at each scenario year.
    """
    if not physical.is_valid():
        physical.validate()
    block = physical.temperature_block()
    force = np.array([physical.forcing_coefficient, 0.0])
    state = np.array([init_state[0], init_state[1]], dtype=float)
    out = np.empty(scenario.years.size)
    for h, f in enumerate(scenario.values):
        state = block @ state + force * f
        out[h] = state[0]
    return out


def draw_physical_params(
    fit: FitResult, draws: int, rng: np.random.Generator
) -> tuple[np.ndarray, int]:
    """Sample physical-parameter vectors from N(estimate, vcov), redrawing
    any vector that violates the physical constraints."""
    if fit.vcov_physical is None:
        raise ValueError("fit carries no physical-parameter covariance")
    mean = fit.theta_hat.to_array()[:4]
    root = psd_sqrt(fit.vcov_physical)
    out = np.empty((draws, 4))
    rejected = 0
    filled = 0
    while filled < draws:
        chunk = max(draws - filled, 64)
        cand = mean + rng.standard_normal((chunk, 4)) @ root.T
        ok = np.array([PhysicalParams(*row).is_valid() for row in cand])
        keep = cand[ok]
        take = min(keep.shape[0], draws - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
        rejected += int(chunk - ok.sum())
        if rejected > 200 * draws:
            raise RuntimeError("physical-parameter sampling rejects nearly everything")
    return out, rejected


def _paths_for_samples(task) -> np.ndarray:
    samples, theta_hat, config, panel, natural_forcing, scenario = task
    paths = np.empty((samples.shape[0], scenario.years.size))
    for i, row in enumerate(samples):
        physical = PhysicalParams(*row)
        theta = dataclasses.replace(theta_hat, physical=physical)
        model = build_system(theta, config, natural_forcing, panel.years)
        _, a_last = loglik_final_state(model, panel)
        paths[i] = deterministic_forward(
            physical, (a_last[STATE_TM], a_last[STATE_TD]), scenario
        )
    return paths


def project(
    fit: FitResult,
    panel: ObservationPanel,
    scenario: ScenarioPath,
    natural_forcing,
    draws: int = 10_000,
    rng_seed: int = 0,
    quantiles: tuple[float, ...] = (0.05, 0.5, 0.95),
    keep_paths: bool = False,
    workers: int = 1,
) -> ProjectionFan:
    """Quantile fan of projected mixed-layer temperature under a scenario.

    Each draw replaces the physical parameters (noise parameters stay at
    their estimates), re-filters the historical panel to get its own
    end-of-sample state, and projects forward deterministically. Draws that
    violate the physical constraints are resampled (counted; a rejection
    share above 50% sets ``high_rejection``). All parameter vectors are
    sampled up front, so results do not depend on ``workers``.
    """
    rng = np.random.default_rng(rng_seed)
    samples, rejected = draw_physical_params(fit, draws, rng)
    if isinstance(natural_forcing, tuple):
        natural_forcing = tuple(np.asarray(part) for part in natural_forcing)
    if workers > 1 and draws >= 2 * workers:
        chunks = np.array_split(samples, workers)
        tasks = [
            (chunk, fit.theta_hat, fit.config, panel, natural_forcing, scenario)
            for chunk in chunks
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            pieces = list(pool.map(_paths_for_samples, tasks))
        paths = np.vstack(pieces)
    else:
        paths = _paths_for_samples(
            (samples, fit.theta_hat, fit.config, panel, natural_forcing, scenario)
        )
    qs = sorted(quantiles)
    levels = np.quantile(paths, qs, axis=0)
    return ProjectionFan(
        scenario=scenario.name,
        years=scenario.years.copy(),
        quantiles={q: levels[i] for i, q in enumerate(qs)},
        draws=draws,
        seed=rng_seed,
        rejected_draws=rejected,
        high_rejection=rejected > draws,
        paths=paths if keep_paths else None,
    )


def read_scenario(path, name: str | None = None) -> ScenarioPath:
    """Load a ``year,forcing`` scenario file."""
    years: list[int] = []
    values: list[float] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:2]] != ["year", "forcing"]:
            raise ValueError(f"{path}: expected a 'year,forcing' header")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            years.append(int(row[0]))
            values.append(float(row[1]))
    from pathlib import Path

    return ScenarioPath(
        name=name or Path(path).stem, years=np.array(years), values=np.array(values)
    )


def write_fan(path, fan: ProjectionFan) -> None:
    """Write a fan as delimited text: year followed by one quantile column
    per level (q05, q50, ...)."""
    qs = sorted(fan.quantiles)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["year"] + [f"q{int(round(q * 100)):02d}" for q in qs])
        for i, year in enumerate(fan.years):
            writer.writerow([int(year)] + [repr(float(fan.quantiles[q][i])) for q in qs])
