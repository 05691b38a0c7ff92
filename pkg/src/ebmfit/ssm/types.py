"""Containers for linear Gaussian state space models and filter output.

The model is

    X_{t+1} = T_t X_t + eta_t,      eta_t ~ N(0, Q)
    Y_t     = Z X_t + eps_t,        eps_t ~ N(0, H)

with X_1 ~ N(a1, P1). The transition may carry a single time-varying entry
(used to feed an exogenous series through a constant state); everything
else is time-invariant. Missing observations are marked with NaN and are
removed row-wise before each measurement update.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SERIES_KINDS = (
    "gmst",
    "ocean_temp",
    "ohc",
    "forcing_total",
    "forcing_natural",
    "forcing_anthropogenic",
    "scenario_forcing",
)

#: Ordering of panel rows: GMSTs first, then ocean temperatures, then OHC,
#: then total forcing. Within a kind, rows sort by label.
CANONICAL_KIND_ORDER = ("gmst", "ocean_temp", "ohc", "forcing_total")


class DimensionError(ValueError):
    """Inconsistent matrix or panel dimensions."""


class FilterNumericalError(RuntimeError):
    """Innovation covariance not positive definite during filtering."""


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def _check_psd(a: np.ndarray, name: str, tol: float = 1e-8) -> None:
    if not np.allclose(a, a.T, atol=1e-10):
        raise ValueError(f"{name} must be symmetric")
    w = np.linalg.eigvalsh(0.5 * (a + a.T))
    if w.min() < -tol * max(1.0, w.max()):
        raise ValueError(f"{name} must be positive semidefinite (min eig {w.min():.3e})")


@dataclass
class SystemMatrices:
    """System matrices of a linear Gaussian state space model.

    Parameters
    ----------
    transition : (m, m) array
        Base transition matrix ``T``. If ``slot_index`` is set, the entry at
        that position is overwritten per step with ``slot_values[t]`` when
        advancing from step ``t`` to ``t + 1`` (0-based).
    measurement : (p, m) array
        Time-invariant measurement matrix ``Z``.
    state_cov : (m, m) array
        State disturbance covariance ``Q`` (PSD).
    obs_cov : (p, p) array
        Measurement error covariance ``H`` (PSD).
    init_mean : (m,) array
        Mean of the initial state.
    init_cov : (m, m) array
        Covariance of the initial state (PSD).
    slot_index : (row, col) or None
        Position of the single time-varying transition entry.
    slot_values : (n - 1,) array or None
        Per-step values for the time-varying entry; entry ``t`` applies to
        the transition from step ``t`` to ``t + 1``.
    """

    transition: np.ndarray
    measurement: np.ndarray
    state_cov: np.ndarray
    obs_cov: np.ndarray
    init_mean: np.ndarray
    init_cov: np.ndarray
    slot_index: tuple[int, int] | None = None
    slot_values: np.ndarray | None = None
    #: Skip the PSD eigenvalue checks (for constructors that guarantee them).
    check_psd: bool = True

    def __post_init__(self) -> None:
        self.transition = _as_matrix(self.transition, "transition")
        self.measurement = _as_matrix(self.measurement, "measurement")
        self.state_cov = _as_matrix(self.state_cov, "state_cov")
        self.obs_cov = _as_matrix(self.obs_cov, "obs_cov")
        self.init_mean = np.asarray(self.init_mean, dtype=float).ravel()
        self.init_cov = _as_matrix(self.init_cov, "init_cov")
        m = self.n_states
        p = self.n_obs
        if self.transition.shape != (m, m):
            raise DimensionError("transition must be square")
        if self.measurement.shape[1] != m:
            raise DimensionError("measurement column count must equal state dim")
        if self.state_cov.shape != (m, m):
            raise DimensionError("state_cov must be (m, m)")
        if self.obs_cov.shape != (p, p):
            raise DimensionError("obs_cov must be (p, p)")
        if self.init_mean.shape != (m,):
            raise DimensionError("init_mean must have length m")
        if self.init_cov.shape != (m, m):
            raise DimensionError("init_cov must be (m, m)")
        if self.check_psd:
            _check_psd(self.state_cov, "state_cov")
            _check_psd(self.obs_cov, "obs_cov")
            _check_psd(self.init_cov, "init_cov")
        if (self.slot_index is None) != (self.slot_values is None):
            raise ValueError("slot_index and slot_values must be set together")
        if self.slot_values is not None:
            self.slot_values = np.asarray(self.slot_values, dtype=float).ravel()
            r, c = self.slot_index
            if not (0 <= r < m and 0 <= c < m):
                raise DimensionError("slot_index out of range")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_obs(self) -> int:
        return self.measurement.shape[0]

    def transition_at(self, t: int) -> np.ndarray:
        """Transition matrix applied when advancing from step t to t + 1."""
        T = self.transition.copy()
        if self.slot_index is not None:
            T[self.slot_index] = self.slot_values[t]
        return T

    def n_steps_supported(self) -> int | None:
        """Number of panel steps the time-varying slot covers (None if invariant)."""
        if self.slot_values is None:
            return None
        return self.slot_values.shape[0] + 1


@dataclass
class SeriesMeta:
    """Identity of one panel row."""

    label: str
    kind: str
    pair_id: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in SERIES_KINDS:
            raise ValueError(f"unknown series kind {self.kind!r}")


@dataclass
class ObservationPanel:
    """Year-indexed multivariate panel of anomaly observations.

    ``values`` is (p, n) with NaN marking missing cells. ``years`` must be
    contiguous. Ocean temperature and OHC rows are linked pairwise through
    ``pair_id``.
    """

    years: np.ndarray
    values: np.ndarray
    series_meta: list[SeriesMeta] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.years = np.asarray(self.years, dtype=int).ravel()
        self.values = _as_matrix(self.values, "values")
        if self.values.shape[1] != self.years.shape[0]:
            raise DimensionError("values must have one column per year")
        if len(self.series_meta) != self.values.shape[0]:
            raise DimensionError("series_meta must have one entry per row")
        if self.years.size > 1 and not np.all(np.diff(self.years) == 1):
            raise ValueError("years must be strictly increasing with unit step")
        self._check_pairs()

    def _check_pairs(self) -> None:
        temp_pairs = [m.pair_id for m in self.series_meta if m.kind == "ocean_temp"]
        ohc_pairs = [m.pair_id for m in self.series_meta if m.kind == "ohc"]
        if len(set(ohc_pairs)) != len(ohc_pairs) or len(set(temp_pairs)) != len(temp_pairs):
            raise ValueError("duplicate pair_id within a kind")
        if any(p is None for p in temp_pairs + ohc_pairs):
            raise ValueError("ocean_temp and ohc rows require a pair_id")
        if set(temp_pairs) != set(ohc_pairs):
            raise ValueError("ocean_temp/ohc pair_ids do not match one-to-one")

    @property
    def n_series(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.values)

    def rows_of_kind(self, kind: str) -> list[int]:
        return [i for i, m in enumerate(self.series_meta) if m.kind == kind]

    def subset(self, rows: Sequence[int]) -> "ObservationPanel":
        rows = list(rows)
        return ObservationPanel(
            years=self.years.copy(),
            values=self.values[rows].copy(),
            series_meta=[self.series_meta[i] for i in rows],
        )


@dataclass
class FilterResult:
    """Output of one Kalman filter pass.

    Predicted moments are one-step-ahead (``a_{t|t-1}``, ``P_{t|t-1}``, with
    step 0 holding the initial distribution), filtered moments condition on
    data up to and including each step. Innovations and their covariances
    are stored per step restricted to the rows observed at that step.
    """

    pred_mean: np.ndarray
    pred_cov: np.ndarray
    filt_mean: np.ndarray
    filt_cov: np.ndarray
    innovations: list[np.ndarray]
    innovation_covs: list[np.ndarray]
    observed_indices: list[np.ndarray]
    loglik_terms: np.ndarray
    loglik: float
    n_obs: int

    @property
    def n_steps(self) -> int:
        return self.pred_mean.shape[0]


@dataclass
class SmootherResult:
    """Fixed-interval smoother output: E[X_t | all data] and its covariance."""

    smooth_mean: np.ndarray
    smooth_cov: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.smooth_mean.shape[0]
