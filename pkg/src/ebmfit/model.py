"""Two-layer energy balance model in state space form.

The continuous model for mixed-layer temperature T_m and deep-ocean
temperature T_d,

    C_m dT_m/dt = F - lambda T_m - gamma (T_m - T_d)
    C_d dT_d/dt = gamma (T_m - T_d)

is discretized at an annual step. Total forcing splits into natural forcing
N (exogenous data, fed through a constant state) and anthropogenic forcing A
(a random walk with a random-walk slope). Ocean heat content enters as a
second measurement of T_d through O = C_d T_d. The state vector is

    (T_m, T_d, N, A, beta, 1)

and the observation vector stacks K GMST series, J ocean temperature series,
J OHC series, and one total forcing series, in that order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ssm.types import SystemMatrices

#: Lower bound applied to every variance parameter.
VARIANCE_FLOOR = 1e-12

#: Approximate-diffuse initial variance for nonstationary states.
BIG_K = 1e6

# State ordering.
STATE_TM, STATE_TD, STATE_N, STATE_A, STATE_TREND, STATE_CONST = range(6)
N_STATES = 6


@dataclass
class PhysicalParams:
    """Physical parameters of the two-layer model.

    lam : climate feedback (W m^-2 K^-1)
    gamma : mixed-to-deep heat transfer coefficient (W m^-2 K^-1)
    c_m : mixed-layer heat capacity (W yr m^-2 K^-1)
    c_d : deep-ocean heat capacity (W yr m^-2 K^-1)
    """

    lam: float
    gamma: float
    c_m: float
    c_d: float

    def is_valid(self) -> bool:
        lam, gamma, c_m, c_d = self.lam, self.gamma, self.c_m, self.c_d
        return bool(
            np.isfinite(lam)
            and np.isfinite(gamma)
            and np.isfinite(c_m)
            and np.isfinite(c_d)
            and lam > 0
            and gamma > 0
            and c_m > 0
            and c_d > 0
            and c_m < c_d
            and 0.0 < (lam + gamma) / c_m < 2.0
            and 0.0 < gamma / c_d < 2.0
        )

    def validate(self) -> None:
        if not all(
            np.isfinite(v) and v > 0 for v in (self.lam, self.gamma, self.c_m, self.c_d)
        ):
            raise ValueError("physical parameters must be finite and strictly positive")
        if not self.c_m < self.c_d:
            raise ValueError("mixed-layer heat capacity must be below deep-ocean value")
        if not 0.0 < (self.lam + self.gamma) / self.c_m < 2.0:
            raise ValueError("(lambda + gamma) / c_m outside the stable region (0, 2)")
        if not 0.0 < self.gamma / self.c_d < 2.0:
            raise ValueError("gamma / c_d outside the stable region (0, 2)")

    def temperature_block(self) -> np.ndarray:
        """2x2 transition of (T_m, T_d) at the annual step."""
        return np.array(
            [
                [1.0 - (self.lam + self.gamma) / self.c_m, self.gamma / self.c_m],
                [self.gamma / self.c_d, 1.0 - self.gamma / self.c_d],
            ]
        )

    @property
    def forcing_coefficient(self) -> float:
        """Coefficient 1/C_m multiplying total forcing in the T_m equation."""
        return 1.0 / self.c_m


@dataclass
class NoiseParams:
    """Disturbance and measurement-error parameters.

    State disturbance variances cover T_m, T_d, A, and the trend. Measurement
    error variances cover each GMST series, each ocean temperature series,
    each OHC series, and total forcing. ``rho[j]`` correlates the errors of
    ocean pair j; ``mu_td[j]`` is the baseline-offset constant of pair j
    (entering the measurement matrix through the constant state).
    """

    var_eta_tm: float
    var_eta_td: float
    var_eta_a: float
    var_eta_beta: float
    var_eps_gmst: tuple[float, ...]
    var_eps_td: tuple[float, ...]
    var_eps_ohc: tuple[float, ...]
    var_eps_forcing: float
    rho: tuple[float, ...]
    mu_td: tuple[float, ...]

    def __post_init__(self) -> None:
        self.var_eps_gmst = tuple(float(v) for v in self.var_eps_gmst)
        self.var_eps_td = tuple(float(v) for v in self.var_eps_td)
        self.var_eps_ohc = tuple(float(v) for v in self.var_eps_ohc)
        self.rho = tuple(float(v) for v in self.rho)
        self.mu_td = tuple(float(v) for v in self.mu_td)
        J = len(self.var_eps_td)
        if not (len(self.var_eps_ohc) == len(self.rho) == len(self.mu_td) == J):
            raise ValueError("ocean-pair parameter tuples must share one length")

    def _variances(self) -> tuple[float, ...]:
        return (
            self.var_eta_tm,
            self.var_eta_td,
            self.var_eta_a,
            self.var_eta_beta,
            *self.var_eps_gmst,
            *self.var_eps_td,
            *self.var_eps_ohc,
            self.var_eps_forcing,
        )

    def is_valid(self) -> bool:
        floor = VARIANCE_FLOOR * (1 - 1e-9)
        return (
            all(np.isfinite(v) and v >= floor for v in self._variances())
            and all(np.isfinite(r) and abs(r) < 1.0 for r in self.rho)
            and all(np.isfinite(mu) for mu in self.mu_td)
        )

    def validate(self) -> None:
        if not all(np.isfinite(v) and v >= VARIANCE_FLOOR * (1 - 1e-9) for v in self._variances()):
            raise ValueError("variances must be finite and at or above the floor")
        if not all(np.isfinite(r) and abs(r) < 1.0 for r in self.rho):
            raise ValueError("ocean-pair error correlations must lie in (-1, 1)")
        if not all(np.isfinite(mu) for mu in self.mu_td):
            raise ValueError("baseline constants must be finite")


@dataclass
class MeasurementConfig:
    """Measurement layout: K GMST series and J ocean temperature/OHC pairs.

    ``f2x`` is the forcing of a CO2 doubling; its standard error defaults to
    the Gaussian equivalent of a 5-95% half-width of 0.47.
    """

    n_gmst: int
    n_ocean_pairs: int
    f2x: float = 3.93
    f2x_se: float = 0.47 / 1.645

    def __post_init__(self) -> None:
        if self.n_gmst < 1:
            raise ValueError("need at least one GMST series")
        if self.n_ocean_pairs < 0:
            raise ValueError("negative number of ocean pairs")
        if not self.f2x > 0:
            raise ValueError("f2x must be positive")

    @property
    def n_obs(self) -> int:
        return self.n_gmst + 2 * self.n_ocean_pairs + 1


@dataclass
class EbmParamVector:
    """Full parameter set, with transforms to an unconstrained vector.

    The canonical flat ordering is: lambda, gamma, c_m, c_d, the four state
    disturbance variances, GMST measurement variances, ocean temperature
    variances, OHC variances, the forcing variance, the pair correlations,
    and the pair constants. Positive parameters map through log, correlations
    through atanh, constants through the identity.
    """

    physical: PhysicalParams
    noise: NoiseParams

    @property
    def n_gmst(self) -> int:
        return len(self.noise.var_eps_gmst)

    @property
    def n_ocean_pairs(self) -> int:
        return len(self.noise.var_eps_td)

    def validate(self) -> None:
        self.physical.validate()
        self.noise.validate()

    def is_valid(self) -> bool:
        return self.physical.is_valid() and self.noise.is_valid()

    def to_array(self) -> np.ndarray:
        no = self.noise
        ph = self.physical
        return np.array(
            [
                ph.lam,
                ph.gamma,
                ph.c_m,
                ph.c_d,
                no.var_eta_tm,
                no.var_eta_td,
                no.var_eta_a,
                no.var_eta_beta,
                *no.var_eps_gmst,
                *no.var_eps_td,
                *no.var_eps_ohc,
                no.var_eps_forcing,
                *no.rho,
                *no.mu_td,
            ]
        )

    @classmethod
    def from_array(cls, values: np.ndarray, n_gmst: int, n_ocean_pairs: int) -> "EbmParamVector":
        values = np.asarray(values, dtype=float).ravel()
        K, J = n_gmst, n_ocean_pairs
        expected = 9 + K + 4 * J
        if values.size != expected:
            raise ValueError(f"expected {expected} parameters, got {values.size}")
        pos = 8
        gmst = values[pos : pos + K]
        pos += K
        td = values[pos : pos + J]
        pos += J
        ohc = values[pos : pos + J]
        pos += J
        var_f = values[pos]
        pos += 1
        rho = values[pos : pos + J]
        pos += J
        mu = values[pos : pos + J]
        return cls(
            physical=PhysicalParams(*values[:4]),
            noise=NoiseParams(
                var_eta_tm=values[4],
                var_eta_td=values[5],
                var_eta_a=values[6],
                var_eta_beta=values[7],
                var_eps_gmst=tuple(gmst),
                var_eps_td=tuple(td),
                var_eps_ohc=tuple(ohc),
                var_eps_forcing=var_f,
                rho=tuple(rho),
                mu_td=tuple(mu),
            ),
        )

    def variances_at_floor(self, rel_tol: float = 1e-6) -> list[str]:
        """Names of variance parameters sitting at the lower bound."""
        names = param_names(self.n_gmst, self.n_ocean_pairs)
        values = self.to_array()
        out = []
        for name, value in zip(names, values):
            if name.startswith("var_") and value <= VARIANCE_FLOOR * (1 + rel_tol):
                out.append(name)
        return out


def param_names(n_gmst: int, n_ocean_pairs: int) -> list[str]:
    """Flat parameter names in canonical order."""
    K, J = n_gmst, n_ocean_pairs
    names = ["lambda", "gamma", "c_m", "c_d"]
    names += ["var_eta_tm", "var_eta_td", "var_eta_a", "var_eta_beta"]
    names += [f"var_eps_gmst_{k + 1}" for k in range(K)]
    names += [f"var_eps_td_{j + 1}" for j in range(J)]
    names += [f"var_eps_ohc_{j + 1}" for j in range(J)]
    names += ["var_eps_forcing"]
    names += [f"rho_{j + 1}" for j in range(J)]
    names += [f"mu_td_{j + 1}" for j in range(J)]
    return names


def _layout(n_gmst: int, n_ocean_pairs: int) -> tuple[int, int, int]:
    """(end of log-mapped block, end of atanh block, total length)."""
    K, J = n_gmst, n_ocean_pairs
    n_log = 9 + K + 2 * J
    return n_log, n_log + J, n_log + 2 * J


def transform(theta: EbmParamVector) -> np.ndarray:
    """Map a parameter vector to its unconstrained representation."""
    values = theta.to_array()
    n_log, n_rho, _ = _layout(theta.n_gmst, theta.n_ocean_pairs)
    out = values.copy()
    positive = values[:n_log].copy()
    positive[4:] = np.maximum(positive[4:], VARIANCE_FLOOR)
    if np.any(positive <= 0):
        raise ValueError("positive parameter required for log transform")
    out[:n_log] = np.log(positive)
    if np.any(np.abs(values[n_log:n_rho]) >= 1.0):
        raise ValueError("correlation outside (-1, 1)")
    out[n_log:n_rho] = np.arctanh(values[n_log:n_rho])
    return out


def untransform(values: np.ndarray, n_gmst: int, n_ocean_pairs: int) -> EbmParamVector:
    """Map an unconstrained vector back to a parameter vector.

    Variances are clamped at the floor; any real input produces a structurally
    valid vector (cross-parameter constraints are checked separately).
    """
    values = np.asarray(values, dtype=float).ravel()
    n_log, n_rho, total = _layout(n_gmst, n_ocean_pairs)
    if values.size != total:
        raise ValueError(f"expected {total} coordinates, got {values.size}")
    out = values.copy()
    out[:n_log] = np.exp(values[:n_log])
    out[4:n_log] = np.maximum(out[4:n_log], VARIANCE_FLOOR)
    out[n_log:n_rho] = np.tanh(values[n_log:n_rho])
    return EbmParamVector.from_array(out, n_gmst, n_ocean_pairs)


def transform_jacobian_diag(theta: EbmParamVector) -> np.ndarray:
    """Diagonal of d(theta)/d(unconstrained) evaluated at theta."""
    values = theta.to_array()
    n_log, n_rho, _ = _layout(theta.n_gmst, theta.n_ocean_pairs)
    out = np.ones_like(values)
    out[:n_log] = values[:n_log]
    out[n_log:n_rho] = 1.0 - values[n_log:n_rho] ** 2
    return out


def _series_arrays(series) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(series, "years") and hasattr(series, "values"):
        return np.asarray(series.years, dtype=int), np.asarray(series.values, dtype=float)
    years, values = series
    return np.asarray(years, dtype=int), np.asarray(values, dtype=float)


def build_system(
    params: EbmParamVector,
    config: MeasurementConfig,
    natural_forcing,
    sample_years: np.ndarray | None = None,
) -> SystemMatrices:
    """Assemble the system matrices for a given parameter vector.

    ``natural_forcing`` is a year-indexed series (anything with ``years`` and
    ``values`` attributes, or a (years, values) pair) that must cover
    ``sample_years``; it enters the transition through the constant state,
    one value per step. When ``sample_years`` is omitted the natural-forcing
    years define the sample.
    """
    params.validate()
    if params.n_gmst != config.n_gmst or params.n_ocean_pairs != config.n_ocean_pairs:
        raise ValueError("parameter vector and measurement config disagree on K or J")

    n_years, n_values = _series_arrays(natural_forcing)
    if sample_years is None:
        sample_years = n_years
    sample_years = np.asarray(sample_years, dtype=int).ravel()
    pos = np.searchsorted(n_years, sample_years)
    if (
        pos.max() >= n_years.size
        or not np.array_equal(n_years[pos], sample_years)
        or np.any(np.isnan(n_values[pos]))
    ):
        raise ValueError("natural forcing does not cover the sample years")
    natural = n_values[pos]

    ph, no = params.physical, params.noise
    K, J = config.n_gmst, config.n_ocean_pairs

    T = np.zeros((N_STATES, N_STATES))
    T[np.ix_([STATE_TM, STATE_TD], [STATE_TM, STATE_TD])] = ph.temperature_block()
    T[STATE_TM, STATE_N] = 1.0 / ph.c_m
    T[STATE_TM, STATE_A] = 1.0 / ph.c_m
    T[STATE_A, STATE_A] = 1.0
    T[STATE_A, STATE_TREND] = 1.0
    T[STATE_TREND, STATE_TREND] = 1.0
    T[STATE_CONST, STATE_CONST] = 1.0
    # the (N, const) entry is the per-step slot carrying next year's value

    Q = np.zeros((N_STATES, N_STATES))
    Q[STATE_TM, STATE_TM] = no.var_eta_tm
    Q[STATE_TD, STATE_TD] = no.var_eta_td
    Q[STATE_A, STATE_A] = no.var_eta_a
    Q[STATE_TREND, STATE_TREND] = no.var_eta_beta

    p = config.n_obs
    Z = np.zeros((p, N_STATES))
    for k in range(K):
        Z[k, STATE_TM] = 1.0
    for j in range(J):
        Z[K + j, STATE_TD] = 1.0
        Z[K + j, STATE_CONST] = no.mu_td[j]
        Z[K + J + j, STATE_TD] = ph.c_d
        Z[K + J + j, STATE_CONST] = ph.c_d * no.mu_td[j]
    Z[p - 1, STATE_N] = 1.0
    Z[p - 1, STATE_A] = 1.0

    H = np.zeros((p, p))
    for k in range(K):
        H[k, k] = no.var_eps_gmst[k]
    for j in range(J):
        H[K + j, K + j] = no.var_eps_td[j]
        H[K + J + j, K + J + j] = no.var_eps_ohc[j]
        cov = no.rho[j] * np.sqrt(no.var_eps_td[j] * no.var_eps_ohc[j])
        H[K + j, K + J + j] = cov
        H[K + J + j, K + j] = cov
    H[p - 1, p - 1] = no.var_eps_forcing

    a1 = np.zeros(N_STATES)
    a1[STATE_N] = natural[0]
    a1[STATE_CONST] = 1.0
    P1 = np.zeros((N_STATES, N_STATES))
    for i in (STATE_TM, STATE_TD, STATE_A, STATE_TREND):
        P1[i, i] = BIG_K

    # construction guarantees PSD covariances for valid parameters, so the
    # eigenvalue re-check is skipped on this hot path
    return SystemMatrices(
        transition=T,
        measurement=Z,
        state_cov=Q,
        obs_cov=H,
        init_mean=a1,
        init_cov=P1,
        slot_index=(STATE_N, STATE_CONST),
        slot_values=natural[1:] if natural.size > 1 else np.empty(0),
        check_psd=False,
    )


def ecs(lam: float, f2x: float) -> float:
    """Equilibrium climate sensitivity: steady-state warming per CO2 doubling."""
    if not lam > 0:
        raise ValueError("climate feedback must be positive")
    return f2x / lam


def ecs_std_error(lam: float, se_lam: float, f2x: float, se_f2x: float) -> float:
    """Delta-method standard error of ECS, treating the two inputs as
    independent estimates."""
    if not lam > 0:
        raise ValueError("climate feedback must be positive")
    if se_lam < 0 or se_f2x < 0:
        raise ValueError("standard errors must be nonnegative")
    return float(np.hypot(se_f2x / lam, f2x * se_lam / lam**2))
