"""Maximum-likelihood estimation of the model parameters.

The log-likelihood is maximized by Nelder-Mead on the unconstrained
parameter transform, with a configurable number of starts: the first from
the supplied (or heuristic) initial values, later ones jittered around the
best point found so far. Standard errors come from the inverse negative
Hessian of the log-likelihood, propagated to the original scale by the
delta method.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .model import (
    EbmParamVector,
    MeasurementConfig,
    NoiseParams,
    PhysicalParams,
    VARIANCE_FLOOR,
    build_system,
    ecs,
    ecs_std_error,
    param_names,
    transform,
    transform_jacobian_diag,
    untransform,
)
from .ssm import FilterNumericalError, ObservationPanel
from .ssm.filter import loglik

PHYSICAL_NAMES = ("lambda", "gamma", "c_m", "c_d")


@dataclass
class FitOptions:
    """Optimizer policy.

    A preliminary simplex run over the noise coordinates alone (physical
    parameters frozen at their initial values, ``stage1_evals`` budget)
    positions the variance parameters before the full-vector optimization;
    without it the full simplex reliably falls into a degenerate
    zero-feedback valley on some draws. ``restarts`` counts total
    full-vector starts (first from the staged point, the rest jittered
    around the best point so far). Convergence per start requires the
    simplex function spread to fall below ``fatol``.
    """

    restarts: int = 5
    max_evals: int = 20_000
    stage1_evals: int = 4_000
    fatol: float = 1e-8
    xatol: float = 1e-6
    simplex_step: float = 0.25
    jitter: float = 0.3
    seed: int = 0
    compute_se: bool = True


@dataclass
class Convergence:
    converged: bool
    status: str
    iterations: int
    evaluations: int
    restarts_used: int


@dataclass
class FitResult:
    """Estimates with asymptotic uncertainty.

    ``se`` is on the original parameter scale, ordered like
    ``param_names(K, J)``. ``vcov_physical`` is the covariance of
    (lambda, gamma, c_m, c_d); it is eigenvalue-clipped at zero when needed
    (recorded in ``flags``). ``cv`` maps each physical parameter and ECS to
    its coefficient of variation.
    """

    theta_hat: EbmParamVector
    loglik: float
    se: np.ndarray | None
    vcov_physical: np.ndarray | None
    cv: dict[str, float] | None
    ecs_hat: float
    ecs_se: float | None
    convergence: Convergence
    config: MeasurementConfig
    flags: dict = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return param_names(self.config.n_gmst, self.config.n_ocean_pairs)


def make_loglik_fn(
    panel: ObservationPanel,
    config: MeasurementConfig,
    natural_forcing,
) -> Callable[[np.ndarray], float]:
    """Log-likelihood over the unconstrained parameter space.

    Invalid parameter regions and filter failures evaluate to -inf, which
    the simplex treats as an ordinary bad value.
    """
    K, J = config.n_gmst, config.n_ocean_pairs

    def fn(u: np.ndarray) -> float:
        try:
            theta = untransform(u, K, J)
        except (ValueError, OverflowError):
            return -np.inf
        if not theta.is_valid():
            return -np.inf
        try:
            model = build_system(theta, config, natural_forcing, panel.years)
            return loglik(model, panel)
        except (FilterNumericalError, ValueError, FloatingPointError):
            return -np.inf

    return fn


def default_init(panel: ObservationPanel, config: MeasurementConfig) -> EbmParamVector:
    """Moment-based starting values.

    Physical parameters start at round magnitudes; state variances at half
    the variance of the differenced first series of the matching kind;
    measurement variances at a quarter of each series' differenced variance;
    pair correlations at 0.5; pair constants at each ocean series' mean
    offset from the first GMST series.
    """

    def diff_var(row: np.ndarray, fallback: float = 0.01) -> float:
        d = np.diff(row)
        d = d[np.isfinite(d)]
        if d.size < 2 or not np.isfinite(d.var()) or d.var() <= 0:
            return fallback
        return float(d.var())

    gmst_rows = panel.rows_of_kind("gmst")
    temp_rows = panel.rows_of_kind("ocean_temp")
    ohc_rows = panel.rows_of_kind("ohc")
    forcing_rows = panel.rows_of_kind("forcing_total")
    if len(gmst_rows) != config.n_gmst or len(temp_rows) != config.n_ocean_pairs:
        raise ValueError("panel layout does not match the measurement config")

    dv_gmst = diff_var(panel.values[gmst_rows[0]])
    dv_temp = diff_var(panel.values[temp_rows[0]]) if temp_rows else dv_gmst
    dv_forcing = diff_var(panel.values[forcing_rows[0]]) if forcing_rows else dv_gmst

    def floor(v: float) -> float:
        return max(v, VARIANCE_FLOOR)

    gmst_mean = np.nanmean(panel.values[gmst_rows[0]])
    mu = tuple(
        float(np.nanmean(panel.values[r]) - gmst_mean) for r in temp_rows
    )
    return EbmParamVector(
        physical=PhysicalParams(lam=1.0, gamma=1.0, c_m=10.0, c_d=100.0),
        noise=NoiseParams(
            var_eta_tm=floor(0.5 * dv_gmst),
            var_eta_td=floor(0.5 * dv_temp),
            var_eta_a=floor(0.5 * dv_forcing),
            var_eta_beta=floor(0.5 * dv_forcing),
            var_eps_gmst=tuple(floor(0.25 * diff_var(panel.values[r])) for r in gmst_rows),
            var_eps_td=tuple(floor(0.25 * diff_var(panel.values[r])) for r in temp_rows),
            var_eps_ohc=tuple(floor(0.25 * diff_var(panel.values[r])) for r in ohc_rows),
            var_eps_forcing=floor(0.25 * dv_forcing),
            rho=(0.5,) * config.n_ocean_pairs,
            mu_td=mu,
        ),
    )


def _run_nelder_mead(neg_fn, u0: np.ndarray, options: FitOptions):
    n = u0.size
    simplex = np.tile(u0, (n + 1, 1))
    for i in range(n):
        simplex[i + 1, i] += options.simplex_step
    return minimize(
        neg_fn,
        u0,
        method="Nelder-Mead",
        options=dict(
            maxfev=options.max_evals,
            fatol=options.fatol,
            xatol=options.xatol,
            adaptive=True,
            initial_simplex=simplex,
        ),
    )


def fit_mle(
    panel: ObservationPanel,
    config: MeasurementConfig,
    natural_forcing,
    init: EbmParamVector | None = None,
    options: FitOptions | None = None,
) -> FitResult:
    """Fit the model by maximum likelihood.

    ``natural_forcing`` is the exogenous series (years, values) covering the
    panel years. Deterministic for a given ``options.seed``.
    """
    options = options or FitOptions()
    if init is None:
        init = default_init(panel, config)
    init.validate()
    ll_fn = make_loglik_fn(panel, config, natural_forcing)

    def neg_fn(u):
        value = ll_fn(u)
        return -value if np.isfinite(value) else np.inf

    rng = np.random.default_rng(options.seed)
    u_best = transform(init)
    total_iter = 0
    total_fev = 0
    if options.stage1_evals > 0 and u_best.size > 4:
        fixed = u_best[:4].copy()

        def neg_noise(v):
            value = ll_fn(np.concatenate([fixed, v]))
            return -value if np.isfinite(value) else np.inf

        stage1 = _run_nelder_mead(
            neg_noise, u_best[4:], dataclasses.replace(options, max_evals=options.stage1_evals)
        )
        total_iter += stage1.nit
        total_fev += stage1.nfev
        u_best = np.concatenate([fixed, stage1.x])
    f_best = np.inf
    converged = False
    starts = max(1, options.restarts)
    for start in range(starts):
        if start == 0:
            u0 = u_best
        else:
            u0 = u_best + options.jitter * rng.standard_normal(u_best.size)
        res = _run_nelder_mead(neg_fn, u0, options)
        total_iter += res.nit
        total_fev += res.nfev
        if res.fun < f_best:
            f_best = res.fun
            u_best = res.x
            converged = bool(res.success)

    if not np.isfinite(f_best):
        raise RuntimeError("optimizer failed to find a finite log-likelihood")

    theta_hat = untransform(u_best, config.n_gmst, config.n_ocean_pairs)
    ll_hat = -f_best
    flags: dict = {}
    se = vcov_physical = cv = ecs_se_val = None
    if options.compute_se:
        hess = numerical_hessian(ll_fn, u_best)
        se, vcov_full, se_flags = standard_errors(hess, transform_jacobian_diag(theta_hat))
        flags.update(se_flags)
        vcov_physical, clipped = _clip_psd(vcov_full[:4, :4])
        if clipped:
            flags["vcov_physical_clipped"] = True
        estimates = theta_hat.to_array()
        cv = {
            name: (se[i] / abs(estimates[i]) if estimates[i] != 0 else np.nan)
            for i, name in enumerate(PHYSICAL_NAMES)
        }
        ecs_se_val = ecs_std_error(theta_hat.physical.lam, se[0], config.f2x, config.f2x_se)
        cv["ecs"] = ecs_se_val / ecs(theta_hat.physical.lam, config.f2x)
    at_floor = theta_hat.variances_at_floor()
    if at_floor:
        flags["variances_at_floor"] = at_floor

    return FitResult(
        theta_hat=theta_hat,
        loglik=ll_hat,
        se=se,
        vcov_physical=vcov_physical,
        cv=cv,
        ecs_hat=ecs(theta_hat.physical.lam, config.f2x),
        ecs_se=ecs_se_val,
        convergence=Convergence(
            converged=converged,
            status="converged" if converged else "max_evals",
            iterations=total_iter,
            evaluations=total_fev,
            restarts_used=starts,
        ),
        config=config,
        flags=flags,
    )


def numerical_hessian(
    objective: Callable[[np.ndarray], float],
    x: np.ndarray,
    step: np.ndarray | float | None = None,
) -> np.ndarray:
    """Central-difference Hessian, symmetrized.

    The default step is 1e-4 (1 + |x_i|) per coordinate. If the objective is
    not finite at a stencil point the step for the coordinates involved is
    halved once; a second failure raises.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if step is None:
        h = 1e-4 * (1.0 + np.abs(x))
    else:
        h = np.broadcast_to(np.asarray(step, dtype=float), (n,)).copy()

    def eval_at(point: np.ndarray, coords: tuple[int, ...]) -> float:
        value = objective(point)
        if np.isfinite(value):
            return value
        # shrink the steps of the coordinates involved once and retry
        for c in coords:
            h[c] *= 0.5
        retry = x.copy()
        for c in coords:
            retry[c] = x[c] + np.sign(point[c] - x[c]) * h[c]
        value = objective(retry)
        if not np.isfinite(value):
            raise RuntimeError(f"objective not finite near coordinates {coords}")
        return value

    f0 = objective(x)
    if not np.isfinite(f0):
        raise RuntimeError("objective not finite at the expansion point")

    hessian = np.empty((n, n))
    for i in range(n):
        xp, xm = x.copy(), x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        fp = eval_at(xp, (i,))
        fm = eval_at(xm, (i,))
        hessian[i, i] = (fp - 2.0 * f0 + fm) / h[i] ** 2
    for i in range(n):
        for j in range(i + 1, n):
            xpp, xpm, xmp, xmm = x.copy(), x.copy(), x.copy(), x.copy()
            xpp[[i, j]] += [h[i], h[j]]
            xpm[i] += h[i]
            xpm[j] -= h[j]
            xmp[i] -= h[i]
            xmp[j] += h[j]
            xmm[[i, j]] -= [h[i], h[j]]
            value = (
                eval_at(xpp, (i, j))
                - eval_at(xpm, (i, j))
                - eval_at(xmp, (i, j))
                + eval_at(xmm, (i, j))
            ) / (4.0 * h[i] * h[j])
            hessian[i, j] = value
            hessian[j, i] = value
    return 0.5 * (hessian + hessian.T)


def standard_errors(
    hessian: np.ndarray, transform_jacobian: np.ndarray
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Delta-method standard errors from an unconstrained-scale Hessian.

    Inverts the negative Hessian (pseudo-inverse fallback, flagged), maps to
    the original scale with the diagonal transform Jacobian, and returns
    (se, vcov_original, flags). Negative propagated variances are flagged
    and reported as NaN standard errors.
    """
    info = -np.asarray(hessian, dtype=float)
    flags: dict = {}
    try:
        vcov_u = np.linalg.inv(info)
        if not np.all(np.isfinite(vcov_u)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        vcov_u = np.linalg.pinv(info, hermitian=True)
        flags["pseudo_inverse"] = True
    jac = np.asarray(transform_jacobian, dtype=float).ravel()
    vcov = vcov_u * np.outer(jac, jac)
    diag = np.diag(vcov).copy()
    negative = np.nonzero(diag < 0)[0]
    if negative.size:
        flags["negative_variance_indices"] = negative.tolist()
        diag[negative] = np.nan
    return np.sqrt(diag), vcov, flags


def coefficient_of_variation(fit: FitResult) -> dict[str, float]:
    """Standard error divided by the absolute estimate, per physical
    parameter plus ECS (NaN marks an undefined ratio)."""
    if fit.se is None:
        raise ValueError("fit was run without standard errors")
    estimates = fit.theta_hat.to_array()
    out = {}
    for i, name in enumerate(PHYSICAL_NAMES):
        out[name] = fit.se[i] / abs(estimates[i]) if estimates[i] != 0 else np.nan
    out["ecs"] = fit.ecs_se / fit.ecs_hat if fit.ecs_hat != 0 else np.nan
    return out


def _clip_psd(matrix: np.ndarray) -> tuple[np.ndarray, bool]:
    """Eigenvalue-clip a symmetric matrix at zero; report whether clipping
    changed anything."""
    sym = 0.5 * (matrix + matrix.T)
    w, V = np.linalg.eigh(sym)
    if w.min() >= 0:
        return sym, False
    clipped = (V * np.clip(w, 0.0, None)) @ V.T
    return 0.5 * (clipped + clipped.T), True
