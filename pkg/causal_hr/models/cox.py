import logging
from typing import List, NamedTuple, Optional, Union

import numpy as np
from scipy import stats

from causal_hr.core.exceptions import (
    ConvergenceError, InsufficientEventsError, NoEventsError, SeparationError, SingularMatrixError,
)
from causal_hr.models.frailty import theta_to_tau, varphi
from causal_hr.models.survival import WeightsLike, canonical_order, resolve_weights
from causal_hr.schemas.cox import CoxFit, CoxTerms, PHCovariateTest, PHTestResult, PHTransform
from causal_hr.schemas.frailty import FrailtyFamily, FrailtySpec
from causal_hr.schemas.sample import StepFunction, SurvivalSample, TimeGrid
from causal_hr.schemas.sensitivity import CurveFlag, EstimationMethod, SensitivityCurve

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 50
SCORE_TOLERANCE = 1e-9
LOGLIK_RTOL = 1e-12
SEPARATION_BOUND = 50.0
MONOTONE_BETA = 10.0
MAX_HALVINGS = 30
CONDITION_LIMIT = 1e12


class _Design(NamedTuple):
    """Model inputs in canonical row order."""
    X: np.ndarray
    time: np.ndarray
    event: np.ndarray
    weights: np.ndarray
    inverse: np.ndarray
    times: np.ndarray


class _Gradients(NamedTuple):
    loglik: float
    score: np.ndarray
    information: np.ndarray


def _as_terms(terms: Union[CoxTerms, List[str], None]) -> CoxTerms:
    if terms is None:
        return CoxTerms()
    if isinstance(terms, CoxTerms):
        return terms
    names = list(terms)
    return CoxTerms(treatment="treatment" in names, covariates=[n for n in names if n != "treatment"])


def design_matrix(sample: SurvivalSample, terms: CoxTerms) -> np.ndarray:
    """Columns of the linear predictor, in ``terms.names`` order."""
    columns = []
    if terms.treatment:
        columns.append(sample.treatment.astype(float))
    for name in terms.covariates:
        if name not in sample.covariate_names:
            raise ValueError(f"unknown covariate '{name}'")
        columns.append(sample.covariates[:, sample.covariate_names.index(name)])
    return np.column_stack(columns)


def _design(sample: SurvivalSample, terms: CoxTerms, weights: np.ndarray) -> _Design:
    order = canonical_order(sample, weights)
    time = sample.time[order]
    times, inverse = np.unique(time, return_inverse=True)
    return _Design(
        X=design_matrix(sample, terms)[order],
        time=time,
        event=sample.event[order].astype(float),
        weights=weights[order],
        inverse=inverse,
        times=times,
    )


def _risk_sum(design: _Design, values: np.ndarray) -> np.ndarray:
    """Sum of ``values`` over the risk set at each distinct time."""
    size = design.times.shape[0]
    return np.cumsum(np.bincount(design.inverse, weights=values, minlength=size)[::-1])[::-1]


def _gradients(design: _Design, beta: np.ndarray) -> _Gradients:
    X, w, event = design.X, design.weights, design.event
    p = X.shape[1]
    size = design.times.shape[0]

    eta = X @ beta
    shift = float(eta.max())
    risk = w * np.exp(eta - shift)

    s0 = _risk_sum(design, risk)
    s1 = np.column_stack([_risk_sum(design, risk * X[:, j]) for j in range(p)])
    s2 = np.empty((size, p, p))
    for j in range(p):
        for k in range(j, p):
            s2[:, j, k] = s2[:, k, j] = _risk_sum(design, risk * X[:, j] * X[:, k])

    deaths = np.bincount(design.inverse, weights=w * event, minlength=size)
    keep = deaths > 0
    d, s0, s1, s2 = deaths[keep], s0[keep], s1[keep], s2[keep]
    mean = s1 / s0[:, None]

    loglik = float(np.sum(w * event * eta) - np.sum(d * (np.log(s0) + shift)))
    score = (w * event) @ X - d @ mean
    information = np.einsum("k,kij->ij", d, s2 / s0[:, None, None] - mean[:, :, None] * mean[:, None, :])
    return _Gradients(loglik, score, information)


def log_partial_likelihood(sample: SurvivalSample, beta, terms: Union[CoxTerms, List[str], None] = None,
                           weights: WeightsLike = None) -> float:
    """(Weighted) Breslow log partial likelihood at ``beta``."""
    terms = _as_terms(terms)
    design = _design(sample, terms, resolve_weights(sample, weights))
    return _gradients(design, np.atleast_1d(np.asarray(beta, dtype=float))).loglik


def partial_likelihood_score(sample: SurvivalSample, beta, terms: Union[CoxTerms, List[str], None] = None,
                             weights: WeightsLike = None) -> np.ndarray:
    """Gradient of the log partial likelihood at ``beta``."""
    terms = _as_terms(terms)
    design = _design(sample, terms, resolve_weights(sample, weights))
    return _gradients(design, np.atleast_1d(np.asarray(beta, dtype=float))).score


def _solve(information: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(information)) or np.linalg.cond(information) > CONDITION_LIMIT:
        raise SingularMatrixError("information matrix is singular; check that the design has full rank on the event set")
    try:
        return np.linalg.solve(information, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"information matrix is singular: {exc}") from exc


def fit_cox(sample: SurvivalSample, terms: Union[CoxTerms, List[str], None] = None,
            weights: WeightsLike = None) -> CoxFit:
    """
    Fit a (weighted) Cox model by Newton-Raphson from beta = 0.

    Ties follow Breslow. Standard errors come from the inverse observed
    information and are model-based.
    """
    terms = _as_terms(terms)
    if sample.n_events == 0:
        raise NoEventsError("no events observed")
    w = resolve_weights(sample, weights)
    design = _design(sample, terms, w)
    p = design.X.shape[1]

    beta = np.zeros(p)
    current = _gradients(design, beta)
    loglik_null = current.loglik
    trace = [{"iteration": 0, "loglik": current.loglik, "max_score": float(np.max(np.abs(current.score)))}]
    converged = float(np.max(np.abs(current.score))) < SCORE_TOLERANCE
    iteration = 0
    delta = np.zeros(p)

    while not converged and iteration < MAX_ITERATIONS:
        iteration += 1
        delta = _solve(current.information, current.score)

        step = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = beta + step * delta
            proposed = _gradients(design, candidate)
            if np.isfinite(proposed.loglik) and proposed.loglik >= current.loglik - LOGLIK_RTOL * abs(current.loglik):
                break
            step /= 2.0

        change = abs(proposed.loglik - current.loglik) / max(abs(current.loglik), np.finfo(float).tiny)
        beta, current = candidate, proposed
        max_score = float(np.max(np.abs(current.score)))
        trace.append({"iteration": iteration, "loglik": current.loglik, "max_score": max_score, "step": step})

        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            raise SeparationError("separation detected", beta=beta.tolist(), iterations=iteration)
        converged = max_score < SCORE_TOLERANCE or (change < LOGLIK_RTOL and np.max(np.abs(step * delta)) < 1e-6)

    if not converged:
        # a monotone likelihood keeps taking unit steps towards infinity
        if np.max(np.abs(beta)) > SEPARATION_BOUND / 2 and np.max(np.abs(delta)) > 0.5:
            raise SeparationError("separation detected", beta=beta.tolist(), iterations=iteration)
        raise ConvergenceError(
            f"Newton-Raphson did not converge in {MAX_ITERATIONS} iterations", trace=trace,
        )

    covariance = np.linalg.inv(current.information) if p else np.zeros((0, 0))
    beta_se = np.sqrt(np.diag(covariance))
    # the score also vanishes along a monotone likelihood; there the information collapses
    drifting = (np.abs(beta) > MONOTONE_BETA) & (beta_se > np.abs(beta))
    if drifting.any():
        raise SeparationError("separation detected", beta=beta.tolist(), beta_se=beta_se.tolist(), iterations=iteration)
    baseline = _breslow(design, beta)

    logger.info(
        f"Fitted {'weighted ' if weights is not None else ''}Cox model on {terms.names} "
        f"in {iteration} iterations: beta={np.round(beta, 6).tolist()}"
    )
    return CoxFit(
        terms=terms,
        beta=beta,
        beta_se=beta_se,
        covariance=covariance,
        baseline_cumhaz=baseline,
        loglik=current.loglik,
        loglik_null=loglik_null,
        iterations=iteration,
        n_events=sample.n_events,
        weighted=weights is not None,
    )


def _breslow(design: _Design, beta: np.ndarray) -> StepFunction:
    size = design.times.shape[0]
    risk = design.weights * np.exp(design.X @ beta)
    s0 = _risk_sum(design, risk)
    deaths = np.bincount(design.inverse, weights=design.weights * design.event, minlength=size)
    counts = np.bincount(design.inverse, weights=design.event, minlength=size)
    keep = counts > 0
    return StepFunction(jump_times=design.times[keep], increments=deaths[keep] / s0[keep])


def breslow_baseline(fit: CoxFit, sample: SurvivalSample, weights: WeightsLike = None) -> StepFunction:
    """Breslow cumulative baseline hazard at the fitted coefficients."""
    design = _design(sample, fit.terms, resolve_weights(sample, weights))
    return _breslow(design, fit.beta)


def _km_left_limit(design: _Design, at: np.ndarray) -> np.ndarray:
    """Pooled (weighted) Kaplan-Meier survival just before each time in ``at``."""
    size = design.times.shape[0]
    at_risk = _risk_sum(design, design.weights)
    deaths = np.bincount(design.inverse, weights=design.weights * design.event, minlength=size)
    counts = np.bincount(design.inverse, weights=design.event, minlength=size)
    keep = counts > 0
    levels = np.concatenate(([1.0], np.cumprod(1.0 - deaths[keep] / at_risk[keep])))
    return levels[np.searchsorted(design.times[keep], at, side="left")]


def ph_score_test(fit: CoxFit, sample: SurvivalSample, weights: WeightsLike = None,
                  transform: Union[PHTransform, str] = PHTransform.KM) -> PHTestResult:
    """
    Grambsch-Therneau test of proportional hazards.

    Scaled Schoenfeld residuals are tested for a zero slope against
    transformed event time, per term and globally. Weights are rescaled to
    mean one so that only their relative sizes matter.
    """
    transform = PHTransform(transform)
    if sample.n_events < 2:
        raise InsufficientEventsError(
            f"the proportional hazards test needs at least 2 events, got {sample.n_events}",
            n_events=sample.n_events,
        )
    w = resolve_weights(sample, weights)
    w = w / w.mean()
    design = _design(sample, fit.terms, w)
    p = design.X.shape[1]

    variance = np.linalg.inv(_gradients(design, fit.beta).information)

    risk = design.weights * np.exp(design.X @ fit.beta)
    s0 = _risk_sum(design, risk)
    s1 = np.column_stack([_risk_sum(design, risk * design.X[:, j]) for j in range(p)])
    mean = s1 / s0[:, None]

    events = np.flatnonzero(design.event > 0)
    events = events[np.argsort(design.time[events], kind="stable")]
    residuals = (design.X[events] - mean[design.inverse[events]]) * design.weights[events, None]
    n_dead = float(np.sum(design.weights[events]))

    event_times = design.time[events]
    if transform is PHTransform.KM:
        g = 1.0 - _km_left_limit(design, event_times)
    else:
        g = event_times
    xx = g - g.mean()
    sxx = float(np.sum(xx * xx))
    if not sxx > 0:
        raise SingularMatrixError("singular residual covariance: transformed event times are constant")

    scaled = residuals @ variance * n_dead
    per_term: List[PHCovariateTest] = []
    for j, name in enumerate(fit.terms.names):
        test = float(xx @ scaled[:, j])
        z = test ** 2 / (variance[j, j] * n_dead * sxx)
        column = scaled[:, j]
        rho = float(np.corrcoef(xx, column)[0, 1]) if np.std(column) > 0 else 0.0
        per_term.append(PHCovariateTest(term=name, rho=rho, statistic=z, p_value=float(stats.chi2.sf(z, df=1))))

    u = xx @ residuals
    statistic = float(u @ variance @ u) * n_dead / sxx
    statistic = max(statistic, 0.0)
    result = PHTestResult(
        statistic=statistic,
        df=p,
        p_value=float(stats.chi2.sf(statistic, df=p)),
        transform=transform,
        per_covariate=per_term,
        weighted=weights is not None,
        n_events=int(events.shape[0]),
    )
    logger.info(f"PH score test ({transform.value}): chi2={statistic:.4f}, df={p}, p={result.p_value:.4g}")
    return result


def cox_hrc(fit: CoxFit, spec: FrailtySpec, grid: TimeGrid, tau: Optional[float] = None) -> SensitivityCurve:
    """
    Causal hazard ratio implied by a treatment-only (marginal) Cox fit.

    The Gamma family uses its closed form; the other families apply the
    generic multiplier to exp(beta) * Lambda0 and Lambda0.
    """
    if not fit.terms.treatment_only:
        raise ValueError("cox_hrc requires a treatment-only (marginal) Cox model")
    beta = float(fit.beta[0])
    hr = np.exp(beta)
    lambda0 = np.asarray(fit.baseline_cumhaz(grid.points), dtype=float)

    flags = [CurveFlag.OK] * grid.count
    if spec.family is FrailtyFamily.GAMMA:
        estimate = hr * np.exp(spec.theta * lambda0 * (hr - 1.0))
    elif spec.family is FrailtyFamily.INVERSE_GAUSSIAN:
        estimate = hr * varphi(spec, lambda0 * hr, lambda0)
    else:
        estimate = np.full(grid.count, np.nan)
        positive = lambda0 > 0
        if positive.any():
            estimate[positive] = hr * varphi(spec, lambda0[positive] * hr, lambda0[positive])
        flags = [CurveFlag.OK if ok else CurveFlag.UNAVAILABLE for ok in positive]

    estimate = np.asarray(estimate, dtype=float)
    flags = [
        CurveFlag.UNSTABLE if f is CurveFlag.OK and not (np.isfinite(v) and v > 0) else f
        for f, v in zip(flags, estimate)
    ]
    return SensitivityCurve(
        family=spec.family,
        tau=theta_to_tau(spec) if tau is None else tau,
        theta=spec.theta,
        method=EstimationMethod.COX,
        grid=grid,
        estimate=estimate,
        flags=flags,
    )
