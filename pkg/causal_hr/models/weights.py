import logging
from typing import Optional

import numpy as np
import pandas as pd
from scipy.special import expit

from causal_hr.core.config import settings
from causal_hr.core.exceptions import EmptyArmError, PropensityError, SingularMatrixError
from causal_hr.models.survival import canonical_order
from causal_hr.schemas.sample import SurvivalSample
from causal_hr.schemas.sensitivity import WeightingSpec
from causal_hr.schemas.weights import BalanceRow, PropensityModel, WeightVector

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 100
SCORE_TOLERANCE = 1e-9
SEPARATION_BOUND = 30.0


def _propensity_design(sample: SurvivalSample) -> np.ndarray:
    return np.column_stack([np.ones(sample.n), sample.covariates])


def fit_logistic(sample: SurvivalSample) -> PropensityModel:
    """
    Main-effects logistic model of treatment on the covariates, fitted by
    iteratively reweighted least squares.
    """
    n1 = sample.arm_size(1)
    if n1 == 0 or n1 == sample.n:
        raise EmptyArmError("empty treatment arm", arm=0 if n1 else 1)
    treated_fraction = n1 / sample.n

    if sample.n_covariates == 0:
        # closed form: the intercept is the empirical log-odds
        intercept = np.log(treated_fraction / (1.0 - treated_fraction))
        se = np.sqrt(1.0 / (sample.n * treated_fraction * (1.0 - treated_fraction)))
        return PropensityModel(
            coefficients=[intercept],
            standard_errors=[se],
            covariance=[[se * se]],
            covariate_names=[],
            converged=True,
            iterations=0,
            treated_fraction=treated_fraction,
        )

    order = canonical_order(sample, np.ones(sample.n))
    X = _propensity_design(sample)[order]
    a = sample.treatment[order].astype(float)

    beta = np.zeros(X.shape[1])
    beta[0] = np.log(treated_fraction / (1.0 - treated_fraction))
    converged = False
    iteration = 0
    for iteration in range(1, MAX_ITERATIONS + 1):
        p = expit(X @ beta)
        score = X.T @ (a - p)
        information = (X * (p * (1.0 - p))[:, None]).T @ X
        if np.max(np.abs(score)) < SCORE_TOLERANCE:
            converged = True
            break
        try:
            beta = beta + np.linalg.solve(information, score)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError(f"propensity design is rank deficient: {exc}") from exc
        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            raise PropensityError(
                "propensity separation", coefficients=beta.tolist(), iterations=iteration,
            )

    if not converged:
        raise PropensityError(
            f"propensity model did not converge in {MAX_ITERATIONS} iterations", coefficients=beta.tolist(),
        )

    covariance = np.linalg.inv(information)
    logger.info(f"Fitted propensity model in {iteration} iterations: coefficients={np.round(beta, 6).tolist()}")
    return PropensityModel(
        coefficients=beta,
        standard_errors=np.sqrt(np.diag(covariance)),
        covariance=covariance,
        covariate_names=list(sample.covariate_names),
        converged=True,
        iterations=iteration,
        treated_fraction=treated_fraction,
    )


def propensity_scores(model: PropensityModel, sample: SurvivalSample) -> np.ndarray:
    """pi(Z) for every subject; intercept-only models return the treated fraction exactly."""
    if model.intercept_only:
        return np.full(sample.n, model.treated_fraction)
    if sample.n_covariates != len(model.covariate_names):
        raise ValueError("sample covariates do not match the propensity model")
    return expit(_propensity_design(sample) @ model.coefficients)


def compute_weights(model: PropensityModel, sample: SurvivalSample, stabilized: bool = True) -> WeightVector:
    """Inverse probability of treatment weights, optionally stabilized by Pr(A = a)."""
    if not model.converged:
        raise PropensityError("propensity model did not converge")
    pi = propensity_scores(model, sample)
    if np.any(pi <= 0) or np.any(pi >= 1):
        raise PropensityError("estimated propensity score is numerically 0 or 1")

    treated = sample.treatment == 1
    p1 = sample.arm_size(1) / sample.n
    p0 = 1.0 - p1
    stable = np.where(treated, p1 / pi, p0 / (1.0 - pi))
    raw = np.where(treated, 1.0 / pi, 1.0 / (1.0 - pi))
    return WeightVector(
        weights=stable if stabilized else raw,
        arm_weights=stable,
        stabilized=stabilized,
    )


def truncate_weights(w: WeightVector, percentile: float = settings.DEFAULT_TRUNCATION_PERCENTILE) -> WeightVector:
    """Cap weights at their pooled empirical percentile (linear interpolation between order statistics)."""
    if not 0 < percentile <= 1:
        raise ValueError("percentile must lie in (0, 1]")
    threshold = float(np.quantile(w.weights, percentile, method="linear"))
    capped = np.minimum(w.weights, threshold)
    n_truncated = int(np.sum(w.weights > threshold))
    if n_truncated:
        logger.info(f"Truncated {n_truncated} weights at the {percentile:.3g} quantile ({threshold:.6g})")
    return WeightVector(
        weights=capped,
        arm_weights=capped if n_truncated else w.arm_weights,
        stabilized=w.stabilized,
        truncation_percentile=percentile,
        truncation_threshold=threshold,
        n_truncated=n_truncated,
    )


def estimate_weights(sample: SurvivalSample, spec: WeightingSpec) -> Optional[WeightVector]:
    """Propensity fit, weights and optional truncation as requested; None when weighting is off."""
    if not spec.enabled:
        return None
    model = fit_logistic(sample)
    weights = compute_weights(model, sample, stabilized=spec.stabilized)
    if spec.truncation_percentile is not None:
        weights = truncate_weights(weights, spec.truncation_percentile)
    return weights


def _smd(x: np.ndarray, treated: np.ndarray, w: np.ndarray):
    m1 = np.average(x[treated], weights=w[treated])
    m0 = np.average(x[~treated], weights=w[~treated])
    v1 = np.average((x[treated] - m1) ** 2, weights=w[treated])
    v0 = np.average((x[~treated] - m0) ** 2, weights=w[~treated])
    pooled_sd = np.sqrt((v1 + v0) / 2.0)
    if not pooled_sd > 0:
        return 0.0, True
    return float((m1 - m0) / pooled_sd), False


def balance_diagnostics(sample: SurvivalSample, w: Optional[WeightVector] = None) -> pd.DataFrame:
    """
    Standardized mean difference of every covariate, unweighted and weighted.

    Columns: covariate, smd_unweighted, smd_weighted, flagged. ``flagged``
    marks covariates whose pooled SD is zero (SMD reported as 0).
    """
    if sample.n_covariates == 0:
        raise ValueError("balance diagnostics need at least one covariate")
    for arm in (0, 1):
        if not sample.arm_mask(arm).any():
            raise EmptyArmError("empty treatment arm", arm=arm)

    treated = sample.treatment == 1
    ones = np.ones(sample.n)
    rows = []
    for j, name in enumerate(sample.covariate_names):
        x = sample.covariates[:, j]
        smd_unweighted, flag_u = _smd(x, treated, ones)
        smd_weighted, flag_w = (None, False) if w is None else _smd(x, treated, w.weights)
        rows.append(BalanceRow(
            covariate=name,
            smd_unweighted=smd_unweighted,
            smd_weighted=smd_weighted,
            flagged=flag_u or flag_w,
        ).model_dump())
    return pd.DataFrame(rows, columns=["covariate", "smd_unweighted", "smd_weighted", "flagged"])


def summarize_weights(w: WeightVector) -> pd.DataFrame:
    """Distribution of the weights, the tabular counterpart of a weight histogram."""
    quantiles = np.quantile(w.weights, [0.0, 0.25, 0.5, 0.75, 0.99, 1.0], method="linear")
    summary = {
        "n": w.n,
        "stabilized": w.stabilized,
        "mean": float(np.mean(w.weights)),
        "min": quantiles[0],
        "q25": quantiles[1],
        "median": quantiles[2],
        "q75": quantiles[3],
        "p99": quantiles[4],
        "max": quantiles[5],
        "truncation_threshold": w.truncation_threshold,
        "n_truncated": w.n_truncated,
    }
    return pd.DataFrame([summary])
