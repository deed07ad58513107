import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from causal_hr.models.cox import cox_hrc, fit_cox
from causal_hr.models.frailty import tau_to_theta, theta_to_tau, varphi
from causal_hr.models.kernel import candidate_bandwidths, kernel_context, select_bandwidths, smooth_hazard
from causal_hr.models.survival import build_time_grid
from causal_hr.models.weights import estimate_weights
from causal_hr.schemas.cox import CoxTerms
from causal_hr.schemas.frailty import FrailtyFamily, FrailtySpec
from causal_hr.schemas.kernel import BandwidthPlan, KernelSpec, SmoothedHazard
from causal_hr.schemas.sample import SurvivalSample, TimeGrid
from causal_hr.schemas.sensitivity import (
    CurveFlag, EstimationMethod, SensitivityComponents, SensitivityCurve, SensitivityRequest,
)

logger = logging.getLogger(__name__)

UNSTABLE_RELATIVE = 1e-8

CURVE_COLUMNS = ["family", "tau", "theta", "method", "t", "estimate", "flag", "se", "ci_lo", "ci_hi"]


def kernel_hrc(sh1: SmoothedHazard, sh0: SmoothedHazard, spec: FrailtySpec,
               tau: Optional[float] = None) -> SensitivityCurve:
    """
    HR^C(t) = lambda1/lambda0 * varphi(Lambda1, Lambda0) from smoothed hazards.

    The cumulative hazards are the Nelson-Aalen step values at the grid
    points, not integrals of the smoothed hazards.
    """
    if not sh1.grid.same_as(sh0.grid):
        raise ValueError("smoothed hazards must share the same grid")
    grid = sh0.grid
    lam1, lam0 = sh1.values, sh0.values
    cum1 = np.asarray(sh1.increments(grid.points), dtype=float)
    cum0 = np.asarray(sh0.increments(grid.points), dtype=float)

    unavailable = lam0 == 0
    if spec.family is FrailtyFamily.POSITIVE_STABLE:
        unavailable |= (cum1 == 0) | (cum0 == 0)
    scale = lam0.max() if lam0.size else 0.0
    unstable = ~unavailable & (lam0 < UNSTABLE_RELATIVE * scale)

    estimate = np.full(grid.count, np.nan)
    usable = ~unavailable
    if usable.any():
        multiplier = varphi(spec, cum1[usable], cum0[usable])
        estimate[usable] = lam1[usable] / lam0[usable] * multiplier

    flags = []
    for i in range(grid.count):
        if unavailable[i]:
            flags.append(CurveFlag.UNAVAILABLE)
        elif unstable[i] or not (np.isfinite(estimate[i]) and estimate[i] > 0):
            flags.append(CurveFlag.UNSTABLE)
        else:
            flags.append(CurveFlag.OK)

    return SensitivityCurve(
        family=spec.family,
        tau=theta_to_tau(spec) if tau is None else tau,
        theta=spec.theta,
        method=EstimationMethod.KERNEL,
        grid=grid,
        estimate=estimate,
        flags=flags,
    )


def resolve_grid(sample: SurvivalSample, req: SensitivityRequest) -> TimeGrid:
    if req.grid is not None:
        return req.grid
    rule = req.grid_rule
    return build_time_grid(sample, n_points=rule.n_points, min_at_risk=rule.min_at_risk, bounds=rule.bounds)


def kernel_spec_for(req: SensitivityRequest, grid: TimeGrid) -> KernelSpec:
    if req.kernel.support is not None:
        return KernelSpec(beg=req.kernel.support[0], end=req.kernel.support[1])
    return KernelSpec.from_grid(grid)


def estimate_components(sample: SurvivalSample, req: SensitivityRequest,
                        plans: Optional[Tuple[BandwidthPlan, BandwidthPlan]] = None,
                        grid: Optional[TimeGrid] = None) -> SensitivityComponents:
    """
    Everything upstream of the frailty multiplier: weights, grid, and the
    Cox fit or the two smoothed hazards. ``plans`` reuses given bandwidths
    instead of selecting them.
    """
    weights = estimate_weights(sample, req.weighting)
    grid = grid if grid is not None else resolve_grid(sample, req)

    if req.method is EstimationMethod.COX:
        fit = fit_cox(sample, CoxTerms(), weights)
        return SensitivityComponents(grid=grid, weights=weights, cox_fit=fit)

    spec = kernel_spec_for(req, grid)
    candidates = candidate_bandwidths(spec, req.kernel.n_candidates)
    hazards = []
    for arm in (0, 1):
        context = kernel_context(sample, arm, spec, weights)
        plan = plans[arm] if plans is not None else select_bandwidths(context, grid, candidates)
        hazards.append(smooth_hazard(context.increments, spec, plan, context.event_count))
    return SensitivityComponents(grid=grid, weights=weights, hazard0=hazards[0], hazard1=hazards[1])


def curves_from_components(components: SensitivityComponents, req: SensitivityRequest) -> List[SensitivityCurve]:
    """One curve per (family, tau) in request order."""
    curves = []
    for family in req.families:
        for tau in req.taus:
            spec = tau_to_theta(family, tau)
            if req.method is EstimationMethod.COX:
                curves.append(cox_hrc(components.cox_fit, spec, components.grid, tau=tau))
            else:
                curves.append(kernel_hrc(components.hazard1, components.hazard0, spec, tau=tau))
    return curves


def run_sensitivity(sample: SurvivalSample, req: SensitivityRequest) -> List[SensitivityCurve]:
    """Full pipeline from data to HR^C(t) curves for every requested family and tau."""
    components = estimate_components(sample, req)
    curves = curves_from_components(components, req)
    flagged = sum(int((~c.ok_mask).sum()) for c in curves)
    logger.info(
        f"Computed {len(curves)} {req.method.value} curves on {components.grid.count} grid points "
        f"({flagged} flagged points)"
    )
    return curves


def conditional_cox_curve(sample: SurvivalSample, grid: TimeGrid, family: FrailtyFamily,
                          tau: float) -> SensitivityCurve:
    """
    Constant exp(beta_A) from a Cox model on treatment and all covariates,
    ignoring the frailty. Used as the comparator in simulation studies.
    """
    spec = tau_to_theta(family, tau)
    fit = fit_cox(sample, CoxTerms(treatment=True, covariates=list(sample.covariate_names)))
    hr = float(np.exp(fit.coefficient("treatment")))
    return SensitivityCurve(
        family=spec.family,
        tau=tau,
        theta=spec.theta,
        method=EstimationMethod.CONDITIONAL_COX,
        grid=grid,
        estimate=np.full(grid.count, hr),
        flags=[CurveFlag.OK] * grid.count,
    )


def curves_to_frame(curves: Sequence[SensitivityCurve]) -> pd.DataFrame:
    """Long format with one row per (curve, grid point)."""
    frames = []
    for curve in curves:
        m = curve.grid.count
        empty = np.full(m, np.nan)
        frames.append(pd.DataFrame({
            "family": curve.family.value,
            "tau": curve.tau,
            "theta": curve.theta,
            "method": curve.method.value,
            "t": curve.grid.points,
            "estimate": curve.estimate,
            "flag": [f.value for f in curve.flags],
            "se": empty if curve.se is None else curve.se,
            "ci_lo": empty if curve.ci_lo is None else curve.ci_lo,
            "ci_hi": empty if curve.ci_hi is None else curve.ci_hi,
        }))
    if not frames:
        return pd.DataFrame(columns=CURVE_COLUMNS)
    return pd.concat(frames, ignore_index=True)[CURVE_COLUMNS]
