import logging
from typing import List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from causal_hr.core.exceptions import BootstrapError, CausalHRError
from causal_hr.core.random import substream
from causal_hr.models.sensitivity import curves_from_components, estimate_components
from causal_hr.schemas.bootstrap import BootstrapConfig
from causal_hr.schemas.kernel import BandwidthPlan
from causal_hr.schemas.sample import SurvivalSample, TimeGrid
from causal_hr.schemas.sensitivity import CurveFlag, SensitivityCurve, SensitivityRequest

logger = logging.getLogger(__name__)


def _replicate(sample: SurvivalSample, req: SensitivityRequest, grid: TimeGrid,
               plans: Optional[Tuple[BandwidthPlan, BandwidthPlan]], seed: int, index: int) -> Optional[np.ndarray]:
    """Estimates of one bootstrap replicate as (curves, grid points); NaN where a point is flagged."""
    rng = substream(seed, index)
    rows = rng.integers(0, sample.n, size=sample.n)
    try:
        resample = sample.take(rows)
        components = estimate_components(resample, req, plans=plans, grid=grid)
        curves = curves_from_components(components, req)
    except (CausalHRError, ValueError) as exc:
        logger.warning(f"Bootstrap replicate {index} failed: {exc}", extra={"replicate": index})
        return None
    return np.stack([np.where(c.ok_mask, c.estimate, np.nan) for c in curves])


def bootstrap_curves(sample: SurvivalSample, req: SensitivityRequest, cfg: BootstrapConfig) -> List[SensitivityCurve]:
    """
    Point estimates with bootstrap standard errors and percentile intervals.

    Subjects are resampled with replacement and everything downstream of the
    raw data is re-estimated per replicate, on the grid of the original fit.
    Replicates are keyed by index, so results do not depend on scheduling.
    """
    components = estimate_components(sample, req)
    curves = curves_from_components(components, req)
    plans = None if cfg.reselect_bandwidths else components.plans

    replicates = Parallel(n_jobs=cfg.n_jobs)(
        delayed(_replicate)(sample, req, components.grid, plans, cfg.seed, index)
        for index in range(cfg.replications)
    )
    n_failed = sum(r is None for r in replicates)
    if n_failed == cfg.replications:
        raise BootstrapError(f"all {cfg.replications} bootstrap replicates failed")
    if n_failed:
        logger.warning(f"{n_failed} of {cfg.replications} bootstrap replicates failed")

    shape = (len(curves), components.grid.count)
    estimates = np.stack([np.full(shape, np.nan) if r is None else r for r in replicates])
    lower_q, upper_q = cfg.quantiles

    results = []
    for c, curve in enumerate(curves):
        values = estimates[:, c, :]
        valid = np.isfinite(values)
        counts = valid.sum(axis=0)
        se = np.full(curve.grid.count, np.nan)
        ci_lo = np.full(curve.grid.count, np.nan)
        ci_hi = np.full(curve.grid.count, np.nan)
        for j in range(curve.grid.count):
            column = values[valid[:, j], j]
            if column.size >= 2:
                se[j] = np.std(column, ddof=1)
            if column.size >= 1:
                ci_lo[j], ci_hi[j] = np.quantile(column, [lower_q, upper_q], method="linear")

        failure = 1.0 - counts / cfg.replications
        flags = [
            CurveFlag.CI_UNRELIABLE if flag is CurveFlag.OK and failure[j] > cfg.max_failure_fraction else flag
            for j, flag in enumerate(curve.flags)
        ]
        results.append(SensitivityCurve(
            family=curve.family,
            tau=curve.tau,
            theta=curve.theta,
            method=curve.method,
            grid=curve.grid,
            estimate=curve.estimate,
            flags=flags,
            se=se,
            ci_lo=ci_lo,
            ci_hi=ci_hi,
        ))

    logger.info(
        f"Bootstrapped {len(curves)} curves with {cfg.replications} replicates "
        f"({n_failed} failed, seed={cfg.seed})"
    )
    return results
