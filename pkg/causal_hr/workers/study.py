import itertools
import logging
from typing import Dict, List, NamedTuple, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from causal_hr.core.exceptions import CausalHRError
from causal_hr.core.random import derive_seed
from causal_hr.models.sensitivity import conditional_cox_curve, curves_to_frame, run_sensitivity
from causal_hr.models.simulation import calibrated, generate, true_hrc
from causal_hr.models.survival import build_time_grid
from causal_hr.schemas.sample import TimeGrid
from causal_hr.schemas.sensitivity import SensitivityRequest
from causal_hr.schemas.simulation import CensoringSpec, Scenario, ScenarioSpec
from causal_hr.schemas.study import StudyConfig
from causal_hr.workers.bootstrap import bootstrap_curves

logger = logging.getLogger(__name__)

SETTING_COLUMNS = ["setting", "n", "censoring", "tau"]
SUMMARY_COLUMNS = SETTING_COLUMNS + [
    "method", "family", "t", "true_hrc", "mean_estimate", "bias", "relative_bias",
    "emp_sd", "est_se", "se_ratio", "coverage", "n_valid", "flag",
]


class StudyResult(NamedTuple):
    summary: pd.DataFrame
    replicates: pd.DataFrame
    grids: Dict[int, TimeGrid]


def study_settings(config: StudyConfig) -> List[ScenarioSpec]:
    """Scenario specifications of the sweep, in (n, censoring, tau) order."""
    if config.scenario is Scenario.II:
        censorings = [ScenarioSpec.default_censoring(Scenario.II)]
    else:
        censorings = [CensoringSpec(kind="rate", fraction=f) for f in config.censoring_fractions]
    specs = []
    for n, censoring, tau in itertools.product(config.n, censorings, config.taus):
        specs.append(ScenarioSpec(
            scenario=config.scenario,
            tau=tau,
            n=n,
            censoring=censoring,
            beta=config.beta,
            beta_z=config.beta_z,
            event_rate_target=config.event_rate_target,
        ))
    return specs


def study_grid(config: StudyConfig, spec: ScenarioSpec, setting: int) -> TimeGrid:
    """Fixed [0, horizon] for scenario II; otherwise computed once from the first replication."""
    if spec.scenario is Scenario.II:
        return TimeGrid.linspace(0.0, float(spec.censoring.time), config.grid_points)
    first = generate(spec, derive_seed(config.seed, setting, 0))
    return build_time_grid(first.sample, n_points=config.grid_points, min_at_risk=config.min_at_risk)


def _run_replicate(config: StudyConfig, spec: ScenarioSpec, grid: TimeGrid, setting: int,
                   replicate: int) -> Optional[pd.DataFrame]:
    dataset = generate(spec, derive_seed(config.seed, setting, replicate))
    sample = dataset.sample
    curves = []
    for method in config.methods:
        req = SensitivityRequest(
            method=method,
            families=config.families,
            taus=[spec.tau],
            grid=grid,
            weighting=config.effective_weighting,
            kernel=config.kernel,
        )
        try:
            if config.bootstrap is not None:
                boot = config.bootstrap.model_copy(
                    update={"seed": derive_seed(config.seed, setting, replicate, 1), "n_jobs": 1}
                )
                curves.extend(bootstrap_curves(sample, req, boot))
            else:
                curves.extend(run_sensitivity(sample, req))
        except (CausalHRError, ValueError) as exc:
            logger.warning(
                f"Setting {setting} replicate {replicate}: {method.value} estimation failed: {exc}",
                extra={"replicate": replicate},
            )
    if spec.scenario is Scenario.II:
        for family in config.families:
            try:
                curves.append(conditional_cox_curve(sample, grid, family, spec.tau))
            except (CausalHRError, ValueError) as exc:
                logger.warning(f"Setting {setting} replicate {replicate}: conditional Cox failed: {exc}")
    if not curves:
        return None
    frame = curves_to_frame(curves)
    frame.loc[frame["flag"].isin(["unstable", "unavailable"]), "estimate"] = np.nan
    frame.insert(0, "replicate", replicate)
    return frame


def summarize(replicates: pd.DataFrame, specs: List[ScenarioSpec], n_replications: int) -> pd.DataFrame:
    """Bias, relative bias, EMP.SD, mean EST.SE, their ratio and CI coverage per grid point."""
    rows = []
    keys = SETTING_COLUMNS + ["method", "family", "t"]
    for key, group in replicates.groupby(keys, sort=True, dropna=False):
        record = dict(zip(keys, key))
        truth = float(true_hrc(specs[int(record["setting"])], record["t"]))
        estimates = group["estimate"].to_numpy(dtype=float)
        valid = np.isfinite(estimates)
        n_valid = int(valid.sum())

        mean_estimate = float(estimates[valid].mean()) if n_valid else np.nan
        emp_sd = float(np.std(estimates[valid], ddof=1)) if n_valid >= 2 else np.nan
        se = group["se"].to_numpy(dtype=float)[valid]
        est_se = float(np.nanmean(se)) if np.isfinite(se).any() else np.nan
        lo = group["ci_lo"].to_numpy(dtype=float)
        hi = group["ci_hi"].to_numpy(dtype=float)
        has_ci = np.isfinite(lo) & np.isfinite(hi)
        coverage = float(np.mean((lo[has_ci] <= truth) & (truth <= hi[has_ci]))) if has_ci.any() else np.nan

        if n_replications == 1:
            flag = "single_replication"
        elif n_valid == 0:
            flag = "no_valid_estimates"
        else:
            flag = "ok"
        bias = mean_estimate - truth
        record.update({
            "true_hrc": truth,
            "mean_estimate": mean_estimate,
            "bias": bias,
            "relative_bias": bias / truth,
            "emp_sd": emp_sd,
            "est_se": est_se,
            "se_ratio": est_se / emp_sd if np.isfinite(emp_sd) and emp_sd > 0 else np.nan,
            "coverage": coverage,
            "n_valid": n_valid,
            "flag": flag,
        })
        rows.append(record)
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def run_study(config: StudyConfig) -> StudyResult:
    """Simulate, estimate and summarize every setting of the study."""
    specs = study_settings(config)
    frames = []
    grids: Dict[int, TimeGrid] = {}
    for setting, spec in enumerate(specs):
        spec = calibrated(spec, config.seed)
        specs[setting] = spec
        grid = study_grid(config, spec, setting)
        grids[setting] = grid
        logger.info(
            f"Study setting {setting}: scenario {spec.scenario.value}, n={spec.n}, tau={spec.tau}, "
            f"grid [{grid.t_min:.4g}, {grid.t_max:.4g}], {config.replications} replications"
        )

        results = Parallel(n_jobs=config.n_jobs)(
            delayed(_run_replicate)(config, spec, grid, setting, replicate)
            for replicate in range(config.replications)
        )
        failed = sum(r is None for r in results)
        if failed:
            logger.warning(f"Study setting {setting}: {failed} replications produced no curves")
        for frame in results:
            if frame is None:
                continue
            censoring = spec.censoring.fraction if spec.censoring.kind == "rate" else np.nan
            frame.insert(0, "censoring", censoring)
            frame.insert(0, "n", spec.n)
            frame.insert(0, "setting", setting)
            frames.append(frame)

    if not frames:
        raise CausalHRError("no replication produced any estimates")
    replicates = pd.concat(frames, ignore_index=True)
    summary = summarize(replicates, specs, config.replications)
    return StudyResult(summary=summary, replicates=replicates, grids=grids)
