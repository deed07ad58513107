import logging
from pathlib import Path
from typing import Dict, Optional

import pandas as pd

from causal_hr.api.outputs import RunOutputs
from causal_hr.core.datasets import read_sample_csv
from causal_hr.core.exceptions import CausalHRError, ConfigError
from causal_hr.core.random import derive_seed
from causal_hr.models.cox import fit_cox, ph_score_test
from causal_hr.models.sensitivity import curves_to_frame, resolve_grid, run_sensitivity
from causal_hr.models.survival import kaplan_meier, logrank_test
from causal_hr.models.weights import balance_diagnostics, estimate_weights, summarize_weights
from causal_hr.schemas.cox import CoxTerms, PHTestResult
from causal_hr.schemas.run_config import RunConfig
from causal_hr.schemas.sample import SurvivalSample
from causal_hr.schemas.weights import WeightVector
from causal_hr.workers.bootstrap import bootstrap_curves

logger = logging.getLogger(__name__)

KM_COLUMNS = ["weighting", "arm", "t", "survival"]
LOGRANK_COLUMNS = ["weighting", "statistic", "p_value", "observed", "expected", "variance"]
PH_COLUMNS = ["term", "rho", "statistic", "df", "p_value", "transform", "weighted", "n_events"]


def km_frame(sample: SurvivalSample, weights: Optional[WeightVector]) -> pd.DataFrame:
    """Plot-ready Kaplan-Meier curves per arm, starting at (0, 1)."""
    variants = [("none", None)] + ([("iptw", weights)] if weights is not None else [])
    frames = []
    for label, w in variants:
        for arm in (0, 1):
            km = kaplan_meier(sample, arm, w)
            frames.append(pd.DataFrame({
                "weighting": label,
                "arm": arm,
                "t": [0.0] + km.jump_times.tolist(),
                "survival": [km.initial] + km.levels.tolist(),
            }))
    return pd.concat(frames, ignore_index=True)[KM_COLUMNS]


def logrank_frame(sample: SurvivalSample, weights: Optional[WeightVector]) -> pd.DataFrame:
    variants = [("none", None)] + ([("iptw", weights)] if weights is not None else [])
    rows = []
    for label, w in variants:
        result = logrank_test(sample, w)
        rows.append({"weighting": label, **result.model_dump(exclude={"weighted"})})
    return pd.DataFrame(rows, columns=LOGRANK_COLUMNS)


def ph_frame(result: PHTestResult) -> pd.DataFrame:
    """Global row first, then one row per term."""
    common = {"transform": result.transform.value, "weighted": result.weighted, "n_events": result.n_events}
    rows = [{"term": "GLOBAL", "rho": float("nan"), "statistic": result.statistic,
             "df": result.df, "p_value": result.p_value, **common}]
    for test in result.per_covariate:
        rows.append({"term": test.term, "rho": test.rho, "statistic": test.statistic,
                     "df": 1, "p_value": test.p_value, **common})
    return pd.DataFrame(rows, columns=PH_COLUMNS)


def run(config: RunConfig) -> Dict[str, Path]:
    """
    Estimate HR^C(t) curves from an observed sample.

    This command reads the input CSV, fits every requested backend over the
    configured frailty families and tau values, optionally bootstraps them,
    and writes the curves together with weighting and survival diagnostics.
    """
    if config.input.path is None:
        raise ConfigError("estimate needs an input file (input.path or --input)")
    sample = read_sample_csv(config.input.path)
    outputs = RunOutputs(config.output.directory, "estimate", config.manifest_config(),
                         inputs=[config.input.path], seed=config.seed)
    log_extra = {"run_id": outputs.run_id}
    logger.info(
        f"Estimating {[m.value for m in config.estimation.methods]} on {sample.n} records",
        extra=log_extra,
    )

    weights = estimate_weights(sample, config.weighting_spec())
    grid = resolve_grid(sample, config.sensitivity_request(config.estimation.methods[0]))

    curves = []
    for index, method in enumerate(config.estimation.methods):
        req = config.sensitivity_request(method, grid=grid)
        bootstrap = config.bootstrap_config(derive_seed(config.seed, index))
        if bootstrap is None:
            curves.extend(run_sensitivity(sample, req))
        else:
            curves.extend(bootstrap_curves(sample, req, bootstrap))
    outputs.table("sensitivity.csv", curves_to_frame(curves))

    if weights is not None:
        outputs.table("weights_summary.csv", summarize_weights(weights))
        if sample.n_covariates:
            outputs.table("balance.csv", balance_diagnostics(sample, weights))
        else:
            logger.warning("No covariates in the input; skipping the balance table", extra=log_extra)

    try:
        fit = fit_cox(sample, CoxTerms(), weights)
        result = ph_score_test(fit, sample, weights, transform=config.estimation.ph_transform)
        outputs.table("ph_test.csv", ph_frame(result))
    except CausalHRError as exc:
        logger.warning(f"Proportional hazards test skipped: {exc}", extra=log_extra)

    outputs.table("km.csv", km_frame(sample, weights))
    outputs.table("logrank.csv", logrank_frame(sample, weights))
    return outputs.close()
