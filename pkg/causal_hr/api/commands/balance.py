import logging
from pathlib import Path
from typing import Dict

import pandas as pd

from causal_hr.api.outputs import RunOutputs
from causal_hr.core.datasets import read_sample_csv
from causal_hr.core.exceptions import ConfigError, DataValidationError
from causal_hr.models.weights import (
    balance_diagnostics,
    compute_weights,
    fit_logistic,
    summarize_weights,
    truncate_weights,
)
from causal_hr.schemas.run_config import RunConfig

logger = logging.getLogger(__name__)


def run(config: RunConfig) -> Dict[str, Path]:
    """
    Check covariate balance before and after IPTW.

    This command fits the propensity model, writes its coefficients, the
    weight distribution and the standardized mean differences.
    """
    if config.input.path is None:
        raise ConfigError("balance needs an input file (input.path or --input)")
    sample = read_sample_csv(config.input.path)
    if sample.n_covariates == 0:
        raise DataValidationError("balance diagnostics need at least one covariate column")
    outputs = RunOutputs(config.output.directory, "balance", config.manifest_config(),
                         inputs=[config.input.path], seed=config.seed)

    model = fit_logistic(sample)
    weights = compute_weights(model, sample, stabilized=config.weighting.stabilized)
    if config.weighting.truncation_percentile is not None:
        weights = truncate_weights(weights, config.weighting.truncation_percentile)

    outputs.table("propensity.csv", pd.DataFrame({
        "term": ["intercept"] + list(model.covariate_names),
        "coefficient": model.coefficients,
        "se": model.standard_errors,
    }))
    outputs.table("weights_summary.csv", summarize_weights(weights))
    balance = balance_diagnostics(sample, weights)
    outputs.table("balance.csv", balance)

    imbalanced = balance.loc[balance["smd_weighted"].abs() > 0.1, "covariate"].tolist()
    if imbalanced:
        logger.warning(f"Weighted |SMD| above 0.1 for {imbalanced}", extra={"run_id": outputs.run_id})
    return outputs.close()
