import logging
from pathlib import Path
from typing import Dict

import pandas as pd

from causal_hr.api.outputs import RunOutputs
from causal_hr.schemas.run_config import RunConfig
from causal_hr.workers.study import run_study

logger = logging.getLogger(__name__)


def run(config: RunConfig) -> Dict[str, Path]:
    """
    Run a replication study.

    This command simulates every configured setting, estimates HR^C(t) in
    each replication and writes the per-grid-point summary alongside the
    raw replicate estimates.
    """
    study = config.study_config()
    outputs = RunOutputs(config.output.directory, "study", config.manifest_config(), seed=config.seed)
    logger.info(
        f"Study of scenario {study.scenario.value}: {study.replications} replications per setting",
        extra={"run_id": outputs.run_id},
    )
    result = run_study(study)
    outputs.table("summary.csv", result.summary)
    outputs.table("replicates.csv", result.replicates)
    grids = pd.DataFrame([
        {"setting": setting, "t_min": grid.t_min, "t_max": grid.t_max, "points": grid.count}
        for setting, grid in sorted(result.grids.items())
    ])
    outputs.table("grids.csv", grids)
    return outputs.close()
