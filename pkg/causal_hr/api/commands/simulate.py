import logging
from pathlib import Path
from typing import Dict

import pandas as pd

from causal_hr.api.outputs import RunOutputs
from causal_hr.core.datasets import sample_to_frame
from causal_hr.models.simulation import generate, hidden_frame, true_hrc
from causal_hr.models.survival import build_time_grid
from causal_hr.schemas.run_config import RunConfig
from causal_hr.schemas.sample import TimeGrid
from causal_hr.schemas.simulation import Scenario, SimulatedDataset

logger = logging.getLogger(__name__)


def truth_grid(config: RunConfig, dataset: SimulatedDataset) -> TimeGrid:
    """Grid of the truth table: fixed [0, censoring time] for scenario II, data-driven otherwise."""
    spec = dataset.spec
    if config.estimation.grid_bounds is not None:
        return TimeGrid.linspace(*config.estimation.grid_bounds, config.estimation.grid_points)
    if spec.scenario is Scenario.II:
        return TimeGrid.linspace(0.0, float(spec.censoring.time), config.estimation.grid_points)
    return build_time_grid(
        dataset.sample, n_points=config.estimation.grid_points, min_at_risk=config.estimation.min_at_risk
    )


def run(config: RunConfig) -> Dict[str, Path]:
    """
    Simulate one dataset from a scenario.

    This command writes the observed data in the input CSV format, the
    hidden frailties and potential outcomes, and the analytic HR^C(t).
    """
    spec = config.scenario_spec()
    outputs = RunOutputs(config.output.directory, "simulate", config.manifest_config(), seed=config.seed)
    dataset = generate(spec, config.seed)
    outputs.note("censoring_rate", dataset.censoring_rate)
    outputs.note("event_scale", dataset.event_scale)
    outputs.note("n_events", dataset.sample.n_events)

    outputs.table("data.csv", sample_to_frame(dataset.sample), stamped=False)
    if config.output.hidden:
        outputs.table("hidden.csv", hidden_frame(dataset))

    grid = truth_grid(config, dataset)
    truth = pd.DataFrame({"t": grid.points, "true_hrc": true_hrc(dataset.spec, grid.points)})
    outputs.table("truth.csv", truth)
    logger.info(
        f"Simulated scenario {spec.scenario.value}: n={spec.n}, events={dataset.sample.n_events}",
        extra={"run_id": outputs.run_id},
    )
    return outputs.close()
