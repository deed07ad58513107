from pydantic import BaseModel, ConfigDict, Field

from causal_hr.core.config import settings


class BootstrapConfig(BaseModel):
    """Nonparametric bootstrap over subjects."""
    model_config = ConfigDict(frozen=True)

    replications: int = Field(settings.DEFAULT_BOOTSTRAP_REPLICATIONS, ge=2)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    confidence_level: float = Field(settings.DEFAULT_CONFIDENCE_LEVEL, gt=0, lt=1)
    reselect_bandwidths: bool = Field(True, description="Re-select kernel bandwidths inside every replicate")
    max_failure_fraction: float = Field(settings.BOOTSTRAP_MAX_FAILURE_FRACTION, ge=0, lt=1)
    n_jobs: int = Field(settings.N_JOBS, description="joblib workers; -1 uses all cores")

    @property
    def quantiles(self) -> tuple:
        alpha = 1.0 - self.confidence_level
        return alpha / 2.0, 1.0 - alpha / 2.0
