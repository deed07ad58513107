from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from causal_hr.schemas.base import ArrayModel, FloatArray, FloatMatrix


class PropensityModel(ArrayModel):
    """Logistic propensity model pi(Z) = Pr(A=1 | Z)."""
    coefficients: FloatArray
    standard_errors: Optional[FloatArray] = None
    covariance: Optional[FloatMatrix] = None
    covariate_names: List[str] = Field(default_factory=list)
    converged: bool = True
    iterations: int = 0
    treated_fraction: float = Field(..., gt=0, lt=1, description="Empirical Pr(A=1) of the fitting sample")

    @model_validator(mode="after")
    def check_coefficients(self) -> "PropensityModel":
        if self.coefficients.shape[0] != len(self.covariate_names) + 1:
            raise ValueError("expected an intercept plus one coefficient per covariate")
        if self.converged and not np.all(np.isfinite(self.coefficients)):
            raise ValueError("converged propensity model has non-finite coefficients")
        return self

    @property
    def intercept_only(self) -> bool:
        return self.coefficients.shape[0] == 1


class WeightVector(ArrayModel):
    """
    Per-subject inverse probability of treatment weights.

    ``weights`` are the weights requested (stabilized or not, possibly
    truncated) and feed pooled estimators such as the weighted Cox model.
    ``arm_weights`` feed estimators computed within one arm at a time; there
    an arm-constant factor cancels, so the stabilized form is used for both
    settings of ``stabilized`` unless truncation changed the weights.
    """
    weights: FloatArray
    arm_weights: FloatArray
    stabilized: bool = False
    truncation_percentile: Optional[float] = Field(None, gt=0, le=1)
    truncation_threshold: Optional[float] = None
    n_truncated: int = 0

    @model_validator(mode="after")
    def check_weights(self) -> "WeightVector":
        for name in ("weights", "arm_weights"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ValueError(f"{name} must be finite and strictly positive")
        if self.weights.shape != self.arm_weights.shape:
            raise ValueError("weights and arm_weights must have the same length")
        return self

    @property
    def n(self) -> int:
        return int(self.weights.shape[0])


class BalanceRow(BaseModel):
    """Standardized mean difference of one covariate."""
    covariate: str
    smd_unweighted: float
    smd_weighted: Optional[float] = None
    flagged: bool = Field(False, description="Pooled SD was zero; SMD reported as 0")
