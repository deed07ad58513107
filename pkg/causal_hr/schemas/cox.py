from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from causal_hr.schemas.base import ArrayModel, FloatArray, FloatMatrix
from causal_hr.schemas.sample import StepFunction

TREATMENT_TERM = "treatment"


class CoxTerms(BaseModel):
    """Columns entering the linear predictor of a Cox model."""
    treatment: bool = Field(True, description="Include the treatment indicator")
    covariates: List[str] = Field(default_factory=list, description="Covariate columns, by name")

    @model_validator(mode="after")
    def check_terms(self) -> "CoxTerms":
        if not self.treatment and not self.covariates:
            raise ValueError("a Cox model needs at least one term")
        if len(set(self.covariates)) != len(self.covariates):
            raise ValueError("covariate terms must be unique")
        return self

    @property
    def names(self) -> List[str]:
        return ([TREATMENT_TERM] if self.treatment else []) + list(self.covariates)

    @property
    def treatment_only(self) -> bool:
        return self.treatment and not self.covariates


class CoxFit(ArrayModel):
    """Fitted (optionally weighted) Cox model with its Breslow baseline."""
    terms: CoxTerms
    beta: FloatArray
    beta_se: FloatArray
    covariance: FloatMatrix
    baseline_cumhaz: StepFunction
    loglik: float
    loglik_null: float
    iterations: int
    n_events: int
    weighted: bool = False

    @model_validator(mode="after")
    def check_fit(self) -> "CoxFit":
        p = len(self.terms.names)
        if self.beta.shape[0] != p or self.beta_se.shape[0] != p:
            raise ValueError(f"expected {p} coefficients")
        if not np.all(np.isfinite(self.beta)):
            raise ValueError("coefficients must be finite")
        if np.any(self.beta_se <= 0):
            raise ValueError("standard errors must be positive")
        if np.any(self.baseline_cumhaz.increments < 0):
            raise ValueError("baseline cumulative hazard must be non-decreasing")
        return self

    @property
    def hazard_ratios(self) -> np.ndarray:
        return np.exp(self.beta)

    def coefficient(self, name: str) -> float:
        return float(self.beta[self.terms.names.index(name)])


class PHTransform(str, Enum):
    IDENTITY = "identity"
    KM = "km"


class PHCovariateTest(BaseModel):
    term: str
    rho: float = Field(..., description="Correlation of scaled residuals with transformed time")
    statistic: float = Field(..., ge=0)
    p_value: float = Field(..., ge=0, le=1)


class PHTestResult(BaseModel):
    """Score test of proportional hazards from scaled Schoenfeld residuals."""
    statistic: float = Field(..., ge=0, description="Global chi-squared statistic")
    df: int = Field(..., ge=1)
    p_value: float = Field(..., ge=0, le=1)
    transform: PHTransform = PHTransform.KM
    per_covariate: List[PHCovariateTest] = Field(default_factory=list)
    weighted: bool = False
    n_events: Optional[int] = None
