from enum import Enum
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from causal_hr.core.exceptions import FrailtyRangeError


class FrailtyFamily(str, Enum):
    """Parametric family of the frailty V."""
    GAMMA = "gamma"
    INVERSE_GAUSSIAN = "inverse_gaussian"
    POSITIVE_STABLE = "positive_stable"

    @classmethod
    def parse(cls, value: "str | FrailtyFamily") -> "FrailtyFamily":
        if isinstance(value, cls):
            return value
        aliases = {
            "gamma": cls.GAMMA,
            "ig": cls.INVERSE_GAUSSIAN,
            "inverse_gaussian": cls.INVERSE_GAUSSIAN,
            "inversegaussian": cls.INVERSE_GAUSSIAN,
            "ps": cls.POSITIVE_STABLE,
            "positive_stable": cls.POSITIVE_STABLE,
            "positivestable": cls.POSITIVE_STABLE,
        }
        key = str(value).strip().lower().replace("-", "_")
        if key not in aliases:
            raise ValueError(f"unknown frailty family '{value}'")
        return aliases[key]


class FrailtySpec(BaseModel):
    """
    Frailty family plus its sensitivity parameter.

    For Gamma and inverse Gaussian, theta is the frailty variance. Positive
    stable frailties have infinite variance; theta is then the stability
    exponent and must lie in (0, 1).
    """
    model_config = ConfigDict(frozen=True)

    family: FrailtyFamily = Field(..., description="Frailty family")
    theta: float = Field(..., gt=0, allow_inf_nan=False, description="Frailty variance (stability exponent for positive stable)")

    @model_validator(mode="after")
    def check_theta(self) -> "FrailtySpec":
        if self.family is FrailtyFamily.POSITIVE_STABLE and not self.theta < 1:
            raise ValueError("positive stable frailty requires 0 < theta < 1")
        return self


_TAU_RANGES = {
    FrailtyFamily.GAMMA: (0.0, 1.0),
    FrailtyFamily.INVERSE_GAUSSIAN: (0.0, 0.5),
    FrailtyFamily.POSITIVE_STABLE: (0.0, 1.0),
}


def tau_range(family: FrailtyFamily) -> Tuple[float, float]:
    """Open interval of Kendall's tau reachable by the family."""
    return _TAU_RANGES[FrailtyFamily(family)]


def check_tau(family: FrailtyFamily, tau: float) -> None:
    lo, hi = tau_range(family)
    if not (np.isfinite(tau) and lo < tau < hi):
        raise FrailtyRangeError(
            f"Kendall's tau {tau} is outside the valid range ({lo:g}, {hi:g}) for the {family.value} family",
            family=family.value,
            tau=float(tau),
            valid_range=[lo, hi],
        )
