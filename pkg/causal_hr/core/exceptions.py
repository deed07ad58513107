from typing import Any, Dict, List, Optional


class CausalHRError(Exception):
    """Base class for all estimation, simulation and CLI failures."""

    code: str = "error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable form used by the CLI error line."""
        payload: Dict[str, Any] = {"error": self.code, "message": self.message}
        if self.details:
            payload["details"] = self.details
        return payload


# Data errors

class DataValidationError(CausalHRError, ValueError):
    code = "schema_violation"

    def __init__(self, message: str, rows: Optional[List[int]] = None, **details: Any):
        super().__init__(message, rows=rows or [], **details)
        self.rows = rows or []


class EmptyArmError(CausalHRError, ValueError):
    code = "empty_arm"


class NoEventsError(CausalHRError, ValueError):
    code = "no_events"


class InsufficientEventsError(CausalHRError, ValueError):
    code = "insufficient_events"


class DegenerateGridError(CausalHRError, ValueError):
    code = "degenerate_grid"


# Frailty errors

class FrailtyRangeError(CausalHRError, ValueError):
    code = "frailty_range"


class FrailtyDomainError(CausalHRError, ValueError):
    code = "frailty_domain"


class QuadratureError(CausalHRError):
    code = "quadrature"


# Regression errors

class ConvergenceError(CausalHRError):
    code = "convergence"

    def __init__(self, message: str, trace: Optional[List[Dict[str, float]]] = None, **details: Any):
        super().__init__(message, trace=trace or [], **details)
        self.trace = trace or []


class SeparationError(CausalHRError):
    code = "separation"


class PropensityError(CausalHRError):
    code = "propensity_separation"


class SingularMatrixError(CausalHRError):
    code = "singular_matrix"


# Kernel errors

class KernelSupportError(CausalHRError, ValueError):
    code = "kernel_support"


class BandwidthSelectionError(CausalHRError):
    code = "bandwidth_selection"

    def __init__(self, message: str, times: Optional[List[float]] = None, **details: Any):
        super().__init__(message, times=times or [], **details)
        self.times = times or []


# Pipeline errors

class BootstrapError(CausalHRError):
    code = "bootstrap_failed"


class CalibrationError(CausalHRError):
    code = "calibration"


class ConfigError(CausalHRError, ValueError):
    code = "config_invalid"
