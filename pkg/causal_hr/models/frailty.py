import logging
import warnings
from typing import Callable, Literal, Tuple, Union

import numpy as np
from scipy import integrate, optimize

from causal_hr.core.exceptions import FrailtyDomainError, FrailtyRangeError, QuadratureError
from causal_hr.schemas.frailty import FrailtyFamily, FrailtySpec, check_tau

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Inverse Gaussian inversion bracket for theta
IG_THETA_BRACKET: Tuple[float, float] = (1e-6, 1e6)
QUAD_EPSABS = 1e-10
TAU_TOLERANCE = 1e-8


def laplace(spec: FrailtySpec, u: ArrayLike) -> ArrayLike:
    """Laplace transform E[exp(-uV)] of the frailty."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0):
        raise FrailtyDomainError("Laplace transform requires u >= 0")
    theta = spec.theta
    if spec.family is FrailtyFamily.GAMMA:
        out = np.exp(-np.log1p(theta * u_arr) / theta)
    elif spec.family is FrailtyFamily.INVERSE_GAUSSIAN:
        out = np.exp((1.0 - np.sqrt(1.0 + 2.0 * theta * u_arr)) / theta)
    else:
        out = np.exp(-np.power(u_arr, theta))
    return float(out) if out.ndim == 0 else out


def varphi(spec: FrailtySpec, lambda1_cum: ArrayLike, lambda0_cum: ArrayLike) -> ArrayLike:
    """
    Multiplier turning the observed hazard ratio into the causal hazard ratio,
    given the cumulative hazards of both arms.
    """
    l1 = np.asarray(lambda1_cum, dtype=float)
    l0 = np.asarray(lambda0_cum, dtype=float)
    if np.any(l1 < 0) or np.any(l0 < 0):
        raise FrailtyDomainError("cumulative hazards must be nonnegative")
    theta = spec.theta
    if spec.family is FrailtyFamily.GAMMA:
        out = np.exp(theta * (l1 - l0))
    elif spec.family is FrailtyFamily.INVERSE_GAUSSIAN:
        out = (1.0 + theta * l1) / (1.0 + theta * l0)
    else:
        if np.any(l1 == 0) or np.any(l0 == 0):
            raise FrailtyDomainError("PS multiplier undefined at zero cumulative hazard")
        out = np.power(l1 / l0, 1.0 / theta - 1.0)
    return float(out) if out.ndim == 0 else out


def _generator_ratio(spec: FrailtySpec) -> Callable[[float], float]:
    """g(s)/g'(s) for the Archimedean generator g = inverse Laplace transform."""
    theta = spec.theta
    if spec.family is FrailtyFamily.GAMMA:
        return lambda s: -(s - s ** (theta + 1.0)) / theta
    if spec.family is FrailtyFamily.INVERSE_GAUSSIAN:
        def ratio(s: float) -> float:
            r = 1.0 - theta * np.log(s)
            return -s * (r * r - 1.0) / (2.0 * theta * r)
        return ratio
    return lambda s: theta * s * np.log(s)


def _kendall_integral(spec: FrailtySpec) -> float:
    ratio = _generator_ratio(spec)
    total = 0.0
    # split so that each piece carries only one endpoint singularity
    for lo, hi in ((0.0, 0.5), (0.5, 1.0)):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                value, abserr = integrate.quad(ratio, lo, hi, epsabs=QUAD_EPSABS, limit=200)
            except integrate.IntegrationWarning as exc:
                raise QuadratureError(
                    f"Kendall's tau quadrature did not converge on [{lo}, {hi}]: {exc}",
                    family=spec.family.value,
                    theta=spec.theta,
                ) from exc
        if not np.isfinite(value):
            raise QuadratureError("Kendall's tau quadrature returned a non-finite value",
                                  family=spec.family.value, theta=spec.theta)
        total += value
    return 1.0 + 4.0 * total


def theta_to_tau(spec: FrailtySpec, method: Literal["auto", "quadrature"] = "auto") -> float:
    """
    Kendall's tau between the two potential event times.

    Gamma and positive stable use closed forms; inverse Gaussian (or any
    family with ``method="quadrature"``) integrates the generator ratio.
    """
    if method not in ("auto", "quadrature"):
        raise ValueError(f"unknown method '{method}'")
    if method == "auto":
        if spec.family is FrailtyFamily.GAMMA:
            return spec.theta / (spec.theta + 2.0)
        if spec.family is FrailtyFamily.POSITIVE_STABLE:
            return 1.0 - spec.theta
    return _kendall_integral(spec)


def tau_to_theta(family: Union[FrailtyFamily, str], tau: float) -> FrailtySpec:
    """Frailty specification whose Kendall's tau equals ``tau``."""
    family = FrailtyFamily.parse(family)
    check_tau(family, tau)

    if family is FrailtyFamily.GAMMA:
        return FrailtySpec(family=family, theta=2.0 * tau / (1.0 - tau))
    if family is FrailtyFamily.POSITIVE_STABLE:
        return FrailtySpec(family=family, theta=1.0 - tau)

    lo, hi = IG_THETA_BRACKET

    def excess(theta: float) -> float:
        return theta_to_tau(FrailtySpec(family=family, theta=theta)) - tau

    f_lo, f_hi = excess(lo), excess(hi)
    if f_lo > 0 or f_hi < 0:
        reachable = (f_lo + tau, f_hi + tau)
        raise FrailtyRangeError(
            f"Kendall's tau {tau} is not reachable for the inverse_gaussian family with theta in "
            f"[{lo:g}, {hi:g}] (tau range [{reachable[0]:.3g}, {reachable[1]:.6g}])",
            family=family.value,
            tau=float(tau),
        )
    theta, result = optimize.brentq(excess, lo, hi, xtol=1e-14, rtol=1e-12, maxiter=500, full_output=True)
    if not result.converged or abs(excess(theta)) > TAU_TOLERANCE:
        raise FrailtyRangeError(f"could not invert Kendall's tau {tau} for the inverse_gaussian family",
                                family=family.value, tau=float(tau))
    logger.debug(f"Inverted inverse Gaussian tau={tau} to theta={theta:.10g} in {result.iterations} iterations")
    return FrailtySpec(family=family, theta=theta)
