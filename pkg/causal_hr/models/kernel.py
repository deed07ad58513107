import logging
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, ndimage

from causal_hr.core.exceptions import BandwidthSelectionError, EmptyArmError, KernelSupportError
from causal_hr.models.survival import WeightsLike, canonical_order, nelson_aalen, resolve_weights
from causal_hr.schemas.kernel import BandwidthPlan, KernelContext, KernelSpec, LocalMSE, SmoothedHazard
from causal_hr.schemas.sample import StepFunction, SurvivalSample, TimeGrid

logger = logging.getLogger(__name__)

QUADRATURE_ORDER = 64
FINE_GRID_POINTS = 201
MEDIAN_WINDOW = 5
PILOT_MULTIPLIER = 5.0

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(QUADRATURE_ORDER)


def epanechnikov(u):
    """Interior Epanechnikov kernel 0.75 (1 - u^2) on [-1, 1]."""
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def boundary_kernel(u, q):
    """
    Epanechnikov boundary kernel K(u; q) on [-1, q].

    q = 1 is the interior kernel; smaller q corrects for the left edge of the
    support. The right edge uses K(-u; q).
    """
    u = np.asarray(u, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise ValueError("boundary parameter q must lie in [0, 1]")
    value = 12.0 / (1.0 + q) ** 4 * (u + 1.0) * (u * (1.0 - 2.0 * q) + (3.0 * q * q - 2.0 * q + 1.0) / 2.0)
    out = np.where((u >= -1.0) & (u <= q), value, 0.0)
    return float(out) if out.ndim == 0 else out


def _boundary_parameters(points: np.ndarray, bandwidths: np.ndarray, spec: KernelSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per point: q of the boundary kernel and the side (+1 left or interior, -1 right).
    """
    left = (points - spec.beg) / bandwidths
    right = (spec.end - points) / bandwidths
    use_right = (right < 1.0) & (right < left)
    q = np.where(use_right, right, np.minimum(left, 1.0))
    side = np.where(use_right, -1.0, 1.0)
    return np.clip(q, 0.0, 1.0), side


def _kernel_matrix(points: np.ndarray, bandwidths: np.ndarray, jump_times: np.ndarray, spec: KernelSpec) -> np.ndarray:
    q, side = _boundary_parameters(points, bandwidths, spec)
    u = (points[:, None] - jump_times[None, :]) / bandwidths[:, None]
    return boundary_kernel(side[:, None] * u, q[:, None])


def kernel_sum(points, bandwidths, jump_times, masses, spec: KernelSpec) -> np.ndarray:
    """b(t)^-1 sum_i K_t((t - T_i) / b(t)) m_i at every point; co-located masses add linearly."""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    bandwidths = np.broadcast_to(np.asarray(bandwidths, dtype=float), points.shape)
    jump_times = np.asarray(jump_times, dtype=float)
    masses = np.asarray(masses, dtype=float)
    if not spec.contains(points):
        outside = points[(points < spec.beg) | (points > spec.end)]
        raise KernelSupportError(
            f"grid points outside the kernel support [{spec.beg:g}, {spec.end:g}]: {outside[:5].tolist()}",
            points=outside.tolist(),
        )
    if jump_times.size == 0:
        return np.zeros(points.shape)
    return (_kernel_matrix(points, bandwidths, jump_times, spec) @ masses) / bandwidths


def smooth_hazard(increments: StepFunction, spec: KernelSpec, plan: BandwidthPlan,
                  arm_event_count: int) -> SmoothedHazard:
    """Kernel-smoothed hazard at the plan's grid points with local bandwidths b(t)."""
    grid = plan.grid
    raw = kernel_sum(grid.points, plan.local_bandwidth, increments.jump_times, increments.increments, spec)
    # boundary kernels take negative values, so the sum can dip below zero
    values = np.maximum(raw, 0.0)
    cumulative = integrate.cumulative_trapezoid(values, grid.points, initial=0.0)
    return SmoothedHazard(
        grid=grid,
        values=values,
        plan=plan,
        cumulative=cumulative,
        increments=increments,
        event_count=int(arm_event_count),
    )


def candidate_bandwidths(spec: KernelSpec, count: int = 21) -> np.ndarray:
    """Geometric candidates from (end - beg)/50 to (end - beg)/2."""
    if count < 1:
        raise ValueError("at least one candidate bandwidth is required")
    if count == 1:
        return np.array([spec.width / 50.0])
    return np.geomspace(spec.width / 50.0, spec.max_bandwidth, count)


def kernel_context(sample: SurvivalSample, arm: int, spec: KernelSpec, weights: WeightsLike = None) -> KernelContext:
    """
    Nelson-Aalen increments plus the weighted event distribution of one arm.

    Weights are rescaled to mean one over the arm; ``total_weight`` sums them
    over the arm's events only, so it equals the event count when unweighted.
    """
    increments = nelson_aalen(sample, arm, weights)
    w = resolve_weights(sample, weights, per_arm=True)
    order = canonical_order(sample, w)
    mask = sample.arm_mask(arm)[order]
    if not mask.any():
        raise EmptyArmError("empty treatment arm", arm=int(arm))
    order = order[mask]
    arm_weights = w[order]
    arm_weights = arm_weights / arm_weights.mean()
    events = sample.event[order]
    event_times = sample.time[order][events]
    event_weights = arm_weights[events]
    by_time = np.argsort(event_times, kind="stable")
    return KernelContext(
        spec=spec,
        increments=increments,
        event_times=event_times[by_time],
        event_weights=event_weights[by_time],
        total_weight=float(event_weights.sum()),
        event_count=int(events.sum()),
    )


def _survival_factor(context: KernelContext, s: np.ndarray) -> np.ndarray:
    """Weighted empirical survival of the uncensored observations, 1 - F(s) with an n+1 denominator."""
    cumulative = np.concatenate(([0.0], np.cumsum(context.event_weights)))
    mass = cumulative[np.searchsorted(context.event_times, s, side="right")]
    return 1.0 - mass / (context.total_weight + 1.0)


def _local_mse(context: KernelContext, points: np.ndarray, bandwidth: float):
    """Variance, bias and clamp indicator of the smoothed hazard at ``points`` for one bandwidth."""
    spec = context.spec
    jumps, masses = context.increments.jump_times, context.increments.increments
    b = np.full(points.shape, bandwidth)

    fine = np.linspace(spec.beg, spec.end, FINE_GRID_POINTS)
    fine_hazard = np.maximum(kernel_sum(fine, bandwidth, jumps, masses, spec), 0.0)

    q, side = _boundary_parameters(points, b, spec)
    # kernel support in y is [-1, q] (left/interior) or [-q, 1] (right)
    lo = np.where(side > 0, -1.0, -q)
    hi = np.where(side > 0, q, 1.0)
    half = (hi - lo) / 2.0
    y = (lo + hi)[:, None] / 2.0 + half[:, None] * _GL_NODES[None, :]
    kernel = boundary_kernel(side[:, None] * y, q[:, None])
    s = np.clip(points[:, None] - bandwidth * y, spec.beg, spec.end)

    hazard = np.interp(s, fine, fine_hazard)
    survival = _survival_factor(context, s)
    clamped = np.any(survival <= 0, axis=1)
    if clamped.any():
        positive = survival[survival > 0]
        floor = positive.min() if positive.size else np.finfo(float).tiny
        survival = np.where(survival > 0, survival, floor)

    integral = np.sum(_GL_WEIGHTS[None, :] * kernel ** 2 * hazard / survival, axis=1) * half
    if context.total_weight > 0:
        variance = integral / (bandwidth * context.total_weight)
    else:
        variance = np.zeros_like(integral)

    at_b = kernel_sum(points, bandwidth, jumps, masses, spec)
    at_2b = kernel_sum(points, 2.0 * bandwidth, jumps, masses, spec)
    bias = (at_2b - at_b) / 3.0
    return variance, bias, clamped


def estimate_local_mse(t: float, bandwidth: float, context: KernelContext) -> LocalMSE:
    """
    Estimated MSE of the smoothed hazard at (t, b).

    The bias uses the Richardson difference of smooths at b and 2b, which is
    exact to leading order for a second-order kernel.
    """
    if not 0 < bandwidth <= context.spec.max_bandwidth * (1 + 1e-12):
        raise ValueError(f"bandwidth {bandwidth} outside (0, {context.spec.max_bandwidth}]")
    variance, bias, clamped = _local_mse(context, np.array([float(t)]), float(bandwidth))
    return LocalMSE(
        t=float(t),
        bandwidth=float(bandwidth),
        variance=float(variance[0]),
        bias=float(bias[0]),
        mse=float(variance[0] + bias[0] ** 2),
        clamped=bool(clamped[0]),
    )


def _stabilize(grid: TimeGrid, raw: np.ndarray, pilot: float) -> np.ndarray:
    """Running median of width 5 followed by Nadaraya-Watson smoothing with an Epanechnikov kernel."""
    median = ndimage.median_filter(raw, size=MEDIAN_WINDOW, mode="nearest")
    weights = epanechnikov((grid.points[:, None] - grid.points[None, :]) / pilot)
    return (weights @ median) / weights.sum(axis=1)


def select_bandwidths(context: KernelContext, grid: TimeGrid, candidates: Optional[np.ndarray] = None) -> BandwidthPlan:
    """
    Local bandwidths minimizing the estimated MSE at each grid point.

    Ties go to the smaller bandwidth. The raw argmin sequence is stabilized
    and kept within the candidate range.
    """
    spec = context.spec
    candidates = candidate_bandwidths(spec) if candidates is None else np.sort(np.asarray(candidates, dtype=float))
    if candidates.size == 0:
        raise ValueError("at least one candidate bandwidth is required")
    if np.any(candidates <= 0) or np.any(candidates > spec.max_bandwidth * (1 + 1e-12)):
        raise ValueError(f"candidate bandwidths must lie in (0, {spec.max_bandwidth:g}]")
    if not spec.contains(grid.points):
        raise KernelSupportError("grid points outside the kernel support", points=grid.points.tolist())

    mse = np.empty((candidates.size, grid.count))
    clamped = np.zeros(grid.count, dtype=bool)
    for k, bandwidth in enumerate(candidates):
        variance, bias, flagged = _local_mse(context, grid.points, float(bandwidth))
        mse[k] = variance + bias ** 2
        clamped |= flagged

    valid = np.isfinite(mse)
    invalid_points = ~valid.any(axis=0)
    if invalid_points.any():
        times = grid.points[invalid_points].tolist()
        raise BandwidthSelectionError(f"no valid candidate bandwidth at t={times}", times=times)

    raw = candidates[np.argmin(np.where(valid, mse, np.inf), axis=0)]
    pilot = spec.width / (8.0 * max(context.event_count, 1) ** 0.2)
    smoothed = _stabilize(grid, raw, PILOT_MULTIPLIER * pilot)
    local = np.clip(smoothed, candidates[0], candidates[-1])

    if clamped.any():
        logger.warning(f"Survival factor clamped at {int(clamped.sum())} grid points during bandwidth selection")
    logger.debug(f"Selected bandwidths in [{local.min():.4g}, {local.max():.4g}] from {candidates.size} candidates")
    return BandwidthPlan(
        grid=grid,
        local_bandwidth=local,
        candidate_set=candidates,
        raw_bandwidth=raw,
        pilot_bandwidth=PILOT_MULTIPLIER * pilot,
        clamped_points=grid.points[clamped].tolist(),
    )
