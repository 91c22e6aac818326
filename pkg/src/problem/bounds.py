"""
The decay envelope H_{c,c0}, ball infima of K~ and box-doubling quadrature
for the integrability condition mu(H_{c,c0}) < infinity.

All integrands are handled in log space so that e^{2V} growth is detected
as divergence instead of overflowing.
"""
import logging
from functools import lru_cache
from typing import Any, Callable, Optional

import numpy as np
from scipy.stats import qmc

from src.models.model_spec import BoundParams, ModelSpec
from src.models.reports import QuadratureResult
from src.problem.potential import EffectivePotential

logger = logging.getLogger(__name__)

LogIntegrand = Callable[[np.ndarray], np.ndarray]

BOUNDARY_TOL = 1e-12
# exp() overflows just above 709
LOG_OVERFLOW = 700.0
GROWTH_CHANGE = 0.25
_BLOCK = 4096
_BASE_POINTS = {1: 257, 2: 65, 3: 17}
_MAX_POINTS = {1: 2 ** 16 + 1, 2: 1025, 3: 129}


@lru_cache(maxsize=32)
def ball_template(dimension: int, samples: int) -> np.ndarray:
    """
    Deterministic offsets covering the closed unit ball.

    Contains the centre, the axis points +-e_i on the sphere and a Halton
    sequence mapped into the ball (points falling outside the ball are
    projected onto the sphere). In one dimension the offsets are an
    equispaced grid on [-1, 1] including both endpoints.
    """
    if dimension == 1:
        offsets = np.linspace(-1.0, 1.0, samples).reshape(-1, 1)
        return np.vstack([offsets, np.zeros((1, 1))])

    cube = 2.0 * qmc.Halton(d=dimension, scramble=False).random(samples) - 1.0
    norms = np.linalg.norm(cube, axis=1)
    outside = norms > 1.0
    cube[outside] /= norms[outside, None]
    axes = np.vstack([np.eye(dimension), -np.eye(dimension)])
    return np.vstack([np.zeros((1, dimension)), axes, cube])


def ball_infima(spec: ModelSpec, points: np.ndarray, samples: int) -> np.ndarray:
    """
    Vectorized inf of K~ over B(x, |x|/2) for every row x of ``points``.

    Besides the template points each ball contributes the two points on
    the ray through x closest to and farthest from the origin (x/2 and 3x/2),
    which are the exact minimizers for radial fields monotone in |x|.
    """
    ktilde = EffectivePotential(spec)
    template = ball_template(spec.dimension, samples)
    result = np.empty(points.shape[0])
    for start in range(0, points.shape[0], _BLOCK):
        block = points[start:start + _BLOCK]
        radius = 0.5 * np.linalg.norm(block, axis=1)
        around = block[:, None, :] + radius[:, None, None] * template[None, :, :]
        ray = np.stack([0.5 * block, 1.5 * block], axis=1)
        candidates = np.concatenate([around, ray], axis=1)
        values = ktilde.evaluate(candidates.reshape(-1, spec.dimension))
        result[start:start + _BLOCK] = values.reshape(block.shape[0], -1).min(axis=1)
    return result


def ball_infimum_ktilde(spec: ModelSpec, x: Any, params: BoundParams) -> float:
    """
    Approximate inf of K~ over the closed ball B(x, |x|/2).

    Args:
        spec: Model definition
        x: Point with |x| > 0
        params: Bound parameters (``ball_samples`` sets the sample count)

    Returns:
        float: Minimum of K~ over the sample set; never above K~(x)
    """
    points = spec.points(x)
    if not np.linalg.norm(points[0]) > 0:
        raise ValueError("ball_infimum_ktilde needs |x| > 0")
    return float(ball_infima(spec, points, params.ball_samples)[0])


def log_bound_H(spec: ModelSpec, params: BoundParams, points: np.ndarray) -> np.ndarray:
    """
    log H_{c,c0} at every row of ``points``.

    Inside |x| < r0 the ball infimum is clamped below at 0; in the ``ess2``
    branch it is clamped everywhere since its square root enters the bound.
    """
    radius = np.linalg.norm(points, axis=1)
    infimum = ball_infima(spec, points, params.ball_samples)
    infimum = np.where(radius < params.r0, np.maximum(infimum, 0.0), infimum)
    v_plus = np.maximum(spec.V(points), 0.0)

    if params.branch == "ess":
        return -v_plus + np.logaddexp(-params.c * infimum, -params.c0 * radius ** 2)
    return -v_plus - params.c0 * radius * np.sqrt(np.maximum(infimum, 0.0))


def bound_H(spec: ModelSpec, params: BoundParams, x: Any) -> float:
    """
    Evaluate the envelope H_{c,c0} at one point.

    Args:
        spec: Model definition
        params: Bound parameters; ``params.branch`` selects the case
        x: Point in R^d

    Returns:
        float: H_{c,c0}(x) > 0
    """
    return float(np.exp(log_bound_H(spec, params, spec.points(x))[0]))


def _trapezoid_weights(n: int, h: float, dimension: int) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    weights = w
    for _ in range(dimension - 1):
        weights = np.multiply.outer(weights, w)
    return weights.ravel()


def _box_nodes(radius: float, n: int, dimension: int) -> np.ndarray:
    axis = np.linspace(-radius, radius, n)
    mesh = np.meshgrid(*([axis] * dimension), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _boundary_mask(n: int, dimension: int) -> np.ndarray:
    index = np.indices((n,) * dimension).reshape(dimension, -1)
    return np.any((index == 0) | (index == n - 1), axis=0)


def _trapezoid_log(log_f: LogIntegrand, radius: float, n: int, dimension: int):
    """Return (log value, log max, log boundary max) of the trapezoid rule on the box."""
    nodes = _box_nodes(radius, n, dimension)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        lf = np.asarray(log_f(nodes), dtype=float)
    lf = np.where(np.isnan(lf), -np.inf, lf)
    log_max = float(np.max(lf))
    log_boundary = float(np.max(lf[_boundary_mask(n, dimension)]))
    if log_max == -np.inf:
        return -np.inf, -np.inf, -np.inf
    h = 2.0 * radius / (n - 1)
    total = np.sum(_trapezoid_weights(n, h, dimension) * np.exp(lf - log_max))
    return log_max + float(np.log(total)), log_max, log_boundary


def _relative_change(new: float, old: float) -> float:
    if new == old:
        return 0.0
    return abs(new - old) / max(abs(new), abs(old))


def box_quadrature(
    log_integrand: LogIntegrand,
    dimension: int,
    box_radius: float,
    quad_tol: float = 1e-6,
    max_doublings: int = 6,
    boundary_tol: float = BOUNDARY_TOL,
) -> QuadratureResult:
    """
    Integrate exp(log_integrand) over R^d by adaptive trapezoid rules on
    boxes [-R, R]^d of doubling radius.

    At each radius the resolution is refined until the value settles to
    ``quad_tol``; the result is converged once doubling the radius changes
    it by less than ``quad_tol`` and the integrand on the box boundary is
    below ``boundary_tol`` of its maximum. Overflow of the integrand, or a
    boundary that still carries mass at the largest box, is divergence.

    Args:
        log_integrand: Vectorized log of the integrand, points (n, d) -> (n,)
        dimension: Dimension d
        box_radius: Initial box radius
        quad_tol: Relative tolerance
        max_doublings: Maximum number of radius doublings
        boundary_tol: Boundary-to-maximum ratio required for convergence

    Returns:
        QuadratureResult: Value with convergence and divergence flags
    """
    base = _BASE_POINTS.get(dimension, 9)
    cap = _MAX_POINTS.get(dimension, 33)
    previous_value: Optional[float] = None
    previous_boundary: Optional[float] = None
    increases = 0
    radius = float(box_radius)
    n_start = base
    value, ratio, change = float("nan"), float("nan"), float("inf")

    for doubling in range(max_doublings + 1):
        n = n_start
        log_value, log_max, log_boundary = _trapezoid_log(log_integrand, radius, n, dimension)
        while n < cap:
            n_next = 2 * (n - 1) + 1
            refined, log_max, log_boundary = _trapezoid_log(log_integrand, radius, n_next, dimension)
            n = n_next
            settled = _relative_change(np.exp(refined - log_max), np.exp(log_value - log_max)) <= quad_tol \
                if np.isfinite(log_max) else True
            log_value = refined
            if settled:
                break

        if log_max == -np.inf:
            logger.info(f"Integrand vanishes on box of radius {radius}")
            return QuadratureResult(0.0, True, radius=radius, boundary_ratio=0.0)
        if log_max > LOG_OVERFLOW or log_value > LOG_OVERFLOW:
            logger.warning(f"Integrand overflow at box radius {radius} (log max {log_max:.1f})")
            return QuadratureResult(
                float("inf"), False, diverged=True, radius=radius,
                diagnostic=f"integrand overflow at radius {radius:g}",
            )

        value = float(np.exp(log_value))
        ratio = float(np.exp(log_boundary - log_max))
        if previous_boundary is not None and log_boundary > previous_boundary and ratio >= boundary_tol:
            increases += 1
        else:
            increases = 0
        change = float("inf") if previous_value is None else _relative_change(value, previous_value)
        if change < quad_tol and ratio < boundary_tol:
            return QuadratureResult(value, True, radius=radius, boundary_ratio=ratio)

        previous_value, previous_boundary = value, log_boundary
        n_start = min(cap, 2 * (n - 1) + 1)
        radius *= 2.0

    radius /= 2.0
    # still growing at the largest box: mass keeps arriving through the boundary
    diverged = ratio >= boundary_tol and (increases >= 1 or change > GROWTH_CHANGE)
    if diverged:
        logger.warning(f"Integrand does not decay at the box boundary up to radius {radius}")
        return QuadratureResult(
            value, False, diverged=True, radius=radius, boundary_ratio=ratio,
            diagnostic=f"boundary growth detected at radius {radius:g}",
        )
    logger.warning(f"Quadrature did not converge up to box radius {radius}")
    return QuadratureResult(
        value, False, radius=radius, boundary_ratio=ratio,
        diagnostic="no convergence within the doubling budget",
    )


def weighted_bound_integral(
    spec: ModelSpec,
    params: BoundParams,
    box_radius: float,
    quad_tol: float = 1e-6,
    phi: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    bound: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> QuadratureResult:
    """
    Box-doubling quadrature of int H(x) |phi(x)| e^{2V(x)} dx.

    Args:
        spec: Model definition
        params: Bound parameters
        box_radius: Initial box radius
        quad_tol: Relative tolerance
        phi: Optional weight function; omitted means phi = 1
        bound: Optional replacement for H_{c,c0} (vectorized)
    """
    def log_integrand(points: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            if bound is None:
                log_h = log_bound_H(spec, params, points)
            else:
                log_h = np.log(np.abs(bound(points)))
            value = log_h + 2.0 * spec.V(points)
            if phi is not None:
                value = value + np.log(np.abs(phi(points)))
        return value

    return box_quadrature(log_integrand, spec.dimension, box_radius, quad_tol)


def mu_H_integral(
    spec: ModelSpec,
    params: BoundParams,
    box_radius: float,
    quad_tol: float = 1e-6,
    bound: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> QuadratureResult:
    """
    mu(H_{c,c0}) = int H_{c,c0}(x) e^{2V(x)} dx by box-doubling quadrature.

    Args:
        spec: Model definition
        params: Bound parameters (branch, c, c0, r0)
        box_radius: Initial box radius, must exceed r0
        quad_tol: Relative tolerance of the doubling test
        bound: Optional replacement for H (used to integrate other envelopes)

    Returns:
        QuadratureResult: ``value`` and ``converged``; ``diverged`` with the
            radius where growth was detected when condition (ass) fails
    """
    if box_radius <= params.r0:
        raise ValueError(f"box_radius={box_radius} must exceed r0={params.r0}")
    logger.info(
        f"Integrating mu(H) for {spec.name} (branch {params.branch}, c={params.c}, c0={params.c0})"
    )
    result = weighted_bound_integral(spec, params, box_radius, quad_tol, bound=bound)
    logger.info(f"mu(H) = {result.value:.6g} (converged={result.converged}, diverged={result.diverged})")
    return result
