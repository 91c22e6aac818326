"""
Eigen-expansions built on a SpectralDecomposition: heat kernels, the
Feynman-Kac semigroup P_t, the ground-state projection and the
eigenfunction envelope check.
"""
import logging
from dataclasses import dataclass
from typing import Any, List, NamedTuple, Optional, Sequence

import numpy as np

from src.models.model_spec import BoundParams, ModelSpec
from src.problem.bounds import log_bound_H
from src.spectral.decomposition import SpectralDecomposition

logger = logging.getLogger(__name__)

# exp() underflows to zero below about -745
LOG_UNDERFLOW = -745.0
ENVELOPE_FACTOR = 10.0


class HeatKernelValue(NamedTuple):
    p_tilde: float
    p: float
    tail: float


def _node_vector(dec: SpectralDecomposition, values: Any) -> np.ndarray:
    vector = np.asarray(values, dtype=float).ravel()
    if vector.shape != (dec.grid.size,):
        raise ValueError(f"Expected a node vector of length {dec.grid.size}, got {vector.shape}")
    if not np.all(np.isfinite(vector)):
        raise ValueError("Node vector must be finite")
    return vector


def _single_node(dec: SpectralDecomposition, node: Any) -> int:
    index = dec.grid.resolve(node)
    if index.size != 1:
        raise ValueError(f"Expected a single node, got {index.size}")
    return int(index[0])


def truncation_tail(dec: SpectralDecomposition, t: float, x: int, y: int) -> float:
    """
    Estimate of the modes beyond the captured ones.

    The last captured term is extended geometrically with ratio
    exp(-t * mean level spacing).
    """
    lam = dec.eigenvalues
    spacing = max((lam[-1] - lam[0]) / (dec.m_modes - 1), 1e-12)
    last = np.exp(-lam[-1] * t) * abs(dec.phi_tilde[-1, x] * dec.phi_tilde[-1, y])
    return float(last / -np.expm1(-spacing * t))


def heat_kernel(dec: SpectralDecomposition, t: float, x: Any, y: Any) -> HeatKernelValue:
    """
    Truncated expansions of the heat kernels at a pair of nodes.

    p~(t, x, y) = sum_n e^{-lambda_n t} phi~_n(x) phi~_n(y) and
    p(t, x, y) = p~(t, x, y) e^{-V(x)} e^{-V(y)}.

    Args:
        dec: Spectral decomposition
        t: Time, t > 0
        x, y: Flat node indices or points (snapped to the nearest node)

    Returns:
        HeatKernelValue: (p_tilde, p, tail) with the truncation tail estimate

    Raises:
        ValueError: If t <= 0
    """
    if not t > 0:
        raise ValueError(f"Heat kernel needs t > 0, got {t}")
    i, j = _single_node(dec, x), _single_node(dec, y)
    decay = np.exp(-dec.eigenvalues * t)
    p_tilde = float(np.sum(decay * dec.phi_tilde[:, i] * dec.phi_tilde[:, j]))
    p = p_tilde * float(np.exp(-dec.potential[i] - dec.potential[j]))
    return HeatKernelValue(p_tilde, p, truncation_tail(dec, t, i, j))


def heat_kernel_row(dec: SpectralDecomposition, t: float, x: Any) -> np.ndarray:
    """p~(t, x, .) at every node."""
    if not t > 0:
        raise ValueError(f"Heat kernel needs t > 0, got {t}")
    i = _single_node(dec, x)
    return (np.exp(-dec.eigenvalues * t) * dec.phi_tilde[:, i]) @ dec.phi_tilde


def trace_partial_sums(dec: SpectralDecomposition, t: float) -> np.ndarray:
    """Partial sums of sum_n e^{-lambda_n t} over the captured modes."""
    return np.cumsum(np.exp(-dec.eigenvalues * t))


def semigroup_apply(dec: SpectralDecomposition, t: float, phi: Any) -> np.ndarray:
    """
    P_t phi = sum_n e^{-lambda_n t} phi_n <phi_n, phi>_mu on the grid.

    At t = 0 this is the projection of ``phi`` onto the captured modes,
    not ``phi`` itself.

    Args:
        dec: Spectral decomposition
        t: Time, t >= 0
        phi: Node vector

    Returns:
        np.ndarray: P_t phi at every node
    """
    if t < 0:
        raise ValueError(f"Semigroup needs t >= 0, got {t}")
    coefficients = dec.coefficients(_node_vector(dec, phi))
    return (np.exp(-dec.eigenvalues * t) * coefficients) @ dec.phi


def project_pi(dec: SpectralDecomposition, g: Any) -> np.ndarray:
    """Pi(g) = phi_0 <g, phi_0>_mu at every node."""
    g = _node_vector(dec, g)
    return dec.phi[0] * float(dec.coefficients(g)[0])


def mu_phi0(dec: SpectralDecomposition) -> float:
    """mu(phi_0) = <1, phi_0>_mu."""
    return float(dec.coefficients(np.ones(dec.grid.size))[0])


def nu_density(dec: SpectralDecomposition) -> np.ndarray:
    """
    Density of the quasi-stationary distribution against dx at the nodes,
    phi_0 e^{2V} / mu(phi_0), normalized under grid quadrature.
    """
    density = np.maximum(dec.phi_mu[0], 0.0)
    return density / float(np.sum(dec.weights * density))


@dataclass
class EnvelopeResult:
    """Outcome of the eigenfunction envelope check."""

    modes: List[int]
    log_ratios: List[float]
    ratio_max: float
    fitted_c0: float
    fitted_t0: float
    residual_factor: float
    excluded_nodes: int
    passed: bool


def eigenfunction_envelope_check(
    dec: SpectralDecomposition,
    spec: ModelSpec,
    params: BoundParams,
    n: int,
    modes: Optional[Sequence[int]] = None,
    bound: Optional[np.ndarray] = None,
) -> EnvelopeResult:
    """
    Compare eigenfunctions with the envelope H_{c,c0} outside the ball of radius r0.

    For every checked mode the maximum of |phi_n| / H over nodes with
    |x| >= r0 is computed; log C0 and T0 in
    log ratio_n = log C0 + lambda_n T0 / 2 are fitted by least squares across
    the modes. The check passes when no mode deviates from the fit by more
    than a factor 10.

    Args:
        dec: Spectral decomposition with V attached
        spec: The model the decomposition was computed for
        params: Envelope parameters
        n: Highest mode index to check (modes 0..n unless ``modes`` is given)
        modes: Explicit list of mode indices
        bound: Envelope values at the nodes overriding H_{c,c0}

    Returns:
        EnvelopeResult: Ratio of mode ``n``, fitted constants and the verdict
    """
    if not 0 <= n < dec.m_modes:
        raise ValueError(f"Mode index {n} outside 0..{dec.m_modes - 1}")
    modes = list(range(n + 1)) if modes is None else sorted({int(m) for m in modes} | {n})
    if any(not 0 <= m < dec.m_modes for m in modes):
        raise ValueError(f"Mode indices must lie in 0..{dec.m_modes - 1}")

    outer = dec.grid.radii >= params.r0
    points = dec.grid.nodes[outer]
    if bound is None:
        log_h = log_bound_H(spec, params, points)
    else:
        with np.errstate(divide="ignore"):
            log_h = np.log(np.asarray(bound, dtype=float).ravel()[outer])
    usable = log_h > LOG_UNDERFLOW
    excluded = int(np.count_nonzero(~usable))
    if excluded:
        logger.warning(f"Envelope underflows at {excluded} nodes; excluded from the ratio")
    if not usable.any():
        raise ValueError("Envelope underflows at every node outside r0")

    with np.errstate(divide="ignore"):
        log_phi = np.log(np.abs(dec.phi_tilde[:, outer][:, usable])) - dec.potential[outer][usable]
    log_ratios = [float(np.max(log_phi[m] - log_h[usable])) for m in modes]
    lam = dec.eigenvalues[modes]

    if len(modes) > 1 and np.ptp(lam) > 0:
        slope, intercept = np.polyfit(lam, log_ratios, 1)
        t0 = max(2.0 * float(slope), 0.0)
        if slope < 0:
            intercept = float(np.mean(log_ratios))
    else:
        t0, intercept = 0.0, float(np.mean(log_ratios))
    residuals = np.asarray(log_ratios) - (intercept + lam * t0 / 2.0)
    residual_factor = float(np.exp(np.max(np.abs(residuals))))
    passed = bool(np.all(np.isfinite(log_ratios)) and residual_factor <= ENVELOPE_FACTOR)

    result = EnvelopeResult(
        modes=modes,
        log_ratios=log_ratios,
        ratio_max=float(np.exp(min(log_ratios[modes.index(n)], 709.0))),
        fitted_c0=float(np.exp(min(intercept, 709.0))),
        fitted_t0=t0,
        residual_factor=residual_factor,
        excluded_nodes=excluded,
        passed=passed,
    )
    logger.info(
        f"Envelope check modes={modes}: C0={result.fitted_c0:.4g}, T0={t0:.4g}, "
        f"residual factor {residual_factor:.3g}, pass={passed}"
    )
    return result
