"""
Numerical evidence for the standing assumptions on K~ and V.

Limits at infinity cannot be verified on finitely many radii, so each
condition is judged from the trend of sampled quantities: the sphere
minimum of K~ must keep increasing, and the limsup ratios are classified
by the slope of their log-log trace over the outer radii.
"""
import logging
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.stats import norm, qmc

from src.models.model_spec import ModelSpec
from src.models.reports import AssumptionReport, QuadratureResult
from src.problem.bounds import ball_infima, box_quadrature
from src.problem.potential import EffectivePotential

logger = logging.getLogger(__name__)

CONSISTENT = "consistent"
INCONSISTENT = "inconsistent"
INCONCLUSIVE = "inconclusive"

# log-log slope above which a ratio is read as unbounded, below minus which as vanishing
SLOPE_TOL = 0.25
SLOPE_MARGIN = 0.05
ZERO_ATOL = 1e-12
SPHERE_SAMPLES = 256
BALL_SAMPLES = 64

RATIO_NAMES = (
    "v_minus_over_r2",
    "v_minus_over_inf",
    "r2_over_inf",
    "v_minus_over_r_sqrt_inf",
)


@lru_cache(maxsize=16)
def sphere_directions(dimension: int, samples: int = SPHERE_SAMPLES) -> np.ndarray:
    """Deterministic unit vectors: +-e_i plus normalized Halton-Gaussian directions."""
    axes = np.vstack([np.eye(dimension), -np.eye(dimension)])
    if dimension == 1:
        return axes
    uniform = qmc.Halton(d=dimension, scramble=False).random(samples + 1)[1:]
    gaussian = norm.ppf(uniform)
    gaussian /= np.linalg.norm(gaussian, axis=1, keepdims=True)
    return np.vstack([axes, gaussian])


def _ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denominator > 0, numerator / np.where(denominator > 0, denominator, 1.0), np.inf)
    return np.where(numerator == 0.0, 0.0, ratio)


def classify_trace(radii: Sequence[float], trace: Sequence[float]) -> Tuple[str, float]:
    """
    Classify a sampled ratio trace as vanishing, bounded, unbounded or ambiguous.

    The log-log slope is fitted over the outer half of the radii (at least
    three points). Slopes within ``SLOPE_MARGIN`` of a threshold are
    ambiguous rather than adjudicated.
    """
    k = max(3, len(radii) // 2)
    r = np.asarray(radii[-k:], dtype=float)
    v = np.asarray(trace[-k:], dtype=float)
    if np.any(~np.isfinite(v)):
        return "unbounded", float("inf")
    if np.all(np.abs(v) <= ZERO_ATOL):
        return "vanishing", float("-inf")
    if np.any(v <= 0):
        return "ambiguous", float("nan")
    slope = float(np.polyfit(np.log(r), np.log(v), 1)[0])
    if abs(slope - SLOPE_TOL) < SLOPE_MARGIN or abs(slope + SLOPE_TOL) < SLOPE_MARGIN:
        return "ambiguous", slope
    if slope < -SLOPE_TOL:
        return "vanishing", slope
    if slope <= SLOPE_TOL:
        return "bounded", slope
    return "unbounded", slope


def _eventually_increasing(values: Sequence[float]) -> bool:
    k = max(2, len(values) // 2)
    tail = list(values[-k:])
    return all(b > a for a, b in zip(tail, tail[1:])) and values[-1] > values[0]


def check_assumptions(
    spec: ModelSpec,
    radii: Sequence[float],
    thetas: Sequence[float],
    quad_tol: float = 1e-6,
    ball_samples: int = BALL_SAMPLES,
) -> AssumptionReport:
    """
    Sample the standing assumptions on the given radii.

    Args:
        spec: Model definition
        radii: Strictly increasing radii, at least four
        thetas: Positive exponents for the integrals of exp(-theta K~)
        quad_tol: Relative quadrature tolerance
        ball_samples: Samples per ball infimum

    Returns:
        AssumptionReport: Sphere minima of K~, theta integrals, ratio traces,
            the detected branch and the verdict
    """
    radii = [float(r) for r in radii]
    if len(radii) < 4 or any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] <= 0:
        raise ValueError("radii must be positive, strictly increasing and contain at least 4 entries")
    if not thetas or any(t <= 0 for t in thetas):
        raise ValueError("thetas must be a non-empty list of positive reals")

    logger.info(f"Checking assumptions for {spec.name} on radii {radii}")
    ktilde = EffectivePotential(spec)
    directions = sphere_directions(spec.dimension)
    diagnostics: List[str] = []

    minima: List[float] = []
    maxima: List[float] = []
    traces: Dict[str, List[float]] = {name: [] for name in RATIO_NAMES}
    for r in radii:
        points = r * directions
        values = ktilde.evaluate(points)
        minima.append(float(values.min()))
        maxima.append(float(values.max()))

        v_minus = np.maximum(-spec.V(points), 0.0)
        infimum = ball_infima(spec, points, ball_samples)
        traces["v_minus_over_r2"].append(float(np.max(v_minus / r ** 2)))
        traces["v_minus_over_inf"].append(float(np.max(_ratio(v_minus, infimum))))
        traces["r2_over_inf"].append(float(np.max(_ratio(np.full_like(infimum, r ** 2), infimum))))
        traces["v_minus_over_r_sqrt_inf"].append(
            float(np.max(_ratio(v_minus, r * np.sqrt(np.maximum(infimum, 0.0)))))
        )

    behaviour = {name: classify_trace(radii, trace) for name, trace in traces.items()}
    slopes = {name: slope for name, (_, slope) in behaviour.items()}
    kinds = {name: kind for name, (kind, _) in behaviour.items()}
    bounded = {"vanishing", "bounded"}

    ess = kinds["v_minus_over_r2"] == "vanishing" and kinds["v_minus_over_inf"] in bounded
    ess2 = kinds["r2_over_inf"] in bounded and kinds["v_minus_over_r_sqrt_inf"] == "vanishing"
    branch = "ess2" if ess2 else "ess" if ess else "neither"
    ambiguous = branch == "neither" and any(kind == "ambiguous" for kind in kinds.values())
    if ambiguous:
        diagnostics.append("ratio trace at a classification threshold")

    theta_integrals: Dict[float, QuadratureResult] = {}
    for theta in thetas:
        theta_integrals[float(theta)] = box_quadrature(
            lambda p, th=theta: -th * ktilde.evaluate(p), spec.dimension, 1.0, quad_tol
        )

    if maxima[-1] < 0:
        verdict = INCONSISTENT
        diagnostics.append(f"K~ negative on the whole sphere of radius {radii[-1]:g}")
    elif not _eventually_increasing(minima):
        verdict = INCONSISTENT
        diagnostics.append("sphere minimum of K~ is not eventually increasing")
    elif any(res.diverged for res in theta_integrals.values()):
        verdict = INCONSISTENT
        diagnostics.append("an integral of exp(-theta K~) diverges")
    elif not all(res.finite for res in theta_integrals.values()):
        verdict = INCONCLUSIVE
        diagnostics.extend(res.diagnostic for res in theta_integrals.values() if not res.finite)
    elif ambiguous:
        verdict = INCONCLUSIVE
    else:
        verdict = CONSISTENT

    report = AssumptionReport(
        radii_checked=radii,
        ktilde_min_at_radius=minima,
        theta_integrals=theta_integrals,
        branch_detected=branch,
        ratio_traces=traces,
        ratio_slopes=slopes,
        verdict=verdict,
        diagnostics=diagnostics,
    )
    logger.info(report.verdict_line())
    return report


def example13_admissible(alpha: float, beta: float) -> bool:
    """
    Growth-exponent clauses under which the integrability condition holds.

    Returns:
        bool: True iff (alpha < 2 and alpha <= beta) or (beta >= 2 and alpha < 1 + beta/2)
    """
    return (alpha < 2 and alpha <= beta) or (beta >= 2 and alpha < 1 + beta / 2)


def growth_exponents(spec: ModelSpec, radii: Sequence[float]) -> Tuple[float, float]:
    """
    Fit the growth exponents of |V| and of the sphere minimum of K~.

    Returns:
        Tuple[float, float]: (alpha_hat, beta_hat) as log-log slopes over the
            outer half of the radii; NaN where the sampled values are not positive
    """
    ktilde = EffectivePotential(spec)
    directions = sphere_directions(spec.dimension)
    v_max, k_min = [], []
    for r in radii:
        points = float(r) * directions
        v_max.append(float(np.max(np.abs(spec.V(points)))))
        k_min.append(float(ktilde.evaluate(points).min()))

    def slope(values: List[float]) -> float:
        k = max(2, len(radii) // 2)
        v = np.asarray(values[-k:])
        if np.any(v <= 0):
            return float("nan")
        return float(np.polyfit(np.log(np.asarray(radii[-k:], dtype=float)), np.log(v), 1)[0])

    alpha_hat = 0.0 if max(v_max) == 0.0 else slope(v_max)
    return alpha_hat, slope(k_min)


def classify_trend(lambda0: float, atol: float = 1e-9) -> str:
    """Sign rule for the total mass: growth if lambda0 < 0, decay if > 0, else stable."""
    if lambda0 < -atol:
        return "growth"
    if lambda0 > atol:
        return "decay"
    return "stable"
