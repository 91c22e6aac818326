"""
Feynman-Kac path estimator of P_t phi(x) = E_x[exp(-int_0^t K(X_s) ds) phi(X_t)].

Each path carries the left-endpoint Riemann sum of int K along its
Euler-Maruyama trajectory; weights are kept in log space until the end.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Tuple

import numpy as np

from src.models.fields import FieldEvaluationError
from src.models.model_spec import ModelSpec, SimConfig
from src.montecarlo.diffusion import SimulationError, euler_step
from src.montecarlo.streams import run_chunks

logger = logging.getLogger(__name__)

# exp() overflows just above 709
LOG_OVERFLOW = 700.0

InitialSampler = Callable[[np.random.Generator, int], np.ndarray]
Evaluable = Callable[[np.ndarray], np.ndarray]


class WeightOverflowError(Exception):
    """Raised when exp(-int K) overflows along some path (K very negative)."""

    def __init__(self, message: str, max_abs_integral: float):
        super().__init__(message)
        self.max_abs_integral = max_abs_integral


@dataclass(frozen=True)
class FKEstimate:
    """Monte Carlo estimate of P_t phi(x0)."""

    t: float
    phi: str
    x0: Tuple[float, ...]
    estimate: float
    std_error: float
    n_paths: int
    weight_extrema: Tuple[float, float]
    notes: Dict[str, Any] = field(default_factory=dict)

    def to_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {"t": self.t}
        row.update({f"x0_{i}": v for i, v in enumerate(self.x0)})
        row.update(estimate=self.estimate, std_error=self.std_error, n_paths=self.n_paths)
        return row


def weighted_paths(
    spec: ModelSpec,
    initial: InitialSampler,
    t: float,
    cfg: SimConfig,
    stream: str,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Run ``cfg.n_paths`` single-particle paths to time ``t``.

    Args:
        spec: Model definition
        initial: Draws (n, d) starting points from a generator
        t: Horizon, a multiple of dt not above t_max
        cfg: Step size, path count and seed
        stream: Random stream family

    Returns:
        Tuple[np.ndarray, np.ndarray]: End positions (n_paths, d) and
            log weights -sum_k K(X_{t_k}) dt, both in path order
    """
    if t > cfg.t_max + 1e-12:
        raise ValueError(f"t={t} exceeds t_max={cfg.t_max}")
    n_steps = cfg.n_steps(t)

    def task(start: int, stop: int, rng: np.random.Generator):
        positions = np.asarray(initial(rng, stop - start), dtype=float).reshape(stop - start, spec.dimension)
        if not np.all(np.isfinite(positions)):
            raise ValueError("Initial sampler produced non-finite points")
        log_weight = np.zeros(stop - start)
        for _ in range(n_steps):
            try:
                log_weight -= spec.K(positions) * cfg.dt
            except FieldEvaluationError as e:
                raise SimulationError(f"Rate evaluation failed: {str(e)}")
            positions = euler_step(spec, positions, cfg.dt, rng.standard_normal(positions.shape))
        return positions, log_weight

    chunks = run_chunks(task, cfg, stream)
    positions = np.concatenate([p for p, _ in chunks])
    log_weights = np.concatenate([w for _, w in chunks])
    if log_weights.max() > LOG_OVERFLOW:
        largest = float(np.max(np.abs(log_weights)))
        logger.error(f"Path weight overflow: max |int K| = {largest:.4g}")
        raise WeightOverflowError(
            f"Path weights overflow (max |int K| = {largest:.4g}); shorten t or reduce the growth rate",
            largest,
        )
    return positions, log_weights


def feynman_kac_estimate(
    spec: ModelSpec,
    x0: Any,
    t: float,
    phi: Evaluable,
    cfg: SimConfig,
) -> FKEstimate:
    """
    Estimate P_t phi(x0) by independent weighted diffusion paths.

    Args:
        spec: Model definition
        x0: Starting point
        t: Time, t <= cfg.t_max
        phi: Vectorized function of points (n, d) -> (n,)
        cfg: Simulation parameters

    Returns:
        FKEstimate: Sample mean of weight * phi(X_t) and its standard error

    Raises:
        WeightOverflowError: If exp(-int K) overflows
    """
    start = spec.points(x0)[0]
    name = getattr(phi, "name", getattr(phi, "__name__", "phi"))
    logger.info(f"Feynman-Kac estimate of P_{t:g} {name}({start.tolist()}) with {cfg.n_paths} paths")
    positions, log_weights = weighted_paths(
        spec, lambda rng, n: np.repeat(start[None, :], n, axis=0), t, cfg, "feynman-kac"
    )
    weights = np.exp(log_weights)
    values = weights * np.asarray(phi(positions), dtype=float)
    n = values.shape[0]
    std_error = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0

    notes: Dict[str, Any] = {}
    if not getattr(phi, "bounded", True):
        notes["unbounded_phi"] = True
    estimate = FKEstimate(
        t=float(t),
        phi=name,
        x0=tuple(float(v) for v in start),
        estimate=float(values.mean()),
        std_error=std_error,
        n_paths=n,
        weight_extrema=(float(weights.min()), float(weights.max())),
        notes=notes,
    )
    logger.info(f"P_{t:g} {name}: {estimate.estimate:.6g} +- {estimate.std_error:.3g}")
    return estimate
