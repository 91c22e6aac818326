"""
Self-normalized weighted clouds approximating the quasi-stationary distribution.

A cloud drawn from nu0 and reweighted by exp(-int K) realizes the ratio
E_nu0[e^{-int K} phi(X_t)] / E_nu0[e^{-int K}].
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import RegularGridInterpolator
from scipy.special import logsumexp

from src.models.model_spec import ModelSpec, SimConfig
from src.montecarlo.feynman_kac import InitialSampler, weighted_paths
from src.spectral.decomposition import SpectralDecomposition
from src.spectral.expansion import nu_density

logger = logging.getLogger(__name__)

LOG_UNDERFLOW = -700.0


class WeightUnderflowError(Exception):
    """Raised when every path weight underflows."""
    pass


@dataclass(frozen=True)
class QSDSample:
    """
    Weighted particle cloud at time t.

    ``weights`` are normalized to sum to one; ``normalizing_constant``
    estimates E_nu0[exp(-int_0^t K)].
    """

    t: float
    nu0: str
    positions: np.ndarray
    weights: np.ndarray
    effective_sample_size: float
    normalizing_constant: float
    normalizing_std_error: float
    n_paths: int

    def weighted_mean(self, phi: Callable[[np.ndarray], np.ndarray]) -> Tuple[float, float]:
        """
        Self-normalized estimate of the cloud mean of ``phi``.

        Returns:
            Tuple[float, float]: Estimate and its delta-method standard error
        """
        values = np.asarray(phi(self.positions), dtype=float)
        mean = float(np.sum(self.weights * values))
        std_error = float(np.sqrt(np.sum(self.weights ** 2 * (values - mean) ** 2)))
        return mean, std_error

    def to_frame(self) -> pd.DataFrame:
        data = {f"x{i}": self.positions[:, i] for i in range(self.positions.shape[1])}
        data["weight"] = self.weights
        return pd.DataFrame(data)


def qsd_sample(spec: ModelSpec, nu0: InitialSampler, t: float, cfg: SimConfig) -> QSDSample:
    """
    Draw x0 ~ nu0 per path, run weighted paths to ``t`` and self-normalize.

    Args:
        spec: Model definition
        nu0: Initial sampler (rng, n) -> (n, d) points
        t: Time, a multiple of dt not above t_max
        cfg: Simulation parameters

    Returns:
        QSDSample: The normalized cloud with effective sample size
            (sum w)^2 / sum w^2

    Raises:
        WeightUnderflowError: If the total weight underflows
    """
    name = getattr(nu0, "name", "nu0")
    logger.info(f"QSD sample of {spec.name} at t={t:g} from {name} with {cfg.n_paths} paths")
    positions, log_weights = weighted_paths(spec, nu0, t, cfg, "qsd")

    n = log_weights.shape[0]
    log_total = float(logsumexp(log_weights))
    log_mean = log_total - np.log(n)
    if log_mean < LOG_UNDERFLOW:
        logger.error(f"Total path weight underflows (log mean weight {log_mean:.4g})")
        raise WeightUnderflowError(
            f"Total path weight underflows (log mean weight {log_mean:.4g}); use a shorter t or more paths"
        )

    weights = np.exp(log_weights - log_total)
    weights /= weights.sum()
    raw = np.exp(log_weights)
    std_error = float(raw.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    sample = QSDSample(
        t=float(t),
        nu0=name,
        positions=positions,
        weights=weights,
        effective_sample_size=float(1.0 / np.sum(weights ** 2)),
        normalizing_constant=float(np.exp(log_mean)),
        normalizing_std_error=std_error,
        n_paths=n,
    )
    logger.info(
        f"QSD cloud: normalizing constant {sample.normalizing_constant:.6g} "
        f"+- {std_error:.3g}, ESS {sample.effective_sample_size:.1f}"
    )
    return sample


class SpectralNuSampler:
    """
    Sampler of nu proportional to phi_0 dmu from a spectral decomposition.

    In one dimension it inverts the grid CDF; otherwise it uses rejection
    from the uniform law on the box against the interpolated density.
    ``acceptance`` is the expected acceptance rate (1 for inverse CDF).
    """

    name = "spectral-nu"

    def __init__(self, dec: SpectralDecomposition):
        self.dimension = dec.grid.dimension
        self.box_radius = dec.grid.box_radius
        density = nu_density(dec)
        if self.dimension == 1:
            axis = dec.grid.axis
            cdf = cumulative_trapezoid(density, axis, initial=0.0)
            self._axis = axis
            self._cdf = cdf / cdf[-1]
            self.acceptance = 1.0
        else:
            axes = (dec.grid.axis,) * self.dimension
            self._density = RegularGridInterpolator(axes, density.reshape(dec.grid.shape))
            self._peak = float(density.max())
            self.acceptance = float(1.0 / (self._peak * (2.0 * self.box_radius) ** self.dimension))

    def __call__(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.dimension == 1:
            return np.interp(rng.random(n), self._cdf, self._axis).reshape(n, 1)
        accepted = []
        count = 0
        batch = max(64, int(n / max(self.acceptance, 1e-3)))
        while count < n:
            proposals = rng.uniform(-self.box_radius, self.box_radius, size=(batch, self.dimension))
            keep = rng.random(batch) * self._peak < self._density(proposals)
            accepted.append(proposals[keep])
            count += int(keep.sum())
        return np.concatenate(accepted)[:n]


def spectral_nu_sampler(dec: SpectralDecomposition, min_acceptance: Optional[float] = None) -> SpectralNuSampler:
    """
    Build the nu sampler of ``dec``.

    Raises:
        ValueError: If the rejection acceptance rate falls below ``min_acceptance``
    """
    sampler = SpectralNuSampler(dec)
    logger.info(f"nu sampler for d={sampler.dimension}: expected acceptance {sampler.acceptance:.3g}")
    if min_acceptance is not None and sampler.acceptance < min_acceptance:
        raise ValueError(
            f"Rejection acceptance {sampler.acceptance:.3g} below {min_acceptance:.3g}"
        )
    return sampler
