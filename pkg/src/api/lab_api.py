"""
Pipeline facade used by the command line: cached spectra, bound sweeps and
assumption checks.
"""
import logging
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from src.cache.cache_manager import cache_result
from src.models.model_spec import ModelSpec
from src.problem.assumptions import example13_admissible, growth_exponents
from src.problem.bounds import mu_H_integral
from src.spectral.decomposition import SpectralDecomposition, attach_model, eigs_smallest, validate
from src.spectral.grid import Grid
from src.spectral.operator import check_confinement, discretize
from src.utils.config import BoundsSection, get_config

logger = logging.getLogger(__name__)


def _spectrum_key(spec: ModelSpec, grid: Grid, m_modes: int, tol: float = 1e-8,
                  method: str = "auto", confine: bool = True) -> tuple:
    return (spec.fingerprint(), grid.descriptor(), m_modes, tol, method, confine)


@cache_result(expires=get_config()["cache_duration"], key_args=_spectrum_key, on_load=validate)
def compute_spectrum(
    spec: ModelSpec,
    grid: Grid,
    m_modes: int,
    tol: float = 1e-8,
    method: str = "auto",
    confine: bool = True,
) -> SpectralDecomposition:
    """
    Discretize, check confinement and solve for the low spectrum.

    Args:
        spec: Model definition
        grid: Grid of the model's dimension
        m_modes: Number of modes
        tol: Eigen-residual tolerance
        method: Eigensolver method
        confine: Reject K~ that does not grow towards the box boundary

    Returns:
        SpectralDecomposition: With V attached and the model recorded

    Raises:
        NonConfiningError: If ``confine`` and K~ is not confining on the box
    """
    logger.info(f"Computing spectrum for {spec.name}: {m_modes} modes on {grid.descriptor()}")
    op = discretize(spec, grid)
    if confine:
        check_confinement(op)
    return attach_model(eigs_smallest(op, m_modes, tol, method), spec)


def _admissible(alpha: float, beta: float) -> bool:
    return bool(np.isfinite(alpha) and np.isfinite(beta) and example13_admissible(alpha, beta))


def bounds_sweep(
    spec: ModelSpec,
    bounds: BoundsSection,
    exponents: Optional[Tuple[float, float]] = None,
) -> Tuple[pd.DataFrame, dict]:
    """
    Integrate mu(H_{c,c0}) over the (c, c0) sweep grid.

    Args:
        spec: Model definition
        bounds: Sweep values and envelope parameters
        exponents: Nominal (alpha, beta) growth exponents; fitted when omitted

    Returns:
        Tuple[pd.DataFrame, dict]: Table (c, c0, integral, converged, diverged)
            and annotations: alpha, beta, admissible, fitted, plus the fitted
            growth exponents of |V| and K~ (``alpha_effective``,
            ``beta_effective``) with their own admissibility flag

    Raises:
        ValueError: If either sweep list is empty
    """
    if not bounds.c_values or not bounds.c0_values:
        raise ValueError("The bounds sweep grid is empty (set c_values and c0_values)")
    effective = growth_exponents(spec, bounds.radii)
    fitted = exponents is None
    alpha, beta = effective if fitted else exponents
    admissible = _admissible(alpha, beta)
    logger.info(
        f"Bounds sweep for {spec.name}: alpha={alpha:.3g}, beta={beta:.3g}, admissible={admissible}, "
        f"K~ exponent={effective[1]:.3g}"
    )

    rows = []
    for c in bounds.c_values:
        for c0 in bounds.c0_values:
            result = mu_H_integral(spec, bounds.params(c=c, c0=c0), bounds.box_radius, bounds.quad_tol)
            rows.append(
                {
                    "c": float(c),
                    "c0": float(c0),
                    "integral": result.value,
                    "converged": result.converged,
                    "diverged": result.diverged,
                }
            )
    annotations = {
        "alpha": alpha,
        "beta": beta,
        "admissible": admissible,
        "fitted": fitted,
        "alpha_effective": effective[0],
        "beta_effective": effective[1],
        "admissible_effective": _admissible(*effective),
    }
    return pd.DataFrame(rows), annotations
