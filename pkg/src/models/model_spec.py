"""
Model, bound-function and simulation parameter types.
"""
import hashlib
import json
import logging
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional

import numpy as np

from src.models.fields import (
    ScalarField,
    as_points,
    checked,
    field_from_descriptor,
)

logger = logging.getLogger(__name__)

BRANCHES = ("ess", "ess2")
SCHEMES = ("euler-maruyama",)


@dataclass(frozen=True)
class ModelSpec:
    """
    A branching-diffusion model.

    Individuals move by dX = grad V(X) dt + dB, give birth at rate ``birth``
    and die at rate ``death``; K = death - birth is the reduction rate.
    """

    dimension: int
    potential: ScalarField
    birth: ScalarField
    death: ScalarField
    name: str = "custom"

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise ValueError(f"Model dimension must be positive, got {self.dimension}")

    @property
    def reduction_rate(self) -> ScalarField:
        """K(x) = d(x) - b(x)."""
        return self.death - self.birth

    def points(self, x: Any) -> np.ndarray:
        return as_points(x, self.dimension)

    def V(self, points: np.ndarray) -> np.ndarray:
        return checked(self.potential.evaluate(points), "V", points)

    def grad_V(self, points: np.ndarray) -> np.ndarray:
        return checked(self.potential.gradient(points), "grad V", points)

    def K(self, points: np.ndarray) -> np.ndarray:
        return checked(self.reduction_rate.evaluate(points), "K", points)

    def birth_rate(self, points: np.ndarray) -> np.ndarray:
        return checked(self.birth.evaluate(points), "b", points)

    def death_rate(self, points: np.ndarray) -> np.ndarray:
        return checked(self.death.evaluate(points), "d", points)

    def rates_nonnegative(self, points: np.ndarray) -> bool:
        """Check b >= 0 and d >= 0 on the sampled points."""
        return bool(
            np.all(self.birth_rate(points) >= 0.0) and np.all(self.death_rate(points) >= 0.0)
        )

    def descriptor(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "dimension": int(self.dimension),
            "V": self.potential.descriptor(),
            "birth": self.birth.descriptor(),
            "death": self.death.descriptor(),
        }

    def fingerprint(self) -> str:
        """md5 of the canonical descriptor, used in artifact headers and cache keys."""
        text = json.dumps(self.descriptor(), sort_keys=True)
        return hashlib.md5(text.encode()).hexdigest()

    def potential_fingerprint(self) -> str:
        text = json.dumps(self.potential.descriptor(), sort_keys=True)
        return hashlib.md5(text.encode()).hexdigest()

    @classmethod
    def from_descriptors(
        cls,
        dimension: int,
        potential: Mapping[str, Any],
        birth: Mapping[str, Any],
        death: Mapping[str, Any],
        name: str = "custom",
    ) -> "ModelSpec":
        return cls(
            dimension=int(dimension),
            potential=field_from_descriptor(potential),
            birth=field_from_descriptor(birth),
            death=field_from_descriptor(death),
            name=name,
        )


@dataclass(frozen=True)
class BoundParams:
    """Parameters of the decay envelope H_{c,c0}."""

    c: float = 10.0
    c0: float = 0.05
    r0: float = 1.0
    ball_samples: int = 64
    branch: str = "ess2"

    def __post_init__(self):
        if self.c <= 0 or self.c0 <= 0:
            raise ValueError(f"c and c0 must be positive, got c={self.c}, c0={self.c0}")
        if self.r0 < 1.0:
            raise ValueError(f"r0 must be >= 1, got {self.r0}")
        if self.ball_samples < 32:
            raise ValueError(f"ball_samples must be >= 32, got {self.ball_samples}")
        if self.branch not in BRANCHES:
            raise ValueError(f"branch must be one of {BRANCHES}, got '{self.branch}'")


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo run parameters."""

    dt: float = 0.01
    t_max: float = 1.0
    n_paths: int = 10000
    rng_seed: int = 12345
    population_cap: int = 1_000_000
    scheme: str = "euler-maruyama"
    chunk_size: int = 4096
    workers: int = 1
    record_particles: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.dt > self.t_max:
            raise ValueError(f"dt={self.dt} exceeds t_max={self.t_max}")
        if self.n_paths < 1 or self.population_cap < 1 or self.chunk_size < 1:
            raise ValueError("n_paths, population_cap and chunk_size must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"Unknown scheme '{self.scheme}'")
        if not 0 <= int(self.rng_seed) < 2 ** 64:
            raise ValueError(f"rng_seed must be a 64-bit unsigned integer, got {self.rng_seed}")

    def n_steps(self, t: Optional[float] = None) -> int:
        """Number of Euler steps to reach ``t`` (default t_max)."""
        t = self.t_max if t is None else t
        steps = int(round(t / self.dt))
        if abs(steps * self.dt - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"Time {t} is not a multiple of dt={self.dt}")
        return steps
