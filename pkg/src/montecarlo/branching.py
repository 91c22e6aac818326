"""
Branching-diffusion particle system.

Each step, every alive particle first faces death with probability
1 - exp(-d(x) dt), then (if it survived) gives birth to one child at its
own trait with probability 1 - exp(-b(x) dt); rates are read at the
positions at the start of the step. Survivors and newborns then all move
by one Euler-Maruyama step.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.models.fields import FieldEvaluationError
from src.models.model_spec import ModelSpec, SimConfig
from src.montecarlo.diffusion import SimulationError, euler_step
from src.montecarlo.streams import run_chunks

logger = logging.getLogger(__name__)

MAX_CAPPED_FRACTION = 0.01


@dataclass(frozen=True)
class PopulationState:
    """Snapshot of one replica at time t."""

    t: float
    total_mass: int
    capped: bool
    particles: Optional[np.ndarray] = None

    @property
    def extinct(self) -> bool:
        return self.total_mass == 0


@dataclass
class BranchingRun:
    """
    Population counts of every replica at the sample times.

    ``counts[r, k]`` is N_t of replica r at ``times[k]``. A capped replica
    keeps its last count for the remaining times and is excluded from
    mean-growth estimates.
    """

    times: np.ndarray
    counts: np.ndarray
    capped: np.ndarray
    x0: Tuple[float, ...]
    snapshots: Dict[int, List[np.ndarray]] = field(default_factory=dict)

    @property
    def n_replicas(self) -> int:
        return int(self.counts.shape[0])

    @property
    def extinct(self) -> np.ndarray:
        return self.counts == 0

    @property
    def capped_fraction(self) -> float:
        return float(np.mean(self.capped))

    def states(self, replica: int) -> List[PopulationState]:
        """The time series of PopulationState of one replica."""
        particles = self.snapshots.get(replica)
        return [
            PopulationState(
                t=float(t),
                total_mass=int(self.counts[replica, k]),
                capped=bool(self.capped[replica]),
                particles=None if particles is None else particles[k],
            )
            for k, t in enumerate(self.times)
        ]

    def to_frame(self) -> pd.DataFrame:
        """Long format: one row per (replica, t)."""
        n_times = len(self.times)
        return pd.DataFrame(
            {
                "replica": np.repeat(np.arange(self.n_replicas), n_times),
                "t": np.tile(self.times, self.n_replicas),
                "N_t": self.counts.ravel(),
                "capped": np.repeat(self.capped, n_times),
                "extinct": self.extinct.ravel(),
            }
        )


def _rates(spec: ModelSpec, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    try:
        death = spec.death_rate(points)
        birth = spec.birth_rate(points)
    except FieldEvaluationError as e:
        raise SimulationError(f"Rate evaluation failed: {str(e)}")
    negative = (death < 0) | (birth < 0)
    if negative.any():
        point = points[np.argmax(negative)]
        logger.error(f"Negative branching rate at particle position {point.tolist()}")
        raise SimulationError(f"Negative birth or death rate at particle position {point.tolist()}")
    return death, birth


def _sample_steps(times: Sequence[float], cfg: SimConfig) -> np.ndarray:
    steps = np.array([cfg.n_steps(t) for t in times], dtype=int)
    if np.any(np.diff(steps) <= 0) or steps[0] < 0:
        raise ValueError("Sample times must be non-negative and strictly increasing")
    if steps[-1] > cfg.n_steps():
        raise ValueError(f"Sample time {times[-1]} exceeds t_max={cfg.t_max}")
    return steps


def _simulate_chunk(
    spec: ModelSpec,
    x0: np.ndarray,
    cfg: SimConfig,
    sample_steps: np.ndarray,
    start: int,
    stop: int,
    rng: np.random.Generator,
):
    n_rep = stop - start
    dim = spec.dimension
    counts = np.zeros((n_rep, len(sample_steps)), dtype=np.int64)
    capped = np.zeros(n_rep, dtype=bool)
    snapshots: Dict[int, List[np.ndarray]] = {}

    positions = np.repeat(x0[None, :], n_rep, axis=0)
    owner = np.arange(n_rep)

    def record(k: int):
        alive_counts = np.bincount(owner, minlength=n_rep)
        counts[:, k] = np.where(capped, counts[:, k], alive_counts)
        if cfg.record_particles:
            for r in range(n_rep):
                if not capped[r]:
                    snapshots.setdefault(start + r, []).append(positions[owner == r].copy())
                else:
                    snapshots.setdefault(start + r, []).append(np.empty((0, dim)))

    k = 0
    if sample_steps[0] == 0:
        record(0)
        k = 1
    for step in range(1, sample_steps[-1] + 1):
        if positions.shape[0]:
            death, birth = _rates(spec, positions)
            dies = rng.random(positions.shape[0]) < -np.expm1(-death * cfg.dt)
            gives_birth = rng.random(positions.shape[0]) < -np.expm1(-birth * cfg.dt)
            alive = ~dies
            parents = alive & gives_birth
            positions = np.concatenate([positions[alive], positions[parents]])
            owner = np.concatenate([owner[alive], owner[parents]])

            sizes = np.bincount(owner, minlength=n_rep)
            newly_capped = (sizes > cfg.population_cap) & ~capped
            if newly_capped.any():
                # freeze the count reached when the cap was hit
                for r in np.flatnonzero(newly_capped):
                    counts[r, k:] = sizes[r]
                capped |= newly_capped
                keep = ~capped[owner]
                positions, owner = positions[keep], owner[keep]

            noise = rng.standard_normal(positions.shape)
            positions = euler_step(spec, positions, cfg.dt, noise)

        if step == sample_steps[k]:
            record(k)
            k += 1
    return counts, capped, snapshots


def simulate_branching(
    spec: ModelSpec,
    x0: Any,
    cfg: SimConfig,
    sample_times: Optional[Sequence[float]] = None,
) -> BranchingRun:
    """
    Simulate ``cfg.n_paths`` independent replicas started from one particle at ``x0``.

    Args:
        spec: Model definition with b, d >= 0
        x0: Initial trait
        cfg: Step size, horizon, replica count, seed and population cap
        sample_times: Multiples of dt in [0, t_max] (default: t_max only)

    Returns:
        BranchingRun: Counts per replica and sample time, capped flags

    Raises:
        SimulationError: On a negative or non-finite rate or drift, naming the position
    """
    start_point = spec.points(x0)[0]
    times = [cfg.t_max] if sample_times is None else [float(t) for t in sample_times]
    steps = _sample_steps(times, cfg)
    logger.info(
        f"Simulating {cfg.n_paths} branching replicas of {spec.name} from x0={start_point.tolist()} "
        f"to t={times[-1]} (dt={cfg.dt}, cap={cfg.population_cap})"
    )

    results = run_chunks(
        lambda a, b, rng: _simulate_chunk(spec, start_point, cfg, steps, a, b, rng),
        cfg,
        "branching",
    )
    snapshots: Dict[int, List[np.ndarray]] = {}
    for _, _, chunk_snapshots in results:
        snapshots.update(chunk_snapshots)
    run = BranchingRun(
        times=steps * cfg.dt,
        counts=np.concatenate([counts for counts, _, _ in results]),
        capped=np.concatenate([capped for _, capped, _ in results]),
        x0=tuple(float(v) for v in start_point),
        snapshots=snapshots,
    )
    n_capped = int(run.capped.sum())
    if n_capped:
        logger.warning(f"{n_capped} of {run.n_replicas} replicas reached the population cap")
    logger.info(f"Branching run done: {run.n_replicas} replicas, {int(run.extinct[:, -1].sum())} extinct at t={run.times[-1]:g}")
    return run


def mean_total_mass(run: BranchingRun) -> pd.DataFrame:
    """
    Mean and standard error of N_t per sample time over uncapped replicas.

    Returns:
        pd.DataFrame: Columns t, mean, std_error, n_used, n_capped
    """
    used = run.counts[~run.capped].astype(float)
    n_used = used.shape[0]
    if n_used == 0:
        mean = np.full(len(run.times), np.nan)
        std_error = np.full(len(run.times), np.nan)
    else:
        mean = used.mean(axis=0)
        std_error = used.std(axis=0, ddof=1) / np.sqrt(n_used) if n_used > 1 else np.zeros(len(run.times))
    return pd.DataFrame(
        {
            "t": run.times,
            "mean": mean,
            "std_error": std_error,
            "n_used": n_used,
            "n_capped": int(run.capped.sum()),
        }
    )
