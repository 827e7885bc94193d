"""Core state-transition model: n agents on the line.

Each agent i sees a noisy measurement of its stretch (the gap between the
average of everyone else and itself), chooses a move, and drifts.  All
noise is zero-mean Gaussian and independent across agents, rounds and
kinds.  Stretches always sum to zero, so the functions here operate on the
last axis of arbitrarily batched position arrays.
"""

from dataclasses import dataclass, field

import numpy as np

from .streams import normalize_seed


@dataclass(frozen=True)
class ModelConfig:
    """Scenario parameters.

    sigma0 may be zero (all agents start at the origin); the measurement
    and drift noise scales must be positive.
    """

    n: int
    sigma0: float = 1.0
    sigma_m: float = 1.0
    sigma_d: float = 1.0
    horizon: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.sigma0 < 0:
            raise ValueError(f"sigma0 must be >= 0, got {self.sigma0}")
        if self.sigma_m <= 0:
            raise ValueError(f"sigma_m must be > 0, got {self.sigma_m}")
        if self.sigma_d <= 0:
            raise ValueError(f"sigma_d must be > 0, got {self.sigma_d}")
        if self.horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon}")
        object.__setattr__(self, "seed", normalize_seed(self.seed))


@dataclass
class WorldState:
    """Positions of all n agents at the start of a round."""

    round: int
    positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)


def init_world(cfg: ModelConfig, rng: np.random.Generator) -> WorldState:
    """Draw initial positions i.i.d. N(0, sigma0^2)."""
    return WorldState(round=0, positions=rng.normal(0.0, cfg.sigma0, cfg.n))


def stretch_values(positions: np.ndarray) -> np.ndarray:
    """Stretches along the last axis: mean of the others minus self."""
    positions = np.asarray(positions, dtype=float)
    n = positions.shape[-1]
    if n < 2:
        raise ValueError(f"need at least 2 agents, got {n}")
    s = positions.sum(axis=-1, keepdims=True)
    return (s - positions) / (n - 1) - positions


def stretch(world: WorldState) -> np.ndarray:
    return stretch_values(world.positions)


def measure(world: WorldState, cfg: ModelConfig, rng: np.random.Generator) -> np.ndarray:
    """One measurement vector: stretch plus N(0, sigma_m^2) per agent."""
    _check_length(world.positions, cfg)
    return stretch(world) + rng.normal(0.0, cfg.sigma_m, world.positions.shape)


def step(world: WorldState, moves: np.ndarray, cfg: ModelConfig,
         rng: np.random.Generator) -> WorldState:
    """Advance one round: add each agent's move, then its drift noise."""
    moves = np.asarray(moves, dtype=float)
    _check_length(world.positions, cfg)
    if moves.shape != world.positions.shape:
        raise ValueError(
            f"moves shape {moves.shape} != positions shape {world.positions.shape}")
    drift = rng.normal(0.0, cfg.sigma_d, world.positions.shape)
    return WorldState(round=world.round + 1, positions=world.positions + moves + drift)


def cost_estimate(samples) -> float:
    """Mean absolute value of a batch of stretch samples."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("cost estimate needs at least one sample")
    return float(np.abs(samples).mean())


def _check_length(positions: np.ndarray, cfg: ModelConfig) -> None:
    if positions.shape[-1] != cfg.n:
        raise ValueError(
            f"world has {positions.shape[-1]} agents but config says n={cfg.n}")
