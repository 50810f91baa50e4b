"""Simulation configs, per-path records, and ensemble containers.

Reproducibility contract: every path owns private RNG streams derived from
``SeedSequence([master_seed, path_id])``, split into fixed roles (gaussians,
event counts, event sizes, step-rejection redraws, spine motion).  Draw
order within each stream is fixed by the engine, so results are bit-identical
for any path-chunking or thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SimConfig",
    "SpineConfig",
    "PathRecord",
    "Ensemble",
    "path_streams",
    "estimate_Minfty",
    "CHUNK_PATHS",
]

# Fixed path-chunk size for vectorized engines; must never depend on the
# thread count or the outputs would not be reproducible across machines.
CHUNK_PATHS = 4096

_STREAM_ROLES = ("gauss", "counts", "sizes", "reject", "spine")


class PathStreams:
    """Independent named generators for one path, constructed on first use.

    Each role maps to a fixed spawn key of ``SeedSequence([master, path])``,
    so which roles a run touches (and in what order) never changes the draws
    of any other role, and unused roles cost nothing.
    """

    __slots__ = ("_entropy", "_gens")

    def __init__(self, master_seed: int, path_id: int):
        self._entropy = (int(master_seed), int(path_id))
        self._gens = {}

    def __getitem__(self, role: str) -> np.random.Generator:
        gen = self._gens.get(role)
        if gen is None:
            idx = _STREAM_ROLES.index(role)
            child = np.random.SeedSequence(entropy=list(self._entropy), spawn_key=(idx,))
            gen = np.random.Generator(np.random.PCG64(child))
            self._gens[role] = gen
        return gen


def path_streams(master_seed: int, path_id: int) -> PathStreams:
    """Named per-path generators (lazy)."""
    return PathStreams(master_seed, path_id)


@dataclass(frozen=True)
class SimConfig:
    """Controls one CSBP run.

    ``epsilon`` is the small/large jump split; ``None`` asks the engine to
    pick it so that the expected number of large jumps per step stays small.
    """

    dt: float
    horizon: float
    paths: int
    master_seed: int
    epsilon: float | None = None
    record_stride: int = 1
    log_jumps: bool = True

    def __post_init__(self):
        if self.dt <= 0 or self.horizon <= 0:
            raise ValueError("dt and horizon must be positive")
        if self.dt > 0.01 * self.horizon + 1e-15:
            raise ValueError("dt must be <= 0.01 * horizon")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.paths < 1 or self.record_stride < 1:
            raise ValueError("paths and record_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class SpineConfig(SimConfig):
    """CSBP config plus the two spine approximation quanta.

    ``delta`` is the initial mass of one continuum immigrant (the excursion
    measure is approximated by rate ``alpha/delta`` immigrants of mass
    ``delta``); ``delta_floor`` truncates discrete immigrants below it.
    """

    delta: float = 1e-3
    delta_floor: float = 1e-3

    def __post_init__(self):
        super().__post_init__()
        if not (0 < self.delta <= 0.01):
            raise ValueError("delta must lie in (0, 0.01]")
        if not (0 < self.delta_floor <= 0.01):
            raise ValueError("delta_floor must lie in (0, 0.01]")


@dataclass(frozen=True)
class PathRecord:
    """One recorded path: time grid, masses, martingale values, jump log."""

    times: np.ndarray
    masses: np.ndarray
    M: np.ndarray
    jumps: np.ndarray  # rows (time, type, size), possibly empty
    lam: float
    phi: np.ndarray
    clipped: float = 0.0
    flagged: bool = False

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


@dataclass
class Ensemble:
    """Column-stacked records of many paths on one shared grid."""

    times: np.ndarray
    M: np.ndarray  # (paths, n_times)
    masses: np.ndarray | None  # (paths, n_times, d) or None
    lam: float
    phi: np.ndarray
    clipped: np.ndarray = field(default=None)
    flagged: np.ndarray = field(default=None)
    jumps: list | None = None  # per path (time, type, size) arrays

    @property
    def n_paths(self) -> int:
        return self.M.shape[0]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def path(self, i: int) -> PathRecord:
        return PathRecord(
            times=self.times,
            masses=self.masses[i] if self.masses is not None else None,
            M=self.M[i],
            jumps=self.jumps[i] if self.jumps is not None else np.empty((0, 3)),
            lam=self.lam,
            phi=self.phi,
            clipped=float(self.clipped[i]) if self.clipped is not None else 0.0,
            flagged=bool(self.flagged[i]) if self.flagged is not None else False,
        )


def estimate_Minfty(path) -> float:
    """Proxy for the martingale limit: the last recorded M value.

    Rate fits must only consume times up to half the horizon so that the
    proxy bias stays below the decay being measured.
    """
    return float(np.asarray(path.M)[..., -1])
