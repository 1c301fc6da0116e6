"""Streamline tracing with classical RK4.

Particles are advected along ``v / |v|`` (arc-length parameterization, the
default) or along ``v`` itself (time parameterization) and sampled every
``step`` units in both directions from the seed.  Integration in a direction
stops at the domain boundary or where the speed drops below a critical
threshold; the trajectory then simply holds fewer samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import PreconditionError

MODES = ("arc_length", "time")
_MODE_ALIASES = {"arc": "arc_length", "arclength": "arc_length", "distance": "arc_length"}
STATUS_NAMES = ("complete", "boundary", "critical")


@dataclass(frozen=True)
class TracerConfig:
    mode: str = "arc_length"
    step: float | None = None  # None: half the smallest cell spacing

    @property
    def time_mode(self):
        return self.mode == "time"

    def resolve_step(self, domain):
        return default_step(domain) if self.step is None else float(self.step)


def parameterize(mode="arc_length", step=None):
    mode = _MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise PreconditionError(f"unknown parameterization '{mode}', expected arc_length or time")
    if step is not None and not step > 0:
        raise PreconditionError(f"step must be positive, got {step}")
    return TracerConfig(mode, None if step is None else float(step))


def default_step(domain):
    return 0.5 * min(domain.spacing)


def critical_speed(domain):
    """Speed below which a particle is treated as stationary."""
    return 1e-9 * max(domain.spacing)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples of one traced particle, ordered by signed index.

    ``indices`` run from ``-nback`` to ``+nforward``; ``distances`` hold the
    signed parameter value (arc length or time) of each sample and
    ``positions`` the physical positions.  ``backward`` / ``forward`` name why
    integration stopped in that direction.
    """

    seed: np.ndarray
    indices: np.ndarray
    distances: np.ndarray
    positions: np.ndarray
    backward: str
    forward: str

    def __len__(self):
        return self.indices.size

    @property
    def critical(self):
        return "critical" in (self.backward, self.forward)

    def kept_indices(self):
        return self.indices.tolist()


def trace(field, seed, half_length, step=None, mode="arc_length", backend=None):
    """Trace a streamline through ``seed`` for up to ``half_length`` samples each way."""
    cfg = mode if isinstance(mode, TracerConfig) else parameterize(mode, step)
    if step is not None:
        cfg = TracerConfig(cfg.mode, float(step))
    L = int(half_length)
    if L < 0:
        raise PreconditionError("half_length must be non-negative")
    h = cfg.resolve_step(field.domain)
    if not h > 0:
        raise PreconditionError(f"step must be positive, got {h}")
    seed = np.asarray(seed, dtype=np.float64).reshape(-1)
    if seed.size != field.ndim:
        raise PreconditionError(f"seed must have {field.ndim} components")
    if not field.domain.contains(seed):
        raise PreconditionError(f"seed {tuple(seed)} lies outside the domain")
    impl = _backend.resolve(backend)
    pos, nb, nf, status = impl.trace_batch(
        field.kernel_spec(), seed[None, :], L, h, cfg.time_mode, critical_speed(field.domain)
    )
    nb, nf = int(nb[0]), int(nf[0])
    idx = np.arange(-nb, nf + 1)
    return Trajectory(
        seed=seed.copy(),
        indices=idx,
        distances=idx * h,
        positions=pos[0, L - nb : L + nf + 1].copy(),
        backward=STATUS_NAMES[status[0, 0]],
        forward=STATUS_NAMES[status[0, 1]],
    )
