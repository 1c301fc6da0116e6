"""Discrete trajectory-certainty kernels.

A kernel assigns a probability to each sample index ``-L..L`` along a traced
streamline.  Weights live on indices, not on physical distances.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError

SHAPES = ("box", "gaussian", "one_sided_forward", "one_sided_backward")
_ALIASES = {"forward": "one_sided_forward", "backward": "one_sided_backward"}


@dataclass(frozen=True, eq=False)
class DiscreteKernel:
    shape: str
    half_length: int
    weights: np.ndarray  # length 2L+1, index 0 <-> sample -L

    def weight(self, i):
        return float(self.weights[i + self.half_length])

    @property
    def indices(self):
        return np.arange(-self.half_length, self.half_length + 1)

    def __eq__(self, other):
        if not isinstance(other, DiscreteKernel):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.half_length == other.half_length
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


def _frozen(w):
    w = np.ascontiguousarray(w, dtype=np.float64)
    w.flags.writeable = False
    return w


def make_kernel(shape, half_length):
    """Normalized kernel of the given shape over ``2 * half_length + 1`` samples.

    The Gaussian uses ``sigma = half_length / 3`` so the ends sit at 3 sigma.
    One-sided kernels are box kernels restricted to ``t >= 0`` (forward) or
    ``t <= 0`` (backward).
    """
    shape = _ALIASES.get(shape, shape)
    if shape not in SHAPES:
        raise PreconditionError(f"unknown kernel shape '{shape}'")
    L = int(half_length)
    if L < 0 or L != half_length:
        raise PreconditionError(f"half_length must be a non-negative integer, got {half_length}")
    t = np.arange(-L, L + 1, dtype=np.float64)
    if shape == "box" or L == 0:
        w = np.ones_like(t)
    elif shape == "gaussian":
        sigma = L / 3.0
        w = np.exp(-(t * t) / (2.0 * sigma * sigma))
    elif shape == "one_sided_forward":
        w = (t >= 0).astype(np.float64)
    else:
        w = (t <= 0).astype(np.float64)
    return DiscreteKernel(shape, L, _frozen(w / w.sum()))


def renormalize_truncated(kernel, kept):
    """Zero weights outside ``kept`` and rescale the rest to sum to one.

    ``kept`` is an iterable of sample indices in ``-L..L``; it must contain 0.
    """
    kept = sorted(set(int(i) for i in kept))
    if not kept:
        raise PreconditionError("kept index set is empty")
    if 0 not in kept:
        raise PreconditionError("kept index set must contain the seed index 0")
    L = kernel.half_length
    if kept[0] < -L or kept[-1] > L:
        raise PreconditionError(f"kept indices must lie in [-{L}, {L}]")
    if len(kept) == 2 * L + 1:
        return kernel
    mask = np.zeros(2 * L + 1, dtype=bool)
    mask[np.asarray(kept) + L] = True
    w = np.where(mask, kernel.weights, 0.0)
    total = w.sum()
    if total <= 0:
        raise PreconditionError("kept indices carry no kernel weight")
    return DiscreteKernel(kernel.shape, L, _frozen(w / total))
