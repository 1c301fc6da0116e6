"""Vector fields on rectangular cell grids.

Two kinds of fields are supported: closed-form analytic fields (evaluated
exactly at any position) and grid-sampled fields that store one vector per
cell centre and interpolate multilinearly in between.  Positions are physical
coordinates; cell ``(i, j[, k])`` has its centre at ``origin + index * spacing``
and the domain's bounding box extends half a cell beyond the outermost centres.

Cells are numbered row-major with x fastest: ``idx = ix + nx * (iy + ny * iz)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, FormatError, PreconditionError

__all__ = [
    "Domain",
    "VectorField",
    "ANALYTIC_FIELDS",
    "make_analytic",
    "default_domain",
    "grid_field",
    "sample",
    "load_grid_field",
    "save_grid_field",
]

FIELD_MAGIC = "FFLD1"

# kind codes shared with the compiled and fallback kernels
KIND_GRID = 0
KIND_CONSTANT = 1
KIND_ZERO = 2
KIND_CENTER = 3
KIND_SADDLE = 4
KIND_STUART = 5
KIND_ABC = 6

ANALYTIC_FIELDS = {
    "constant": KIND_CONSTANT,
    "zero": KIND_ZERO,
    "center": KIND_CENTER,
    "saddle": KIND_SADDLE,
    "stuart_vortex": KIND_STUART,
    "abc": KIND_ABC,
}

# natural bounding boxes (lo, hi) per axis used when no domain is given
_DEFAULT_BOX = {
    "constant": ((-1.0, 1.0),) * 3,
    "zero": ((-1.0, 1.0),) * 3,
    "center": ((-1.0, 1.0),) * 3,
    "saddle": ((-1.0, 1.0),) * 3,
    "stuart_vortex": ((0.0, math.pi), (-1.0, 1.0), (-1.0, 1.0)),
    "abc": ((0.0, 2 * math.pi),) * 3,
}


@dataclass(frozen=True)
class Domain:
    """Rectangular grid of cells.

    Parameters
    ----------
    dims : tuple of int
        Cell counts per axis, x first (2 or 3 entries).
    origin : tuple of float
        Physical position of the centre of cell ``(0, 0[, 0])``.
    spacing : tuple of float
        Physical cell size per axis.
    """

    dims: tuple
    origin: tuple = None
    spacing: tuple = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) not in (2, 3):
            raise PreconditionError(f"domain must be 2D or 3D, got dims={dims}")
        if any(d < 1 for d in dims):
            raise PreconditionError(f"every axis needs at least one cell, got dims={dims}")
        origin = (0.0,) * len(dims) if self.origin is None else tuple(float(o) for o in self.origin)
        spacing = (1.0,) * len(dims) if self.spacing is None else tuple(float(s) for s in self.spacing)
        if len(origin) != len(dims) or len(spacing) != len(dims):
            raise PreconditionError("origin and spacing must have one entry per axis")
        if not all(s > 0 and math.isfinite(s) for s in spacing):
            raise PreconditionError(f"spacing must be strictly positive, got {spacing}")
        if not all(math.isfinite(o) for o in origin):
            raise PreconditionError(f"origin must be finite, got {origin}")
        n = math.prod(dims)
        if n >= np.iinfo(np.int32).max:
            raise PreconditionError(f"{n} cells exceed the addressable index range")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)

    @classmethod
    def from_box(cls, dims, lo, hi):
        """Domain whose bounding box is exactly ``[lo, hi]`` on every axis."""
        dims = tuple(int(d) for d in dims)
        spacing = tuple((h - l) / d for d, l, h in zip(dims, lo, hi))
        origin = tuple(l + 0.5 * s for l, s in zip(lo, spacing))
        return cls(dims, origin, spacing)

    @property
    def ndim(self):
        return len(self.dims)

    @property
    def ncells(self):
        return math.prod(self.dims)

    @property
    def shape(self):
        """Array shape of a scalar field over the domain (z, y, x order)."""
        return tuple(reversed(self.dims))

    @property
    def bounds(self):
        """Per-axis (lo, hi) of the bounding box."""
        return tuple(
            (o - 0.5 * s, o + (d - 0.5) * s)
            for d, o, s in zip(self.dims, self.origin, self.spacing)
        )

    def cell_centers(self):
        """(N, ndim) array of cell-centre positions in cell-index order."""
        axes = [o + s * np.arange(d) for d, o, s in zip(self.dims, self.origin, self.spacing)]
        grids = np.meshgrid(*reversed(axes), indexing="ij")
        return np.stack([g.ravel() for g in reversed(grids)], axis=1)

    def cell_index(self, idx):
        """Flat cell number of a per-axis index tuple."""
        flat, stride = 0, 1
        for i, d in zip(idx, self.dims):
            flat += int(i) * stride
            stride *= d
        return flat

    def contains(self, pos):
        pos = np.asarray(pos, dtype=float)
        g = (pos - np.asarray(self.origin)) / np.asarray(self.spacing)
        return bool(np.all(g >= -0.5) and np.all(g <= np.asarray(self.dims) - 0.5))


class KernelField(NamedTuple):
    """Flat, array-only description of a field consumed by the kernels."""

    kind: int
    ndim: int
    params: np.ndarray
    grid: np.ndarray
    dims: np.ndarray
    origin: np.ndarray
    spacing: np.ndarray


@dataclass(frozen=True)
class VectorField:
    """A 2D or 3D vector field over a :class:`Domain`.

    Analytic fields carry ``name`` and ``params``; grid fields carry
    ``vectors``, a float32 array of shape ``(N, ndim)`` in cell order.
    Instances are immutable and safe to sample from several threads.
    """

    domain: Domain
    name: str = "grid"
    params: dict = dc_field(default_factory=dict)
    vectors: np.ndarray | None = None

    @property
    def ndim(self):
        return self.domain.ndim

    @property
    def is_grid(self):
        return self.vectors is not None

    def kernel_spec(self):
        nd = self.ndim
        dims = np.ones(3, dtype=np.int64)
        origin = np.zeros(3)
        spacing = np.ones(3)
        dims[:nd] = self.domain.dims
        origin[:nd] = self.domain.origin
        spacing[:nd] = self.domain.spacing
        params = np.zeros(8)
        if self.is_grid:
            kind = KIND_GRID
            grid = np.ascontiguousarray(self.vectors, dtype=np.float64)
        else:
            kind = ANALYTIC_FIELDS[self.name]
            grid = np.zeros((0, nd))
            if kind == KIND_CONSTANT:
                params[:nd] = self.params["value"]
            elif kind == KIND_STUART:
                params[0] = self.params["t"]
            elif kind == KIND_ABC:
                params[:3] = (self.params["A"], self.params["B"], self.params["C"])
        return KernelField(kind, nd, params, grid, dims, origin, spacing)

    def sample(self, pos):
        return sample(self, pos)

    def sample_many(self, points):
        """Evaluate at many points; returns ``(vectors, inside_mask)``."""
        from ._fallback import eval_field

        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return eval_field(self.kernel_spec(), pts)

    def with_domain(self, domain):
        if self.is_grid:
            raise ConfigurationError("a grid field's domain is fixed by its data")
        return make_analytic(self.name, self.params, domain)

    def __eq__(self, other):
        if not isinstance(other, VectorField):
            return NotImplemented
        if self.domain != other.domain or self.name != other.name or self.params != other.params:
            return False
        if self.is_grid != other.is_grid:
            return False
        return not self.is_grid or np.array_equal(self.vectors, other.vectors)

    __hash__ = None


def default_domain(name, dims, spacing=None):
    """Domain over the natural region of an analytic field.

    Without ``spacing`` the field's default box is split into ``dims`` cells;
    with ``spacing`` the grid is centred on that box instead.
    """
    if name not in _DEFAULT_BOX:
        raise ConfigurationError(f"unknown analytic field '{name}'")
    dims = tuple(int(d) for d in dims)
    box = _DEFAULT_BOX[name][: len(dims)]
    lo = [b[0] for b in box]
    hi = [b[1] for b in box]
    if spacing is None:
        return Domain.from_box(dims, lo, hi)
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) == 1:
        spacing = spacing * len(dims)
    mid = [(l + h) / 2 for l, h in zip(lo, hi)]
    origin = tuple(m - 0.5 * (d - 1) * s for m, d, s in zip(mid, dims, spacing))
    return Domain(dims, origin, spacing)


def _check_params(name, params, ndim):
    allowed = {
        "constant": {"value"},
        "zero": set(),
        "center": set(),
        "saddle": set(),
        "stuart_vortex": {"t"},
        "abc": {"A", "B", "C"},
    }[name]
    extra = set(params) - allowed
    if extra:
        raise ConfigurationError(f"field '{name}' does not take parameters {sorted(extra)}")
    out = {}
    if name == "constant":
        value = params.get("value", (1.0,) + (0.0,) * (ndim - 1))
        value = tuple(float(v) for v in np.atleast_1d(value))
        if len(value) != ndim:
            raise ConfigurationError(f"constant value needs {ndim} components, got {len(value)}")
        out["value"] = value
    elif name == "stuart_vortex":
        out["t"] = float(params.get("t", 0.0))
    elif name == "abc":
        if ndim != 3:
            raise ConfigurationError("the ABC flow is only defined in 3D")
        out["A"] = float(params.get("A", math.sqrt(3.0)))
        out["B"] = float(params.get("B", math.sqrt(2.0)))
        out["C"] = float(params.get("C", 1.0))
    if not all(math.isfinite(v) for vals in out.values() for v in np.atleast_1d(vals)):
        raise ConfigurationError(f"non-finite parameter for field '{name}'")
    return out


def make_analytic(name, params=None, domain=None):
    """Build a closed-form field.

    ``name`` is one of ``constant`` (param ``value``), ``zero``, ``center``
    (rotation ``(-y, x[, 0])``), ``saddle`` (``(x, -y[, 0])``),
    ``stuart_vortex`` (param ``t``) and ``abc`` (params ``A, B, C``;
    3D only).  Without a domain the field's natural box is covered by 64
    cells per axis in 2D (3D for ``abc``).
    """
    if name not in ANALYTIC_FIELDS:
        raise ConfigurationError(
            f"unknown analytic field '{name}'; expected one of {sorted(ANALYTIC_FIELDS)}"
        )
    params = dict(params or {})
    if domain is None:
        ndim = 3 if name == "abc" else 2
        domain = default_domain(name, (64,) * ndim)
    return VectorField(domain, name, _check_params(name, params, domain.ndim))


def grid_field(domain, vectors):
    """Grid-sampled field from an ``(N, ndim)`` (or grid-shaped) array."""
    vec = np.asarray(vectors, dtype=np.float32).reshape(domain.ncells, domain.ndim)
    if not np.all(np.isfinite(vec)):
        raise PreconditionError("grid field vectors must be finite")
    vec = np.ascontiguousarray(vec)
    vec.flags.writeable = False
    return VectorField(domain, "grid", {}, vec)


def sample(field, pos):
    """Field vector at a physical position, or ``None`` outside the domain."""
    pos = np.asarray(pos, dtype=np.float64)
    if pos.shape != (field.ndim,):
        raise PreconditionError(f"position must have {field.ndim} components")
    vals, inside = field.sample_many(pos[None, :])
    if not inside[0]:
        return None
    return vals[0]


def save_grid_field(field, path):
    if not field.is_grid:
        raise PreconditionError("only grid fields can be saved")
    d = field.domain
    parts = [FIELD_MAGIC, str(d.ndim)]
    parts += [str(n) for n in d.dims]
    parts += [repr(float(o)) for o in d.origin]
    parts += [repr(float(s)) for s in d.spacing]
    header = (" ".join(parts) + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(field.vectors, dtype="<f4").tobytes())


def load_grid_field(path):
    """Read an FFLD1 field file."""
    path = Path(path)
    raw = path.read_bytes()
    nl = raw.find(b"\n", 0, 4096)
    if nl < 0:
        raise FormatError("missing header line terminator", offset=min(len(raw), 4096), path=path)
    try:
        tokens = raw[:nl].decode("ascii").split()
    except UnicodeDecodeError as exc:
        raise FormatError("header is not ASCII", offset=exc.start, path=path) from None
    if not tokens or tokens[0] != FIELD_MAGIC:
        raise FormatError(f"expected magic '{FIELD_MAGIC}'", offset=0, path=path)
    try:
        ndim = int(tokens[1])
    except (IndexError, ValueError):
        raise FormatError("bad dimensionality in header", offset=len(FIELD_MAGIC) + 1, path=path) from None
    if ndim not in (2, 3):
        raise FormatError(f"dimensionality must be 2 or 3, got {ndim}", offset=len(FIELD_MAGIC) + 1, path=path)
    if len(tokens) != 2 + 3 * ndim:
        raise FormatError(
            f"header needs {2 + 3 * ndim} fields, found {len(tokens)}", offset=nl, path=path
        )
    try:
        dims = tuple(int(t) for t in tokens[2 : 2 + ndim])
        origin = tuple(float(t) for t in tokens[2 + ndim : 2 + 2 * ndim])
        spacing = tuple(float(t) for t in tokens[2 + 2 * ndim :])
        domain = Domain(dims, origin, spacing)
    except (ValueError, PreconditionError) as exc:
        raise FormatError(f"invalid header: {exc}", offset=0, path=path) from None
    start = nl + 1
    expected = domain.ncells * ndim * 4
    got = len(raw) - start
    if got != expected:
        raise FormatError(
            f"size mismatch: header needs {expected} data bytes, file has {got}",
            offset=start + min(got, expected),
            path=path,
        )
    vec = np.frombuffer(raw, dtype="<f4", offset=start).reshape(domain.ncells, ndim)
    bad = np.flatnonzero(~np.isfinite(vec.ravel()))
    if bad.size:
        raise FormatError("non-finite vector component", offset=start + 4 * int(bad[0]), path=path)
    return grid_field(domain, vec.astype(np.float32))
