"""Images and volumes: noise input, LIC output, equalization, colormapped
composites of embeddings, and PGM/PPM/VOL1 export.

Rasters are numpy arrays in (z,) y, x order with an optional trailing RGB
axis; row 0 of an exported image is the first grid row (smallest y).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import matrix as _matrix
from ._viridis import VIRIDIS
from .errors import FormatError, PreconditionError

VIRIDIS_TABLE = np.array(VIRIDIS, dtype=np.float64)
VOLUME_MAGIC = "VOL1"
_WEIGHT_GRID = 2.0 ** 40


@dataclass(frozen=True, eq=False)
class RenderImage:
    """Scalar or RGB (trailing axis of 3) raster with samples in [0, 1]."""

    samples: np.ndarray
    rgb: bool = False

    def __post_init__(self):
        a = np.asarray(self.samples, dtype=np.float64)
        if a.ndim - int(self.rgb) not in (1, 2, 3):
            raise PreconditionError(f"unsupported raster shape {a.shape}")
        if self.rgb and a.shape[-1] != 3:
            raise PreconditionError("RGB rasters need a trailing axis of length 3")
        if not np.all(np.isfinite(a)):
            raise PreconditionError("raster samples must be finite")
        if a.size and (a.min() < 0.0 or a.max() > 1.0):
            raise PreconditionError("raster samples must lie in [0, 1]")
        object.__setattr__(self, "samples", a)

    @property
    def channels(self):
        return 3 if self.rgb else 1

    @property
    def grid_shape(self):
        return self.samples.shape[:-1] if self.channels == 3 else self.samples.shape

    @property
    def dims(self):
        """Per-axis sizes, x first (width, height[, depth])."""
        return tuple(reversed(self.grid_shape))

    def flat(self):
        return self.samples.reshape(-1) if self.channels == 1 else self.samples.reshape(-1, 3)


@dataclass(frozen=True)
class TransferFunction:
    weights: tuple
    colormap: str = "viridis"

    def __post_init__(self):
        w = tuple(float(a) for a in self.weights)
        if not w or any(not (a >= 0 and math.isfinite(a)) for a in w):
            raise PreconditionError("transfer weights must be finite and non-negative")
        if sum(w) <= 0:
            raise PreconditionError("transfer weights must not all be zero")
        if self.colormap != "viridis":
            raise PreconditionError(f"unknown colormap '{self.colormap}'")
        object.__setattr__(self, "weights", w)

    def coefficients(self):
        """Weights divided by their sum, snapped to a 2**-40 grid.

        Snapping makes the coefficients, and hence the composite, independent
        of a common rescaling of the weights.
        """
        w = np.array(self.weights)
        return np.round(w / w.sum() * _WEIGHT_GRID) / _WEIGHT_GRID


def binary_noise(domain, seed=0):
    """Independent fair 0/1 value per cell from a seeded generator."""
    rng = np.random.default_rng(seed)
    vals = rng.integers(0, 2, size=domain.ncells).astype(np.float64)
    return RenderImage(vals.reshape(domain.shape))


def lic_image(P_row, noise, threads=None):
    """LIC-like image: one product of the row-normalized P with the noise."""
    u = np.asarray(noise.samples if isinstance(noise, RenderImage) else noise, dtype=np.float64)
    if u.size != P_row.ncols:
        raise PreconditionError(f"noise has {u.size} cells, matrix has {P_row.ncols} columns")
    out = _matrix.spmv(P_row, u.ravel(), threads=threads)
    return RenderImage(np.clip(out, 0.0, 1.0).reshape(u.shape))


def histogram_equalize(img, bins=256):
    """Remap through the cumulative histogram over [0, 1]; order preserving."""
    if img.channels != 1:
        raise PreconditionError("histogram equalization needs a single-channel image")
    v = img.samples
    if v.size == 0 or v.min() == v.max():
        return img
    b = np.minimum((v * bins).astype(np.int64), bins - 1)
    cdf = np.cumsum(np.bincount(b.ravel(), minlength=bins)) / v.size
    return RenderImage(cdf[b])


def viridis(t):
    """RGB triple(s) by piecewise-linear interpolation of the viridis table."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    pos = t * 255.0
    i = np.minimum(np.floor(pos).astype(np.int64), 254)
    f = (pos - i)[..., None]
    return (1.0 - f) * VIRIDIS_TABLE[i] + f * VIRIDIS_TABLE[i + 1]


def rescale(s):
    """Affine map of ``s`` onto [0, 1]; a constant field maps to 0.5."""
    s = np.asarray(s, dtype=np.float64)
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.full_like(s, 0.5)
    return np.clip((s - lo) / (hi - lo), 0.0, 1.0)


def composite_transfer(embeddings, tf, shape=None):
    """Colour composite ``c(sum_k a_k / sum_l a_l * v_k)``.

    ``embeddings`` is a sequence of vectors (or ``SelectedEmbedding``); the
    weighted sum is rescaled to [0, 1] before colormapping.
    """
    vecs = [np.asarray(getattr(e, "vector", e), dtype=np.float64).ravel() for e in embeddings]
    if not vecs:
        raise PreconditionError("need at least one embedding")
    if len(vecs) != len(tf.weights):
        raise PreconditionError(f"{len(vecs)} embeddings but {len(tf.weights)} weights")
    coef = tf.coefficients()
    s = np.zeros_like(vecs[0])
    for c, v in zip(coef, vecs):
        s = s + c * v
    rgb = viridis(rescale(s))
    if shape is not None:
        rgb = rgb.reshape(tuple(shape) + (3,))
    return RenderImage(rgb, rgb=True)


def modulate(rgb, lic):
    """Darken a colour image where the LIC backdrop is dark: ``rgb * (0.5 + 0.5 lic)``."""
    shade = np.asarray(lic.samples if isinstance(lic, RenderImage) else lic, dtype=np.float64)
    out = rgb.samples * (0.5 + 0.5 * shade.reshape(rgb.grid_shape))[..., None]
    return RenderImage(out, rgb=True)


def segment_by_gaps(values, n_thresholds):
    """Label values by cutting at the ``n_thresholds`` widest gaps between
    sorted unique values.  Labels are ``0..n_thresholds`` in value order.
    """
    v = np.asarray(values, dtype=np.float64)
    u = np.unique(v)
    n = min(int(n_thresholds), max(u.size - 1, 0))
    if n <= 0:
        return np.zeros(v.shape, dtype=np.int64)
    gaps = np.diff(u)
    cut = np.sort(np.argsort(-gaps, kind="stable")[:n])
    thresholds = (u[cut] + u[cut + 1]) / 2
    return np.searchsorted(thresholds, v, side="right")


def _to_bytes(a):
    return np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)


def export_image(img, path):
    """Binary PGM (gray) or PPM (RGB), maxval 255."""
    path = Path(path)
    shape = img.grid_shape
    if len(shape) != 2:
        raise PreconditionError("export_image takes 2D rasters; use export_volume for 3D")
    h, w = shape
    magic = "P6" if img.channels == 3 else "P5"
    try:
        with open(path, "wb") as fh:
            fh.write(f"{magic}\n{w} {h}\n255\n".encode("ascii"))
            fh.write(_to_bytes(img.samples).tobytes())
    except OSError as exc:
        raise OSError(f"cannot write image {path}: {exc}") from exc
    return path


def read_image(path):
    """Read a binary PGM/PPM written by :func:`export_image`; returns uint8."""
    path = Path(path)
    raw = path.read_bytes()
    parts = []
    pos = 0
    while len(parts) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(raw) and not raw[end : end + 1].isspace():
            end += 1
        if end == pos:
            raise FormatError("truncated PNM header", offset=pos, path=path)
        parts.append(raw[pos:end].decode("ascii", errors="replace"))
        pos = end
    pos += 1
    magic, w, h, maxval = parts[0], int(parts[1]), int(parts[2]), int(parts[3])
    if magic not in ("P5", "P6") or maxval != 255:
        raise FormatError(f"unsupported PNM variant {magic}/{maxval}", offset=0, path=path)
    ch = 3 if magic == "P6" else 1
    data = np.frombuffer(raw, np.uint8, offset=pos)
    if data.size != w * h * ch:
        raise FormatError("PNM size mismatch", offset=pos + min(data.size, w * h * ch), path=path)
    return data.reshape((h, w, 3) if ch == 3 else (h, w))


def export_volume(vol, path, slices=True):
    """Write a VOL1 volume and, optionally, axis-aligned mid-slice images.

    ``vol`` is a (z, y, x) scalar array or a (z, y, x, 3) RGB array/image.
    Returns the list of written paths (volume first).
    """
    path = Path(path)
    if isinstance(vol, RenderImage):
        rgb, a = vol.rgb, vol.samples
    else:
        a = np.asarray(vol, dtype=np.float64)
        rgb = a.ndim == 4 and a.shape[-1] == 3
    grid = a.shape[:-1] if rgb else a.shape
    if len(grid) != 3:
        raise PreconditionError(f"volume must be 3D, got grid shape {grid}")
    ch = 3 if rgb else 1
    nz, ny, nx = grid
    header = f"{VOLUME_MAGIC} {nx} {ny} {nz} {ch}\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
    except OSError as exc:
        raise OSError(f"cannot write volume {path}: {exc}") from exc
    written = [path]
    if slices:
        shown = a if rgb else rescale(a)
        for axis, name in ((2, "x"), (1, "y"), (0, "z")):
            sl = np.take(shown, grid[axis] // 2, axis=axis)
            img = RenderImage(sl, rgb=True) if rgb else RenderImage(sl)
            out = path.with_name(f"{path.stem}_mid{name}{'.ppm' if rgb else '.pgm'}")
            written.append(export_image(img, out))
    return written


def read_volume(path):
    """Read a VOL1 file; returns a float32 array (z, y, x[, 3])."""
    path = Path(path)
    raw = path.read_bytes()
    nl = raw.find(b"\n", 0, 256)
    if nl < 0:
        raise FormatError("missing header line", offset=0, path=path)
    tokens = raw[:nl].decode("ascii", errors="replace").split()
    if len(tokens) != 5 or tokens[0] != VOLUME_MAGIC:
        raise FormatError(f"expected '{VOLUME_MAGIC} nx ny nz channels'", offset=0, path=path)
    nx, ny, nz, ch = (int(t) for t in tokens[1:])
    start = nl + 1
    need = nx * ny * nz * ch * 4
    if len(raw) - start != need:
        raise FormatError(
            f"size mismatch: expected {need} data bytes, found {len(raw) - start}",
            offset=start + min(need, len(raw) - start), path=path,
        )
    a = np.frombuffer(raw, "<f4", nx * ny * nz * ch, start).astype(np.float32)
    return a.reshape((nz, ny, nx, 3) if ch == 3 else (nz, ny, nx))
