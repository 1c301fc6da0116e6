"""Sparse matrix engine for the probability-matrix pipeline.

Matrices are kept in CSR form (int64 row offsets, int32 column indices,
float64 values) with sorted column indices in every row.  The heavy lifting
(assembly, SpMV, sparse products, transposition) is delegated to the kernel
backend; the normalizations and the Laplacian are vectorized numpy.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import _backend
from .errors import ConfigurationError, FormatError, InvariantError, PreconditionError
from .kernel import DiscreteKernel, make_kernel
from .tracer import TracerConfig, critical_speed, default_step, parameterize

DEPOSITIONS = ("multilinear", "nearest")
MATRIX_MAGIC = "SMAT1"


def _threads(threads):
    return _backend.default_threads() if threads is None else max(1, int(threads))


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    nrows: int
    ncols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indptr", np.ascontiguousarray(self.indptr, dtype=np.int64))
        object.__setattr__(self, "indices", np.ascontiguousarray(self.indices, dtype=np.int32))
        object.__setattr__(self, "data", np.ascontiguousarray(self.data, dtype=np.float64))
        if self.indptr.shape != (self.nrows + 1,):
            raise PreconditionError("indptr must have nrows + 1 entries")
        if self.indices.shape != self.data.shape or self.indptr[-1] != self.data.size:
            raise PreconditionError("indices/data length must equal indptr[-1]")

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self):
        return int(self.data.size)

    def row_ids(self):
        return np.repeat(np.arange(self.nrows, dtype=np.int32), np.diff(self.indptr))

    def row_nnz(self):
        return np.diff(self.indptr)

    def row_sums(self):
        return np.bincount(self.row_ids(), weights=self.data, minlength=self.nrows)

    def col_sums(self):
        return np.bincount(self.indices, weights=self.data, minlength=self.ncols)

    def diagonal(self):
        rows = self.row_ids()
        on = rows == self.indices
        out = np.zeros(min(self.shape))
        out[rows[on]] = self.data[on]
        return out

    def transpose(self, backend=None):
        impl = _backend.resolve(backend)
        ptr, idx, dat = impl.transpose(self.indptr, self.indices, self.data, self.ncols)
        return SparseMatrix(self.ncols, self.nrows, ptr, idx, dat)

    @property
    def T(self):
        return self.transpose()

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.row_ids(), self.indices] = self.data
        return out

    def to_scipy(self):
        import scipy.sparse as sp

        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def validate(self):
        """Check the CSR invariants; raises :class:`InvariantError`."""
        if np.any(np.diff(self.indptr) < 0) or self.indptr[0] != 0:
            raise InvariantError("row offsets must start at 0 and be non-decreasing")
        if self.nnz and (self.indices.min() < 0 or self.indices.max() >= self.ncols):
            raise InvariantError("column index out of range")
        rows = self.row_ids()
        same_row = rows[1:] == rows[:-1]
        if np.any(same_row & (self.indices[1:] <= self.indices[:-1])):
            bad = int(rows[1:][same_row & (self.indices[1:] <= self.indices[:-1])][0])
            raise InvariantError(f"column indices not strictly increasing in row {bad}", cell=bad)
        if not np.all(np.isfinite(self.data)):
            raise InvariantError("non-finite stored value")
        return self

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return compose_filters(self, other)
        return spmv(self, np.asarray(other, dtype=np.float64))

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


def identity(n):
    return SparseMatrix(n, n, np.arange(n + 1), np.arange(n), np.ones(n))


def from_dense(a, keep_zeros=False):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise PreconditionError("from_dense needs a 2D array")
    mask = np.ones(a.shape, dtype=bool) if keep_zeros else a != 0
    rows, cols = np.nonzero(mask)
    indptr = np.zeros(a.shape[0] + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=a.shape[0]), out=indptr[1:])
    return SparseMatrix(a.shape[0], a.shape[1], indptr, cols, a[rows, cols])


def from_coo(rows, cols, vals, shape):
    """CSR from triplets; duplicate entries are summed."""
    from ._fallback import _combine

    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    ptr, idx, dat = _combine(rows, cols, vals, shape[0], shape[1])
    return SparseMatrix(shape[0], shape[1], ptr, idx, dat)


@dataclass(frozen=True)
class AssemblyConfig:
    """How trajectories are traced and deposited into P.

    ``step`` of None means half the smallest cell spacing.
    """

    kernel: DiscreteKernel = dc_field(default_factory=lambda: make_kernel("gaussian", 20))
    step: float | None = None
    mode: str = "arc_length"
    deposition: str = "multilinear"
    threads: int | None = None

    def __post_init__(self):
        if self.step is not None and not self.step > 0:
            raise PreconditionError(f"step must be positive, got {self.step}")
        if self.deposition not in DEPOSITIONS:
            raise PreconditionError(f"deposition must be one of {DEPOSITIONS}")
        object.__setattr__(self, "mode", parameterize(self.mode).mode)

    @property
    def tracer(self):
        return TracerConfig(self.mode, self.step)


def assemble_probability_matrix(field, domain=None, cfg=None, backend=None):
    """Probability matrix P: row i holds the kernel-weighted deposits of the
    trajectory seeded at the centre of cell i.
    """
    cfg = cfg or AssemblyConfig()
    if domain is None:
        domain = field.domain
    if domain.ndim != field.ndim:
        raise ConfigurationError(
            f"field is {field.ndim}D but the domain is {domain.ndim}D"
        )
    if domain != field.domain:
        if field.is_grid:
            raise ConfigurationError("a grid field can only be assembled on its own domain")
        field = field.with_domain(domain)
    step = default_step(domain) if cfg.step is None else cfg.step
    impl = _backend.resolve(backend)
    indptr, indices, data = impl.assemble(
        field.kernel_spec(),
        np.ascontiguousarray(cfg.kernel.weights, dtype=np.float64),
        float(step),
        cfg.mode == "time",
        cfg.deposition == "nearest",
        critical_speed(domain),
        _threads(cfg.threads),
    )
    n = domain.ncells
    return SparseMatrix(n, n, indptr, indices, data)


def normalize_rows(P):
    """Scale each row to sum to one."""
    sums = P.row_sums()
    zero = np.flatnonzero(~(sums > 0))
    if zero.size:
        raise InvariantError(f"row {int(zero[0])} has no positive mass", cell=int(zero[0]))
    rows = P.row_ids()
    return SparseMatrix(P.nrows, P.ncols, P.indptr, P.indices, P.data / sums[rows])


def normalize_cols(P):
    """Scale each column to sum to one (the Bayes step from visits to origins)."""
    sums = P.col_sums()
    zero = np.flatnonzero(~(sums > 0))
    if zero.size:
        raise InvariantError(
            f"cell {int(zero[0])} is never visited by any trajectory", cell=int(zero[0])
        )
    return SparseMatrix(P.nrows, P.ncols, P.indptr, P.indices, P.data / sums[P.indices])


def spmv(M, x, threads=None, backend=None):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (M.ncols,):
        raise PreconditionError(f"vector length {x.shape} does not match {M.ncols} columns")
    impl = _backend.resolve(backend)
    return impl.spmv(M.indptr, M.indices, M.data, x, _threads(threads))


def compose_filters(B, P, threads=None, backend=None):
    """Sparse product ``B @ P``: applying P then B as one operator."""
    if B.ncols != P.nrows:
        raise PreconditionError(f"cannot compose {B.shape} with {P.shape}")
    impl = _backend.resolve(backend)
    ptr, idx, dat = impl.spgemm(
        B.indptr, B.indices, B.data, P.indptr, P.indices, P.data, P.ncols, False, _threads(threads)
    )
    return SparseMatrix(B.nrows, P.ncols, ptr, idx, dat)


def _mirror_lower(low, diag_value=None):
    """Symmetric matrix from a lower-triangular CSR (diagonal included or not).

    With ``diag_value`` every diagonal entry is set to that value.
    """
    n = low.nrows
    rows = low.row_ids()
    strict = low.indices < rows
    sl = SparseMatrix(
        n, n,
        np.r_[0, np.cumsum(np.bincount(rows[strict], minlength=n))],
        low.indices[strict],
        low.data[strict],
    )
    up = sl.transpose()
    diag = low.diagonal() if diag_value is None else np.full(n, float(diag_value))
    lcount = np.diff(sl.indptr)
    ucount = np.diff(up.indptr)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lcount + 1 + ucount, out=indptr[1:])
    nnz = int(indptr[-1])
    indices = np.empty(nnz, dtype=np.int32)
    data = np.empty(nnz)
    lrows = sl.row_ids()
    dst = indptr[lrows] + (np.arange(sl.nnz) - sl.indptr[lrows])
    indices[dst] = sl.indices
    data[dst] = sl.data
    dpos = indptr[:-1] + lcount
    indices[dpos] = np.arange(n)
    data[dpos] = diag
    urows = up.row_ids()
    dst = indptr[urows] + lcount[urows] + 1 + (np.arange(up.nnz) - up.indptr[urows])
    indices[dst] = up.indices
    data[dst] = up.data
    return SparseMatrix(n, n, indptr, indices, data)


def mixture_matrix(P_col, threads=None, backend=None):
    """Short-term mixture matrix ``H = P P^T`` with a unit diagonal.

    Only the lower triangle of the product is computed; the upper triangle
    is its exact mirror, so H is symmetric bit for bit.
    """
    impl = _backend.resolve(backend)
    Pt = P_col.transpose(backend=impl)
    ptr, idx, dat = impl.spgemm(
        P_col.indptr, P_col.indices, P_col.data, Pt.indptr, Pt.indices, Pt.data,
        P_col.nrows, True, _threads(threads),
    )
    low = SparseMatrix(P_col.nrows, P_col.nrows, ptr, idx, dat)
    return _mirror_lower(low, diag_value=1.0)


def max_asymmetry(M):
    if M.nrows != M.ncols:
        return np.inf
    T = M.transpose()
    if np.array_equal(T.indptr, M.indptr) and np.array_equal(T.indices, M.indices):
        return float(np.max(np.abs(M.data - T.data), initial=0.0))
    rows = np.r_[M.row_ids(), T.row_ids()]
    cols = np.r_[M.indices, T.indices]
    vals = np.r_[M.data, -T.data]
    diff = from_coo(rows, cols, vals, M.shape)
    return float(np.max(np.abs(diff.data), initial=0.0))


def degrees(H):
    return H.row_sums()


def laplacian(H, tol=1e-12):
    """Graph Laplacian ``L = D - H`` with ``D`` the row sums of H."""
    asym = max_asymmetry(H)
    if asym > tol:
        raise InvariantError(f"H is not symmetric (max |H - H^T| = {asym:.3e})")
    n = H.nrows
    rows = H.row_ids()
    on = rows == H.indices
    if np.count_nonzero(on) < n:
        missing = np.setdiff1d(np.arange(n), rows[on])
        H = from_coo(
            np.r_[rows, missing], np.r_[H.indices, missing], np.r_[H.data, np.zeros(missing.size)],
            H.shape,
        )
        rows = H.row_ids()
        on = rows == H.indices
    D = degrees(H)
    data = -H.data
    data[on] = D[rows[on]] - H.data[on]
    return SparseMatrix(n, n, H.indptr, H.indices, data)


def save_matrix(M, path):
    header = f"{MATRIX_MAGIC} {M.nrows} {M.ncols} {M.nnz}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(M.indptr.astype("<u8").tobytes())
        fh.write(M.indices.astype("<u8").tobytes())
        fh.write(M.data.astype("<f8").tobytes())


def load_matrix(path):
    path = Path(path)
    raw = path.read_bytes()
    nl = raw.find(b"\n", 0, 256)
    if nl < 0:
        raise FormatError("missing header line", offset=0, path=path)
    tokens = raw[:nl].decode("ascii", errors="replace").split()
    if len(tokens) != 4 or tokens[0] != MATRIX_MAGIC:
        raise FormatError(f"expected '{MATRIX_MAGIC} nrows ncols nnz'", offset=0, path=path)
    try:
        nrows, ncols, nnz = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("non-integer header field", offset=0, path=path) from None
    start = nl + 1
    need = 8 * (nrows + 1) + 16 * nnz
    if len(raw) - start != need:
        raise FormatError(
            f"size mismatch: expected {need} data bytes, found {len(raw) - start}",
            offset=start + min(need, len(raw) - start), path=path,
        )
    ptr = np.frombuffer(raw, "<u8", nrows + 1, start).astype(np.int64)
    idx = np.frombuffer(raw, "<u8", nnz, start + 8 * (nrows + 1)).astype(np.int32)
    dat = np.frombuffer(raw, "<f8", nnz, start + 8 * (nrows + 1 + nnz)).copy()
    return SparseMatrix(nrows, ncols, ptr, idx, dat)
