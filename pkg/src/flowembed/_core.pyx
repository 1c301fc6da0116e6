# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: field evaluation, RK4 tracing, probability-matrix
assembly and CSR products.

Every function here has a numpy twin in ``_fallback.py`` with the same
signature; results agree to rounding (the compiled path is bit-reproducible
run to run for any thread count).
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange, parallel
from libc.math cimport sqrt, floor, sin, cos, sinh, cosh
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()

ctypedef long long i64
ctypedef int i32

cdef enum:
    KIND_GRID = 0
    KIND_CONSTANT = 1
    KIND_ZERO = 2
    KIND_CENTER = 3
    KIND_SADDLE = 4
    KIND_STUART = 5
    KIND_ABC = 6

cdef enum:
    ST_OK = 0
    ST_EXIT = 1
    ST_CRIT = 2


cdef struct Field:
    int kind
    int ndim
    double p[8]
    const double* grid
    i64 dims[3]
    double origin[3]
    double spacing[3]
    i64 stride[3]


cdef Field _field(spec, const double[:, ::1] grid):
    cdef Field f
    cdef int a
    f.kind = spec.kind
    f.ndim = spec.ndim
    for a in range(8):
        f.p[a] = spec.params[a]
    f.grid = &grid[0, 0] if grid.shape[0] > 0 else NULL
    for a in range(3):
        f.dims[a] = spec.dims[a]
        f.origin[a] = spec.origin[a]
        f.spacing[a] = spec.spacing[a]
    f.stride[0] = 1
    f.stride[1] = f.dims[0]
    f.stride[2] = f.dims[0] * f.dims[1]
    return f


cdef inline int _coords(const Field* f, const double* x, double* g) noexcept nogil:
    cdef int a
    for a in range(f.ndim):
        g[a] = (x[a] - f.origin[a]) / f.spacing[a]
        if not (g[a] >= -0.5 and g[a] <= f.dims[a] - 0.5):
            return 1
    return 0


cdef inline void _corners(const Field* f, const double* g, i64* i0, i64* i1, double* fr) noexcept nogil:
    cdef int a
    cdef double gc
    cdef i64 i, top
    for a in range(f.ndim):
        gc = g[a]
        if gc < 0.0:
            gc = 0.0
        if gc > f.dims[a] - 1:
            gc = <double>(f.dims[a] - 1)
        i = <i64>floor(gc)
        top = f.dims[a] - 2
        if top < 0:
            top = 0
        if i > top:
            i = top
        fr[a] = gc - i
        i0[a] = i
        i1[a] = i + 1 if i + 1 <= f.dims[a] - 1 else f.dims[a] - 1


cdef inline double _corner(const Field* f, int c, const i64* i0, const i64* i1,
                           const double* fr, i64* idx) noexcept nogil:
    cdef double w = 1.0
    cdef i64 k = 0
    cdef int a
    for a in range(f.ndim):
        if (c >> a) & 1:
            w *= fr[a]
            k += i1[a] * f.stride[a]
        else:
            w *= 1.0 - fr[a]
            k += i0[a] * f.stride[a]
    idx[0] = k
    return w


cdef int _eval(const Field* f, const double* x, double* out) noexcept nogil:
    cdef double g[3]
    cdef double fr[3]
    cdef i64 i0[3]
    cdef i64 i1[3]
    cdef i64 k
    cdef double w
    cdef int a, c, nd = f.ndim
    cdef double x0, x1, x2
    if _coords(f, x, g):
        return ST_EXIT
    x0 = x[0]
    x1 = x[1]
    x2 = x[2] if nd == 3 else 0.0
    if f.kind == KIND_GRID:
        _corners(f, g, i0, i1, fr)
        for a in range(nd):
            out[a] = 0.0
        for c in range(1 << nd):
            w = _corner(f, c, i0, i1, fr, &k)
            for a in range(nd):
                out[a] += w * f.grid[k * nd + a]
    elif f.kind == KIND_CONSTANT:
        for a in range(nd):
            out[a] = f.p[a]
    elif f.kind == KIND_ZERO:
        for a in range(nd):
            out[a] = 0.0
    elif f.kind == KIND_CENTER:
        out[0] = -x1
        out[1] = x0
        if nd == 3:
            out[2] = 0.0
    elif f.kind == KIND_SADDLE:
        out[0] = x0
        out[1] = -x1
        if nd == 3:
            out[2] = 0.0
    elif f.kind == KIND_STUART:
        out[0] = sinh(2.0 * x1)
        out[1] = 0.25 * sin(2.0 * (f.p[0] - x0))
        if nd == 3:
            out[2] = x2 * (cosh(2.0 * x1) - 0.25 * cos(2.0 * (f.p[0] - x0)))
    elif f.kind == KIND_ABC:
        out[0] = f.p[0] * sin(x2) + f.p[2] * cos(x1)
        out[1] = f.p[1] * sin(x0) + f.p[0] * cos(x2)
        out[2] = f.p[2] * sin(x1) + f.p[1] * cos(x0)
    return ST_OK


cdef inline int _rhs(const Field* f, const double* x, bint time_mode, double eps, double* k) noexcept nogil:
    cdef int a, st
    cdef double nrm
    st = _eval(f, x, k)
    if st:
        return st
    if f.ndim == 3:
        nrm = sqrt(k[0] * k[0] + k[1] * k[1] + k[2] * k[2])
    else:
        nrm = sqrt(k[0] * k[0] + k[1] * k[1])
    if nrm < eps:
        return ST_CRIT
    if not time_mode:
        for a in range(f.ndim):
            k[a] = k[a] / nrm
    return ST_OK


cdef int _rk4(const Field* f, double* x, double h, bint time_mode, double eps) noexcept nogil:
    """One classical RK4 step in place; non-zero status leaves x untouched."""
    cdef double k1[3]
    cdef double k2[3]
    cdef double k3[3]
    cdef double k4[3]
    cdef double y[3]
    cdef double g[3]
    cdef int a, st, nd = f.ndim
    st = _rhs(f, x, time_mode, eps, k1)
    if st:
        return st
    for a in range(nd):
        y[a] = x[a] + 0.5 * h * k1[a]
    st = _rhs(f, y, time_mode, eps, k2)
    if st:
        return st
    for a in range(nd):
        y[a] = x[a] + 0.5 * h * k2[a]
    st = _rhs(f, y, time_mode, eps, k3)
    if st:
        return st
    for a in range(nd):
        y[a] = x[a] + h * k3[a]
    st = _rhs(f, y, time_mode, eps, k4)
    if st:
        return st
    for a in range(nd):
        y[a] = x[a] + h * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]) / 6.0
    if _coords(f, y, g):
        return ST_EXIT
    for a in range(nd):
        x[a] = y[a]
    return ST_OK


cdef int _trace_dir(const Field* f, const double* seed, int L, double h, bint time_mode,
                    double eps, double* out, int stride, int* nkept) noexcept nogil:
    """Trace up to L steps; sample s (1-based) is written to out + (s-1)*stride."""
    cdef double x[3]
    cdef int a, s, st
    cdef int nd = f.ndim
    for a in range(nd):
        x[a] = seed[a]
    nkept[0] = 0
    for s in range(L):
        st = _rk4(f, x, h, time_mode, eps)
        if st:
            return st
        for a in range(nd):
            out[s * stride + a] = x[a]
        nkept[0] = s + 1
    return ST_OK


cdef inline int _seed_critical(const Field* f, const double* seed, double eps) noexcept nogil:
    cdef double k[3]
    return _rhs(f, seed, 0, eps, k) == ST_CRIT


def eval_field(spec, const double[:, ::1] pts):
    cdef Field f = _field(spec, spec.grid)
    cdef Py_ssize_t n = pts.shape[0], i
    cdef int nd = f.ndim
    vals = np.zeros((n, nd))
    inside = np.zeros(n, dtype=bool)
    cdef double[:, ::1] v = vals
    cdef cnp.npy_bool[::1] ins = inside
    with nogil:
        for i in range(n):
            ins[i] = _eval(&f, &pts[i, 0], &v[i, 0]) == ST_OK
    return vals, inside


def trace_batch(spec, const double[:, ::1] seeds, int L, double step, bint time_mode, double eps):
    """Trace every seed backward and forward.

    Returns ``(pos, nback, nfwd, status)`` with ``pos`` of shape
    ``(n, 2L+1, ndim)`` (NaN where no sample exists) and ``status[:, 0]`` /
    ``status[:, 1]`` the backward / forward termination codes
    (0 complete, 1 domain exit, 2 critical point).
    """
    cdef Field f = _field(spec, spec.grid)
    cdef Py_ssize_t n = seeds.shape[0], i
    cdef int nd = f.ndim, a
    pos_arr = np.full((n, 2 * L + 1, nd), np.nan)
    nb_arr = np.zeros(n, dtype=np.int64)
    nf_arr = np.zeros(n, dtype=np.int64)
    st_arr = np.zeros((n, 2), dtype=np.int8)
    cdef double[:, :, ::1] pos = pos_arr
    cdef i64[::1] nb = nb_arr
    cdef i64[::1] nf = nf_arr
    cdef signed char[:, ::1] st = st_arr
    cdef int kept, s
    cdef double g[3]
    with nogil:
        for i in range(n):
            if _coords(&f, &seeds[i, 0], g):
                with gil:
                    raise ValueError(f"seed {i} lies outside the domain")
            for a in range(nd):
                pos[i, L, a] = seeds[i, a]
            if _seed_critical(&f, &seeds[i, 0], eps):
                st[i, 0] = ST_CRIT
                st[i, 1] = ST_CRIT
                continue
            if L == 0:
                continue
            st[i, 1] = _trace_dir(&f, &seeds[i, 0], L, step, time_mode, eps, &pos[i, L + 1, 0], nd, &kept)
            nf[i] = kept
            st[i, 0] = _trace_dir(&f, &seeds[i, 0], L, -step, time_mode, eps, &pos[i, L - 1, 0], -nd, &kept)
            nb[i] = kept
    return pos_arr, nb_arr, nf_arr, st_arr


cdef int _cmp_i64(const void* a, const void* b) noexcept nogil:
    cdef i64 x = (<const i64*>a)[0]
    cdef i64 y = (<const i64*>b)[0]
    return (x > y) - (x < y)


cdef i64 _assemble_row(const Field* f, i64 row, int L, const double* weights, double step,
                       bint time_mode, bint nearest, double eps, double* samples,
                       double* ws, i64* mark, i64* touched,
                       i32* out_idx, double* out_val) noexcept nogil:
    cdef int nd = f.ndim, a, c, t, nb = 0, nfw = 0
    cdef double seed[3]
    cdef double g[3]
    cdef double fr[3]
    cdef i64 i0[3]
    cdef i64 i1[3]
    cdef i64 rem = row, col, nt = 0, q, ix
    cdef double W, wk, w, val
    cdef bint complete
    for a in range(nd):
        ix = rem % f.dims[a]
        rem = rem // f.dims[a]
        seed[a] = f.origin[a] + ix * f.spacing[a]
        samples[L * nd + a] = seed[a]
    if L > 0 and not _seed_critical(f, seed, eps):
        _trace_dir(f, seed, L, step, time_mode, eps, samples + (L + 1) * nd, nd, &nfw)
        _trace_dir(f, seed, L, -step, time_mode, eps, samples + (L - 1) * nd, -nd, &nb)
    complete = nb == L and nfw == L
    W = 0.0
    if not complete:
        for t in range(-nb, nfw + 1):
            W += weights[L + t]
    for t in range(-nb, nfw + 1):
        wk = weights[L + t] if complete else weights[L + t] / W
        if wk == 0.0:
            continue
        _coords(f, samples + (L + t) * nd, g)
        if nearest:
            col = 0
            for a in range(nd):
                ix = <i64>floor(g[a] + 0.5)
                if ix < 0:
                    ix = 0
                if ix > f.dims[a] - 1:
                    ix = f.dims[a] - 1
                col += ix * f.stride[a]
            val = wk * 1.0
            if mark[col] != row:
                mark[col] = row
                ws[col] = val
                touched[nt] = col
                nt += 1
            else:
                ws[col] += val
        else:
            _corners(f, g, i0, i1, fr)
            for c in range(1 << nd):
                w = _corner(f, c, i0, i1, fr, &col)
                if w == 0.0:
                    continue
                val = wk * w
                if mark[col] != row:
                    mark[col] = row
                    ws[col] = val
                    touched[nt] = col
                    nt += 1
                else:
                    ws[col] += val
    if out_idx != NULL:
        qsort(touched, nt, sizeof(i64), _cmp_i64)
        for q in range(nt):
            out_idx[q] = <i32>touched[q]
            out_val[q] = ws[touched[q]]
    return nt


def assemble(spec, const double[::1] weights, double step, bint time_mode, bint nearest,
             double eps, int nthreads=1):
    """CSR arrays of the kernel-weighted deposition matrix, one row per cell."""
    cdef Field f = _field(spec, spec.grid)
    cdef int nd = f.ndim
    cdef int L = (weights.shape[0] - 1) // 2
    cdef i64 N = f.dims[0] * f.dims[1] * f.dims[2]
    cdef i64 maxt = (2 * L + 1) * (1 << nd)
    cdef i64 row, j
    cdef int p
    cdef double* ws
    cdef i64* mark
    cdef i64* touched
    cdef double* samples
    indptr_arr = np.zeros(N + 1, dtype=np.int64)
    cdef i64[::1] indptr = indptr_arr
    cdef i32[::1] indices
    cdef double[::1] data
    cdef i32* idx_base = NULL
    cdef double* val_base = NULL
    if nthreads < 1:
        nthreads = 1
    for p in range(2):
        if p == 1:
            np.cumsum(indptr_arr, out=indptr_arr)
            nnz = int(indptr_arr[N])
            indices_arr = np.empty(nnz, dtype=np.int32)
            data_arr = np.empty(nnz, dtype=np.float64)
            indices = indices_arr
            data = data_arr
            if nnz > 0:
                idx_base = &indices[0]
                val_base = &data[0]
        with nogil, parallel(num_threads=nthreads):
            ws = <double*>malloc(N * sizeof(double))
            mark = <i64*>malloc(N * sizeof(i64))
            touched = <i64*>malloc(maxt * sizeof(i64))
            samples = <double*>malloc((2 * L + 1) * nd * sizeof(double))
            for j in range(N):
                mark[j] = -1
            for row in prange(N, schedule="dynamic", chunksize=64):
                if p == 0:
                    indptr[row + 1] = _assemble_row(&f, row, L, &weights[0], step, time_mode, nearest,
                                                    eps, samples, ws, mark, touched, NULL, NULL)
                else:
                    _assemble_row(&f, row, L, &weights[0], step, time_mode, nearest, eps, samples,
                                  ws, mark, touched, idx_base + indptr[row], val_base + indptr[row])
            free(ws)
            free(mark)
            free(touched)
            free(samples)
    return indptr_arr, indices_arr, data_arr


def spmv(const i64[::1] indptr, const i32[::1] indices, const double[::1] data,
         const double[::1] x, int nthreads=1):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    y_arr = np.empty(n)
    cdef double[::1] y = y_arr
    cdef Py_ssize_t i
    cdef i64 q
    cdef double acc
    if nthreads < 1:
        nthreads = 1
    with nogil:
        for i in prange(n, schedule="static", num_threads=nthreads):
            acc = 0.0
            for q in range(indptr[i], indptr[i + 1]):
                acc = acc + data[q] * x[indices[q]]
            y[i] = acc
    return y_arr


def transpose(const i64[::1] indptr, const i32[::1] indices, const double[::1] data, i64 ncols):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef i64 nnz = indptr[n]
    tptr_arr = np.zeros(ncols + 1, dtype=np.int64)
    tidx_arr = np.empty(nnz, dtype=np.int32)
    tdat_arr = np.empty(nnz, dtype=np.float64)
    cdef i64[::1] tptr = tptr_arr
    cdef i32[::1] tidx = tidx_arr
    cdef double[::1] tdat = tdat_arr
    cdef i64[::1] fill
    cdef Py_ssize_t i
    cdef i64 q, c, dst
    with nogil:
        for q in range(nnz):
            tptr[indices[q] + 1] += 1
        for c in range(ncols):
            tptr[c + 1] += tptr[c]
    fill_arr = tptr_arr[:-1].copy()
    fill = fill_arr
    with nogil:
        for i in range(n):
            for q in range(indptr[i], indptr[i + 1]):
                c = indices[q]
                dst = fill[c]
                fill[c] = dst + 1
                tidx[dst] = <i32>i
                tdat[dst] = data[q]
    return tptr_arr, tidx_arr, tdat_arr


cdef i64 _gemm_row(i64 i, const i64* aptr, const i32* aidx, const double* adat,
                   const i64* bptr, const i32* bidx, const double* bdat, bint lower,
                   double* ws, i64* mark, i64* touched, i32* out_idx, double* out_val) noexcept nogil:
    cdef i64 qa, qb, k, j, nt = 0, q
    cdef double a, val
    for qa in range(aptr[i], aptr[i + 1]):
        k = aidx[qa]
        a = adat[qa]
        for qb in range(bptr[k], bptr[k + 1]):
            j = bidx[qb]
            if lower and j > i:
                break
            val = a * bdat[qb]
            if mark[j] != i:
                mark[j] = i
                ws[j] = val
                touched[nt] = j
                nt += 1
            else:
                ws[j] += val
    if out_idx != NULL:
        qsort(touched, nt, sizeof(i64), _cmp_i64)
        for q in range(nt):
            out_idx[q] = <i32>touched[q]
            out_val[q] = ws[touched[q]]
    return nt


def spgemm(const i64[::1] aptr, const i32[::1] aidx, const double[::1] adat,
           const i64[::1] bptr, const i32[::1] bidx, const double[::1] bdat,
           i64 ncols, bint lower=False, int nthreads=1):
    """CSR product A @ B; with ``lower`` only entries with col <= row are kept.

    ``lower`` assumes column indices of B are sorted within each row.
    """
    cdef i64 n = aptr.shape[0] - 1
    cdef i64 row, j
    cdef int p
    cdef double* ws
    cdef i64* mark
    cdef i64* touched
    cdef i32* idx_base = NULL
    cdef double* val_base = NULL
    cdef i32 dummy_i = 0
    cdef double dummy_d = 0.0
    cdef const i32* ai = &aidx[0] if aidx.shape[0] > 0 else &dummy_i
    cdef const double* ad = &adat[0] if adat.shape[0] > 0 else &dummy_d
    cdef const i32* bi = &bidx[0] if bidx.shape[0] > 0 else &dummy_i
    cdef const double* bd = &bdat[0] if bdat.shape[0] > 0 else &dummy_d
    cptr_arr = np.zeros(n + 1, dtype=np.int64)
    cdef i64[::1] cptr = cptr_arr
    cdef i32[::1] cidx
    cdef double[::1] cdat
    if nthreads < 1:
        nthreads = 1
    for p in range(2):
        if p == 1:
            np.cumsum(cptr_arr, out=cptr_arr)
            nnz = int(cptr_arr[n])
            cidx_arr = np.empty(nnz, dtype=np.int32)
            cdat_arr = np.empty(nnz, dtype=np.float64)
            cidx = cidx_arr
            cdat = cdat_arr
            if nnz > 0:
                idx_base = &cidx[0]
                val_base = &cdat[0]
        with nogil, parallel(num_threads=nthreads):
            ws = <double*>malloc((ncols + 1) * sizeof(double))
            mark = <i64*>malloc((ncols + 1) * sizeof(i64))
            touched = <i64*>malloc((ncols + 1) * sizeof(i64))
            for j in range(ncols):
                mark[j] = -1
            for row in prange(n, schedule="dynamic", chunksize=64):
                if p == 0:
                    cptr[row + 1] = _gemm_row(row, &aptr[0], ai, ad, &bptr[0], bi, bd, lower,
                                              ws, mark, touched, NULL, NULL)
                else:
                    _gemm_row(row, &aptr[0], ai, ad, &bptr[0], bi, bd, lower, ws, mark, touched,
                              idx_base + cptr[row], val_base + cptr[row])
            free(ws)
            free(mark)
            free(touched)
    return cptr_arr, cidx_arr, cdat_arr
