"""Pure numpy implementations of the kernels in ``_core.pyx``.

Tracing runs all seeds in lockstep; products and assembly work on row
blocks so the temporary expansion stays bounded.  ``nthreads`` is accepted
for signature compatibility and ignored.
"""
import numpy as np

KIND_GRID, KIND_CONSTANT, KIND_ZERO, KIND_CENTER, KIND_SADDLE, KIND_STUART, KIND_ABC = range(7)
ST_OK, ST_EXIT, ST_CRIT = 0, 1, 2

_BLOCK_ENTRIES = 1 << 22


def _coords(spec, pts):
    nd = spec.ndim
    g = (pts - spec.origin[:nd]) / spec.spacing[:nd]
    inside = np.all((g >= -0.5) & (g <= spec.dims[:nd] - 0.5), axis=1)
    return g, inside


def _corners(spec, g):
    nd = spec.ndim
    dims = spec.dims[:nd]
    gc = np.minimum(np.maximum(g, 0.0), (dims - 1).astype(np.float64))
    i0 = np.floor(gc).astype(np.int64)
    i0 = np.minimum(i0, np.maximum(dims - 2, 0))
    fr = gc - i0
    i1 = np.minimum(i0 + 1, dims - 1)
    return i0, i1, fr


def _corner_weights(spec, i0, i1, fr):
    """Yield (flat cell index, weight) per corner, in the compiled corner order."""
    nd = spec.ndim
    stride = np.array([1, spec.dims[0], spec.dims[0] * spec.dims[1]], dtype=np.int64)[:nd]
    for c in range(1 << nd):
        w = np.ones(i0.shape[0])
        k = np.zeros(i0.shape[0], dtype=np.int64)
        for a in range(nd):
            if (c >> a) & 1:
                w = w * fr[:, a]
                k = k + i1[:, a] * stride[a]
            else:
                w = w * (1.0 - fr[:, a])
                k = k + i0[:, a] * stride[a]
        yield k, w


def eval_field(spec, pts):
    pts = np.asarray(pts, dtype=np.float64)
    n, nd = pts.shape[0], spec.ndim
    g, inside = _coords(spec, pts)
    out = np.zeros((n, nd))
    x0 = pts[:, 0]
    x1 = pts[:, 1]
    x2 = pts[:, 2] if nd == 3 else np.zeros(n)
    kind, p = spec.kind, spec.params
    if kind == KIND_GRID:
        ok = np.flatnonzero(inside)
        i0, i1, fr = _corners(spec, g[ok])
        acc = np.zeros((ok.size, nd))
        for k, w in _corner_weights(spec, i0, i1, fr):
            acc += w[:, None] * spec.grid[k]
        out[ok] = acc
    elif kind == KIND_CONSTANT:
        out[:] = p[:nd]
    elif kind == KIND_CENTER:
        out[:, 0] = -x1
        out[:, 1] = x0
    elif kind == KIND_SADDLE:
        out[:, 0] = x0
        out[:, 1] = -x1
    elif kind == KIND_STUART:
        out[:, 0] = np.sinh(2.0 * x1)
        out[:, 1] = 0.25 * np.sin(2.0 * (p[0] - x0))
        if nd == 3:
            out[:, 2] = x2 * (np.cosh(2.0 * x1) - 0.25 * np.cos(2.0 * (p[0] - x0)))
    elif kind == KIND_ABC:
        out[:, 0] = p[0] * np.sin(x2) + p[2] * np.cos(x1)
        out[:, 1] = p[1] * np.sin(x0) + p[0] * np.cos(x2)
        out[:, 2] = p[2] * np.sin(x1) + p[1] * np.cos(x0)
    out[~inside] = 0.0
    return out, inside


def _rhs(spec, x, time_mode, eps):
    v, inside = eval_field(spec, x)
    if spec.ndim == 3:
        nrm = np.sqrt(v[:, 0] * v[:, 0] + v[:, 1] * v[:, 1] + v[:, 2] * v[:, 2])
    else:
        nrm = np.sqrt(v[:, 0] * v[:, 0] + v[:, 1] * v[:, 1])
    status = np.where(inside, np.where(nrm < eps, ST_CRIT, ST_OK), ST_EXIT)
    if not time_mode:
        safe = np.where(status == ST_OK, nrm, 1.0)
        v = v / safe[:, None]
    return v, status


def _rk4(spec, x, h, time_mode, eps):
    """Vectorized RK4 step; returns (x_new, status) with the first failing stage."""
    k1, s1 = _rhs(spec, x, time_mode, eps)
    k2, s2 = _rhs(spec, x + 0.5 * h * k1, time_mode, eps)
    k3, s3 = _rhs(spec, x + 0.5 * h * k2, time_mode, eps)
    k4, s4 = _rhs(spec, x + h * k3, time_mode, eps)
    y = x + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    status = s1
    for s in (s2, s3, s4):
        status = np.where(status == ST_OK, s, status)
    _, inside = _coords(spec, y)
    status = np.where((status == ST_OK) & ~inside, ST_EXIT, status)
    return y, status


def _trace_dir(spec, seeds, L, h, time_mode, eps, active):
    n, nd = seeds.shape
    out = np.full((n, L, nd), np.nan)
    kept = np.zeros(n, dtype=np.int64)
    status = np.zeros(n, dtype=np.int8)
    x = seeds.copy()
    live = np.flatnonzero(active)
    for s in range(L):
        if live.size == 0:
            break
        y, st = _rk4(spec, x[live], h, time_mode, eps)
        ok = st == ST_OK
        status[live[~ok]] = st[~ok]
        live = live[ok]
        x[live] = y[ok]
        out[live, s] = y[ok]
        kept[live] = s + 1
    return out, kept, status


def _seed_critical(spec, seeds, eps):
    _, st = _rhs(spec, seeds, False, eps)
    return st == ST_CRIT


def trace_batch(spec, seeds, L, step, time_mode, eps):
    seeds = np.ascontiguousarray(seeds, dtype=np.float64)
    n, nd = seeds.shape
    _, inside = _coords(spec, seeds)
    if not np.all(inside):
        raise ValueError(f"seed {int(np.flatnonzero(~inside)[0])} lies outside the domain")
    pos = np.full((n, 2 * L + 1, nd), np.nan)
    pos[:, L] = seeds
    nb = np.zeros(n, dtype=np.int64)
    nf = np.zeros(n, dtype=np.int64)
    status = np.zeros((n, 2), dtype=np.int8)
    crit = _seed_critical(spec, seeds, eps)
    status[crit] = ST_CRIT
    if L > 0:
        fwd, nf[:], sf = _trace_dir(spec, seeds, L, step, time_mode, eps, ~crit)
        bwd, nb[:], sb = _trace_dir(spec, seeds, L, -step, time_mode, eps, ~crit)
        pos[:, L + 1 :] = fwd
        pos[:, :L] = bwd[:, ::-1]
        status[~crit, 1] = sf[~crit]
        status[~crit, 0] = sb[~crit]
    return pos, nb, nf, status


def _combine(rows, cols, vals, nrows, ncols):
    """Sum duplicate (row, col) pairs; rows of the result have sorted columns."""
    key = rows.astype(np.int64) * np.int64(ncols) + cols
    order = np.argsort(key, kind="stable")
    key = key[order]
    vals = vals[order]
    if key.size == 0:
        return np.zeros(nrows + 1, dtype=np.int64), np.zeros(0, np.int32), np.zeros(0)
    new = np.r_[True, key[1:] != key[:-1]]
    start = np.flatnonzero(new)
    # sequential accumulation in occurrence order, like the compiled workspace
    summed = np.zeros(start.size)
    np.add.at(summed, np.cumsum(new) - 1, vals)
    ukey = key[start]
    urow = ukey // ncols
    ucol = (ukey % ncols).astype(np.int32)
    counts = np.bincount(urow, minlength=nrows)
    indptr = np.zeros(nrows + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, ucol, summed


def _cell_centers(spec):
    nd = spec.ndim
    axes = [spec.origin[a] + np.arange(spec.dims[a]) * spec.spacing[a] for a in range(nd)]
    grids = np.meshgrid(*reversed(axes), indexing="ij")
    return np.stack([gr.ravel() for gr in reversed(grids)], axis=1)


def _concat(parts, nrows):
    indptr = np.zeros(nrows + 1, dtype=np.int64)
    off, r = 0, 0
    for ptr, _, _ in parts:
        m = ptr.size - 1
        indptr[r + 1 : r + m + 1] = ptr[1:] + off
        off += ptr[-1]
        r += m
    indices = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, np.int32)
    data = np.concatenate([p[2] for p in parts]) if parts else np.zeros(0)
    return indptr, indices.astype(np.int32), data


def assemble(spec, weights, step, time_mode, nearest, eps, nthreads=1):
    weights = np.asarray(weights, dtype=np.float64)
    L = (weights.size - 1) // 2
    nd = spec.ndim
    N = int(np.prod(spec.dims))
    centers = _cell_centers(spec)
    per_row = (2 * L + 1) * (1 << nd)
    block = max(1, _BLOCK_ENTRIES // per_row)
    stride = np.array([1, spec.dims[0], spec.dims[0] * spec.dims[1]], dtype=np.int64)[:nd]
    parts = []
    for r0 in range(0, N, block):
        r1 = min(N, r0 + block)
        m = r1 - r0
        pos, nb, nf, _ = trace_batch(spec, centers[r0:r1], L, step, time_mode, eps)
        t = np.arange(-L, L + 1)
        valid = (t[None, :] >= -nb[:, None]) & (t[None, :] <= nf[:, None])
        complete = (nb == L) & (nf == L)
        W = np.zeros(m)
        for i in range(2 * L + 1):
            W = W + np.where(valid[:, i], weights[i], 0.0)
        wk = np.where(complete[:, None], weights[None, :], weights[None, :] / W[:, None])
        wk = np.where(valid, wk, 0.0)
        flat_pos = pos.reshape(-1, nd)
        take = np.flatnonzero(wk.ravel() != 0.0)
        g, _ = _coords(spec, flat_pos[take])
        rows = take // (2 * L + 1) + r0
        wsel = wk.ravel()[take]
        if nearest:
            idx = np.floor(g + 0.5).astype(np.int64)
            idx = np.clip(idx, 0, spec.dims[:nd] - 1)
            cols = (idx * stride).sum(axis=1)
            vals = wsel * 1.0
            rr = rows
        else:
            i0, i1, fr = _corners(spec, g)
            ks, ws = zip(*_corner_weights(spec, i0, i1, fr))
            # (sample, corner) order so stable duplicate sums follow the compiled order
            cols = np.stack(ks, axis=1).ravel()
            w = np.stack(ws, axis=1)
            vals = (wsel[:, None] * w).ravel()
            rr = np.repeat(rows, 1 << nd)
            keep = w.ravel() != 0.0
            cols, vals, rr = cols[keep], vals[keep], rr[keep]
        ptr, idx_, dat = _combine(rr - r0, cols, vals, m, N)
        parts.append((ptr, idx_, dat))
    return _concat(parts, N)


def spmv(indptr, indices, data, x, nthreads=1):
    n = indptr.size - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    return np.bincount(rows, weights=data * x[indices], minlength=n).astype(np.float64)


def transpose(indptr, indices, data, ncols):
    n = indptr.size - 1
    rows = np.repeat(np.arange(n, dtype=np.int32), np.diff(indptr))
    order = np.argsort(indices, kind="stable")
    tptr = np.zeros(ncols + 1, dtype=np.int64)
    np.cumsum(np.bincount(indices, minlength=ncols), out=tptr[1:])
    return tptr, rows[order], data[order]


def spgemm(aptr, aidx, adat, bptr, bidx, bdat, ncols, lower=False, nthreads=1):
    n = aptr.size - 1
    blen = np.diff(bptr)
    arow_len = np.diff(aptr)
    work = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(np.repeat(np.arange(n), arow_len), weights=blen[aidx], minlength=n)
              .astype(np.int64), out=work[1:])
    parts = []
    r0 = 0
    while r0 < n:
        r1 = int(np.searchsorted(work, work[r0] + _BLOCK_ENTRIES, side="right")) - 1
        r1 = min(n, max(r1, r0 + 1))
        q0, q1 = aptr[r0], aptr[r1]
        k = aidx[q0:q1]
        a = adat[q0:q1]
        arow = np.repeat(np.arange(r0, r1), arow_len[r0:r1])
        lens = blen[k]
        total = int(lens.sum())
        seg = np.repeat(np.cumsum(lens) - lens, lens)
        src = np.repeat(bptr[k], lens) + (np.arange(total) - seg)
        rows = np.repeat(arow, lens)
        cols = bidx[src]
        vals = np.repeat(a, lens) * bdat[src]
        if lower:
            keep = cols <= rows
            rows, cols, vals = rows[keep], cols[keep], vals[keep]
        parts.append(_combine(rows - r0, cols, vals, r1 - r0, ncols))
        r0 = r1
    return _concat(parts, n)
