"""Slow scalar reference implementations used as test oracles.

Everything here is written from the mathematical definitions with plain
Python loops and dense numpy arrays; none of it calls into flowembed's
tracing, assembly or sparse kernels.
"""
import math

import numpy as np


def field_value(name, x, params=None):
    params = params or {}
    if name == "zero":
        return np.zeros(len(x))
    if name == "constant":
        return np.array(params.get("value", (1.0,) + (0.0,) * (len(x) - 1)), dtype=float)
    if name == "center":
        return np.array([-x[1], x[0]])
    if name == "saddle":
        return np.array([x[0], -x[1]])
    if name == "stuart_vortex":
        t = params.get("t", 0.0)
        v = [math.sinh(2 * x[1]), 0.25 * math.sin(2 * (t - x[0]))]
        if len(x) == 3:
            v.append(x[2] * (math.cosh(2 * x[1]) - 0.25 * math.cos(2 * (t - x[0]))))
        return np.array(v)
    if name == "abc":
        a, b, c = params.get("A", math.sqrt(3)), params.get("B", math.sqrt(2)), params.get("C", 1.0)
        return np.array([
            a * math.sin(x[2]) + c * math.cos(x[1]),
            b * math.sin(x[0]) + a * math.cos(x[2]),
            c * math.sin(x[1]) + b * math.cos(x[0]),
        ])
    raise KeyError(name)


def inside(domain, x):
    for a in range(domain.ndim):
        g = (x[a] - domain.origin[a]) / domain.spacing[a]
        if not (-0.5 <= g <= domain.dims[a] - 0.5):
            return False
    return True


def centers(domain):
    out = []
    dims = domain.dims
    if domain.ndim == 2:
        for j in range(dims[1]):
            for i in range(dims[0]):
                out.append((domain.origin[0] + i * domain.spacing[0],
                            domain.origin[1] + j * domain.spacing[1]))
    else:
        for k in range(dims[2]):
            for j in range(dims[1]):
                for i in range(dims[0]):
                    out.append(tuple(domain.origin[a] + (i, j, k)[a] * domain.spacing[a]
                                     for a in range(3)))
    return np.array(out, dtype=float)


def trace(name, domain, seed, L, h, params=None, time_mode=False):
    """Return (list of (index, position)) for one seed, scalar RK4."""
    eps = 1e-9 * max(domain.spacing)

    def rhs(x):
        if not inside(domain, x):
            return None, "exit"
        v = field_value(name, x, params)
        n = float(np.linalg.norm(v))
        if n < eps:
            return None, "crit"
        return (v if time_mode else v / n), "ok"

    seed = np.asarray(seed, dtype=float)
    samples = [(0, seed.copy())]
    if rhs(seed)[1] == "crit":
        return samples
    for sign in (1, -1):
        x = seed.copy()
        for s in range(1, L + 1):
            k1, st = rhs(x)
            if st != "ok":
                break
            k2, st = rhs(x + 0.5 * sign * h * k1)
            if st != "ok":
                break
            k3, st = rhs(x + 0.5 * sign * h * k2)
            if st != "ok":
                break
            k4, st = rhs(x + sign * h * k3)
            if st != "ok":
                break
            y = x + sign * h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
            if not inside(domain, y):
                break
            x = y
            samples.append((sign * s, x.copy()))
    return sorted(samples, key=lambda p: p[0])


def kernel_weights(shape, L):
    t = np.arange(-L, L + 1, dtype=float)
    if shape == "box" or L == 0:
        w = np.ones(2 * L + 1)
    elif shape == "gaussian":
        w = np.exp(-t * t / (2 * (L / 3) ** 2))
    elif shape in ("forward", "one_sided_forward"):
        w = (t >= 0).astype(float)
    else:
        w = (t <= 0).astype(float)
    return w / w.sum()


def _axis_weights(g, n):
    g = min(max(g, 0.0), n - 1.0)
    if n == 1:
        return [(0, 1.0)]
    i = min(int(math.floor(g)), n - 2)
    f = g - i
    return [(i, 1 - f), (i + 1, f)]


def deposit(domain, x, nearest):
    """Cell weights of one sample position as a dict {flat index: weight}."""
    g = [(x[a] - domain.origin[a]) / domain.spacing[a] for a in range(domain.ndim)]
    dims = domain.dims
    if nearest:
        idx = [min(max(int(math.floor(g[a] + 0.5)), 0), dims[a] - 1) for a in range(domain.ndim)]
        flat = idx[0] + dims[0] * idx[1] + (dims[0] * dims[1] * idx[2] if domain.ndim == 3 else 0)
        return {flat: 1.0}
    per_axis = [_axis_weights(g[a], dims[a]) for a in range(domain.ndim)]
    out = {}
    if domain.ndim == 2:
        for i, wx in per_axis[0]:
            for j, wy in per_axis[1]:
                k = i + dims[0] * j
                out[k] = out.get(k, 0.0) + wx * wy
    else:
        for i, wx in per_axis[0]:
            for j, wy in per_axis[1]:
                for k, wz in per_axis[2]:
                    f = i + dims[0] * (j + dims[1] * k)
                    out[f] = out.get(f, 0.0) + wx * wy * wz
    return out


def probability_matrix(name, domain, shape, L, h=None, nearest=False, params=None,
                       time_mode=False):
    """Dense unnormalized P from the definitions."""
    h = 0.5 * min(domain.spacing) if h is None else h
    w = kernel_weights(shape, L)
    n = domain.ncells
    P = np.zeros((n, n))
    for i, c in enumerate(centers(domain)):
        samples = trace(name, domain, c, L, h, params, time_mode)
        kept = [s for s, _ in samples]
        if len(kept) == 2 * L + 1:
            ws = {s: w[s + L] for s in kept}
        else:
            tot = sum(w[s + L] for s in kept)
            ws = {s: w[s + L] / tot for s in kept}
        for s, x in samples:
            for j, a in deposit(domain, x, nearest).items():
                P[i, j] += ws[s] * a
    return P


def mixture(P_col):
    H = P_col @ P_col.T
    np.fill_diagonal(H, 1.0)
    return H


def laplacian(H):
    return np.diag(H.sum(axis=1)) - H


def path_laplacian(n):
    L = np.zeros((n, n))
    for i in range(n - 1):
        L[i, i] += 1
        L[i + 1, i + 1] += 1
        L[i, i + 1] = L[i + 1, i] = -1
    return L
