"""Smallest eigenpairs of the mixture Laplacian and amplitude-based selection.

The default solver is a thick-restart Lanczos iteration with full (twice
applied) reorthogonalization.  Only matrix-vector products with L are
needed; the projected problem is solved densely.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import matrix as _matrix
from .errors import (
    ConvergenceError,
    DisconnectedDomainWarning,
    FormatError,
    PreconditionError,
    SelectionClampWarning,
)

log = logging.getLogger(__name__)

EMBEDDING_MAGIC = "EMB1"
KERNEL_EPS = 1e-8
METHODS = ("lanczos", "lobpcg")


@dataclass(frozen=True, eq=False)
class EigenPair:
    value: float
    vector: np.ndarray
    residual: float


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Eigenpairs in ascending eigenvalue order plus their p-norm amplitudes."""

    pairs: tuple
    amplitudes: tuple
    p: float = math.inf
    domain: object = None
    seed: int = 0
    warnings: tuple = ()
    stats: dict = dc_field(default_factory=dict)

    def __len__(self):
        return len(self.pairs)

    @property
    def values(self):
        return np.array([pr.value for pr in self.pairs])

    @property
    def residuals(self):
        return np.array([pr.residual for pr in self.pairs])

    @property
    def vectors(self):
        """(N, k) matrix with one eigenvector per column."""
        return np.stack([pr.vector for pr in self.pairs], axis=1)

    def image(self, i):
        """Eigenvector ``i`` reshaped over the domain grid (z, y, x order)."""
        if self.domain is None:
            raise PreconditionError("embedding set has no domain attached")
        return self.pairs[i].vector.reshape(self.domain.shape)


class SelectedEmbedding(NamedTuple):
    index: int
    value: float
    vector: np.ndarray
    amplitude: float


def amplitude(v, p=math.inf):
    """p-norm of ``v`` (``p >= 1`` or infinity)."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        raise PreconditionError("amplitude of an empty vector")
    p = float(p)
    if not p >= 1:
        raise PreconditionError(f"norm order must be >= 1, got {p}")
    a = np.abs(v)
    if math.isinf(p):
        return float(a.max())
    if p == 1:
        return float(a.sum())
    if p == 2:
        return float(math.sqrt(np.dot(a, a)))
    return float(np.sum(a ** p) ** (1.0 / p))


def _fix_sign(v):
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def _orthogonalize(w, V):
    h = V.T @ w
    w -= V @ h
    h2 = V.T @ w
    w -= V @ h2
    return h + h2


def _random_orthogonal(rng, V, n, project):
    for _ in range(8):
        w = project(rng.standard_normal(n))
        _orthogonalize(w, V)
        nrm = np.linalg.norm(w)
        if nrm > 1e-8:
            return w / nrm
    raise RuntimeError("could not extend the Krylov basis")


def _lanczos(matvec, n, k, tol, max_restarts, ncv, rng, project=None, dim=None):
    """Thick-restart Lanczos for the k smallest eigenpairs of a symmetric operator.

    ``project`` keeps the basis inside an invariant subspace of dimension
    ``dim`` (the complement of already locked vectors).
    Returns ``(theta, X, resid, restarts, matvecs, converged)``.
    """
    project = project or (lambda x: x)
    dim = n if dim is None else dim
    m = min(dim, max(ncv, k + 2)) if dim > k + 2 else dim
    V = np.zeros((n, m + 1))
    T = np.zeros((m, m))
    v = project(rng.standard_normal(n))
    V[:, 0] = v / np.linalg.norm(v)
    nkeep = 0
    matvecs = 0
    anorm = 0.0
    theta = S = None
    for restart in range(1, max_restarts + 1):
        beta = 0.0
        m_eff = m
        for j in range(nkeep, m):
            w = project(matvec(V[:, j]))
            matvecs += 1
            h = _orthogonalize(w, V[:, : j + 1])
            # re-project: dividing by a small beta would amplify any leak
            w = project(w)
            T[: j + 1, j] = h
            T[j, : j + 1] = h
            anorm = max(anorm, float(np.abs(h).sum()))
            beta = float(np.linalg.norm(w))
            if beta <= 1e-12 * max(anorm, 1.0):
                beta = 0.0
                if j + 1 >= dim:
                    m_eff = j + 1
                    break
                V[:, j + 1] = _random_orthogonal(rng, V[:, : j + 1], n, project)
            else:
                V[:, j + 1] = w / beta
        theta, S = np.linalg.eigh(T[:m_eff, :m_eff])
        resid = np.abs(beta * S[m_eff - 1, :])
        exhausted = m_eff == dim
        if exhausted or np.all(resid[:k] <= tol):
            X = V[:, :m_eff] @ S[:, :k]
            return theta[:k], X, resid[:k], restart, matvecs, True
        nconv = int(np.count_nonzero(resid[:k] <= tol))
        nkeep = min(m - 2, max(k + (m - k) // 2, nconv + 1))
        V[:, :nkeep] = V[:, :m] @ S[:, :nkeep]
        V[:, nkeep] = V[:, m]
        T[:] = 0.0
        T[np.arange(nkeep), np.arange(nkeep)] = theta[:nkeep]
    X = V[:, :m] @ S[:, :k]
    return theta[:k], X, resid[:k], max_restarts, matvecs, False


def _deflated_lanczos(matvec, n, k, tol, max_restarts, ncv, rng, stats):
    """Lanczos with locking: repeat the iteration on the complement of the
    pairs found so far until it yields nothing below the current k-th value.

    A single Krylov sequence sees only one direction of an exactly
    degenerate eigenspace; the complement passes recover the missing copies.
    """
    theta, X, _, restarts, matvecs, ok = _lanczos(matvec, n, k, tol, max_restarts, ncv, rng)
    stats.update(restarts=restarts, matvecs=matvecs, passes=1)
    while ok and k < n:
        Y = X / np.linalg.norm(X, axis=0)

        def project(x, Y=Y):
            x = x - Y @ (Y.T @ x)
            return x - Y @ (Y.T @ x)

        kk = min(k, n - Y.shape[1])
        th2, X2, _, r2, mv2, ok = _lanczos(
            matvec, n, kk, tol, max_restarts, ncv, rng, project=project, dim=n - Y.shape[1]
        )
        stats["restarts"] += r2
        stats["matvecs"] += mv2
        stats["passes"] += 1
        if not th2.size or th2[0] >= theta[-1] - tol:
            break
        vals = np.r_[theta, th2]
        vecs = np.c_[X, X2]
        order = np.argsort(vals, kind="stable")[:k]
        theta, X = vals[order], vecs[:, order]
    return theta, X, ok


def _lobpcg(matvec, n, k, tol, maxiter, rng):
    from scipy.sparse.linalg import LinearOperator, lobpcg

    op = LinearOperator((n, n), matvec=matvec, dtype=np.float64)
    X0 = rng.standard_normal((n, k))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        vals, vecs = lobpcg(op, X0, largest=False, tol=tol, maxiter=maxiter)
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def smallest_eigenpairs(L, k, tol=1e-8, max_iter=None, seed=0, ncv=None, p=math.inf,
                        domain=None, method="lanczos", threads=None, backend=None):
    """The k smallest eigenpairs of the symmetric PSD matrix ``L``.

    Parameters
    ----------
    L : SparseMatrix
    k : int
        Number of eigenpairs, ``1 <= k <= N``.
    tol : float
        Bound on every returned residual ``||L v - lambda v||``.
    max_iter : int, optional
        Restart cap (default ``40 * k``).
    seed : int
        Seed of the start-vector generator; recorded in the result.
    ncv : int, optional
        Krylov subspace size (default ``max(2k + 20, 48)``).

    Raises
    ------
    ConvergenceError
        When the cap is reached; carries the converged pairs.
    """
    n = L.nrows
    k = int(k)
    if L.nrows != L.ncols:
        raise PreconditionError("Laplacian must be square")
    if not 1 <= k <= n:
        raise PreconditionError(f"k must lie in [1, {n}], got {k}")
    if method not in METHODS:
        raise PreconditionError(f"method must be one of {METHODS}")
    max_iter = 40 * k if max_iter is None else int(max_iter)
    ncv = max(2 * k + 20, 48) if ncv is None else int(ncv)
    rng = np.random.default_rng(seed)

    def matvec(x):
        return _matrix.spmv(L, np.ascontiguousarray(x).ravel(), threads=threads, backend=backend)

    stats = {"method": method}
    if method == "lanczos":
        theta, X, ok = _deflated_lanczos(matvec, n, k, tol, max_iter, ncv, rng, stats)
    else:
        theta, X = _lobpcg(matvec, n, k, tol, max_iter, rng)
        ok = True

    pairs = []
    resid = []
    for i in range(k):
        x = X[:, i] / np.linalg.norm(X[:, i])
        x = _fix_sign(x)
        lam = float(theta[i])
        r = float(np.linalg.norm(matvec(x) - lam * x))
        resid.append(r)
        pairs.append(EigenPair(lam, x, r))
    good = [pr for pr in pairs if pr.residual <= tol]
    if not ok or len(good) < k:
        raise ConvergenceError(
            f"{len(good)} of {k} eigenpairs reached residual {tol:g} within {max_iter} iterations",
            pairs=good, residuals=resid,
        )

    notes = []
    nzero = sum(1 for pr in pairs if pr.value < KERNEL_EPS)
    if nzero > 1:
        msg = (f"disconnected domain: {nzero} eigenvalues below {KERNEL_EPS:g}; "
               "the Laplacian kernel has dimension larger than one")
        notes.append(msg)
        warnings.warn(msg, DisconnectedDomainWarning, stacklevel=2)
    log.info("eigenpairs: %s", ", ".join(f"{pr.value:.3e}" for pr in pairs))
    return EmbeddingSet(
        pairs=tuple(pairs),
        amplitudes=tuple(amplitude(pr.vector, p) for pr in pairs),
        p=float(p),
        domain=domain,
        seed=seed,
        warnings=tuple(notes),
        stats=stats,
    )


def select_eigenvectors(emb, m, p=None):
    """Pick the ``m`` non-constant eigenvectors with the largest amplitudes.

    The first (lowest-eigenvalue, constant) vector is never selected.  Ties in
    amplitude go to the lower eigenvalue.
    """
    m = int(m)
    if m < 1:
        raise PreconditionError(f"m must be at least 1, got {m}")
    p = emb.p if p is None else p
    candidates = list(range(1, len(emb.pairs)))
    if m > len(candidates):
        warnings.warn(
            f"requested {m} embeddings but only {len(candidates)} non-constant ones exist",
            SelectionClampWarning, stacklevel=2,
        )
        m = len(candidates)
    amps = {i: amplitude(emb.pairs[i].vector, p) for i in candidates}
    ranked = sorted(candidates, key=lambda i: (-amps[i], emb.pairs[i].value, i))
    return [
        SelectedEmbedding(i, emb.pairs[i].value, emb.pairs[i].vector, amps[i])
        for i in ranked[:m]
    ]


def save_embeddings(emb, path):
    n = emb.pairs[0].vector.size if emb.pairs else 0
    dims = list(emb.domain.dims) if emb.domain is not None else [n]
    header = " ".join([EMBEDDING_MAGIC, str(n), str(len(emb.pairs))] + [str(d) for d in dims])
    with open(path, "wb") as fh:
        fh.write((header + "\n").encode("ascii"))
        for pr, a in zip(emb.pairs, emb.amplitudes):
            fh.write(np.array([pr.value, a], dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(pr.vector, dtype="<f8").tobytes())


def load_embeddings(path):
    """Read an EMB1 file; returns ``(dims, values, amplitudes, vectors)``."""
    path = Path(path)
    raw = path.read_bytes()
    nl = raw.find(b"\n", 0, 512)
    if nl < 0:
        raise FormatError("missing header line", offset=0, path=path)
    tokens = raw[:nl].decode("ascii", errors="replace").split()
    if len(tokens) < 4 or tokens[0] != EMBEDDING_MAGIC:
        raise FormatError(f"expected '{EMBEDDING_MAGIC} N k dims...'", offset=0, path=path)
    try:
        n, k = int(tokens[1]), int(tokens[2])
        dims = tuple(int(t) for t in tokens[3:])
    except ValueError:
        raise FormatError("non-integer header field", offset=0, path=path) from None
    start = nl + 1
    need = k * (2 + n) * 8
    if len(raw) - start != need:
        raise FormatError(
            f"size mismatch: expected {need} data bytes, found {len(raw) - start}",
            offset=start + min(need, len(raw) - start), path=path,
        )
    block = np.frombuffer(raw, "<f8", k * (n + 2), start).reshape(k, n + 2)
    return dims, block[:, 0].copy(), block[:, 1].copy(), block[:, 2:].copy()
