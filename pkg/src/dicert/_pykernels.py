"""Pure-Python (NumPy) implementations of the hot kernels.

Same algorithms and signatures as the compiled ``_ckernels`` module: cyclic
Jacobi rotations (vectorised over a stack of matrices) and a golden-section
search on the Lagrangian dual.  Used when the extension is not built.
"""

from __future__ import annotations

import math

import numpy as np

MAX_SWEEPS = 60


def _jacobi_stack(a: np.ndarray, vectors: bool) -> tuple[np.ndarray, np.ndarray | None, int]:
    """Cyclic Jacobi on a ``(m, n, n)`` stack; returns (diag, vectors, sweeps)."""
    a = np.array(a, dtype=np.float64, copy=True)
    m, n, _ = a.shape
    v = np.broadcast_to(np.eye(n), (m, n, n)).copy() if vectors else None
    fro2 = np.einsum("kij,kij->k", a, a)
    iu = np.triu_indices(n, 1)
    sweeps = MAX_SWEEPS + 1
    for sweep in range(MAX_SWEEPS):
        off = np.sum(a[:, iu[0], iu[1]] ** 2, axis=1)
        if np.all((2.0 * off <= 1e-32 * fro2) | (off == 0.0)):
            sweeps = sweep
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                active = apq != 0.0
                if not np.any(active):
                    continue
                safe = np.where(active, apq, 1.0)
                theta = (a[:, q, q] - a[:, p, p]) / (2.0 * safe)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
                t = np.where(theta == 0.0, 1.0, t)
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                cc = c[:, None]
                ss = s[:, None]
                colp = a[:, :, p].copy()
                colq = a[:, :, q].copy()
                a[:, :, p] = cc * colp - ss * colq
                a[:, :, q] = ss * colp + cc * colq
                rowp = a[:, p, :].copy()
                rowq = a[:, q, :].copy()
                a[:, p, :] = cc * rowp - ss * rowq
                a[:, q, :] = ss * rowp + cc * rowq
                a[active, p, q] = 0.0
                a[active, q, p] = 0.0
                if v is not None:
                    vp = v[:, :, p].copy()
                    vq = v[:, :, q].copy()
                    v[:, :, p] = cc * vp - ss * vq
                    v[:, :, q] = ss * vp + cc * vq
    return np.diagonal(a, axis1=1, axis2=2).copy(), v, sweeps


def eigh_sym(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi."""
    w, v, sweeps = _jacobi_stack(np.asarray(a, dtype=np.float64)[None], True)
    order = np.argsort(w[0], kind="stable")
    return w[0][order], v[0][:, order], sweeps


def eigvalsh_sym(a: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a real symmetric matrix (Jacobi, no vectors)."""
    w, _, _ = _jacobi_stack(np.asarray(a, dtype=np.float64)[None], False)
    return np.sort(w[0])


def lambda_min_batch(mats: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Smallest eigenvalue of each matrix in a ``(m, n, n)`` symmetric stack."""
    mats = np.asarray(mats, dtype=np.float64)
    out = np.empty(mats.shape[0])
    for start in range(0, mats.shape[0], chunk):
        w, _, _ = _jacobi_stack(mats[start:start + chunk], False)
        out[start:start + chunk] = w.min(axis=1)
    return out


def pencil_lambda_min(Ms: np.ndarray, Bs: np.ndarray, mus: np.ndarray) -> np.ndarray:
    """``out[i, k] = lambda_min(Ms[i] - mus[k] * Bs[i])`` for symmetric stacks."""
    Ms = np.asarray(Ms, dtype=np.float64)
    Bs = np.asarray(Bs, dtype=np.float64)
    mus = np.asarray(mus, dtype=np.float64)
    stack = Ms[:, None] - mus[None, :, None, None] * Bs[:, None]
    n = Ms.shape[1]
    return lambda_min_batch(stack.reshape(-1, n, n)).reshape(Ms.shape[0], mus.size)


def golden_dual(M: np.ndarray, B: np.ndarray, beta: float, lo: float, hi: float,
                tol: float, maxit: int) -> tuple[float, float, float, float, int]:
    """Golden-section maximisation of ``h(mu) = lambda_min(M - mu B) + mu beta``.

    Returns ``(a, b, mu_best, h_best, evaluations)`` with ``[a, b]`` the final
    bracket.
    """
    M = np.asarray(M, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)

    def h(mu: float) -> float:
        return float(eigvalsh_sym(M - mu * B)[0] + mu * beta)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = h(c), h(d)
    evals, it = 2, 0
    while (b - a) > tol * (1.0 + abs(a) + abs(b)) and it < maxit:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = h(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = h(d)
        evals += 1
        it += 1
    if fc >= fd:
        return a, b, c, fc, evals
    return a, b, d, fd, evals
