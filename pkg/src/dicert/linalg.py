"""Dense complex linear algebra for small Hermitian problems.

Eigen-decompositions use cyclic Jacobi rotations (compiled kernel when
available).  A complex Hermitian matrix H = A + iB is diagonalised through its
real symmetric embedding [[A, -B], [B, A]], whose spectrum is that of H with
every eigenvalue doubled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _backend


@dataclass(frozen=True)
class Tolerances:
    """Single record of numerical tolerances used across the package."""

    hermitian: float = 1e-12
    reconstruction: float = 1e-10
    psd_clamp: float = 1e-10
    psd_reject: float = 1e-8
    trace: float = 1e-12
    unitarity: float = 1e-10


TOL = Tolerances()


@dataclass(frozen=True)
class EigenDecomposition:
    """Ascending eigenvalues with orthonormal column eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def as_matrix(m: object) -> np.ndarray:
    a = np.asarray(m)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def hermiticity_error(m: np.ndarray) -> float:
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        return float("inf")
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def check_hermitian(m: np.ndarray, tol: float = TOL.hermitian) -> np.ndarray:
    """Return ``m`` as an array, rejecting non-square or non-Hermitian input."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got shape {m.shape}")
    err = hermiticity_error(m)
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if err > tol * scale:
        raise ValueError(f"matrix is not Hermitian: max |M - M^dagger| = {err:.3e}")
    return m


def _is_real(m: np.ndarray) -> bool:
    return not np.iscomplexobj(m) or float(np.max(np.abs(m.imag), initial=0.0)) == 0.0


def real_embedding(m: np.ndarray) -> np.ndarray:
    """Real symmetric embedding [[Re, -Im], [Im, Re]] of a Hermitian matrix."""
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]])


def eig_hermitian(m: np.ndarray) -> EigenDecomposition:
    """Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations."""
    m = check_hermitian(m)
    n = m.shape[0]
    k = _backend.kernels
    if n == 0:
        return EigenDecomposition(np.zeros(0), np.zeros((0, 0), dtype=complex))
    sym = 0.5 * (m + m.conj().T)
    if _is_real(sym):
        w, v, _ = k.eigh_sym(np.ascontiguousarray(sym.real))
        return EigenDecomposition(w, v.astype(complex))
    w2, v2, _ = k.eigh_sym(real_embedding(sym))
    # Each eigenvalue of H appears twice; [u; v] -> u + i v is an eigenvector of
    # H.  Keep n of the 2n candidates by Gram-Schmidt in ascending order.
    cand = v2[:n, :] + 1j * v2[n:, :]
    vecs: list[np.ndarray] = []
    vals: list[float] = []
    for j in range(2 * n):
        z = cand[:, j].copy()
        for u in vecs:
            z -= (u.conj() @ z) * u
        norm = np.linalg.norm(z)
        if norm > 0.5:
            vecs.append(z / norm)
            vals.append(w2[j])
            if len(vecs) == n:
                break
    V = np.array(vecs).T
    w = np.real(np.einsum("ij,ik,kj->j", V.conj(), sym, V))
    order = np.argsort(w, kind="stable")
    return EigenDecomposition(w[order], V[:, order])


def eigvalsh(m: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a Hermitian matrix (Jacobi)."""
    m = as_matrix(m)
    if _is_real(m):
        return _backend.kernels.eigvalsh_sym(np.ascontiguousarray(m.real))
    return _backend.kernels.eigvalsh_sym(real_embedding(m))[::2].copy()


def lambda_min(m: np.ndarray) -> float:
    return float(eigvalsh(m)[0])


def lambda_max(m: np.ndarray) -> float:
    return float(eigvalsh(m)[-1])


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with (a x b)[i*rb + k, j*cb + l] = a[i, j] b[k, l]."""
    return np.kron(as_matrix(a), as_matrix(b))


def kron_all(mats: Iterable[np.ndarray]) -> np.ndarray:
    out = np.eye(1)
    for m in mats:
        out = np.kron(out, m)
    return out


def partial_trace(m: np.ndarray, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every factor not in ``keep``; kept factors stay in order."""
    m = as_matrix(m)
    dims = [int(d) for d in dims]
    total = int(np.prod(dims)) if dims else 1
    if m.shape != (total, total):
        raise ValueError(f"factor dimensions {dims} do not match matrix shape {m.shape}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise ValueError(f"keep indices {keep} out of range for {len(dims)} factors")
    n = len(dims)
    t = m.reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    row = list(range(n))
    col = [n + i for i in range(n)]
    for i in traced:
        col[i] = row[i]
    out_idx = keep + [n + k for k in keep]
    kept_dim = int(np.prod([dims[k] for k in keep])) if keep else 1
    return np.einsum(t, row + col, out_idx).reshape(kept_dim, kept_dim)


def matrix_sqrt_psd(m: np.ndarray) -> np.ndarray:
    """Principal square root of a positive semidefinite Hermitian matrix."""
    dec = eig_hermitian(m)
    w = dec.eigenvalues
    if w.size and w[0] < -TOL.psd_reject:
        raise ValueError(f"matrix is not positive semidefinite: min eigenvalue {w[0]:.3e}")
    w = np.where(w < TOL.psd_clamp, np.maximum(w, 0.0), w)
    # eigenvalues below the eigensolver's backward-error floor are zero
    floor = 16 * w.size * np.finfo(float).eps * float(np.max(np.abs(w), initial=0.0))
    w = np.where(w <= floor, 0.0, w)
    v = dec.eigenvectors
    r = (v * np.sqrt(w)) @ v.conj().T
    return 0.5 * (r + r.conj().T)


def trace_norm(a: np.ndarray) -> float:
    """Sum of singular values, from the Hermitian dilation [[0, A], [A^dagger, 0]].

    The dilation has eigenvalues +-s_i, so singular values keep absolute
    accuracy ~eps ||A|| (no squaring as in eig(A^dagger A)).
    """
    a = as_matrix(a)
    r, c = a.shape
    dil = np.zeros((r + c, r + c), dtype=complex)
    dil[:r, r:] = a
    dil[r:, :r] = a.conj().T
    return 0.5 * float(np.sum(np.abs(eigvalsh(dil))))


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (a + a.conj().T)
