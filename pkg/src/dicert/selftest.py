"""Self-testing bound curves from Jordan-block qubit optimisation.

Each party's pair of binary observables is, inside a Jordan block, the pair
X(a) = cos a sx + sin a sz, Z(a) = cos a sx - sin a sz with a in [0, pi/2].
A dephasing extraction map Lambda(a) takes the block to a qubit.  For fixed
angles, the smallest overlap of the extracted state with the target at Bell
value beta' is a semidefinite program with one constraint; it is solved through
its Lagrangian dual, max_mu lambda_min(M - mu B) + mu beta', where M is the
target pushed through the (self-adjoint) extraction maps.  Minimising over
the angles and taking the convex lower envelope in beta' gives the bound
curve; its last segment fixes the threshold Bell value at which the certified
overlap reaches 1/2.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from . import _backend
from .bell import BellFunctional, MeasurementAssignment, local_bound
from .linalg import eig_hermitian, lambda_max, real_embedding
from .quantum import I2, SX, SY, SZ, DensityMatrix, KrausChannel, PureState

HALF_PI = 0.5 * math.pi
QUARTER_PI = 0.25 * math.pi
SQRT_HALF = math.sqrt(0.5)
G_PREFACTOR = 1.0 + math.sqrt(2.0)
MU_START = 8.0
MU_CAP = 2.0 ** 16
GOLDEN_TOL = 1e-13
GAP_TOL = 1e-7
DEGENERACY_TOL = 1e-9
FEAS_TOL = 1e-9
_PAULIS = (I2, SX, SY, SZ)


class InfeasibleError(ValueError):
    """The Bell constraint cannot be met (beta' above the operator maximum)."""


class SolverError(RuntimeError):
    """The dual search did not certify a small duality gap."""

    def __init__(self, message: str, mu_trace: Sequence[tuple[float, float]] = ()):
        super().__init__(message)
        self.mu_trace = list(mu_trace)


# ---------------------------------------------------------------------------
# Jordan-block observables and extraction maps


def _check_angle(a: float) -> float:
    a = float(a)
    if not -1e-12 <= a <= HALF_PI + 1e-12:
        raise ValueError(f"Jordan angle {a} outside [0, pi/2]")
    return min(max(a, 0.0), HALF_PI)


def jordan_observables(a: float) -> tuple[np.ndarray, np.ndarray]:
    """(X(a), Z(a)) = (cos a sx + sin a sz, cos a sx - sin a sz)."""
    a = _check_angle(a)
    c, s = math.cos(a), math.sin(a)
    return c * SX + s * SZ, c * SX - s * SZ


def extraction_g(a: float) -> float:
    """g(a) = (1 + sqrt2)(cos a + sin a - 1), in [0, 1] on [0, pi/2]."""
    return G_PREFACTOR * (math.cos(a) + math.sin(a) - 1.0)


def dephasing_basis(a: float) -> np.ndarray:
    return SX if a <= math.pi / 4 else SZ


def dephasing_map(a: float) -> KrausChannel:
    """Lambda(a) rho = (1 + g)/2 rho + (1 - g)/2 Gamma rho Gamma."""
    a = _check_angle(a)
    g = min(1.0, max(0.0, extraction_g(a)))
    return KrausChannel((math.sqrt((1 + g) / 2) * I2, math.sqrt((1 - g) / 2) * dephasing_basis(a)), 2, 2)


def _pauli_factors(angles: np.ndarray) -> np.ndarray:
    """Pauli-transfer diagonal of Lambda(a): shape (..., 4) over (I, x, y, z)."""
    a = np.asarray(angles, dtype=float)
    g = np.clip(G_PREFACTOR * (np.cos(a) + np.sin(a) - 1.0), 0.0, 1.0)
    one = np.ones_like(a)
    low = a <= math.pi / 4
    dx = np.where(low, one, g)
    dz = np.where(low, g, one)
    return np.stack([one, dx, g, dz], axis=-1)


def _jordan_label_map(angles: np.ndarray) -> np.ndarray:
    """W[..., label, pauli] mapping labels (1, X, Z) to Paulis (I, x, z)."""
    a = np.asarray(angles, dtype=float)
    c, s = np.cos(a), np.sin(a)
    w = np.zeros(a.shape + (3, 3))
    w[..., 0, 0] = 1.0
    w[..., 1, 1], w[..., 1, 2] = c, s
    w[..., 2, 1], w[..., 2, 2] = c, -s
    return w


@dataclass(frozen=True)
class _PauliBasis:
    n: int

    @cached_property
    def full(self) -> np.ndarray:
        """All 4^n Pauli strings, shape (4^n, 2^n, 2^n)."""
        mats = [np.eye(1, dtype=complex)]
        for _ in range(self.n):
            mats = [np.kron(m, p) for m in mats for p in _PAULIS]
        return np.array(mats)

    @cached_property
    def xz(self) -> np.ndarray:
        """Real Pauli strings over (I, x, z), shape (3^n, 2^n, 2^n)."""
        base = (np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([[1.0, 0.0], [0.0, -1.0]]))
        mats = [np.eye(1)]
        for _ in range(self.n):
            mats = [np.kron(m, p) for m in mats for p in base]
        return np.array(mats)


_BASES: dict[int, _PauliBasis] = {}


def _basis(n: int) -> _PauliBasis:
    if n not in _BASES:
        _BASES[n] = _PauliBasis(n)
    return _BASES[n]


def _target_matrix(target: DensityMatrix | PureState | np.ndarray) -> np.ndarray:
    if isinstance(target, DensityMatrix):
        return target.matrix
    if isinstance(target, PureState):
        return np.outer(target.amplitudes, target.amplitudes.conj())
    t = np.asarray(target, dtype=complex)
    return np.outer(t, t.conj()) if t.ndim == 1 else t


def _n_qubits(dim: int) -> int:
    n = int(round(math.log2(dim)))
    if 2 ** n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def effective_target(target: DensityMatrix | np.ndarray, angles: Sequence[float]) -> np.ndarray:
    """M(a) = (Lambda(a_1) x ... x Lambda(a_N))[target].

    Since every Lambda(a) is self-adjoint, Tr(Lambda[tau] target) = Tr(tau M).
    """
    t = _target_matrix(target)
    n = _n_qubits(t.shape[0])
    if len(angles) != n:
        raise ValueError(f"target has {n} qubits but {len(angles)} angles were given")
    for a in angles:
        _check_angle(a)
    return _TargetPauli(t).matrices(np.asarray(angles, dtype=float)[None])[0]


class _TargetPauli:
    """Target in the Pauli basis, for fast batched extraction."""

    def __init__(self, t: np.ndarray):
        self.n = _n_qubits(t.shape[0])
        basis = _basis(self.n).full
        self.coef = np.real(np.einsum("kij,ji->k", basis, t)) / 2 ** self.n
        self.real = float(np.max(np.abs(t.imag))) < 1e-14
        keep = np.abs(self.coef) > 1e-15
        self.idx = np.nonzero(keep)[0]
        self.strings = basis[self.idx].reshape(len(self.idx), -1)
        if self.real:
            self.strings = self.strings.real
        digits = np.array(list(itertools.product(range(4), repeat=self.n)))
        self.digits = digits[self.idx]

    def matrices(self, angles: np.ndarray) -> np.ndarray:
        d = _pauli_factors(angles)  # (m, n, 4)
        m = angles.shape[0]
        w = np.ones((m, len(self.idx)))
        for k in range(self.n):
            w *= d[:, k, self.digits[:, k]]
        out = (w * self.coef[self.idx]) @ self.strings
        dim = 2 ** self.n
        return out.reshape(m, dim, dim)


class _FunctionalXZ:
    """Bell functional as a coefficient tensor over labels (1, X, Z)."""

    def __init__(self, f: BellFunctional):
        self.n = f.parties
        c = np.zeros((3,) * self.n)
        for t in f.terms:
            c[tuple("1XZ".index(ch) for ch in t.settings)] += t.coefficient
        self.coef = c
        self.strings = _basis(self.n).xz.reshape(3 ** self.n, -1)

    def matrices(self, angles: np.ndarray) -> np.ndarray:
        w = _jordan_label_map(angles)  # (m, n, 3, 3)
        m = angles.shape[0]
        g = np.broadcast_to(self.coef, (m,) + self.coef.shape)
        for k in range(self.n):
            g = np.moveaxis(np.einsum("m...l,mlp->m...p", np.moveaxis(g, 1 + k, -1), w[:, k]), -1, 1 + k)
        out = g.reshape(m, -1) @ self.strings
        dim = 2 ** self.n
        return out.reshape(m, dim, dim)


def bell_operator_at(f: BellFunctional, angles: Sequence[float]) -> np.ndarray:
    """Bell operator with party k measuring (X(a_k), Z(a_k))."""
    if len(angles) != f.parties:
        raise ValueError("one angle per party is required")
    for a in angles:
        _check_angle(a)
    return _FunctionalXZ(f).matrices(np.asarray(angles, dtype=float)[None])[0]


# ---------------------------------------------------------------------------
# Frame change: ideal laboratory observables -> Jordan observables at pi/4


def frame_unitary(x_lab: np.ndarray, z_lab: np.ndarray) -> np.ndarray:
    """Unitary V with V X_lab V^dag = X(pi/4) and V Z_lab V^dag = Z(pi/4).

    Requires anticommuting, unit-Bloch-vector observables.  Solved as the null
    space of the linear conditions V X_lab = X(pi/4) V, V Z_lab = Z(pi/4) V.
    """
    xt, zt = jordan_observables(math.pi / 4)
    eye = np.eye(2)
    # vec(V A) = (A^T x 1) vec V ; vec(B V) = (1 x B) vec V  (column-major vec)
    sysm = np.vstack([np.kron(np.asarray(x_lab).T, eye) - np.kron(eye, xt),
                      np.kron(np.asarray(z_lab).T, eye) - np.kron(eye, zt)])
    _, sv, vh = np.linalg.svd(sysm)
    if sv[-1] > 1e-8 or (len(sv) > 1 and sv[-2] < 1e-8):
        raise ValueError("laboratory observables are not an anticommuting pair of qubit observables")
    v = vh[-1].conj().reshape(2, 2, order="F")
    v = v * math.sqrt(2.0) / np.linalg.norm(v)
    return v


def jordan_frame_target(state: PureState | DensityMatrix | np.ndarray, assignment: MeasurementAssignment) -> np.ndarray:
    """Target expressed in the frame where every party's ideal observables are
    (X(pi/4), Z(pi/4))."""
    t = _target_matrix(state)
    v = np.eye(1)
    for k in range(assignment.parties):
        v = np.kron(v, frame_unitary(assignment.get(k, "X"), assignment.get(k, "Z")))
    out = v @ t @ v.conj().T
    out = 0.5 * (out + out.conj().T)
    if float(np.max(np.abs(out.imag))) < 1e-13:
        out = out.real.astype(complex)
    return out


# ---------------------------------------------------------------------------
# Inner problem


@dataclass
class InnerResult:
    value: float
    witness: np.ndarray
    dual_gap: float
    mu: float
    primal: float
    constraint: float
    evaluations: int
    mu_trace: list[tuple[float, float]] = field(default_factory=list)


def _real_sym(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if np.iscomplexobj(m):
        if float(np.max(np.abs(m.imag), initial=0.0)) > 0.0:
            return real_embedding(m)
        m = m.real
    return np.ascontiguousarray(m, dtype=float)


def _bottom_vector(m: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(m) and float(np.max(np.abs(m.imag), initial=0.0)) > 0.0:
        return eig_hermitian(m).eigenvectors[:, 0]
    w, v, _ = _backend.kernels.eigh_sym(np.ascontiguousarray(np.real(m)))
    return v[:, 0].astype(complex)


def _expect(op: np.ndarray, v: np.ndarray) -> float:
    return float(np.real(np.vdot(v, op @ v)))


def _bracket_derivative_root(M: np.ndarray, B: np.ndarray, beta: float, mu0: float,
                             width: float) -> tuple[float, float]:
    """Bracket [lo, hi] of the dual maximiser with <B> < beta' at lo and >= beta' at hi."""
    def excess(m: float) -> float:
        return _expect(B, _bottom_vector(M - m * B)) - beta

    step, lo = width, mu0
    while lo > 0.0 and excess(lo) >= 0.0:
        step *= 2.0
        lo = max(0.0, mu0 - step)
    step, hi = width, mu0
    while excess(hi) < 0.0 and hi < MU_CAP:
        step *= 2.0
        hi = mu0 + step
    for _ in range(200):
        if hi - lo <= 4e-16 * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if excess(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    return lo, hi


def _extreme_mixture(A: np.ndarray, B: np.ndarray, beta: float, allow_slack: bool) -> np.ndarray | None:
    """Witness on the bottom eigenspace of A = M - mu B meeting Tr(tau B) = beta.

    At a kink of the dual the bottom eigenvalue is degenerate and eigenvectors
    returned for it are arbitrary; diagonalising B inside the eigenspace gives
    the two states of extreme Bell value, whose mixture hits beta exactly.
    Returns None when beta lies outside the range reachable in the eigenspace.
    """
    dec = eig_hermitian(A)
    w = dec.eigenvalues
    scale = max(1.0, float(np.max(np.abs(w))))
    S = dec.eigenvectors[:, w <= w[0] + DEGENERACY_TOL * scale]
    sub = S.conj().T @ B @ S
    inner = eig_hermitian(0.5 * (sub + sub.conj().T))
    v_lo = S @ inner.eigenvectors[:, 0]
    v_hi = S @ inner.eigenvectors[:, -1]
    b_lo, b_hi = float(inner.eigenvalues[0]), float(inner.eigenvalues[-1])
    if b_hi < beta - 1e-12:
        return None
    if b_lo >= beta or b_hi <= beta or (allow_slack and b_hi >= beta):
        v = v_lo if b_lo >= beta else v_hi
        return np.outer(v, v.conj())
    p = (beta - b_lo) / (b_hi - b_lo)
    return p * np.outer(v_hi, v_hi.conj()) + (1 - p) * np.outer(v_lo, v_lo.conj())


def min_overlap_given_bell(M: np.ndarray, B: np.ndarray, beta_prime: float,
                           *, check_gap: bool = True, witness: bool = True) -> InnerResult:
    """min Tr(tau M) over states tau with Tr(tau B) >= beta_prime.

    Dual: h(mu) = lambda_min(M - mu B) + mu beta', concave, maximised by golden
    section on [0, mu_max] with mu_max doubled (from 8 up to 2^16) while the
    maximiser sits at the upper edge.  The returned ``value`` is the dual value
    (a certified lower bound); the witness mixes the bottom eigenvectors at the
    two ends of the final bracket so that the constraint holds with equality.
    """
    M = np.asarray(M)
    B = np.asarray(B)
    if M.shape != B.shape or M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"M and B must be square matrices of equal size, got {M.shape}, {B.shape}")
    beta = float(beta_prime)
    dec_b = eig_hermitian(B)
    bmax = float(dec_b.eigenvalues[-1])
    if beta > bmax + 1e-9:
        raise InfeasibleError(f"beta' = {beta} exceeds the largest eigenvalue {bmax} of the Bell operator")
    if beta >= bmax - 1e-12:
        # Feasible set: states on the top eigenspace of B.
        top = dec_b.eigenvectors[:, dec_b.eigenvalues >= bmax - 1e-9]
        sub = top.conj().T @ M @ top
        dec = eig_hermitian(0.5 * (sub + sub.conj().T))
        v = top @ dec.eigenvectors[:, 0]
        val = float(dec.eigenvalues[0])
        return InnerResult(val, np.outer(v, v.conj()), 0.0, math.inf, val, _expect(B, v), 0)

    k = _backend.kernels
    Mr, Br = _real_sym(M), _real_sym(B)
    if Mr.shape != Br.shape:  # one complex, one real
        Mr = real_embedding(np.asarray(M, dtype=complex))
        Br = real_embedding(np.asarray(B, dtype=complex))
    lo, hi = 0.0, MU_START
    trace: list[tuple[float, float]] = []
    evals = 0
    while True:
        a, b, mu, h, ne = k.golden_dual(Mr, Br, beta, lo, hi, GOLDEN_TOL, 400)
        evals += ne
        trace.append((mu, h))
        if hi - b > 1e-9 * hi or hi >= MU_CAP:
            break
        lo, hi = 0.5 * hi, 2.0 * hi
    if hi >= MU_CAP and hi - b <= 1e-9 * hi:
        raise SolverError(f"dual maximiser reached mu cap {MU_CAP}; beta' too close to the maximum", trace)
    h0 = float(k.eigvalsh_sym(Mr)[0])
    evals += 1
    if h0 >= h:
        a, b, mu, h = 0.0, max(b, 1e-12), 0.0, h0
    if not witness:
        return InnerResult(float(h), np.zeros((0, 0)), math.nan, float(mu), math.nan, math.nan, evals, trace)
    Mc = np.asarray(M, dtype=complex) if np.iscomplexobj(M) else M
    Bc = np.asarray(B, dtype=complex) if np.iscomplexobj(B) else B
    tau = _extreme_mixture(Mc - mu * Bc, Bc, beta, allow_slack=True) if mu == 0.0 else None
    if tau is None:
        # The dual is flat near its maximum, so mu from the golden bracket is
        # only accurate to ~sqrt(eps); bisect on h'(mu) = beta' - <v|B|v> instead.
        lo, hi = _bracket_derivative_root(Mc, Bc, beta, mu, max(b - a, 1e-9 * (1.0 + mu)))
        for m_ in (lo, hi):
            h = max(h, dual_value(M, B, beta, m_))
        tau = _extreme_mixture(Mc - hi * Bc, Bc, beta, allow_slack=False)
        if tau is None:
            raise SolverError("could not recover a feasible primal witness", trace)
    primal = float(np.real(np.sum(tau * np.asarray(M).T)))
    cons = float(np.real(np.sum(tau * np.asarray(B).T)))
    gap = abs(primal - h)
    if check_gap and gap > GAP_TOL:
        raise SolverError(f"duality gap {gap:.3e} above tolerance {GAP_TOL}", trace)
    return InnerResult(float(h), tau, gap, float(mu), primal, cons, evals, trace)


def dual_value(M: np.ndarray, B: np.ndarray, beta_prime: float, mu: float) -> float:
    """h(mu) = lambda_min(M - mu B) + mu beta' (a lower bound for every mu >= 0)."""
    k = _backend.kernels
    return float(k.eigvalsh_sym(_real_sym(np.asarray(M) - mu * np.asarray(B)))[0] + mu * beta_prime)


# ---------------------------------------------------------------------------
# Outer search over Jordan angles


@dataclass(frozen=True)
class SearchBudget:
    """Angle-search configuration: grid step, refinement starts and tolerances."""

    grid_step: float = math.pi / 40
    starts: int = 5
    xatol: float = 1e-4
    maxiter: int = 4000
    mu_grid: int = 48
    refine: bool = True

    @property
    def grid(self) -> np.ndarray:
        n = int(round(HALF_PI / self.grid_step))
        axis = np.linspace(0.0, HALF_PI, n + 1)
        if np.min(np.abs(axis - QUARTER_PI)) > 1e-12:
            axis = np.sort(np.append(axis, QUARTER_PI))  # the ideal angle keeps every beta' feasible
        return axis

    def to_json(self) -> dict:
        return {"grid_step": self.grid_step, "starts": self.starts, "xatol": self.xatol,
                "maxiter": self.maxiter, "mu_grid": self.mu_grid, "refine": self.refine}


def default_budget(parties: int) -> SearchBudget:
    """pi/40 grid for two parties; pi/20 for four (runtime)."""
    return SearchBudget(grid_step=math.pi / 40 if parties <= 2 else math.pi / 20)


def smoke_budget() -> SearchBudget:
    return SearchBudget(grid_step=math.pi / 10)


@dataclass
class AngleSearchResult:
    value: float
    angles: np.ndarray
    witness: np.ndarray
    converged: bool
    grid_value: float
    exact_evaluations: int


class AngleProblem:
    """Precomputed data for minimising the inner value over Jordan angles."""

    def __init__(self, target: DensityMatrix | np.ndarray, f: BellFunctional, budget: SearchBudget | None = None):
        t = _target_matrix(target)
        self.n = f.parties
        if t.shape[0] != 2 ** self.n:
            raise ValueError(f"target dimension {t.shape[0]} does not match {self.n} parties")
        self.target = t
        self.functional = f
        self.budget = budget or default_budget(self.n)
        self._tp = _TargetPauli(t)
        self._fx = _FunctionalXZ(f)
        axis = self.budget.grid
        self.points = np.array(list(itertools.product(axis, repeat=self.n)))
        self.Ms = self._real_stack(self._tp.matrices(self.points))
        self.Bs = self._fx.matrices(self.points)
        if self.Ms.shape[1] != self.Bs.shape[1]:
            self.Bs = np.array([real_embedding(b.astype(complex)) for b in self.Bs])
        k = _backend.kernels
        self.bmax = -k.lambda_min_batch(-self.Bs)
        if self.Ms.shape[1] != 2 ** self.n:
            pass
        self.mus = np.concatenate([[0.0], np.geomspace(1e-2, 2.0 ** 9, self.budget.mu_grid - 1)])
        self._pencil: np.ndarray | None = None
        self.max_bell = lambda_max(self.operator(np.full(self.n, math.pi / 4)))
        self.exact_calls = 0

    def _real_stack(self, mats: np.ndarray) -> np.ndarray:
        if self._tp.real:
            return np.ascontiguousarray(np.real(mats))
        return np.array([real_embedding(m) for m in mats])

    @property
    def pencil(self) -> np.ndarray:
        if self._pencil is None:
            self._pencil = _backend.kernels.pencil_lambda_min(self.Ms, self.Bs, self.mus)
        return self._pencil

    def target_at(self, angles: Sequence[float]) -> np.ndarray:
        return self._tp.matrices(np.asarray(angles, dtype=float)[None])[0]

    def operator(self, angles: Sequence[float]) -> np.ndarray:
        return self._fx.matrices(np.asarray(angles, dtype=float)[None])[0]

    def inner(self, angles: Sequence[float], beta_prime: float, witness: bool = True) -> InnerResult | None:
        a = np.clip(np.asarray(angles, dtype=float), 0.0, HALF_PI)
        B = self.operator(a)
        M = self.target_at(a)
        self.exact_calls += 1
        try:
            return min_overlap_given_bell(M, B, beta_prime, check_gap=False, witness=witness)
        except InfeasibleError:
            return None
        except SolverError:
            return None

    def inner_value(self, angles: Sequence[float], beta_prime: float) -> float:
        r = self.inner(angles, beta_prime, witness=False)
        return math.inf if r is None else r.value

    def grid_best(self, beta_prime: float, count: int) -> list[tuple[float, int]]:
        """The ``count`` grid points with smallest exact inner value.

        Lower bounds max_k lambda_min(M - mu_k B) + mu_k beta' prune the exact
        evaluations without changing the result.
        """
        feasible = self.bmax >= beta_prime - 1e-12
        lower = np.max(self.pencil + self.mus[None, :] * beta_prime, axis=1)
        lower = np.where(feasible, lower, np.inf)
        order = np.argsort(lower, kind="stable")
        best: list[tuple[float, int]] = []
        for i in order:
            if not np.isfinite(lower[i]):
                break
            if len(best) >= count and lower[i] >= best[-1][0]:
                break
            v = self._grid_exact(i, beta_prime)
            if np.isfinite(v):
                best.append((v, int(i)))
                best.sort()
                best = best[:count]
        return best

    def _grid_exact(self, i: int, beta_prime: float) -> float:
        self.exact_calls += 1
        try:
            return min_overlap_given_bell(self.Ms[i], self.Bs[i], beta_prime, check_gap=False, witness=False).value
        except (InfeasibleError, SolverError):
            return math.inf

    def minimize(self, beta_prime: float) -> AngleSearchResult:
        """Grid search followed by bounded Nelder-Mead from the best grid points."""
        calls0 = self.exact_calls
        best = self.grid_best(beta_prime, self.budget.starts)
        if not best and self.inner(np.full(self.n, QUARTER_PI), beta_prime) is None:
            raise InfeasibleError(f"beta' = {beta_prime} is infeasible at every grid point")
        starts = [self.points[i] for _, i in best] or [np.full(self.n, QUARTER_PI)]
        grid_val = best[0][0] if best else math.inf
        best_val, best_x = grid_val, starts[0].copy()
        converged = True
        if self.budget.refine:
            bounds = [(0.0, HALF_PI)] * self.n
            for x0 in starts:
                res = minimize(lambda x: self.inner_value(x, beta_prime), x0, method="Nelder-Mead",
                               bounds=bounds, options={"xatol": self.budget.xatol, "fatol": 1e-12,
                                                       "maxiter": self.budget.maxiter,
                                                       "initial_simplex": self._simplex(x0)})
                if res.nit >= self.budget.maxiter:
                    converged = False
                if res.fun < best_val:
                    best_val, best_x = float(res.fun), np.clip(res.x, 0.0, HALF_PI)
        final = self.inner(best_x, beta_prime)
        witness = final.witness if final is not None else np.zeros((2 ** self.n, 2 ** self.n))
        value = final.value if final is not None else best_val
        return AngleSearchResult(min(value, best_val), best_x, witness, converged, grid_val,
                                 self.exact_calls - calls0)

    def _simplex(self, x0: np.ndarray) -> np.ndarray:
        step = 0.5 * self.budget.grid_step
        pts = [x0.copy()]
        for k in range(self.n):
            p = x0.copy()
            p[k] = p[k] + step if p[k] + step <= HALF_PI else p[k] - step
            pts.append(p)
        return np.array(pts)


def min_overlap_over_angles(target: DensityMatrix | np.ndarray, f: BellFunctional, beta_prime: float,
                            budget: SearchBudget | None = None) -> AngleSearchResult:
    """Minimum over Jordan angles of the inner overlap at Bell value beta'."""
    return AngleProblem(target, f, budget).minimize(beta_prime)


# ---------------------------------------------------------------------------
# Bound curves


def lower_hull(points: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Lower convex hull (monotone chain) of points, sorted by abscissa."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    hull: list[tuple[float, float]] = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


@dataclass
class BoundCurve:
    """Sampled minimum overlaps, their convex lower envelope and the threshold."""

    beta_prime: np.ndarray
    raw: np.ndarray
    hull: list[tuple[float, float]]
    threshold: float
    max_bell: float
    angles: np.ndarray | None = None
    flags: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def envelope(self, beta: float | np.ndarray) -> np.ndarray | float:
        xs = np.array([p[0] for p in self.hull])
        ys = np.array([p[1] for p in self.hull])
        b = np.asarray(beta, dtype=float)
        b = np.where((b > xs[-1]) & (b <= xs[-1] + 1e-9), xs[-1], b)  # rounding at the maximum
        out = np.interp(b, xs, ys, left=np.nan, right=np.nan)
        return float(out) if out.ndim == 0 else out

    @property
    def final_slope(self) -> float:
        (x1, y1), (x2, y2) = self.hull[-2], self.hull[-1]
        return (y2 - y1) / (x2 - x1)

    def line(self, beta: float) -> float:
        """Overlap on the extended final envelope segment."""
        return 0.5 + self.final_slope * (beta - self.threshold)

    def certified_fidelity(self, beta: float) -> float:
        return certified_fidelity_from_bell(self, beta)

    def rows(self) -> list[tuple[float, float, float, float]]:
        env = self.envelope(self.beta_prime)
        return [(float(b), float(r), float(e), certified_fidelity_from_bell(self, float(b)))
                for b, r, e in zip(self.beta_prime, self.raw, env)]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.beta_prime, dtype=float).tobytes())
        h.update(np.ascontiguousarray(self.raw, dtype=float).tobytes())
        h.update(repr(float(self.max_bell)).encode())
        return h.hexdigest()

    def to_csv(self, header: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["beta_prime", "raw_overlap", "envelope_overlap", "certified_fidelity"])
        for row in self.rows():
            w.writerow([f"{v!r}" for v in row])
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {"threshold": float(self.threshold), "max_bell": float(self.max_bell),
                "final_slope": float(self.final_slope), "hull": [list(p) for p in self.hull],
                "flags": list(self.flags), "digest": self.digest(), "meta": self.meta,
                "angles": None if self.angles is None else np.asarray(self.angles).tolist()}

    @classmethod
    def from_files(cls, csv_text: str, sidecar: dict) -> "BoundCurve":
        rows = [r for r in csv.reader(l for l in csv_text.splitlines() if l and not l.startswith("#"))]
        data = np.array([[float(v) for v in r] for r in rows[1:]])
        hull = [tuple(p) for p in sidecar["hull"]]
        angles = None if sidecar.get("angles") is None else np.array(sidecar["angles"])
        return cls(data[:, 0], data[:, 1], hull, float(sidecar["threshold"]), float(sidecar["max_bell"]),
                   angles, list(sidecar.get("flags", [])), dict(sidecar.get("meta", {})))


def default_beta_grid(f: BellFunctional, max_bell: float, samples: int = 60) -> np.ndarray:
    """Uniform samples on [L - 0.1 (Q - L), Q] with L the local and Q the quantum bound."""
    lb = local_bound(f)
    return np.linspace(lb - 0.1 * (max_bell - lb), max_bell, samples)


def curve_from_samples(beta_prime: Sequence[float], raw: Sequence[float], max_bell: float,
                       angles: np.ndarray | None = None, flags: Sequence[str] = (),
                       meta: dict | None = None) -> BoundCurve:
    """Convex lower envelope of the samples with (max_bell, 1) appended, and
    the threshold where its last segment crosses overlap 1/2."""
    b = np.asarray(beta_prime, dtype=float)
    r = np.asarray(raw, dtype=float)
    pts = [(x, y) for x, y in zip(b, r) if x < max_bell - 1e-12 and np.isfinite(y)]
    hull = lower_hull(pts + [(float(max_bell), 1.0)])
    flags = list(flags)
    if len(hull) < 2:
        raise ValueError("need at least one sample below the quantum maximum")
    (x1, y1), (x2, y2) = hull[-2], hull[-1]
    slope = (y2 - y1) / (x2 - x1)
    threshold = x2 - (y2 - 0.5) / slope if slope > 0 else math.inf
    diffs = np.diff(r[np.isfinite(r)])
    if diffs.size and float(np.min(diffs)) < -1e-6:
        flags.append("non_monotone_raw")
    return BoundCurve(b, r, hull, float(threshold), float(max_bell), angles, flags, dict(meta or {}))


def bound_curve(target: DensityMatrix | np.ndarray, f: BellFunctional, grid: Sequence[float] | None = None,
                budget: SearchBudget | None = None, samples: int = 60,
                progress: Callable[[int, float, float], None] | None = None) -> BoundCurve:
    """Sample the minimum overlap over Bell values and convexify."""
    prob = AngleProblem(target, f, budget)
    grid = default_beta_grid(f, prob.max_bell, samples) if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("beta' grid must be sorted ascending")
    if grid[-1] > prob.max_bell + 1e-9:
        raise InfeasibleError(f"grid exceeds the quantum maximum {prob.max_bell}")
    raw = np.empty(grid.size)
    angles = np.full((grid.size, f.parties), np.nan)
    flags: list[str] = []
    end = prob.inner(np.full(f.parties, math.pi / 4), prob.max_bell)
    for j, bp in enumerate(grid):
        if bp >= prob.max_bell - 1e-12:
            raw[j] = end.value if end is not None else 1.0
            angles[j] = math.pi / 4
        else:
            res = prob.minimize(float(bp))
            raw[j] = res.value
            angles[j] = res.angles
            if not res.converged:
                flags.append(f"unconverged@{bp:.6g}")
        if progress is not None:
            progress(j, float(bp), float(raw[j]))
    if end is None or abs(end.value - 1.0) > 5e-3:
        flags.append("endpoint_not_one")
    meta = {"budget": prob.budget.to_json(), "functional": f.name, "samples": int(grid.size),
            "backend": _backend.BACKEND}
    return curve_from_samples(grid, raw, prob.max_bell, angles, flags, meta)


def certified_fidelity_from_bell(curve: BoundCurve, beta: float) -> float:
    """sqrt(max(envelope(beta), 1/2)); the trivial sqrt(1/2) at or below threshold."""
    if beta > curve.max_bell + 1e-9:
        raise ValueError(f"Bell value {beta} exceeds the quantum maximum {curve.max_bell}")
    if beta <= curve.threshold:
        return SQRT_HALF
    env = curve.envelope(min(beta, curve.max_bell))
    if not np.isfinite(env):
        env = curve.line(beta)
    return float(math.sqrt(min(1.0, max(float(env), 0.5))))


def closed_form_fidelity(beta: float, threshold: float, max_bell: float) -> float:
    """sqrt(1/2 (1 + (beta - t)/(max - t))), floored at sqrt(1/2)."""
    if beta <= threshold:
        return SQRT_HALF
    return math.sqrt(0.5 * (1 + (min(beta, max_bell) - threshold) / (max_bell - threshold)))


def chsh_threshold_exact() -> float:
    """2(8 + 7 sqrt2)/17."""
    return 2 * (8 + 7 * math.sqrt(2.0)) / 17


# ---------------------------------------------------------------------------
# Independent route: the final envelope segment via the dual tangent slope


def tangent_threshold(target: DensityMatrix | np.ndarray, f: BellFunctional,
                      budget: SearchBudget | None = None, s_hi: float = 64.0,
                      tol: float = 1e-7) -> tuple[float, float]:
    """Threshold from the steepest line through (Q, 1) below every inner problem.

    The line y = 1 - s (Q - beta) lies under the minimum-overlap curve iff
    min_a lambda_min(M_a - s B_a) + s Q >= 1; the smallest such s is the final
    envelope slope, and the threshold is Q - 1/(2 s).  Returns (threshold, s).
    """
    prob = AngleProblem(target, f, budget)
    q = prob.max_bell
    k = _backend.kernels

    def worst(s: float) -> float:
        vals = k.lambda_min_batch(prob.Ms - s * prob.Bs) + s * q
        order = np.argsort(vals)[: prob.budget.starts]
        best = float(vals[order[0]])
        if prob.budget.refine:
            def fn(x: np.ndarray) -> float:
                a = np.clip(x, 0.0, HALF_PI)
                mr = prob._real_stack(prob.target_at(a)[None])[0]
                br = prob.operator(a)
                if br.shape != mr.shape:
                    br = real_embedding(br.astype(complex))
                return float(k.eigvalsh_sym(mr - s * br)[0] + s * q)
            for i in order:
                res = minimize(fn, prob.points[i], method="Nelder-Mead", bounds=[(0.0, HALF_PI)] * prob.n,
                               options={"xatol": prob.budget.xatol, "fatol": 1e-13, "maxiter": prob.budget.maxiter,
                                        "initial_simplex": prob._simplex(prob.points[i])})
                best = min(best, float(res.fun))
        return best

    lo, hi = 0.0, s_hi
    if worst(hi) < 1 - 1e-9:
        raise SolverError(f"no supporting line with slope <= {s_hi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if worst(mid) >= 1 - 1e-9:
            hi = mid
        else:
            lo = mid
    return q - 1 / (2 * hi), hi


def curve_json_dump(curve: BoundCurve) -> str:
    return json.dumps(curve.sidecar(), indent=2, sort_keys=True)
