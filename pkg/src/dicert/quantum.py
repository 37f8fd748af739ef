"""Quantum states, channels and the fidelity measures built on them.

Four-party objects use the subsystem order B1, A1, A2, B2 throughout: the
output qubits A1, A2 of the certified gate sit between their reference
partners B1 and B2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .linalg import TOL, check_hermitian, eigvalsh, matrix_sqrt_psd, trace_norm

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)


def _factors(dim: int, dims: Sequence[int] | None) -> tuple[int, ...]:
    if dims is None:
        n = int(round(math.log2(dim))) if dim > 0 else 0
        return (2,) * n if 2 ** n == dim else (dim,)
    dims = tuple(int(d) for d in dims)
    if int(np.prod(dims)) != dim:
        raise ValueError(f"factor dimensions {dims} do not multiply to {dim}")
    return dims


@dataclass(frozen=True)
class DensityMatrix:
    """Positive semidefinite, unit-trace Hermitian matrix with factor dimensions."""

    matrix: np.ndarray
    dims: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        m = check_hermitian(np.asarray(self.matrix, dtype=complex))
        object.__setattr__(self, "matrix", 0.5 * (m + m.conj().T))
        object.__setattr__(self, "dims", _factors(m.shape[0], self.dims or None))
        tr = float(np.real(np.trace(m)))
        if abs(tr - 1.0) > 1e-9:
            raise ValueError(f"density matrix trace is {tr:.12f}, expected 1")
        wmin = float(eigvalsh(self.matrix)[0])
        if wmin < -TOL.psd_clamp:
            raise ValueError(f"density matrix has negative eigenvalue {wmin:.3e}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_pure(cls, psi: "PureState | np.ndarray", dims: Sequence[int] | None = None) -> "DensityMatrix":
        if isinstance(psi, PureState):
            dims = dims or psi.dims
            psi = psi.amplitudes
        v = np.asarray(psi, dtype=complex)
        return cls(np.outer(v, v.conj()), tuple(dims) if dims else ())

    @classmethod
    def maximally_mixed(cls, dim: int, dims: Sequence[int] | None = None) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim, tuple(dims) if dims else ())

    def to_json(self) -> dict:
        return matrix_to_json(self.matrix) | {"factors": list(self.dims)}

    @classmethod
    def from_json(cls, data: dict) -> "DensityMatrix":
        return cls(matrix_from_json(data), tuple(data.get("factors", ())))


@dataclass(frozen=True)
class PureState:
    """Unit vector with factor dimensions."""

    amplitudes: np.ndarray
    dims: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        v = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state norm is {norm:.15f}, expected 1")
        object.__setattr__(self, "amplitudes", v)
        object.__setattr__(self, "dims", _factors(v.size, self.dims or None))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def density(self) -> DensityMatrix:
        return DensityMatrix.from_pure(self)


@dataclass(frozen=True)
class KrausChannel:
    """Completely positive trace-preserving map given by Kraus operators."""

    kraus: tuple[np.ndarray, ...]
    dim_in: int
    dim_out: int

    def __post_init__(self) -> None:
        ks = tuple(np.asarray(k, dtype=complex) for k in self.kraus)
        if not ks:
            raise ValueError("a channel needs at least one Kraus operator")
        for k in ks:
            if k.shape != (self.dim_out, self.dim_in):
                raise ValueError(f"Kraus operator shape {k.shape} != ({self.dim_out}, {self.dim_in})")
        s = sum(k.conj().T @ k for k in ks)
        err = float(np.max(np.abs(s - np.eye(self.dim_in))))
        if err > TOL.unitarity:
            raise ValueError(f"channel is not trace preserving: max |sum K^dag K - I| = {err:.3e}")
        object.__setattr__(self, "kraus", ks)

    @classmethod
    def unitary(cls, u: np.ndarray) -> "KrausChannel":
        u = np.asarray(u, dtype=complex)
        return cls((u,), u.shape[1], u.shape[0])

    @classmethod
    def identity(cls, dim: int) -> "KrausChannel":
        return cls.unitary(np.eye(dim))

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.kraus)

    def to_json(self) -> dict:
        return {"dim_in": self.dim_in, "dim_out": self.dim_out,
                "kraus": [matrix_to_json(k) for k in self.kraus]}

    @classmethod
    def from_json(cls, data: dict) -> "KrausChannel":
        return cls(tuple(matrix_from_json(k) for k in data["kraus"]),
                   int(data["dim_in"]), int(data["dim_out"]))


def matrix_to_json(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=complex)
    dim: int | list[int] = m.shape[0] if m.shape[0] == m.shape[1] else list(m.shape)
    return {"dim": dim, "re": m.real.tolist(), "im": m.imag.tolist()}


def matrix_from_json(data: dict) -> np.ndarray:
    re = np.asarray(data["re"], dtype=float)
    im = np.asarray(data.get("im", np.zeros_like(re)), dtype=float)
    if re.shape != im.shape:
        raise ValueError("real and imaginary parts have different shapes")
    dim = data.get("dim")
    expected = (dim, dim) if isinstance(dim, int) else tuple(dim or re.shape)
    if re.shape != expected:
        raise ValueError(f"matrix shape {re.shape} does not match declared dim {dim}")
    return re + 1j * im


def dumps(obj: DensityMatrix | KrausChannel) -> str:
    return json.dumps(obj.to_json())


def _as_density(x: DensityMatrix | PureState | np.ndarray) -> np.ndarray:
    if isinstance(x, DensityMatrix):
        return x.matrix
    if isinstance(x, PureState):
        return np.outer(x.amplitudes, x.amplitudes.conj())
    a = np.asarray(x, dtype=complex)
    return np.outer(a, a.conj()) if a.ndim == 1 else a


def uhlmann_fidelity(rho: DensityMatrix | np.ndarray, sigma: DensityMatrix | np.ndarray) -> float:
    """F(rho, sigma) = Tr sqrt(sqrt(sigma) rho sqrt(sigma)) = ||sqrt(rho) sqrt(sigma)||_1, clipped to [0, 1]."""
    r, s = _as_density(rho), _as_density(sigma)
    if r.shape != s.shape:
        raise ValueError(f"dimension mismatch: {r.shape} vs {s.shape}")
    f = trace_norm(matrix_sqrt_psd(r) @ matrix_sqrt_psd(s))
    return float(min(1.0, max(0.0, f)))


def overlap(rho: DensityMatrix | np.ndarray, target: DensityMatrix | np.ndarray) -> float:
    """Hilbert-Schmidt overlap Tr(rho target)."""
    r, t = _as_density(rho), _as_density(target)
    if r.shape != t.shape:
        raise ValueError(f"dimension mismatch: {r.shape} vs {t.shape}")
    return float(np.real(np.sum(r * t.T)))


def apply_channel(ch: KrausChannel, rho: DensityMatrix, on_factors: Sequence[int]) -> DensityMatrix:
    """Apply ``ch`` to the listed factors of ``rho`` (in the listed order).

    When the channel changes dimension, the output factor replaces the selected
    factors at the position of the first one.
    """
    on = [int(i) for i in on_factors]
    dims = list(rho.dims)
    if len(set(on)) != len(on) or any(i < 0 or i >= len(dims) for i in on):
        raise ValueError(f"invalid factor indices {on} for factors {dims}")
    d_sel = int(np.prod([dims[i] for i in on])) if on else 1
    if d_sel != ch.dim_in:
        raise ValueError(f"selected factors have dimension {d_sel}, channel expects {ch.dim_in}")
    rest = [i for i in range(len(dims)) if i not in on]
    d_rest = int(np.prod([dims[i] for i in rest])) if rest else 1
    n = len(dims)
    perm = on + rest
    t = rho.matrix.reshape(dims + dims).transpose(perm + [n + p for p in perm])
    t = t.reshape(d_sel, d_rest, d_sel, d_rest)
    out = sum(np.einsum("ai,irjs,bj->arbs", k, t, k.conj()) for k in ch.kraus)
    if ch.dim_out == ch.dim_in:
        sel_dims = [dims[i] for i in on]
        new_dims = dims
        full = out.reshape(sel_dims + [dims[i] for i in rest] + sel_dims + [dims[i] for i in rest])
        inv = np.argsort(perm).tolist()
        full = full.transpose(inv + [n + p for p in inv])
    else:
        first = min(on)
        pos = sum(1 for i in rest if i < first)
        rest_dims = [dims[i] for i in rest]
        new_dims = rest_dims[:pos] + [ch.dim_out] + rest_dims[pos:]
        m = len(rest_dims) + 1
        full = out.reshape([ch.dim_out] + rest_dims + [ch.dim_out] + rest_dims)
        order = list(range(1, pos + 1)) + [0] + list(range(pos + 1, m))
        full = full.transpose(order + [m + o for o in order])
    d = int(np.prod(new_dims))
    return DensityMatrix(full.reshape(d, d), tuple(new_dims))


def phi_plus(d: int = 2) -> PureState:
    """Maximally entangled state sum_i |ii> / sqrt(d)."""
    v = np.zeros(d * d, dtype=complex)
    v[[i * d + i for i in range(d)]] = 1.0 / math.sqrt(d)
    return PureState(v, (d, d))


def cu_phi(phi: float) -> KrausChannel:
    """Controlled unitary |0><0| (x) 1 + |1><1| (x) exp(-i phi X)."""
    rot = math.cos(phi) * I2 - 1j * math.sin(phi) * SX
    u = np.zeros((4, 4), dtype=complex)
    u[:2, :2] = I2
    u[2:, 2:] = rot
    return KrausChannel.unitary(u)


def cnot() -> KrausChannel:
    u = np.eye(4, dtype=complex)
    u[2:, 2:] = SX
    return KrausChannel.unitary(u)


def gate_label_angle(theta: float) -> float:
    """Formula angle of the controlled gate carrying the gate label ``theta``.

    Gate labels put the controlled-NOT at ``theta = pi``; the matching member
    of ``cu_phi`` is ``phi = theta / 2``, which equals the labelled gate up to
    the local phase diag(1, exp(i theta / 2)) on the control qubit.
    """
    return 0.5 * theta


def xi_state(phi: float) -> PureState:
    """(CU_phi on A1 A2) applied to |phi+>_{B1 A1} |phi+>_{A2 B2}, order B1 A1 A2 B2."""
    pair = phi_plus(2).amplitudes
    psi = np.kron(pair, pair)  # B1 A1 A2 B2 with pairs (B1, A1) and (A2, B2)
    u = np.kron(np.kron(I2, cu_phi(phi).kraus[0]), I2)
    return PureState(u @ psi, (2, 2, 2, 2))


def choi_state(ch: KrausChannel) -> DensityMatrix:
    """(E (x) 1)[|phi+><phi+|] with factors (output, reference)."""
    d = ch.dim_in
    v = phi_plus(d).amplitudes
    pp = np.outer(v, v.conj())
    t = pp.reshape(d, d, d, d)
    out = sum(np.einsum("ai,irjs,bj->arbs", k, t, k.conj()) for k in ch.kraus)
    dim = ch.dim_out * d
    return DensityMatrix(out.reshape(dim, dim), (ch.dim_out, d))


def choi_fidelity(ch: KrausChannel, ref: KrausChannel) -> float:
    """Uhlmann fidelity of the Choi states of two channels."""
    if (ch.dim_in, ch.dim_out) != (ref.dim_in, ref.dim_out):
        raise ValueError("channels have different input/output dimensions")
    return uhlmann_fidelity(choi_state(ch), choi_state(ref))


def diamond_bound(fidelity: float, dim_in: int) -> float:
    """Upper bound 2 d sqrt(1 - F^2) on the diamond distance."""
    if not 0.0 <= fidelity <= 1.0:
        raise ValueError(f"fidelity {fidelity} outside [0, 1]")
    if dim_in < 1:
        raise ValueError("input dimension must be positive")
    return 2.0 * dim_in * math.sqrt(max(0.0, 1.0 - fidelity * fidelity))


def depolarizing(dim: int, p: float = 1.0) -> KrausChannel:
    """rho -> (1 - p) rho + p Tr(rho) 1/dim, via the Weyl (clock-shift) basis."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    w = np.exp(2j * math.pi / dim)
    shift = np.roll(np.eye(dim), 1, axis=0)
    clock = np.diag(w ** np.arange(dim))
    ks = []
    for a in range(dim):
        for b in range(dim):
            op = np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(clock, b)
            weight = (1 - p + p / dim ** 2) if (a, b) == (0, 0) else p / dim ** 2
            if weight > 0:
                ks.append(math.sqrt(weight) * op)
    return KrausChannel(tuple(ks), dim, dim)


def white_noise_state(eps_s: float) -> DensityMatrix:
    """(1 - eps) |phi+><phi+| + eps 1/4 on two qubits."""
    if not 0.0 <= eps_s <= 1.0:
        raise ValueError(f"eps_s {eps_s} outside [0, 1]")
    v = phi_plus(2).amplitudes
    return DensityMatrix((1 - eps_s) * np.outer(v, v.conj()) + eps_s * np.eye(4) / 4, (2, 2))


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def reorder(rho: np.ndarray, dims: Sequence[int], order: Iterable[int]) -> np.ndarray:
    """Permute tensor factors: new factor i is old factor ``order[i]``."""
    order = list(order)
    n = len(dims)
    t = np.asarray(rho).reshape(list(dims) * 2).transpose(order + [n + o for o in order])
    d = int(np.prod(dims))
    return t.reshape(d, d)
