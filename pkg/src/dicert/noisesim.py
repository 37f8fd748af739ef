"""White-noise model: closed-form and simulated Bell values, and sweeps.

Sources emit (1 - eps_S)|phi+><phi+| + eps_S 1/4, measurements are replaced
by (1 - eps_M) times the ideal observables, and the tested channel outputs the
maximally mixed state with probability eps_C.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .bell import b_phi_assignment, b_phi_functional, chsh_assignment, chsh_functional, realize_operator
from .certify import certify_gate, certify_identity
from .quantum import DensityMatrix, KrausChannel, apply_channel, cu_phi, depolarizing, white_noise_state
from .selftest import BoundCurve

SQRT2 = math.sqrt(2.0)
DEFAULT_GRID = tuple(round(0.005 * k, 3) for k in range(11))


@dataclass(frozen=True)
class NoiseParams:
    eps_s: float = 0.0
    eps_m: float = 0.0
    eps_c: float = 0.0

    def __post_init__(self) -> None:
        for name in ("eps_s", "eps_m", "eps_c"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")


def closed_form_bell_values(p: NoiseParams) -> tuple[float, float, float]:
    """(beta_i, beta_o, gamma_o) from the closed-form expressions of the model."""
    s, m, c = p.eps_s, p.eps_m, p.eps_c
    beta_i = 2 * SQRT2 * (1 - s) * (1 - m) ** 2
    beta_o = beta_i * (1 - c)
    gamma_o = (1 - s) * (1 - m) ** 2 * (1 - c) * (5 - 3 * m * (2 - m) * (1 - s) - 3 * s) / 5
    return beta_i, beta_o, gamma_o


def _noisy_channel(u: KrausChannel, eps_c: float) -> KrausChannel:
    """With probability eps_c replace the output by the maximally mixed state."""
    dep = depolarizing(u.dim_out, 1.0)
    ks = [math.sqrt(1 - eps_c) * k for k in u.kraus] if eps_c < 1 else []
    if eps_c > 0:
        ks += [math.sqrt(eps_c) * d @ k for d in dep.kraus for k in u.kraus]
    return KrausChannel(tuple(ks), u.dim_in, u.dim_out)


def simulate_bell_values(p: NoiseParams, phi: float) -> tuple[float, float, float]:
    """(beta_i, beta_o, gamma_o) by density-matrix simulation.

    ``phi`` is the angle of cu_phi (and of the matching B_phi functional).
    """
    scale = 1 - p.eps_m
    rho = white_noise_state(p.eps_s)
    chsh = realize_operator(chsh_functional(), chsh_assignment(), scale)
    beta_i = float(np.real(np.trace(rho.matrix @ chsh)))
    out = apply_channel(_noisy_channel(KrausChannel.identity(2), p.eps_c), rho, [0])
    beta_o = float(np.real(np.trace(out.matrix @ chsh)))
    # four parties B1 A1 A2 B2: pairs (B1, A1) and (A2, B2); gate on A1 A2
    four = DensityMatrix(np.kron(rho.matrix, rho.matrix), (2, 2, 2, 2))
    four = apply_channel(_noisy_channel(cu_phi(phi), p.eps_c), four, [1, 2])
    bop = realize_operator(b_phi_functional(phi), b_phi_assignment(phi), scale)
    gamma_o = float(np.real(np.trace(four.matrix @ bop)))
    return beta_i, beta_o, gamma_o


@dataclass
class SweepTable:
    panel: str
    rows: list[tuple[float, float, float, float, float]]

    def to_csv(self, header: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps_setup", "eps_channel", "beta_i", "bell_out", "certified_fidelity"])
        for row in self.rows:
            w.writerow([f"{v:.12g}" for v in row])
        return buf.getvalue()

    def grid(self) -> tuple[list[float], list[float], np.ndarray]:
        es = sorted({r[0] for r in self.rows})
        ec = sorted({r[1] for r in self.rows})
        f = np.full((len(es), len(ec)), np.nan)
        for r in self.rows:
            f[es.index(r[0]), ec.index(r[1])] = r[4]
        return es, ec, f


def sweep_identity(chsh_curve: BoundCurve, eps_setup: Iterable[float] = DEFAULT_GRID,
                   eps_channel: Iterable[float] = DEFAULT_GRID) -> SweepTable:
    """Certified identity-channel fidelity with eps_S = eps_M = eps_setup."""
    rows = []
    for es in eps_setup:
        for ec in eps_channel:
            bi, bo, _ = closed_form_bell_values(NoiseParams(es, es, ec))
            rep = certify_identity(min(bi, chsh_curve.max_bell), min(bo, chsh_curve.max_bell), chsh_curve, True)
            rows.append((float(es), float(ec), bi, bo, rep.channel_fidelity_bound))
    return SweepTable("identity", rows)


def sweep_gate(chsh_curve: BoundCurve, gate_curve: BoundCurve, phi: float,
               eps_setup: Iterable[float] = DEFAULT_GRID, eps_channel: Iterable[float] = DEFAULT_GRID,
               panel: str = "cnot") -> SweepTable:
    """Certified gate fidelity; gamma_o is simulated at the cu_phi angle ``phi``."""
    rows = []
    for es in eps_setup:
        for ec in eps_channel:
            bi, _, go = simulate_bell_values(NoiseParams(es, es, ec), phi)
            bi = min(bi, chsh_curve.max_bell)
            go = min(go, gate_curve.max_bell)
            rep = certify_gate(bi, bi, go, chsh_curve, gate_curve, True)
            rows.append((float(es), float(ec), bi, go, rep.channel_fidelity_bound))
    return SweepTable(panel, rows)


def is_monotone_non_increasing(table: SweepTable, tol: float = 1e-12) -> bool:
    _, _, f = table.grid()
    return bool(np.all(np.diff(f, axis=0) <= tol) and np.all(np.diff(f, axis=1) <= tol))
