"""Channel-fidelity lower bounds assembled from state-certification bounds."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .quantum import diamond_bound
from .selftest import BoundCurve, certified_fidelity_from_bell

SQRT_HALF = math.sqrt(0.5)


def _check_unit(name: str, x: float) -> float:
    x = float(x)
    if not (0.0 <= x <= 1.0) or math.isnan(x):
        raise ValueError(f"{name} = {x} outside [0, 1]")
    return x


def triangle_bound(f_in: float, f_out: float) -> float:
    """cos(arccos F_in + arccos F_out), floored at 0.

    Evaluated as F_in F_out - sqrt((1 - F_in^2)(1 - F_out^2)), which is exact
    when either fidelity is 1.
    """
    x, y = _check_unit("f_in", f_in), _check_unit("f_out", f_out)
    return max(0.0, x * y - math.sqrt((1.0 - x * x) * (1.0 - y * y)))


def gate_bound(f_in_1: float, f_in_2: float, f_out: float) -> float:
    """cos(arccos(F1 F2) + arccos F_out), floored at 0."""
    return triangle_bound(_check_unit("f_in_1", f_in_1) * _check_unit("f_in_2", f_in_2), f_out)


def unitary_shortcut(f_out: float) -> float:
    """max(2 F_out^2 - 1, 0): bound without an input test, for unitary targets."""
    f = _check_unit("f_out", f_out)
    return max(2.0 * f * f - 1.0, 0.0)


@dataclass
class CertificationReport:
    input_fidelity_bound: float
    output_fidelity_bound: float
    channel_fidelity_bound: float
    diamond_norm_bound: float
    trivial: bool
    kind: str
    provenance: dict = field(default_factory=dict)
    attested_common_b_measurements: bool | None = None
    warnings: list[str] = field(default_factory=list)
    shortcut_bound: float | None = None
    triangle: float | None = None

    def to_json(self) -> dict:
        return asdict(self)


def _curve_record(curve: BoundCurve, role: str) -> dict:
    return {"role": role, "threshold": curve.threshold, "max_bell": curve.max_bell,
            "digest": curve.digest(), "functional": curve.meta.get("functional", "")}


def _check_bell(name: str, value: float, curve: BoundCurve) -> float:
    value = float(value)
    if value > curve.max_bell + 1e-9:
        raise ValueError(f"{name} = {value} exceeds the quantum maximum {curve.max_bell}")
    return value


def _attestation_warnings(attested: bool | None) -> list[str]:
    if attested is None:
        return ["common B-side measurement devices not attested; the bound assumes the same "
                "measurement boxes on side B in the input and output tests"]
    if not attested:
        return ["caller states the B-side measurement devices differ between tests; bound not valid"]
    return []


def certify_identity(beta_in: float, beta_out: float, chsh_curve: BoundCurve,
                     attested: bool | None = None) -> CertificationReport:
    """Bound on the fidelity of a qubit channel with the identity from two CHSH values."""
    beta_in = _check_bell("beta_in", beta_in, chsh_curve)
    beta_out = _check_bell("beta_out", beta_out, chsh_curve)
    f_in = certified_fidelity_from_bell(chsh_curve, beta_in)
    f_out = certified_fidelity_from_bell(chsh_curve, beta_out)
    tri = triangle_bound(f_in, f_out)
    short = unitary_shortcut(f_out)
    bound = max(tri, short)
    trivial = beta_in <= chsh_curve.threshold or beta_out <= chsh_curve.threshold \
        or math.acos(f_in) + math.acos(f_out) >= math.pi / 2
    return CertificationReport(
        f_in, f_out, bound, diamond_bound(bound, 2), bool(trivial), "identity",
        {"beta_in": beta_in, "beta_out": beta_out, "curves": [_curve_record(chsh_curve, "chsh")]},
        attested, _attestation_warnings(attested), short, tri)


def certify_gate(beta_in_1: float, beta_in_2: float, gamma_out: float, chsh_curve: BoundCurve,
                 gate_curve: BoundCurve, attested: bool | None = None) -> CertificationReport:
    """Bound on the fidelity of a two-qubit gate from two CHSH values and the output Bell value."""
    b1 = _check_bell("beta_in_1", beta_in_1, chsh_curve)
    b2 = _check_bell("beta_in_2", beta_in_2, chsh_curve)
    g = _check_bell("gamma_out", gamma_out, gate_curve)
    f1 = certified_fidelity_from_bell(chsh_curve, b1)
    f2 = certified_fidelity_from_bell(chsh_curve, b2)
    fo = certified_fidelity_from_bell(gate_curve, g)
    bound = gate_bound(f1, f2, fo)
    trivial = b1 <= chsh_curve.threshold or b2 <= chsh_curve.threshold or g <= gate_curve.threshold \
        or math.acos(f1 * f2) + math.acos(fo) >= math.pi / 2
    return CertificationReport(
        f1 * f2, fo, bound, diamond_bound(bound, 4), bool(trivial), "gate",
        {"beta_in_1": b1, "beta_in_2": b2, "gamma_out": g,
         "curves": [_curve_record(chsh_curve, "chsh"), _curve_record(gate_curve, "gate")]},
        attested, _attestation_warnings(attested), None, bound)
