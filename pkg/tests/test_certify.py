from __future__ import annotations

import json
import math

import numpy as np
import pytest

from dicert.certify import certify_gate, certify_identity, gate_bound, triangle_bound, unitary_shortcut
from dicert.quantum import diamond_bound
from dicert.selftest import certified_fidelity_from_bell

SQRT2 = math.sqrt(2.0)
TSIRELSON = 2 * SQRT2


def test_triangle_examples():
    assert triangle_bound(1.0, 1.0) == 1.0
    assert triangle_bound(1.0, 0.3) == 0.3
    assert triangle_bound(0.99, 0.98) == pytest.approx(math.cos(math.acos(0.99) + math.acos(0.98)), abs=1e-14)
    assert triangle_bound(0.99, 0.98) == pytest.approx(0.942128, abs=1e-6)
    assert triangle_bound(math.sqrt(0.5), math.sqrt(0.5)) == pytest.approx(0.0, abs=1e-15)
    assert triangle_bound(0.2, 0.1) == 0.0


def test_gate_examples():
    assert gate_bound(1.0, 1.0, 0.8) == 0.8
    expected = math.cos(math.acos(0.99 * 0.99) + math.acos(0.95))
    assert gate_bound(0.99, 0.99, 0.95) == pytest.approx(expected, abs=1e-14)
    assert gate_bound(0.99, 0.99, 0.95) == pytest.approx(0.869112, abs=1e-6)


def test_unitary_shortcut_examples():
    assert unitary_shortcut(1.0) == 1.0
    assert unitary_shortcut(0.9) == pytest.approx(0.62)
    assert unitary_shortcut(0.5) == 0.0
    assert unitary_shortcut(math.sqrt(0.5)) == pytest.approx(0.0, abs=1e-15)


def test_bounds_symmetric_and_monotone():
    rng = np.random.default_rng(0)
    for x, y, z in rng.uniform(0.0, 1.0, (200, 3)):
        assert triangle_bound(x, y) == pytest.approx(triangle_bound(y, x), abs=1e-15)
        assert gate_bound(x, y, z) == pytest.approx(gate_bound(y, x, z), abs=1e-15)
        assert triangle_bound(min(1.0, x + 0.01), y) >= triangle_bound(x, y) - 1e-15
        assert triangle_bound(x, y) <= min(x, y) + 1e-15


def test_shortcut_equals_triangle_on_itself():
    """cos(2 arccos F) equals the triangle bound with equal arguments, above 1/sqrt2."""
    for f in np.linspace(math.sqrt(0.5), 1.0, 50):
        assert unitary_shortcut(f) == pytest.approx(triangle_bound(f, f), abs=1e-12)


@pytest.mark.parametrize("fn,args", [(triangle_bound, (1.2, 0.5)), (triangle_bound, (0.5, -0.1)),
                                     (gate_bound, (0.5, 0.5, 1.5)), (unitary_shortcut, (math.nan,))])
def test_out_of_range(fn, args):
    with pytest.raises(ValueError, match="outside"):
        fn(*args)


def test_certify_identity_examples(chsh_curve):
    r = certify_identity(TSIRELSON, TSIRELSON, chsh_curve, True)
    assert r.channel_fidelity_bound == pytest.approx(1.0)
    assert r.diamond_norm_bound == pytest.approx(0.0, abs=1e-6)
    assert not r.trivial and r.warnings == []

    r = certify_identity(TSIRELSON, chsh_curve.threshold, chsh_curve, True)
    assert r.channel_fidelity_bound == pytest.approx(math.sqrt(0.5))
    assert r.trivial

    f_in = certified_fidelity_from_bell(chsh_curve, 2.80)
    f_out = certified_fidelity_from_bell(chsh_curve, 2.75)
    expected = max(math.cos(math.acos(f_in) + math.acos(f_out)), 2 * f_out ** 2 - 1)
    r = certify_identity(2.80, 2.75, chsh_curve, True)
    assert r.channel_fidelity_bound == pytest.approx(expected, abs=1e-12)
    assert r.diamond_norm_bound == pytest.approx(diamond_bound(expected, 2), abs=1e-9)


def test_certify_identity_monotone(chsh_curve):
    betas = np.linspace(2.2, TSIRELSON, 12)
    prev = -1.0
    for b in betas:
        v = certify_identity(TSIRELSON, float(b), chsh_curve, True).channel_fidelity_bound
        assert v >= prev - 1e-12
        prev = v


def test_certify_gate_examples(chsh_curve, cnot_smoke_curve):
    r = certify_gate(TSIRELSON, TSIRELSON, cnot_smoke_curve.threshold, chsh_curve, cnot_smoke_curve, True)
    assert r.channel_fidelity_bound == pytest.approx(math.sqrt(0.5))
    assert r.kind == "gate"
    r = certify_gate(TSIRELSON, TSIRELSON, cnot_smoke_curve.max_bell, chsh_curve, cnot_smoke_curve, True)
    assert r.channel_fidelity_bound == pytest.approx(1.0)
    assert r.diamond_norm_bound == pytest.approx(0.0, abs=1e-6)


def test_certify_rejects_values_above_maximum(chsh_curve):
    with pytest.raises(ValueError, match="quantum maximum"):
        certify_identity(2.9, 2.8, chsh_curve)


def test_attestation_warnings(chsh_curve):
    assert certify_identity(2.8, 2.8, chsh_curve).warnings
    assert certify_identity(2.8, 2.8, chsh_curve).attested_common_b_measurements is None
    assert "not valid" in certify_identity(2.8, 2.8, chsh_curve, False).warnings[0]
    assert certify_identity(2.8, 2.8, chsh_curve, True).warnings == []


def test_report_json(chsh_curve):
    r = certify_identity(2.8, 2.7, chsh_curve, True)
    data = json.loads(json.dumps(r.to_json()))
    assert data["kind"] == "identity"
    assert data["provenance"]["curves"][0]["digest"] == chsh_curve.digest()
    assert data["channel_fidelity_bound"] == r.channel_fidelity_bound
