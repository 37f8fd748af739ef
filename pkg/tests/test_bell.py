from __future__ import annotations

import itertools
import math
import warnings

import numpy as np
import pytest

from dicert.bell import (Behavior, BellFunctional, MeasurementAssignment, MissingSettingError, Term, b_phi_assignment,
                         b_phi_assignment_printed, b_phi_functional, b_phi_local_bound_closed_form, chsh_assignment,
                         chsh_functional, evaluate_on_behavior, local_bound, realize_operator, verify_candidate)
from dicert.linalg import eig_hermitian, lambda_max
from dicert.quantum import SX, SZ, PureState, phi_plus, random_density, xi_state

SQRT2 = math.sqrt(2.0)


def _deterministic(parties: int, outcome: str = "+") -> Behavior:
    table = {}
    for settings in ("".join(s) for s in itertools.product("XZ", repeat=parties)):
        table[settings] = {outcome * parties: 1.0}
    return Behavior(parties, table)


def test_chsh_functional_shape():
    f = chsh_functional()
    assert f.parties == 2
    assert [t.coefficient for t in f.terms] == [1.0, 1.0, 1.0, -1.0]


def test_chsh_on_behaviours():
    f = chsh_functional()
    assert evaluate_on_behavior(f, _deterministic(2)) == pytest.approx(2.0)
    uniform = Behavior(2, {s: {o: 0.25 for o in ("++", "+-", "-+", "--")} for s in ("XX", "XZ", "ZX", "ZZ")})
    assert evaluate_on_behavior(f, uniform) == pytest.approx(0.0)
    tsirelson = Behavior.from_quantum(phi_plus().amplitudes, chsh_assignment())
    assert evaluate_on_behavior(f, tsirelson) == pytest.approx(2 * SQRT2, abs=1e-12)


def test_chsh_from_prescribed_correlators():
    e = 1 / SQRT2
    table = {}
    for s, val in {"XX": e, "XZ": e, "ZX": e, "ZZ": -e}.items():
        p_same = (1 + val) / 2
        table[s] = {"++": p_same / 2, "--": p_same / 2, "+-": (1 - p_same) / 2, "-+": (1 - p_same) / 2}
    assert evaluate_on_behavior(chsh_functional(), Behavior(2, table)) == pytest.approx(2 * SQRT2)


def test_b_phi_coefficients():
    assert b_phi_functional(0.0).coefficient("X1ZX") == 0.0
    assert b_phi_functional(math.pi / 2).coefficient("11ZX") == pytest.approx(0.0, abs=1e-17)
    for phi in (0.0, 0.7, 2.0):
        f = b_phi_functional(phi)
        assert f.coefficient("ZZZZ") == pytest.approx(2 / 20)
        assert f.coefficient("XX11") == pytest.approx(2 * SQRT2 / 20)
        assert f.coefficient("11XZ") == pytest.approx(-math.cos(phi) * SQRT2 / 20)
        assert len(f.terms) == 34


def test_b_phi_operator_maximum_and_eigenstate():
    for phi in np.linspace(0.0, math.pi, 10):
        op = realize_operator(b_phi_functional(phi), b_phi_assignment(phi))
        dec = eig_hermitian(op)
        assert dec.eigenvalues[-1] == pytest.approx(1.0, abs=1e-9)
        assert dec.eigenvalues[-1] - dec.eigenvalues[-2] > 1e-3
        ov = abs(np.vdot(dec.eigenvectors[:, -1], xi_state(phi).amplitudes)) ** 2
        assert ov >= 1 - 1e-9


def test_printed_table_reaches_one_on_an_equivalent_state():
    for phi in (0.3, math.pi / 2):
        op = realize_operator(b_phi_functional(phi), b_phi_assignment_printed(phi))
        assert lambda_max(op) == pytest.approx(1.0, abs=1e-9)


def test_b_phi_on_simulated_behaviour():
    phi = 1.1
    b = Behavior.from_quantum(xi_state(phi).amplitudes, b_phi_assignment(phi))
    assert evaluate_on_behavior(b_phi_functional(phi), b) == pytest.approx(1.0, abs=1e-12)


def test_quantum_consistency_random_states():
    rng = np.random.default_rng(0)
    phi = 0.8
    f, m = b_phi_functional(phi), b_phi_assignment(phi)
    op = realize_operator(f, m)
    for _ in range(5):
        rho = random_density(16, rng)
        value = evaluate_on_behavior(f, Behavior.from_quantum(rho, m))
        assert value == pytest.approx(float(np.real(np.trace(rho @ op))), abs=1e-10)


def test_realize_operator_examples():
    assert lambda_max(realize_operator(chsh_functional(), chsh_assignment())) == pytest.approx(2 * SQRT2)
    zero = BellFunctional(2, (Term("XX", 0.0), Term("ZZ", 0.0)))
    assert np.array_equal(realize_operator(zero, chsh_assignment()), np.zeros((4, 4)))
    with pytest.raises(KeyError):
        realize_operator(BellFunctional(2, (Term("XX", 1.0),)), MeasurementAssignment(({"Z": SZ}, {"X": SX})))


def test_local_bounds():
    assert local_bound(chsh_functional()) == 2.0
    assert local_bound(b_phi_functional(0.0)) == pytest.approx((3 + SQRT2) / (5 * SQRT2), abs=1e-12)
    assert local_bound(b_phi_functional(math.pi / 4)) == pytest.approx((4 + SQRT2) / (5 * SQRT2), abs=1e-12)
    for phi in (0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4, math.pi, 0.3):
        lb = local_bound(b_phi_functional(phi))
        assert lb == pytest.approx(b_phi_local_bound_closed_form(phi), abs=1e-10)
        assert 0.62 <= lb <= 0.77
    with pytest.raises(ValueError):
        local_bound(BellFunctional(5, (Term("XXXXX", 1.0),)))


def test_observable_validation():
    with pytest.raises(ValueError):
        b_phi_assignment(0.1).replace(0, "X", 2 * SX)
    with pytest.raises(ValueError):
        BellFunctional(2, (Term("XY", 1.0),))


def test_verify_candidate_passes_and_fails():
    for phi in (math.pi, 0.3, math.pi / 2):
        rep = verify_candidate(b_phi_functional(phi), b_phi_assignment(phi), xi_state(phi))
        assert rep.passed, rep.failed_checks()
    chsh = chsh_functional().scaled(1 / (2 * SQRT2))
    rep = verify_candidate(chsh, chsh_assignment(), phi_plus())
    assert rep.passed
    bad = verify_candidate(chsh, chsh_assignment(), PureState(np.array([1.0, 0, 0, 0])))
    assert "unique_maximal_eigenstate" in bad.failed_checks()
    unscaled = verify_candidate(chsh_functional(), chsh_assignment(), phi_plus())
    assert unscaled.failed_checks() == ["maximal_value_one"]
    with pytest.raises(ValueError):
        verify_candidate(chsh, chsh_assignment(), phi_plus(), delta=0.5)


def test_verify_candidate_negative_control():
    phi = 0.3
    m = b_phi_assignment(phi)
    flipped = m.replace(3, "X", -m.get(3, "X"))
    rep = verify_candidate(b_phi_functional(phi), flipped, xi_state(phi))
    assert not rep.passed


def test_behavior_csv_round_trip(tmp_path):
    b = Behavior.from_quantum(phi_plus().amplitudes, chsh_assignment())
    path = tmp_path / "b.csv"
    b.to_csv(str(path))
    text = path.read_text()
    assert text.splitlines()[0] == "settings,outcomes,probability"
    back = Behavior.from_csv(str(path))
    assert evaluate_on_behavior(chsh_functional(), back) == pytest.approx(2 * SQRT2, abs=1e-12)


def test_behavior_csv_counts_are_normalised(tmp_path):
    path = tmp_path / "counts.csv"
    rows = ["# recorded counts", "settings,outcomes,probability"]
    for s in ("XX", "XZ", "ZX", "ZZ"):
        rows += [f"{s},++,30", f"{s},--,30", f"{s},+-,20", f"{s},-+,20"]
    path.write_text("\n".join(rows) + "\n")
    b = Behavior.from_csv(str(path))
    assert b.correlator("XX") == pytest.approx(0.2)


def test_behavior_validation_and_missing_settings():
    with pytest.raises(ValueError):
        Behavior(2, {"XX": {"++": 0.7}})
    with pytest.raises(ValueError):
        Behavior(2, {"XQ": {"++": 1.0}})
    b = Behavior(2, {"XX": {"++": 1.0}})
    with pytest.raises(MissingSettingError, match="XZ"):
        evaluate_on_behavior(chsh_functional(), b)


def test_marginal_correlators_and_signalling_warning():
    phi = 0.5
    b = Behavior.from_quantum(xi_state(phi).amplitudes, b_phi_assignment(phi),
                              settings=["".join(s) for s in itertools.product("XZ", repeat=4)])
    op_val = float(np.real(np.vdot(xi_state(phi).amplitudes,
                                   realize_operator(b_phi_functional(phi), b_phi_assignment(phi))
                                   @ xi_state(phi).amplitudes)))
    assert evaluate_on_behavior(b_phi_functional(phi), b) == pytest.approx(op_val, abs=1e-12)
    assert b.no_signaling_violation() <= 1e-12
    signalling = Behavior(2, {"XX": {"++": 1.0}, "XZ": {"--": 1.0}})
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        signalling.correlator("1X")
        signalling.correlator("X1")
    assert any("no-signaling" in str(w.message) for w in caught)
