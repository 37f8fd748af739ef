from __future__ import annotations

import numpy as np
import pytest

from dicert import _backend, _pykernels

compiled = pytest.mark.skipif(not _backend.compiled_available(), reason="compiled extension not built")


def _sym_stack(n: int, d: int, seed: int) -> np.ndarray:
    a = np.random.default_rng(seed).normal(size=(n, d, d))
    return (a + a.transpose(0, 2, 1)) / 2


def test_fallback_matches_lapack():
    mats = _sym_stack(30, 8, 0)
    assert np.allclose(_pykernels.lambda_min_batch(mats), np.linalg.eigvalsh(mats)[:, 0], atol=1e-12)
    w, v, _ = _pykernels.eigh_sym(mats[0])
    assert np.allclose(v @ np.diag(w) @ v.T, mats[0], atol=1e-12)


@compiled
def test_compiled_and_fallback_agree():
    from dicert import _ckernels
    ms, bs = _sym_stack(40, 16, 1), _sym_stack(40, 16, 2)
    mus = np.geomspace(1e-2, 100, 7)
    assert np.allclose(_ckernels.lambda_min_batch(ms), _pykernels.lambda_min_batch(ms), atol=1e-12)
    assert np.allclose(_ckernels.pencil_lambda_min(ms, bs, mus), _pykernels.pencil_lambda_min(ms, bs, mus),
                       atol=1e-11)
    args = (ms[0], bs[0], 0.5, 0.0, 8.0, 1e-12, 400)
    c, p = _ckernels.golden_dual(*args), _pykernels.golden_dual(*args)
    assert c[3] == pytest.approx(p[3], abs=1e-12)


def test_use_backend_switches_and_restores():
    original = _backend.BACKEND
    try:
        assert _backend.use_backend("python") == original
        assert _backend.BACKEND == "python" and _backend.get_kernels() is _pykernels
        from dicert.selftest import min_overlap_given_bell
        r = min_overlap_given_bell(np.diag([1.0, 0.0]), np.diag([1.0, -1.0]), 0.0)
        assert r.value == pytest.approx(0.5, abs=1e-9)
    finally:
        _backend.use_backend(original)
    with pytest.raises(ValueError):
        _backend.use_backend("fortran")
