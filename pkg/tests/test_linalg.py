import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowrank_duel.errors import InvalidInput
from lowrank_duel.linalg import (SymMat, load_matrix, mat_s, psd_check,
                                 psd_check_chol, save_matrix, sym_eig, vec)

from conftest import random_sym


def test_identity_eigendecomposition():
    dec = sym_eig(SymMat(np.eye(3)))
    assert np.allclose(dec.eigenvalues, 1.0)
    q = dec.eigenvectors
    assert np.allclose(q.T @ q, np.eye(3), atol=1e-12)


def test_diagonal_absolute_ordering():
    dec = sym_eig(SymMat(np.diag([3.0, -5.0, 1.0])))
    assert np.allclose(dec.eigenvalues, [-5.0, 3.0, 1.0])
    signed = sym_eig(SymMat(np.diag([3.0, -5.0, 1.0])), mode="descending_signed")
    assert np.allclose(signed.eigenvalues, [3.0, 1.0, -5.0])


def test_absolute_tie_breaks_by_signed_value():
    # eigenvalues are +2 and -2; the positive one must come first
    dec = sym_eig(SymMat(np.array([[0.0, 2.0], [2.0, 0.0]])))
    assert np.allclose(dec.eigenvalues, [2.0, -2.0])


def test_reconstruction_random():
    rng = np.random.default_rng(42)
    for _ in range(20):
        m = SymMat(random_sym(6, rng, scale=3.0))
        dec = sym_eig(m)
        resid = np.linalg.norm(dec.reconstruct() - m.entries, "fro")
        assert resid <= 1e-10 * max(1.0, m.frob())


def test_invalid_inputs():
    with pytest.raises(InvalidInput):
        SymMat(np.array([[np.nan, 0.0], [0.0, 1.0]]))
    with pytest.raises(InvalidInput):
        sym_eig(SymMat(np.eye(2)), mode="bogus")
    with pytest.raises(InvalidInput):
        SymMat(np.zeros((2, 3)))


def test_psd_check_examples():
    assert psd_check(SymMat(np.eye(2)), tol=0.0)
    cert = np.array([[1.0, 1.0, 1.0], [1.0, 2.0, 2.0], [1.0, 2.0, 2.0]])
    assert psd_check(SymMat(cert), tol=1e-9)
    assert not psd_check(SymMat(np.array([[0.0, 1.0], [1.0, 0.0]])), tol=1e-9)


def test_psd_check_matches_min_eigenvalue_sign():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        m = SymMat(random_sym(5, rng))
        lam_min = np.linalg.eigvalsh(m.entries)[0]
        assert psd_check(m, tol=0.0) == (lam_min >= 0.0)


def test_psd_two_routes_agree():
    rng = np.random.default_rng(11)
    for _ in range(200):
        a = rng.normal(size=(4, 4))
        m = SymMat(a @ a.T)            # PSD
        assert psd_check(m) and psd_check_chol(m)
        ind = SymMat(random_sym(4, rng))
        lam = np.linalg.eigvalsh(ind.entries)[0]
        if lam < -1e-6:                # clearly indefinite
            assert not psd_check(ind)
            assert not psd_check_chol(ind)


def test_vec_mat_s_examples():
    assert np.array_equal(vec(SymMat(np.eye(2))), [1.0, 0.0, 0.0, 1.0])
    m = mat_s([0.0, 1.0, 0.0, 0.0])
    assert np.allclose(m.entries, [[0.0, 0.5], [0.5, 0.0]])
    with pytest.raises(InvalidInput):
        mat_s(np.arange(5, dtype=float))


def test_vec_mat_s_roundtrip_exact():
    rng = np.random.default_rng(3)
    m = SymMat(random_sym(4, rng))
    assert np.array_equal(mat_s(vec(m)).entries, m.entries)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_roundtrip_property(n, seed):
    m = SymMat(random_sym(n, np.random.default_rng(seed)))
    assert np.array_equal(mat_s(vec(m)).entries, m.entries)


def test_matrix_file_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    m = SymMat(random_sym(4, rng))
    path = tmp_path / "m.json"
    save_matrix(path, m)
    assert np.array_equal(load_matrix(path).entries, m.entries)


def test_matrix_file_rejects_asymmetry(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"n": 2, "entries": [[0.0, 1.0], [0.5, 0.0]]}))
    with pytest.raises(InvalidInput):
        load_matrix(path)
