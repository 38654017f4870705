from fractions import Fraction

import numpy as np
import sympy

from propriety_kit.linalg import EXACT, FLOAT, column_rank


def _matvec(M, v):
    return [sum(Fraction(a) * b for a, b in zip(row, v)) for row in M]


def test_twoway_z_rank_and_null_vector(twoway):
    res = column_rank(twoway.Z_exact)
    assert res.rank == 4 and res.method == EXACT
    v = res.null_vector
    assert all(x == 0 for x in _matvec(twoway.Z_exact, v))
    scale = v[0]
    assert tuple(x / scale for x in v) == (1, 1, 1, -1, -1)


def test_identity():
    assert column_rank([[1, 0, 0], [0, 1, 0], [0, 0, 1]]).rank == 3


def test_oneway_x_full_rank(oneway):
    assert column_rank(oneway.X_exact).full_column_rank


def test_against_sympy():
    rng = np.random.default_rng(3)
    for _ in range(200):
        r, c = rng.integers(1, 7, size=2)
        M = rng.integers(-3, 4, size=(r, c))
        if rng.random() < 0.3 and c > 1:
            M[:, -1] = M[:, 0] * 2 - M[:, 1 % c]
        res = column_rank(M.tolist())
        assert res.rank == sympy.Matrix(M.tolist()).rank()
        if res.null_vector is not None:
            assert all(x == 0 for x in _matvec(M.tolist(), res.null_vector))


def test_irrational_entries_use_svd():
    M = [[np.pi, 1.0], [2 * np.pi, 2.0]]
    res = column_rank(M)
    assert res.method == FLOAT
    assert res.rank == 1
    assert np.allclose(np.array(M) @ np.array(res.null_vector), 0, atol=1e-12)
