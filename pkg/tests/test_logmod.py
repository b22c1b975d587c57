import numpy as np
import pytest
from conftest import unit

from lma.algebra import adjoint_algebra, conjugate, contains, from_basis, nest_algebra
from lma.logmod import (
    Decision,
    factor_positive,
    factorization_search,
    is_logmodular,
    probe_set,
    sample_pd,
)
from lma.matcore import NotPositiveDefiniteError, haar_unitary
from lma.triangularizer import Certificate, FailureStage, recheck_failure, triangularize

NILPOTENT2 = from_basis([np.eye(2), unit(2, 0, 1)])
D2 = from_basis([unit(2, 0, 0), unit(2, 1, 1)])


def grid_oracle_nilpotent(b11, b22, steps=2001, top=4.0):
    """min over x I + y E_01 of ||a*a - diag(b11, b22)||_F on a grid.

    a*a = [[s, conj(x) y], [conj(y) x, s + u]] with s = |x|^2, u = |y|^2, so the
    squared residual is (s - b11)^2 + 2 s u + (s + u - b22)^2.
    """
    s = np.linspace(0, top, steps)[:, None]
    u = np.linspace(0, top, steps)[None, :]
    f = (s - b11) ** 2 + 2 * s * u + (s + u - b22) ** 2
    return float(np.sqrt(f.min()))


class TestFactorPositive:
    def test_full_algebra_is_plain_cholesky(self):
        alg = nest_algebra((3,))
        b = sample_pd(3, 1)
        w = factor_positive(alg, triangularize(alg), b)
        assert w.residual < 1e-13 and w.passes()

    def test_upper_triangular_example(self):
        w = factor_positive(nest_algebra((1, 1)), triangularize(nest_algebra((1, 1))), [[4, 2], [2, 2]])
        np.testing.assert_allclose(w.a, [[2, 1], [0, 1]], atol=1e-14)
        np.testing.assert_allclose(w.c @ w.c.conj().T, [[4, 2], [2, 2]], atol=1e-14)

    def test_identity(self):
        alg = conjugate(nest_algebra((1, 2)), haar_unitary(3, 0))
        w = factor_positive(alg, triangularize(alg), np.eye(3))
        np.testing.assert_allclose(w.a, np.eye(3), atol=1e-12)

    def test_witnesses_lie_in_algebra(self):
        alg = conjugate(nest_algebra((2, 1, 1)), haar_unitary(4, 2))
        cert = triangularize(alg)
        for s in range(10):
            w = factor_positive(alg, cert, sample_pd(4, s, conditioning=100))
            assert contains(alg, w.a)[0] and contains(alg, w.c)[0]
            assert w.passes()

    def test_non_pd_rejected(self):
        alg = nest_algebra((1, 1))
        with pytest.raises(NotPositiveDefiniteError):
            factor_positive(alg, triangularize(alg), [[1, 0], [0, -1]])

    def test_bad_certificate_rejected(self):
        alg = conjugate(nest_algebra((1, 1)), haar_unitary(2, 4))
        with pytest.raises(ValueError, match="verify"):
            factor_positive(alg, Certificate(np.eye(2), triangularize(alg).partition), np.eye(2))


class TestFactorizationSearch:
    def test_grid_oracle_value(self):
        assert grid_oracle_nilpotent(2, 1) == pytest.approx(np.sqrt(0.5), abs=1e-3)

    def test_upper_triangular_exact(self):
        assert factorization_search(nest_algebra((1, 1)), [[4, 2], [2, 2]]).residual <= 1e-8

    def test_nilpotent_obstruction(self):
        found = factorization_search(NILPOTENT2, np.diag([2.0, 1.0]))
        assert found.residual == pytest.approx(grid_oracle_nilpotent(2, 1), abs=1e-3)
        assert found.residual == pytest.approx(np.sqrt(0.5), abs=1e-3)

    @pytest.mark.parametrize("b", [np.diag([1.0, 3.0]), np.diag([3.0, 0.5])])
    def test_nilpotent_other_targets_match_grid(self, b):
        found = factorization_search(NILPOTENT2, b)
        assert found.residual == pytest.approx(grid_oracle_nilpotent(b[0, 0], b[1, 1]), abs=2e-3)

    def test_full_algebra(self):
        for s in range(3):
            assert factorization_search(nest_algebra((2,)), sample_pd(2, s)).residual <= 1e-10

    def test_diagonal_off_diagonal_unreachable(self):
        found = factorization_search(D2, [[1, 0.5], [0.5, 1]])
        assert found.residual >= 0.5 * np.sqrt(2) - 1e-9

    def test_restart_minimum_is_stable(self):
        for b in probe_set(2, 0)[:2]:
            mins = [factorization_search(D2, b, restarts=8, seed=s).residual for s in range(10)]
            assert np.std(mins) / np.mean(mins) < 0.1
        mins = [factorization_search(NILPOTENT2, np.diag([2.0, 1.0]), restarts=8, seed=s).residual
                for s in range(10)]
        assert np.std(mins) / np.mean(mins) < 0.1


class TestSamplePd:
    def test_scalar(self):
        assert sample_pd(1, 0)[0, 0].real > 0

    def test_exactly_hermitian(self):
        b = sample_pd(6, 3)
        assert np.array_equal(b, b.conj().T)

    @pytest.mark.parametrize("cond", [2.0, 10.0, 1e3])
    def test_conditioning(self, cond):
        for s in range(10):
            ev = np.linalg.eigvalsh(sample_pd(5, s, cond))
            assert ev[0] > 0 and ev[-1] / ev[0] <= cond + 1 + 1e-9

    def test_deterministic(self):
        np.testing.assert_array_equal(sample_pd(4, 9), sample_pd(4, 9))


class TestIsLogmodular:
    def test_conjugated_nests(self):
        rng = np.random.default_rng(0)
        for s in range(5):
            n = int(rng.integers(2, 7))
            alg = conjugate(nest_algebra((1, n - 1)), haar_unitary(n, s))
            v = is_logmodular(alg, n_witnesses=5, seed=s)
            assert v.decision is Decision.LOGMODULAR
            assert all(w.passes() for w in v.witnesses)

    def test_diagonal(self):
        v = is_logmodular(D2, restarts=8)
        assert v.decision is Decision.NOT_LOGMODULAR
        assert v.failure.stage is FailureStage.ENDGAME_NOT_TOTAL
        b, r = v.oracle[0]
        np.testing.assert_allclose(b, [[1, 0.5], [0.5, 1]])
        assert r >= 0.70

    def test_nilpotent(self):
        v = is_logmodular(NILPOTENT2, restarts=8)
        assert v.decision is Decision.NOT_LOGMODULAR
        assert v.failure.stage is FailureStage.ROW_WITNESS_MISSING and v.failure.indices == (1,)
        assert recheck_failure(NILPOTENT2, v.failure)
        assert min(r for _, r in v.oracle) > 0.1

    def test_adjoint_agrees(self):
        for alg in (D2, NILPOTENT2, conjugate(nest_algebra((2, 1)), haar_unitary(3, 1))):
            a = is_logmodular(alg, n_witnesses=2, restarts=2).decision
            assert is_logmodular(adjoint_algebra(alg), n_witnesses=2, restarts=2).decision is a

    def test_verdict_json(self):
        obj = is_logmodular(D2, restarts=2).to_json()
        assert obj["decision"] == "NotLogmodular" and obj["certificate"] is None
        assert obj["failure"]["stage"] == "EndgameNotTotal"
        assert len(obj["oracle"]) == 4 and "residual" in obj["oracle"][0]
