"""Logmodularity verdicts with factorization witnesses and an optimization probe."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .algebra import Subalgebra
from .matcore import (
    DEFAULT_TOL,
    ToleranceConfig,
    adjoint,
    as_matrix,
    cholesky_upper,
    matrix_to_json,
    reverse_cholesky_upper,
)
from .triangularizer import Certificate, Failure, triangularize, verify_certificate


class Decision(str, enum.Enum):
    LOGMODULAR = "Logmodular"
    NOT_LOGMODULAR = "NotLogmodular"


@dataclass
class FactorizationWitness:
    """``a* a = B`` and ``c c* = B`` with ``a, c`` in the algebra."""

    B: np.ndarray
    a: np.ndarray
    c: np.ndarray
    residual: float
    residual_c: float
    membership: float
    membership_c: float
    min_singular: float
    min_singular_c: float

    def passes(self, bound: float = 1e-8, invertible: float = 1e-10) -> bool:
        scale = float(np.linalg.norm(self.B))
        return (max(self.residual, self.residual_c) <= bound * scale
                and max(self.membership, self.membership_c) <= bound
                and min(self.min_singular, self.min_singular_c) > invertible)

    def to_json(self) -> dict:
        return {
            "B": matrix_to_json(self.B),
            "a": matrix_to_json(self.a),
            "c": matrix_to_json(self.c),
            "residual": self.residual,
            "residual_c": self.residual_c,
            "membership": self.membership,
            "membership_c": self.membership_c,
            "min_singular": self.min_singular,
            "min_singular_c": self.min_singular_c,
        }


def _relative_membership(alg: Subalgebra, x: np.ndarray) -> float:
    return alg.residual(x) / max(1.0, float(np.linalg.norm(x)))


def factor_positive(alg: Subalgebra, cert: Certificate, b, tol: ToleranceConfig = DEFAULT_TOL,
                    check: bool = True) -> FactorizationWitness:
    """Factor a positive definite ``B`` inside ``alg`` by transporting Cholesky factors.

    With ``U A U*`` block upper triangular, ``r = chol(U B U*)`` is upper
    triangular and ``a = U* r U`` lies in A with ``a* a = B``; the reverse
    factor gives ``c`` with ``c c* = B``.
    """
    b = as_matrix(b, square=True)
    if check:
        ok, report = verify_certificate(alg, cert, tol)
        if not ok:
            raise ValueError(f"certificate does not verify: {report}")
    u = cert.unitary
    ub = u @ b @ adjoint(u)
    ub = 0.5 * (ub + adjoint(ub))
    r = cholesky_upper(ub, tol)
    rr = reverse_cholesky_upper(ub, tol)
    a = adjoint(u) @ r @ u
    c = adjoint(u) @ rr @ u
    return FactorizationWitness(
        B=b,
        a=a,
        c=c,
        residual=float(np.linalg.norm(adjoint(a) @ a - b)),
        residual_c=float(np.linalg.norm(c @ adjoint(c) - b)),
        membership=_relative_membership(alg, a),
        membership_c=_relative_membership(alg, c),
        min_singular=float(np.linalg.svd(a, compute_uv=False)[-1]),
        min_singular_c=float(np.linalg.svd(c, compute_uv=False)[-1]),
    )


@dataclass
class SearchResult:
    a: np.ndarray
    residual: float
    restart_residuals: list[float] = field(default_factory=list)


def factorization_search(alg: Subalgebra, b, restarts: int = 16, max_iters: int = 200,
                         tol: float = 1e-12, seed=0) -> SearchResult:
    """Best local minimizer of ``||a* a - B||_F`` over ``a`` in ``alg``.

    ``a = sum (x_j + i y_j) b_j`` over the orthonormal basis; each restart runs a
    Levenberg-Marquardt least-squares solve from random coordinates of norm
    ``||B||_F^(1/2)``.  A small residual is evidence of a factorization, a large
    one across restarts is evidence against; neither is a proof.
    """
    b = as_matrix(b, square=True)
    basis = alg.basis
    d, n = alg.dim, alg.n

    def build(z):
        coef = z[:d] + 1j * z[d:]
        return np.tensordot(coef, basis, axes=1)

    def resid(z):
        a = build(z)
        e = (adjoint(a) @ a - b).ravel()
        return np.concatenate([e.real, e.imag])

    def jac(z):
        a = build(z)
        bh_a = np.einsum("kji,jl->kil", np.conj(basis), a)  # b_k* a
        ah_b = adjoint(bh_a)  # a* b_k
        d_re = (bh_a + ah_b).reshape(d, -1)
        d_im = (1j * (ah_b - bh_a)).reshape(d, -1)
        cols = np.concatenate([d_re, d_im]).T
        return np.concatenate([cols.real, cols.imag])

    rng = np.random.default_rng(seed)
    radius = np.sqrt(np.linalg.norm(b))
    best_a, best = None, np.inf
    history = []
    for _ in range(restarts):
        z0 = rng.standard_normal(2 * d)
        z0 *= radius / np.linalg.norm(z0)
        sol = least_squares(resid, z0, jac=jac, method="lm", xtol=tol, ftol=tol, gtol=tol,
                            max_nfev=max_iters * (2 * d + 1))
        a = build(sol.x)
        r = float(np.linalg.norm(adjoint(a) @ a - b))
        history.append(r)
        if r < best:
            best_a, best = a, r
    return SearchResult(best_a, best, history)


def sample_pd(n: int, seed, conditioning: float = 10.0) -> np.ndarray:
    """``G* G + eps I`` for a Ginibre ``G``, with ``eps = ||G||_2^2 / conditioning``.

    The condition number is at most ``conditioning + 1``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    g = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2 * n)
    gg = adjoint(g) @ g
    eps = np.linalg.norm(g, 2) ** 2 / conditioning
    b = gg + eps * np.eye(n)
    return 0.5 * (b + adjoint(b))


def probe_set(n: int, seed=0) -> list[np.ndarray]:
    """Targets used to collect optimization evidence against logmodularity."""
    rng = np.random.default_rng(seed)
    ones = np.ones((n, 1))
    u = rng.standard_normal((n, 1)) + 1j * rng.standard_normal((n, 1))
    u /= np.linalg.norm(u)
    return [
        0.5 * (np.eye(n) + ones @ ones.T).astype(complex),
        np.eye(n) + u @ adjoint(u),
        sample_pd(n, (seed, 1), conditioning=10.0),
        sample_pd(n, (seed, 2), conditioning=1e3),
    ]


@dataclass
class Verdict:
    decision: Decision
    certificate: Certificate | None = None
    failure: Failure | None = None
    witnesses: list[FactorizationWitness] = field(default_factory=list)
    oracle: list[tuple[np.ndarray, float]] = field(default_factory=list)

    @property
    def logmodular(self) -> bool:
        return self.decision is Decision.LOGMODULAR

    def to_json(self) -> dict:
        return {
            "decision": self.decision.value,
            "certificate": None if self.certificate is None else self.certificate.to_json(),
            "failure": None if self.failure is None else self.failure.to_json(),
            "witnesses": [w.to_json() for w in self.witnesses],
            "oracle": [{"B": matrix_to_json(b), "residual": r} for b, r in self.oracle],
        }


def is_logmodular(alg: Subalgebra, tol: ToleranceConfig = DEFAULT_TOL, n_witnesses: int = 20,
                  seed=0, restarts: int = 16, max_iters: int = 200) -> Verdict:
    result = triangularize(alg, tol)
    if isinstance(result, Certificate):
        witnesses = [factor_positive(alg, result, sample_pd(alg.n, (seed, j)), tol, check=False)
                     for j in range(n_witnesses)]
        result.witnesses = witnesses
        return Verdict(Decision.LOGMODULAR, certificate=result, witnesses=witnesses)
    oracle = []
    for b in probe_set(alg.n, seed):
        found = factorization_search(alg, b, restarts=restarts, max_iters=max_iters, seed=seed)
        oracle.append((b, found.residual))
    return Verdict(Decision.NOT_LOGMODULAR, failure=result, oracle=oracle)
