"""Dense complex matrix helpers: tolerances, Cholesky factors, unitaries, JSON encoding.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  Indices are 0-based
throughout the package.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

import numpy as np

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class ToleranceConfig:
    """Numerical thresholds shared by every stage of the pipeline.

    zero
        support threshold; an entry counts as nonzero above ``zero * scale``.
    member
        relative residual accepted by subspace membership tests.
    rank
        relative singular-value cutoff for rank and intersection decisions.
    verify
        residual accepted when comparing two algebras.
    unitary
        accepted ``||U*U - I||_F`` for unitaries.
    """

    zero: float = 1e-9
    member: float = 1e-8
    rank: float = 1e-8
    verify: float = 1e-8
    unitary: float = 1e-10

    def __post_init__(self):
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"tolerance {field.name} must be positive, got {value!r}")
        if self.zero < EPS:
            raise ValueError(f"zero tolerance {self.zero} is below machine epsilon")

    def check_dimension(self, n: int) -> None:
        if self.zero < EPS * n:
            raise ValueError(f"zero tolerance {self.zero} is below eps*n for n={n}")

    @classmethod
    def overall(cls, t: float) -> "ToleranceConfig":
        """Scale the default bundle so that ``member == rank == verify == t``."""
        return cls(zero=0.1 * t, member=t, rank=t, verify=t, unitary=0.01 * t)

    @classmethod
    def parse(cls, text: str, base: "ToleranceConfig | None" = None) -> "ToleranceConfig":
        """Parse ``"1e-8"`` or ``"zero=1e-9,verify=1e-7"``."""
        text = text.strip()
        if "=" not in text:
            return cls.overall(float(text))
        values = dataclasses.asdict(base or cls())
        for item in text.split(","):
            key, _, raw = item.partition("=")
            key = key.strip()
            if key not in values:
                raise ValueError(f"unknown tolerance key {key!r}")
            values[key] = float(raw)
        return cls(**values)

    @classmethod
    def from_env(cls, var: str = "LMA_TOL") -> "ToleranceConfig":
        text = os.environ.get(var)
        return cls.parse(text) if text else cls()


DEFAULT_TOL = ToleranceConfig()


class NotPositiveDefiniteError(ValueError):
    """Raised by the Cholesky kernels; ``pivot`` is the failing 0-based index."""

    def __init__(self, pivot: int, value: float):
        super().__init__(f"matrix is not positive definite (pivot {pivot}, value {value:.3e})")
        self.pivot = pivot
        self.value = value


def as_matrix(x, square: bool = False) -> np.ndarray:
    a = np.asarray(x, dtype=complex)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-d matrix, got shape {a.shape}")
    if square and a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def adjoint(x: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(x, -1, -2))


def matrix_unit(n: int, i: int, j: int) -> np.ndarray:
    e = np.zeros((n, n), dtype=complex)
    e[i, j] = 1.0
    return e


@dataclass(frozen=True)
class IndexProjection:
    """Diagonal 0/1 projection onto the coordinates in ``indices``."""

    n: int
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(sorted(set(int(i) for i in self.indices)))
        if any(i < 0 or i >= self.n for i in idx):
            raise ValueError(f"indices {idx} out of range for n={self.n}")
        object.__setattr__(self, "indices", idx)

    @property
    def complement(self) -> "IndexProjection":
        return IndexProjection(self.n, tuple(i for i in range(self.n) if i not in self.indices))

    def matrix(self) -> np.ndarray:
        p = np.zeros((self.n, self.n), dtype=complex)
        p[self.indices, self.indices] = 1.0
        return p


def unitarity_residual(u: np.ndarray) -> float:
    u = np.asarray(u)
    return float(np.linalg.norm(adjoint(u) @ u - np.eye(u.shape[0])))


def is_unitary(u: np.ndarray, tol: ToleranceConfig = DEFAULT_TOL) -> bool:
    u = np.asarray(u)
    return u.ndim == 2 and u.shape[0] == u.shape[1] and unitarity_residual(u) <= tol.unitary


def embed(block: np.ndarray, indices, n: int) -> np.ndarray:
    """Identity on ``n`` coordinates with ``block`` acting on ``indices``."""
    u = np.eye(n, dtype=complex)
    idx = np.asarray(indices, dtype=int)
    u[np.ix_(idx, idx)] = block
    return u


def householder_to_e1(v, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Unitary ``U`` with ``v @ U == e_1`` for a unit row vector ``v``.

    Built from a reflector sending ``v`` to ``exp(i*arg v_1) e_1`` and a phase
    fix on the first row, so the first entry of ``v @ U`` is exactly real
    positive.  ``v = e_1`` gives the identity, ``v = e_2`` the coordinate swap.
    """
    x = np.asarray(v, dtype=complex).ravel()
    m = x.size
    norm = np.linalg.norm(x)
    if m == 0 or not np.isfinite(norm) or norm == 0:
        raise ValueError("householder_to_e1 needs a nonzero vector")
    if abs(norm - 1.0) > tol.unitary:
        raise ValueError(f"householder_to_e1 needs a unit vector, got norm {norm}")
    x = x / norm
    phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
    tail = x[1:]
    tail_sq = float(np.vdot(tail, tail).real)
    # M v = e_1 with M unitary; U = M^T.
    if tail_sq == 0.0:
        m_mat = np.eye(m, dtype=complex)
        m_mat[0, 0] = np.conj(phase)
        return m_mat.T
    # first entry of x - phase*e_1, written without cancellation
    w = x.copy()
    w[0] = -phase * tail_sq / (1.0 + abs(x[0]))
    h = np.eye(m, dtype=complex) - 2.0 * np.outer(w, np.conj(w)) / np.vdot(w, w).real
    h[0, :] *= np.conj(phase)
    return h.T


def _check_hermitian(b: np.ndarray, tol: ToleranceConfig) -> None:
    scale = max(np.linalg.norm(b), 1.0)
    if np.linalg.norm(b - adjoint(b)) > tol.unitary * scale:
        raise ValueError("matrix is not Hermitian")


def cholesky_upper(b, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Upper triangular ``R`` with positive diagonal and ``R* R = B``.

    Positive definiteness is decided during elimination: a pivot at or below
    ``tol.zero * max|diag B|`` raises :class:`NotPositiveDefiniteError`.
    """
    b = as_matrix(b, square=True)
    _check_hermitian(b, tol)
    n = b.shape[0]
    scale = float(np.max(np.abs(np.diag(b))))
    r = np.zeros_like(b)
    for j in range(n):
        col = r[:j, j]
        d = b[j, j].real - float(np.vdot(col, col).real)
        if not d > tol.zero * scale:
            raise NotPositiveDefiniteError(j, d)
        r[j, j] = np.sqrt(d)
        if j + 1 < n:
            r[j, j + 1:] = (b[j, j + 1:] - np.conj(col) @ r[:j, j + 1:]) / r[j, j]
    return r


def reverse_cholesky_upper(b, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Upper triangular ``R`` with positive diagonal and ``R R* = B``.

    Factors ``J B J`` (``J`` the index reversal) and flips the lower factor back.
    """
    b = as_matrix(b, square=True)
    n = b.shape[0]
    try:
        rt = cholesky_upper(b[::-1, ::-1], tol)
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(n - 1 - exc.pivot, exc.value) from None
    return np.ascontiguousarray(adjoint(rt)[::-1, ::-1])


def haar_unitary(n: int, seed) -> np.ndarray:
    """Haar-distributed unitary from the QR factorization of a Ginibre matrix."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def permutation_unitary(perm) -> np.ndarray:
    """0/1 matrix with ``U e_i = e_{perm[i]}``."""
    perm = [int(p) for p in perm]
    n = len(perm)
    if n == 0 or sorted(perm) != list(range(n)):
        raise ValueError(f"{perm} is not a permutation of 0..{n - 1}")
    u = np.zeros((n, n), dtype=complex)
    u[perm, range(n)] = 1.0
    return u


def matrix_to_json(x) -> dict:
    a = np.asarray(x, dtype=complex)
    return {
        "rows": int(a.shape[0]),
        "cols": int(a.shape[1]),
        "data": [[[float(z.real), float(z.imag)] for z in row] for row in a],
    }


def matrix_from_json(obj) -> np.ndarray:
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
        arr = np.array(data, dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed matrix object: {exc}") from None
    if arr.shape != (rows, cols, 2):
        raise ValueError(f"matrix data has shape {arr.shape}, expected {(rows, cols, 2)}")
    return as_matrix(arr[..., 0] + 1j * arr[..., 1])
