"""Unital matrix subalgebras stored as Hilbert-Schmidt orthonormal bases.

A :class:`Subalgebra` is a subspace of ``M_n`` with an orthonormal basis under
``<x, y> = trace(y* x)``.  All rank and intersection decisions go through an
SVD with a relative cutoff.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import accumulate

import numpy as np

from .matcore import (
    DEFAULT_TOL,
    IndexProjection,
    ToleranceConfig,
    adjoint,
    as_matrix,
    matrix_from_json,
    matrix_to_json,
)
from .supportgraph import SupportDigraph


class AlgebraError(ValueError):
    """Input is not a (unital) matrix algebra."""


@dataclass(frozen=True, eq=False)
class Subalgebra:
    n: int
    basis: np.ndarray  # (dim, n, n), HS-orthonormal
    unital: bool = True

    @property
    def dim(self) -> int:
        return int(self.basis.shape[0])

    @property
    def frame(self) -> np.ndarray:
        """Basis as orthonormal columns of an ``(n*n, dim)`` matrix."""
        return self.basis.reshape(self.dim, self.n * self.n).T

    def project(self, x: np.ndarray) -> np.ndarray:
        """HS-orthogonal projection of one matrix or a stack of matrices."""
        x = np.asarray(x, dtype=complex)
        flat = x.reshape(-1, self.n * self.n)
        coeffs = np.conj(self.basis.reshape(self.dim, -1)) @ flat.T
        return (coeffs.T @ self.basis.reshape(self.dim, -1)).reshape(x.shape)

    def residual(self, x: np.ndarray) -> np.ndarray | float:
        x = np.asarray(x, dtype=complex)
        r = np.linalg.norm((x - self.project(x)).reshape(-1, self.n * self.n), axis=1)
        return float(r[0]) if x.ndim == 2 else r

    def orthonormality_error(self) -> float:
        f = self.frame
        return float(np.linalg.norm(adjoint(f) @ f - np.eye(self.dim)))

    def __repr__(self):
        return f"Subalgebra(n={self.n}, dim={self.dim}, unital={self.unital})"


@dataclass(frozen=True)
class Partition:
    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ValueError(f"invalid partition {self.sizes!r}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    def block_of(self) -> np.ndarray:
        """Block label of every coordinate."""
        return np.repeat(np.arange(len(self.sizes)), self.sizes)

    def offsets(self) -> list[int]:
        return [0, *accumulate(self.sizes)]

    def reversed(self) -> "Partition":
        return Partition(self.sizes[::-1])

    @classmethod
    def parse(cls, text: str) -> "Partition":
        return cls(tuple(int(s) for s in text.split(",") if s.strip()))

    def __iter__(self):
        return iter(self.sizes)

    def __len__(self):
        return len(self.sizes)


@dataclass
class RowWitnessBasis:
    """Orthonormal basis (rows of ``vectors``) of ``{v : e_i v^T in A}``."""

    index: int
    vectors: np.ndarray  # (k, n)
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[0])

    def __len__(self):
        return self.dim

    def element(self, r: int = 0) -> np.ndarray:
        n = self.vectors.shape[1]
        x = np.zeros((n, n), dtype=complex)
        x[self.index] = self.vectors[r]
        return x


def orthonormalize(mats, n: int, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of ``span(mats)`` as a ``(k, n, n)`` stack."""
    mats = np.asarray(mats, dtype=complex).reshape(-1, n * n)
    if mats.shape[0] == 0:
        return np.zeros((0, n, n), dtype=complex)
    u, s, _ = np.linalg.svd(mats.T, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((0, n, n), dtype=complex)
    keep = s > tol.rank * s[0]
    return np.ascontiguousarray(u[:, keep].T).reshape(-1, n, n)


def from_basis(mats, n: int | None = None, unital: bool = True,
               tol: ToleranceConfig = DEFAULT_TOL) -> Subalgebra:
    """Wrap a spanning set (not checked for closure) as a Subalgebra."""
    mats = [as_matrix(m, square=True) for m in mats]
    if n is None:
        if not mats:
            raise ValueError("cannot infer n from an empty basis")
        n = mats[0].shape[0]
    if any(m.shape != (n, n) for m in mats):
        raise ValueError("all basis matrices must be n x n")
    return Subalgebra(n, orthonormalize(mats, n, tol), unital)


def _pair_products(basis: np.ndarray) -> np.ndarray:
    d, n, _ = basis.shape
    return np.einsum("aij,bjk->abik", basis, basis).reshape(d * d, n, n)


def close_under_products(generators, n: int | None = None, include_unit: bool = True,
                         tol: ToleranceConfig = DEFAULT_TOL) -> Subalgebra:
    """Smallest subspace containing the generators (and I) closed under products.

    Alternates product expansion and re-orthonormalization; gives up after
    ``2n`` rounds or once the dimension would exceed ``n**2``.
    """
    gens = [as_matrix(g, square=True) for g in generators]
    if n is None:
        if not gens:
            raise ValueError("n is required when there are no generators")
        n = gens[0].shape[0]
    if include_unit:
        gens.append(np.eye(n, dtype=complex))
    alg = Subalgebra(n, orthonormalize(gens, n, tol) if gens else np.zeros((0, n, n), complex),
                     include_unit)
    for _ in range(2 * n + 1):
        if alg.dim == 0:
            return alg
        prods = _pair_products(alg.basis)
        res = prods - alg.project(prods)
        norms = np.linalg.norm(res.reshape(res.shape[0], -1), axis=1)
        if norms.max() <= tol.rank:
            return alg
        grown = orthonormalize(np.concatenate([alg.basis, res[norms > tol.rank]]), n, tol)
        if grown.shape[0] > n * n:
            raise AlgebraError(f"closure dimension {grown.shape[0]} exceeds n^2={n * n}")
        if grown.shape[0] == alg.dim:
            return alg
        alg = Subalgebra(n, grown, include_unit)
    raise AlgebraError(f"closure did not stabilize within {2 * n + 1} rounds")


def contains(alg: Subalgebra, x, tol: ToleranceConfig = DEFAULT_TOL) -> tuple[bool, float]:
    """Membership test; the residual is ``||x - Proj(x)||_F``."""
    x = as_matrix(x, square=True)
    if x.shape[0] != alg.n:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {alg.n}")
    r = alg.residual(x)
    return r <= tol.member * max(1.0, float(np.linalg.norm(x))), r


def conjugate(alg: Subalgebra, u) -> Subalgebra:
    """The algebra ``U A U*``."""
    u = as_matrix(u, square=True)
    if u.shape[0] != alg.n:
        raise ValueError("dimension mismatch")
    basis = np.einsum("ij,ajk,lk->ail", u, alg.basis, np.conj(u))
    return Subalgebra(alg.n, basis, alg.unital)


def adjoint_algebra(alg: Subalgebra) -> Subalgebra:
    return Subalgebra(alg.n, np.ascontiguousarray(adjoint(alg.basis)), alg.unital)


def corner(alg: Subalgebra, indices, tol: ToleranceConfig = DEFAULT_TOL) -> Subalgebra:
    """Compression ``P_S A P_S`` re-indexed into ``M_{|S|}``; needs ``P_S`` in A."""
    proj = indices if isinstance(indices, IndexProjection) else IndexProjection(alg.n, tuple(indices))
    idx = list(proj.indices)
    if not idx:
        raise ValueError("corner needs a nonempty index set")
    ok, r = contains(alg, proj.matrix(), tol)
    if not ok:
        raise AlgebraError(f"projection onto {idx} is not in the algebra (residual {r:.3e})")
    m = len(idx)
    comp = alg.basis[:, idx][:, :, idx]
    return Subalgebra(m, orthonormalize(comp, m, tol), True)


def nest_algebra(partition) -> Subalgebra:
    """Block upper triangular matrices for an ordered partition."""
    p = partition if isinstance(partition, Partition) else Partition(tuple(partition))
    n = p.n
    block = p.block_of()
    pairs = [(i, j) for i in range(n) for j in range(n) if block[i] <= block[j]]
    basis = np.zeros((len(pairs), n, n), dtype=complex)
    for a, (i, j) in enumerate(pairs):
        basis[a, i, j] = 1.0
    return Subalgebra(n, basis, True)


def algebra_residual(a: Subalgebra, b: Subalgebra) -> float:
    """Largest membership residual of either basis in the other algebra."""
    if a.n != b.n:
        return float("inf")
    ra = np.max(b.residual(a.basis), initial=0.0)
    rb = np.max(a.residual(b.basis), initial=0.0)
    return float(max(ra, rb))


def equals_algebra(a: Subalgebra, b: Subalgebra, tol: ToleranceConfig = DEFAULT_TOL) -> bool:
    return a.n == b.n and a.dim == b.dim and algebra_residual(a, b) <= tol.verify


def row_witness_basis(alg: Subalgebra, i: int, tol: ToleranceConfig = DEFAULT_TOL) -> RowWitnessBasis:
    """Vectors ``v`` with ``e_i v^T`` in A, ordered by increasing residual.

    Column ``j`` of the stacked matrix is the part of ``E_ij`` orthogonal to A;
    its numerical null space is the intersection of A with the row-``i`` matrices.
    """
    n = alg.n
    if not 0 <= i < n:
        raise IndexError(f"row {i} out of range for n={n}")
    units = np.zeros((n, n, n), dtype=complex)
    units[np.arange(n), i, np.arange(n)] = 1.0
    res = (units - alg.project(units)).reshape(n, n * n).T
    _, s, vh = np.linalg.svd(res)
    s_full = np.zeros(n)
    s_full[: s.size] = s
    null = s_full <= tol.rank
    order = np.argsort(s_full[null], kind="stable")
    # rows of vh are conjugated right singular vectors
    vectors = np.ascontiguousarray(np.conj(vh[null][order]))
    return RowWitnessBasis(i, vectors, s_full[null][order])


def support_relation(alg: Subalgebra, tol: ToleranceConfig = DEFAULT_TOL) -> SupportDigraph:
    """Edge ``(i, j)`` iff some element of A has a nonzero ``(i, j)`` entry."""
    if alg.dim == 0:
        return SupportDigraph(alg.n, frozenset())
    mags = np.abs(alg.basis).max(axis=0)
    ii, jj = np.nonzero(mags > tol.zero)
    return SupportDigraph(alg.n, frozenset(zip(ii.tolist(), jj.tolist())))


def closure_defect(alg: Subalgebra) -> float:
    """Largest residual of a pairwise basis product outside the span."""
    if alg.dim == 0:
        return 0.0
    prods = _pair_products(alg.basis)
    return float(np.max(alg.residual(prods)))


def algebra_to_json(alg: Subalgebra) -> dict:
    return {"n": alg.n, "basis": [matrix_to_json(b) for b in alg.basis], "unital": bool(alg.unital)}


def algebra_from_json(obj, tol: ToleranceConfig = DEFAULT_TOL, require_unit: bool = True) -> Subalgebra:
    """Load, re-orthonormalize and validate an algebra file object."""
    if not isinstance(obj, dict):
        raise AlgebraError("algebra file must be a JSON object")
    try:
        n = int(obj["n"])
        raw = obj["basis"]
        unital = bool(obj.get("unital", False))
    except (KeyError, TypeError, ValueError) as exc:
        raise AlgebraError(f"malformed algebra object: {exc}") from None
    if n < 1 or not isinstance(raw, list):
        raise AlgebraError("algebra needs n >= 1 and a list basis")
    mats = [matrix_from_json(m) for m in raw]
    if any(m.shape != (n, n) for m in mats):
        raise AlgebraError("basis matrices must be n x n")
    if require_unit and not unital:
        raise AlgebraError("algebra must be declared unital")
    alg = Subalgebra(n, orthonormalize(mats, n, tol) if mats else np.zeros((0, n, n), complex), unital)
    if unital:
        ok, r = contains(alg, np.eye(n), tol)
        if not ok:
            raise AlgebraError(f"declared unital but identity residual is {r:.3e}")
    defect = closure_defect(alg)
    if defect > tol.member:
        raise AlgebraError(f"basis is not closed under products (residual {defect:.3e})")
    return alg


def load_algebra(path, tol: ToleranceConfig = DEFAULT_TOL) -> Subalgebra:
    with open(path) as fh:
        return algebra_from_json(json.load(fh), tol)


def dump_algebra(alg: Subalgebra, path) -> None:
    with open(path, "w") as fh:
        json.dump(algebra_to_json(alg), fh)
        fh.write("\n")
