"""Constructive reduction of a unital subalgebra of ``M_n`` to block upper triangular form.

The driver promotes matrix units ``E_00, E_11, ...`` into a conjugate of the
algebra one at a time.  At offset ``k`` (``E_00..E_{k-1,k-1}`` present) it either

* finds an index set inside ``0..k-1`` that no element maps out of, and then
  recurses on the complementary corner, or
* collects one row element per index ``t >= k`` supported on columns ``>= k``
  (moving support out of the first ``k`` columns through elements that escape),
  extracts a sink clique of their support graph, and conjugates by a
  permutation and a Householder reflector so ``E_kk`` becomes a member.

With the whole diagonal present, the support relation is a preorder whose
classes, if totally ordered, give the block partition.  The final equality
check against the block upper triangular algebra decides the verdict; every
other stage only steers.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    Partition,
    Subalgebra,
    algebra_residual,
    conjugate,
    contains,
    corner,
    nest_algebra,
    row_witness_basis,
    support_relation,
)
from .matcore import (
    DEFAULT_TOL,
    ToleranceConfig,
    embed,
    householder_to_e1,
    matrix_from_json,
    matrix_to_json,
    matrix_unit,
    permutation_unitary,
    unitarity_residual,
)
from .supportgraph import (
    SupportDigraph,
    path_to_targets,
    reachable,
    terminal_full_subgraph,
    transitive_closure,
)


class FailureStage(str, enum.Enum):
    ROW_WITNESS_MISSING = "RowWitnessMissing"
    SHIFT_BLOCKED = "ShiftBlocked"
    CLIQUE_CONSTRUCTION_FAILED = "CliqueConstructionFailed"
    ENDGAME_NOT_TOTAL = "EndgameNotTotal"
    VERIFICATION_MISMATCH = "VerificationMismatch"

    @property
    def structural(self) -> bool:
        """Whether the stage refutes a necessary condition (vs. a numerical breakdown)."""
        return self in (FailureStage.ROW_WITNESS_MISSING, FailureStage.SHIFT_BLOCKED,
                        FailureStage.ENDGAME_NOT_TOTAL)


@dataclass
class Failure:
    """Stage-tagged refutation.

    The condition was found in ``corner(conjugate(A, unitary), support)``;
    ``indices`` are 0-based coordinates of that compressed algebra.
    """

    stage: FailureStage
    indices: tuple[int, ...]
    residuals: dict = field(default_factory=dict)
    context: dict = field(default_factory=dict)
    unitary: np.ndarray | None = None
    support: tuple[int, ...] | None = None

    def to_json(self) -> dict:
        return {
            "stage": self.stage.value,
            "indices": list(self.indices),
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "context": self.context,
            "unitary": None if self.unitary is None else matrix_to_json(self.unitary),
            "support": None if self.support is None else list(self.support),
        }

    @classmethod
    def from_json(cls, obj) -> "Failure":
        return cls(
            FailureStage(obj["stage"]),
            tuple(obj["indices"]),
            dict(obj.get("residuals", {})),
            dict(obj.get("context", {})),
            None if obj.get("unitary") is None else matrix_from_json(obj["unitary"]),
            None if obj.get("support") is None else tuple(obj["support"]),
        )


class TriangularizationError(Exception):
    def __init__(self, failure: Failure):
        super().__init__(f"{failure.stage.value} at {failure.indices}")
        self.failure = failure


def _fail(stage: FailureStage, indices, residuals=None, **context):
    raise TriangularizationError(Failure(stage, tuple(int(i) for i in indices), residuals or {}, context))


@dataclass
class Stage:
    """One conjugation ``A -> U A U*``; ``unitary`` is the identity on ``0..offset-1``."""

    kind: str
    indices: tuple[int, ...]
    unitary: np.ndarray
    offset: int = 0

    def to_json(self) -> dict:
        return {"kind": self.kind, "indices": list(self.indices), "offset": self.offset,
                "unitary": matrix_to_json(self.unitary)}


@dataclass
class Certificate:
    """``conjugate(A, U)`` equals ``nest_algebra(partition)``."""

    unitary: np.ndarray
    partition: Partition
    stages: list[Stage] = field(default_factory=list)
    witnesses: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return int(self.unitary.shape[0])

    def replay(self) -> np.ndarray:
        u = np.eye(self.n, dtype=complex)
        for st in self.stages:
            u = st.unitary @ u
        return u

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "partition": list(self.partition.sizes),
            "unitary": matrix_to_json(self.unitary),
            "stages": [st.to_json() for st in self.stages],
            "witnesses": [w.to_json() for w in self.witnesses],
        }

    @classmethod
    def from_json(cls, obj) -> "Certificate":
        u = matrix_from_json(obj["unitary"])
        stages = []
        for st in obj.get("stages", []):
            su = matrix_from_json(st["unitary"]) if "unitary" in st else np.eye(u.shape[0], dtype=complex)
            stages.append(Stage(st["kind"], tuple(st.get("indices", [])), su, int(st.get("offset", 0))))
        return cls(u, Partition(tuple(obj["partition"])), stages)


@dataclass
class CornerRowSet:
    """Row elements ``x_t`` (``t = offset..n-1``) of A living in the lower-right corner.

    ``vectors[t - offset]`` is row ``t`` of ``elements[t - offset]`` restricted to
    columns ``offset..n-1``; all other rows of the element are zero.
    """

    offset: int
    vectors: list[np.ndarray]
    elements: list[np.ndarray]


def _edge_element(alg: Subalgebra, i: int, j: int) -> np.ndarray:
    """Projection of ``E_ij`` onto A: the minimal-norm element maximizing entry (i, j)."""
    return alg.project(matrix_unit(alg.n, i, j))


def clique_common_rows(rows, tol: ToleranceConfig = DEFAULT_TOL):
    """Common row vector shared by a sink clique of single-row generators.

    ``rows`` is a list of ``(index, vector)``; generator ``index`` is the matrix
    ``e_index vector^T``.  A word in such generators is a scalar times
    ``e_first (last vector)^T``, so the word-support relation is path
    reachability in the graph ``i -> j`` iff ``vector_i[j] != 0``.

    Returns ``(W, v, elements)`` where ``elements[r]`` is a product of
    generators equal to a nonzero multiple of ``e_{W[r]} v_t^T`` and ``v`` is the
    normalized restriction of ``v_t`` to ``W`` (``t = min W``).
    """
    gens = {int(i): np.asarray(v, dtype=complex).ravel() for i, v in rows}
    if len(gens) != len(rows):
        raise ValueError("row indices must be distinct")
    if not gens:
        raise ValueError("need at least one row")
    m = len(next(iter(gens.values())))
    edges = set()
    for i, v in gens.items():
        if v.size != m:
            raise ValueError("row vectors must share a length")
        scale = np.abs(v).max()
        if scale == 0:
            raise ValueError(f"row {i} is zero")
        for j in np.nonzero(np.abs(v) > tol.zero * scale)[0]:
            if int(j) not in gens:
                raise ValueError(f"row {i} reaches coordinate {j} which has no generator")
            edges.add((i, int(j)))
    direct = SupportDigraph(m, frozenset(edges))
    closure = transitive_closure(direct)
    # vertices without generators are isolated; restrict to the generator set
    verts = sorted(gens)
    if len(verts) != m:
        sub = {v: k for k, v in enumerate(verts)}
        w_local = terminal_full_subgraph(
            SupportDigraph(len(verts), frozenset((sub[a], sub[b]) for a, b in closure.edges)))
        w = [verts[k] for k in w_local]
    else:
        w = terminal_full_subgraph(closure)
    t = w[0]

    def gen_matrix(i):
        x = np.zeros((m, m), dtype=complex)
        x[i] = gens[i]
        return x

    elements = []
    for i in w:
        path = path_to_targets(direct, i, {t})
        if path is None:
            _fail(FailureStage.CLIQUE_CONSTRUCTION_FAILED, [i, t], path=None)
        x = gen_matrix(path[0])
        coeff = 1.0
        for a, b in zip(path, path[1:]):
            coeff *= abs(gens[a][b]) / np.abs(gens[a]).max()
            x = x @ gen_matrix(b)
        if coeff < tol.zero:
            _fail(FailureStage.CLIQUE_CONSTRUCTION_FAILED, path, {"coefficient": coeff}, path=path)
        elements.append(x)
    v = gens[t][w]
    v = v / np.linalg.norm(v)
    return w, v, elements


def shift_row_out(alg: Subalgebra, k: int, t: int, row_element, tol: ToleranceConfig = DEFAULT_TOL,
                  graph: SupportDigraph | None = None) -> np.ndarray:
    """Replace a row-``t`` element by one supported on columns ``>= k``.

    Picks the column ``i < k`` carrying the most weight, follows a shortest path
    ``i -> ... -> l`` with intermediate vertices ``< k`` and ``l >= k``, and
    returns ``R E_ii S (1 - P_k)`` with ``S`` the projected path product.
    """
    x = np.asarray(row_element, dtype=complex)
    n = alg.n
    row = x[t]
    scale = np.abs(row).max()
    if k == 0 or np.abs(row[:k]).max() <= tol.zero * scale:
        return x
    i = int(np.argmax(np.abs(row[:k])))
    g = graph if graph is not None else support_relation(alg, tol)
    inner = set(range(k))
    path = path_to_targets(g, i, set(range(k, n)), through=inner)
    if path is None:
        closed = sorted(_reach_within(g, i, inner))
        _fail(FailureStage.SHIFT_BLOCKED, [i], {"row_weight": float(abs(row[i]) / scale)},
              closed_set=closed, offset=k, row=t)
    s = matrix_unit(n, i, i)
    for a, b in zip(path, path[1:]):
        s = s @ _edge_element(alg, a, b)
        if b < k:
            s = s @ matrix_unit(n, b, b)
    tail = np.eye(n, dtype=complex)
    tail[:k, :k] = 0.0
    return x @ matrix_unit(n, i, i) @ s @ tail


def _reach_within(g: SupportDigraph, source: int, inner: set[int]) -> set[int]:
    seen = {source}
    stack = [source]
    while stack:
        v = stack.pop()
        if v not in inner:
            continue
        for w in g.successors(v):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def corner_rows(alg: Subalgebra, k: int, tol: ToleranceConfig = DEFAULT_TOL) -> CornerRowSet:
    """Row elements for every ``t >= k``, shifted into the corner ``k..n-1``."""
    n = alg.n
    graph = support_relation(alg, tol)
    vectors, elements = [], []
    for t in range(k, n):
        wb = row_witness_basis(alg, t, tol)
        if wb.dim == 0:
            _fail(FailureStage.ROW_WITNESS_MISSING, [t], {"witness_dim": 0.0}, offset=k)
        x = shift_row_out(alg, k, t, wb.element(0), tol, graph)
        vec = x[t, k:]
        norm = np.linalg.norm(vec)
        vectors.append(vec / norm)
        elements.append(x / norm)
    return CornerRowSet(k, vectors, elements)


def promote_next_unit(alg: Subalgebra, k: int, tol: ToleranceConfig = DEFAULT_TOL):
    """Conjugate so that ``E_kk`` joins ``E_00..E_{k-1,k-1}`` in the algebra.

    Returns ``(U, conjugate(alg, U), W)`` with ``U`` the identity on ``0..k-1``
    and ``W`` the clique (global indices) moved to the front of the corner.
    """
    n = alg.n
    rowset = corner_rows(alg, k, tol)
    m = n - k
    w, v, _ = clique_common_rows(list(enumerate(rowset.vectors)), tol)
    rest = [j for j in range(m) if j not in w]
    order = list(w) + rest
    perm = [0] * m
    for pos, j in enumerate(order):
        perm[j] = pos
    p = permutation_unitary(perm)
    h = householder_to_e1(v, tol)
    q = embed(np.conj(h.T), range(len(w)), m) @ p
    u = embed(q, range(k, n), n)
    new = conjugate(alg, u)
    ok, r = contains(new, matrix_unit(n, k, k), tol)
    if not ok:
        _fail(FailureStage.CLIQUE_CONSTRUCTION_FAILED, [k], {"unit_residual": r}, offset=k,
              clique=[k + j for j in w])
    return u, new, [k + j for j in w]


def absorbing_subset(alg: Subalgebra, k: int, tol: ToleranceConfig = DEFAULT_TOL,
                     graph: SupportDigraph | None = None) -> list[int] | None:
    """An index set inside ``0..k-1`` that no element of A maps out of."""
    g = graph if graph is not None else support_relation(alg, tol)
    for i in range(k):
        reach = reachable(g, i)
        if all(j < k for j in reach):
            return sorted(reach)
    return None


def diagonal_endgame(alg: Subalgebra, tol: ToleranceConfig = DEFAULT_TOL):
    """Order the coordinates of an algebra containing every ``E_ii``.

    ``i <= j`` iff some element has a nonzero ``(i, j)`` entry.  Returns
    ``(perm, partition)`` with ``perm[i]`` the new position of coordinate ``i``.
    """
    n = alg.n
    for i in range(n):
        ok, r = contains(alg, matrix_unit(n, i, i), tol)
        if not ok:
            raise ValueError(f"E_{i}{i} is not in the algebra (residual {r:.3e})")
    rel = support_relation(alg, tol).adjacency() | np.eye(n, dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            if not (rel[i, j] or rel[j, i]):
                _fail(FailureStage.ENDGAME_NOT_TOTAL, [i, j],
                      {"entry_ij": float(np.abs(alg.basis[:, i, j]).max(initial=0.0)),
                       "entry_ji": float(np.abs(alg.basis[:, j, i]).max(initial=0.0))})
    # earlier classes reach more coordinates
    rank = rel.sum(axis=1)
    classes: dict[int, list[int]] = {}
    for i in range(n):
        classes.setdefault(int(rank[i]), []).append(i)
    chain = [classes[r] for r in sorted(classes, reverse=True)]
    order = [i for c in chain for i in c]
    perm = [0] * n
    for pos, i in enumerate(order):
        perm[i] = pos
    return perm, Partition(tuple(len(c) for c in chain))


def verify_certificate(alg: Subalgebra, cert: Certificate, tol: ToleranceConfig = DEFAULT_TOL):
    """Check ``U A U* == nest(partition)``; returns ``(ok, report)``."""
    report = {"unitary_residual": float("inf"), "algebra_residual": float("inf"),
              "dim": alg.dim, "nest_dim": None}
    u = np.asarray(cert.unitary)
    if u.shape != (alg.n, alg.n) or cert.partition.n != alg.n:
        return False, report
    report["unitary_residual"] = unitarity_residual(u)
    nest = nest_algebra(cert.partition)
    report["nest_dim"] = nest.dim
    report["algebra_residual"] = algebra_residual(conjugate(alg, u), nest)
    ok = (report["unitary_residual"] <= tol.unitary and alg.dim == nest.dim
          and report["algebra_residual"] <= tol.verify)
    return ok, report


def _run(alg: Subalgebra, tol: ToleranceConfig) -> Certificate:
    n = alg.n
    if n == 1:
        one = np.eye(1, dtype=complex)
        return Certificate(one, Partition((1,)), [Stage("base", (0,), one)])
    total = np.eye(n, dtype=complex)
    stages: list[Stage] = []
    current = alg
    k = 0

    def tag(exc: TriangularizationError, support=None):
        f = exc.failure
        if f.unitary is None:
            f.unitary = total.copy()
            f.support = tuple(range(n))
        else:
            f.unitary = embed(f.unitary, support, n) @ total
            f.support = tuple(support[j] for j in f.support)
        return exc

    while k < n:
        if k > 0:
            closed = absorbing_subset(current, k, tol)
            if closed is not None:
                comp = [j for j in range(n) if j not in closed]
                try:
                    sub = _run(corner(current, comp, tol), tol)
                except TriangularizationError as exc:
                    raise tag(exc, support=comp)
                lift = embed(sub.unitary, comp, n)
                # identity on the closed set, not on all of 0..k-1
                stages.append(Stage("corner", tuple(closed), lift, 0))
                current = conjugate(current, lift)
                total = lift @ total
                break
        try:
            u, current, clique = promote_next_unit(current, k, tol)
        except TriangularizationError as exc:
            raise tag(exc)
        stages.append(Stage("promote", (k, *clique), u, k))
        total = u @ total
        k += 1
    try:
        perm, partition = diagonal_endgame(current, tol)
    except TriangularizationError as exc:
        raise tag(exc)
    p = permutation_unitary(perm)
    stages.append(Stage("endgame", tuple(perm), p, 0))
    return Certificate(p @ total, partition, stages)


def triangularize(alg: Subalgebra, tol: ToleranceConfig = DEFAULT_TOL) -> Certificate | Failure:
    """Certificate that ``alg`` is unitarily a block upper triangular algebra, or a Failure."""
    if not alg.unital:
        raise ValueError("triangularize needs a unital algebra")
    tol.check_dimension(alg.n)
    try:
        cert = _run(alg, tol)
    except TriangularizationError as exc:
        return exc.failure
    ok, report = verify_certificate(alg, cert, tol)
    if not ok:
        return Failure(FailureStage.VERIFICATION_MISMATCH, (),
                       {k: v for k, v in report.items() if isinstance(v, float)},
                       {"partition": list(cert.partition.sizes)}, cert.unitary, tuple(range(alg.n)))
    return cert


def failing_algebra(alg: Subalgebra, failure: Failure, tol: ToleranceConfig = DEFAULT_TOL) -> Subalgebra:
    """The compressed conjugate of ``alg`` in which ``failure`` was detected."""
    u = failure.unitary if failure.unitary is not None else np.eye(alg.n)
    conj = conjugate(alg, u)
    support = failure.support if failure.support is not None else tuple(range(alg.n))
    if len(support) == alg.n:
        return conj
    return corner(conj, support, tol)


def recheck_failure(alg: Subalgebra, failure: Failure, tol: ToleranceConfig = DEFAULT_TOL) -> bool:
    """Re-derive the cited condition by direct scans, independent of the pipeline."""
    stage = failure.stage
    if stage is FailureStage.VERIFICATION_MISMATCH:
        part = Partition(tuple(failure.context["partition"]))
        cert = Certificate(failure.unitary, part)
        return not verify_certificate(alg, cert, tol)[0]
    b = failing_algebra(alg, failure, tol)
    n = b.n
    if stage is FailureStage.ROW_WITNESS_MISSING:
        (t,) = failure.indices
        # dim(A ∩ row_t) = dim A + n - dim(A + row_t), ranks from the raw stacks
        rows = np.zeros((n, n * n), dtype=complex)
        rows[np.arange(n), t * n + np.arange(n)] = 1.0
        stacked = np.vstack([b.basis.reshape(b.dim, -1), rows])
        sv = np.linalg.svd(stacked, compute_uv=False)
        rank = int(np.sum(sv > tol.rank * sv[0]))
        return b.dim + n - rank == 0
    if stage is FailureStage.SHIFT_BLOCKED:
        k = int(failure.context["offset"])
        closed = list(failure.context["closed_set"])
        if failure.indices[0] not in closed or any(c >= k for c in closed):
            return False
        outside = [j for j in range(n) if j not in closed]
        leak = np.abs(b.basis[:, closed][:, :, outside]).max(initial=0.0)
        units = all(contains(b, matrix_unit(n, c, c), tol)[0] for c in closed)
        return bool(units and leak <= tol.zero)
    if stage is FailureStage.ENDGAME_NOT_TOTAL:
        i, j = failure.indices
        units = all(contains(b, matrix_unit(n, c, c), tol)[0] for c in (i, j))
        vals = np.concatenate([b.basis[:, i, j], b.basis[:, j, i]])
        return bool(units and np.abs(vals).max(initial=0.0) <= tol.zero)
    if stage is FailureStage.CLIQUE_CONSTRUCTION_FAILED:
        if "coefficient" in failure.residuals:
            return failure.residuals["coefficient"] < tol.zero
        (k,) = failure.indices
        return not contains(b, matrix_unit(n, k, k), tol)[0]
    return False


def dump_certificate(cert: Certificate, path) -> None:
    with open(path, "w") as fh:
        json.dump(cert.to_json(), fh)
        fh.write("\n")


def load_certificate(path) -> Certificate:
    with open(path) as fh:
        return Certificate.from_json(json.load(fh))


__all__ = [
    "Certificate", "CornerRowSet", "Failure", "FailureStage", "Stage", "TriangularizationError",
    "absorbing_subset", "clique_common_rows", "corner_rows", "diagonal_endgame", "failing_algebra",
    "promote_next_unit", "recheck_failure", "shift_row_out", "triangularize", "verify_certificate",
]
