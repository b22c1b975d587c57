"""Command-line interface: ``lma analyze|triangularize|check|factor|chol|gen``.

Exit codes for ``check``: 0 logmodular, 1 not logmodular, 2 invalid input,
3 numerical breakdown.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .algebra import (
    AlgebraError,
    Partition,
    Subalgebra,
    adjoint_algebra,
    algebra_from_json,
    algebra_to_json,
    closure_defect,
    conjugate,
    nest_algebra,
    row_witness_basis,
    support_relation,
)
from .logmod import factor_positive, factorization_search, is_logmodular
from .matcore import (
    NotPositiveDefiniteError,
    ToleranceConfig,
    haar_unitary,
    matrix_from_json,
    matrix_to_json,
    cholesky_upper,
    reverse_cholesky_upper,
)
from .triangularizer import Certificate, load_certificate, triangularize, verify_certificate

EXIT_OK, EXIT_NO, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3
TAMPER_KINDS = ("none", "drop-basis-element", "replace-with-diagonal")


class InvalidInput(Exception):
    pass


@dataclass(frozen=True)
class InstanceSpec:
    partition: Partition
    seed: int = 0
    tamper: str = "none"


def _unit_basis(n, pairs) -> np.ndarray:
    basis = np.zeros((len(pairs), n, n), dtype=complex)
    for a, (i, j) in enumerate(pairs):
        basis[a, i, j] = 1.0
    return basis


def _tamper_candidates(p: Partition):
    """Closed non-logmodular algebras derived from ``nest(p)``, in preference order."""
    n = p.n
    block = p.block_of()
    pairs = [(i, j) for i in range(n) for j in range(n) if block[i] <= block[j]]
    for drop in sorted((e for e in pairs if block[e[0]] < block[e[1]]), reverse=True):
        kept = [e for e in pairs if e != drop]
        yield Subalgebra(n, _unit_basis(n, kept), True)
    if n >= 2:
        strict = [(i, j) for i in range(n) for j in range(i + 1, n)]
        yield Subalgebra(n, np.concatenate([np.eye(n)[None], _unit_basis(n, strict)]), True)


def generate_instance(spec: InstanceSpec, tol: ToleranceConfig | None = None) -> dict:
    """Algebra file object for a generated instance.

    Untampered: ``nest(partition)`` conjugated by a seeded Haar unitary.
    ``replace-with-diagonal`` emits the diagonal algebra ``D_n``;
    ``drop-basis-element`` removes one off-block matrix unit from the nest
    algebra (or falls back to unit + strictly upper triangular) and conjugates.
    Every emitted object passes the loader's closure validation.
    """
    tol = tol or ToleranceConfig()
    p = spec.partition
    n = p.n
    if spec.tamper not in TAMPER_KINDS:
        raise ValueError(f"unknown tamper kind {spec.tamper!r}")
    if spec.tamper == "none":
        return algebra_to_json(conjugate(nest_algebra(p), haar_unitary(n, spec.seed)))
    if n < 2:
        raise ValueError("every unital subalgebra of M_1 is logmodular; nothing to tamper")
    if spec.tamper == "replace-with-diagonal":
        return algebra_to_json(Subalgebra(n, _unit_basis(n, [(i, i) for i in range(n)]), True))
    u = haar_unitary(n, spec.seed)
    for cand in _tamper_candidates(p):
        obj = algebra_to_json(conjugate(cand, u))
        try:
            algebra_from_json(json.loads(json.dumps(obj)), tol)
        except AlgebraError:
            continue
        return obj
    raise ValueError(f"no tamper candidate passes validation for partition {p.sizes}")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"{path}: {exc}") from None


def _load_algebra(path, tol) -> Subalgebra:
    try:
        return algebra_from_json(_read_json(path), tol)
    except (AlgebraError, ValueError) as exc:
        raise InvalidInput(f"{path}: {exc}") from None


def _load_matrix(path):
    try:
        return matrix_from_json(_read_json(path))
    except ValueError as exc:
        raise InvalidInput(f"{path}: {exc}") from None


def _emit(obj, out=None):
    text = json.dumps(obj, indent=None)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _tolerance(args) -> ToleranceConfig:
    flag = getattr(args, "tol", None)
    try:
        tol = ToleranceConfig.from_env()
    except ValueError:
        if not flag:
            raise
        tol = ToleranceConfig()  # the flag overrides a broken environment
    return ToleranceConfig.parse(flag, tol) if flag else tol


def cmd_analyze(args) -> int:
    tol = _tolerance(args)
    alg = _load_algebra(args.algebra, tol)
    graph = support_relation(alg, tol)
    report = {
        "n": alg.n,
        "dim": alg.dim,
        "unital": alg.unital,
        "closure_defect": closure_defect(alg),
        "support_relation": sorted([list(e) for e in graph.edges]),
        "row_witness_dims": [row_witness_basis(alg, i, tol).dim for i in range(alg.n)],
        "column_witness_dims": [row_witness_basis(adjoint_algebra(alg), i, tol).dim
                                for i in range(alg.n)],
    }
    if args.dot:
        sys.stdout.write(graph.to_dot())
    else:
        _emit(report)
    return EXIT_OK


def cmd_triangularize(args) -> int:
    tol = _tolerance(args)
    alg = _load_algebra(args.algebra, tol)
    result = triangularize(alg, tol)
    if isinstance(result, Certificate):
        _emit(result.to_json(), args.out)
        return EXIT_OK
    _emit({"failure": result.to_json()}, args.out)
    return EXIT_NO


def _check_one(path, tol, witnesses, seed, restarts):
    try:
        alg = _load_algebra(path, tol)
    except InvalidInput as exc:
        return EXIT_INVALID, {"file": str(path), "error": str(exc)}
    try:
        verdict = is_logmodular(alg, tol, n_witnesses=witnesses, seed=seed, restarts=restarts)
    except (np.linalg.LinAlgError, AlgebraError, ArithmeticError) as exc:
        return EXIT_NUMERICAL, {"file": str(path), "error": f"numerical failure: {exc}"}
    obj = verdict.to_json()
    if verdict.logmodular:
        code = EXIT_OK
    elif verdict.failure.stage.structural:
        code = EXIT_NO
    else:
        code = EXIT_NUMERICAL
    return code, obj


def cmd_check(args) -> int:
    tol = _tolerance(args)
    jobs = [(p, tol, args.witnesses, args.seed, args.restarts) for p in args.algebra]
    if args.batch and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_check_one, *zip(*jobs)))
    else:
        results = [_check_one(*job) for job in jobs]
    if len(results) == 1 and not args.batch:
        code, obj = results[0]
        _emit(obj)
        return code
    _emit([dict(obj, file=str(job[0])) for job, (_, obj) in zip(jobs, results)])
    return max(code for code, _ in results)


def cmd_factor(args) -> int:
    tol = _tolerance(args)
    alg = _load_algebra(args.algebra, tol)
    b = _load_matrix(args.B)
    if b.shape != (alg.n, alg.n):
        raise InvalidInput(f"B has shape {b.shape}, algebra has n={alg.n}")
    if args.search:
        found = factorization_search(alg, b, restarts=args.restarts, seed=args.seed)
        _emit({"a": matrix_to_json(found.a), "residual": found.residual,
               "restart_residuals": found.restart_residuals})
        return EXIT_OK
    if args.cert:
        try:
            cert = load_certificate(args.cert)
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            raise InvalidInput(f"{args.cert}: {exc}") from None
        ok, report = verify_certificate(alg, cert, tol)
        if not ok:
            _emit({"error": "certificate does not verify", "report": report})
            return EXIT_NO
    else:
        cert = triangularize(alg, tol)
        if not isinstance(cert, Certificate):
            _emit({"failure": cert.to_json()})
            return EXIT_NO
    try:
        witness = factor_positive(alg, cert, b, tol, check=False)
    except NotPositiveDefiniteError as exc:
        _emit({"error": str(exc), "pivot": exc.pivot})
        return EXIT_NO
    _emit(witness.to_json())
    return EXIT_OK


def cmd_chol(args) -> int:
    tol = _tolerance(args)
    b = _load_matrix(args.B)
    try:
        r = reverse_cholesky_upper(b, tol) if args.reverse else cholesky_upper(b, tol)
    except NotPositiveDefiniteError as exc:
        _emit({"error": str(exc), "pivot": exc.pivot})
        return EXIT_NO
    except ValueError as exc:
        raise InvalidInput(str(exc)) from None
    _emit(matrix_to_json(r))
    return EXIT_OK


def cmd_gen(args) -> int:
    try:
        spec = InstanceSpec(Partition.parse(args.partition), args.seed, args.tamper)
        obj = generate_instance(spec, _tolerance(args))
    except ValueError as exc:
        raise InvalidInput(str(exc)) from None
    _emit(obj, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lma", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def with_tol(p):
        p.add_argument("--tol", help="overall tolerance (e.g. 1e-8) or key=value list")
        return p

    p = with_tol(sub.add_parser("analyze", help="dimensions, support relation, witness dimensions"))
    p.add_argument("algebra")
    p.add_argument("--dot", action="store_true", help="print the support digraph in dot format")
    p.set_defaults(func=cmd_analyze)

    p = with_tol(sub.add_parser("triangularize", help="certificate or failure report"))
    p.add_argument("algebra")
    p.add_argument("--out")
    p.set_defaults(func=cmd_triangularize)

    p = with_tol(sub.add_parser("check", help="logmodularity verdict"))
    p.add_argument("algebra", nargs="+")
    p.add_argument("--witnesses", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=16)
    p.add_argument("--batch", action="store_true", help="process files in parallel")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_check)

    p = with_tol(sub.add_parser("factor", help="factor B = a*a inside the algebra"))
    p.add_argument("algebra")
    p.add_argument("B")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--cert")
    group.add_argument("--search", action="store_true")
    p.add_argument("--restarts", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_factor)

    p = with_tol(sub.add_parser("chol", help="Cholesky factor of a positive definite matrix"))
    p.add_argument("B")
    p.add_argument("--reverse", action="store_true", help="R R* = B instead of R* R = B")
    p.set_defaults(func=cmd_chol)

    p = with_tol(sub.add_parser("gen", help="generate a test instance"))
    p.add_argument("--partition", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tamper", choices=TAMPER_KINDS, default="none")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidInput as exc:
        sys.stderr.write(f"lma: invalid input: {exc}\n")
        return EXIT_INVALID
    except ValueError as exc:
        # malformed LMA_TOL / --tol
        sys.stderr.write(f"lma: {exc}\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
