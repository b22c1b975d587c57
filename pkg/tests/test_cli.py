import json
import subprocess
import sys

import numpy as np
import pytest

from lma.algebra import algebra_from_json
from lma.cli import EXIT_INVALID, EXIT_NO, EXIT_OK, InstanceSpec, generate_instance, main
from lma.algebra import Partition
from lma.matcore import matrix_from_json, matrix_to_json


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def files(tmp_path, capsys):
    def gen(partition, seed=0, tamper="none"):
        path = tmp_path / f"alg_{partition}_{seed}_{tamper}.json"
        code, _, _ = run(["gen", "--partition", partition, "--seed", seed, "--tamper", tamper,
                          "--out", path], capsys)
        assert code == EXIT_OK
        return path

    def matrix(name, m):
        path = tmp_path / name
        path.write_text(json.dumps(matrix_to_json(np.asarray(m, dtype=complex))))
        return path

    return gen, matrix


class TestGen:
    def test_untampered_dimension(self):
        alg = algebra_from_json(generate_instance(InstanceSpec(Partition((1, 2)), 42)))
        assert alg.dim == 7 and alg.n == 3

    def test_diagonal_tamper(self):
        alg = algebra_from_json(generate_instance(InstanceSpec(Partition((2, 2)), 1,
                                                               "replace-with-diagonal")))
        assert alg.dim == 4

    def test_drop_tamper_loses_one_dimension(self):
        alg = algebra_from_json(generate_instance(InstanceSpec(Partition((1, 1, 2)), 5,
                                                               "drop-basis-element")))
        assert alg.dim == 1 + 1 + 4 + 1 + 2 + 2 - 1

    def test_drop_tamper_fallback(self):
        # no single off-block unit can be dropped from nest(1,3,1) keeping closure
        alg = algebra_from_json(generate_instance(InstanceSpec(Partition((1, 3, 1)), 5,
                                                               "drop-basis-element")))
        assert alg.dim == 1 + 10

    def test_byte_identical(self, files):
        gen, _ = files
        a = gen("2,1,3", 11).read_bytes()
        b = gen("2,1,3", 11).read_bytes()
        assert a == b

    def test_different_seeds_differ(self, files):
        gen, _ = files
        assert gen("2,1", 1).read_bytes() != gen("2,1", 2).read_bytes()

    def test_bad_partition(self, capsys):
        assert run(["gen", "--partition", "2,x"], capsys)[0] == EXIT_INVALID
        assert run(["gen", "--partition", "1", "--tamper", "drop-basis-element"], capsys)[0] == EXIT_INVALID


class TestCheck:
    def test_exit_codes(self, files, capsys):
        gen, _ = files
        code, out, _ = run(["check", gen("1,2", 3)], capsys)
        assert code == EXIT_OK and json.loads(out)["decision"] == "Logmodular"
        for tamper in ("drop-basis-element", "replace-with-diagonal"):
            code, out, _ = run(["check", gen("1,2", 3, tamper), "--restarts", 2], capsys)
            assert code == EXIT_NO and json.loads(out)["decision"] == "NotLogmodular"

    def test_malformed_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run(["check", bad], capsys)[0] == EXIT_INVALID

    def test_unclosed_algebra_rejected(self, tmp_path, capsys):
        # E_01 and E_10 without their products
        obj = json.loads(json.dumps({"n": 2, "unital": True, "basis": [
            matrix_to_json(np.eye(2)), matrix_to_json(np.array([[0, 1], [0, 0]])),
            matrix_to_json(np.array([[0, 0], [1, 0]]))]}))
        path = tmp_path / "open.json"
        path.write_text(json.dumps(obj))
        assert run(["check", path], capsys)[0] == EXIT_INVALID

    def test_missing_file(self, capsys):
        code, out, _ = run(["check", "/nonexistent/alg.json"], capsys)
        assert code == EXIT_INVALID and "error" in json.loads(out)

    def test_batch_order_and_worst_code(self, files, capsys):
        gen, _ = files
        paths = [gen("2,1", 0), gen("1,1", 0, "replace-with-diagonal"), gen("1,1,1", 4)]
        code, out, _ = run(["check", *paths, "--batch", "--jobs", 2, "--witnesses", 2,
                            "--restarts", 2], capsys)
        res = json.loads(out)
        assert code == EXIT_NO
        assert [r["file"] for r in res] == [str(p) for p in paths]
        assert [r["decision"] for r in res] == ["Logmodular", "NotLogmodular", "Logmodular"]

    def test_tolerance_env_and_flag(self, files, capsys, monkeypatch):
        gen, _ = files
        path = gen("1,1", 0)
        monkeypatch.setenv("LMA_TOL", "garbage")
        assert run(["check", path, "--witnesses", 1], capsys)[0] == EXIT_INVALID
        # the flag wins over the environment
        assert run(["check", path, "--witnesses", 1, "--tol", "1e-8"], capsys)[0] == EXIT_OK
        monkeypatch.setenv("LMA_TOL", "member=1e-9")
        assert run(["check", path, "--witnesses", 1], capsys)[0] == EXIT_OK


class TestOtherCommands:
    def test_analyze(self, files, capsys):
        gen, _ = files
        code, out, _ = run(["analyze", gen("1,2", 42)], capsys)
        rep = json.loads(out)
        assert code == EXIT_OK and rep["dim"] == 7 and rep["unital"]
        assert rep["closure_defect"] < 1e-10
        assert len(rep["row_witness_dims"]) == 3

    def test_analyze_dot(self, files, capsys):
        gen, _ = files
        code, out, _ = run(["analyze", gen("1,1", 0, "replace-with-diagonal"), "--dot"], capsys)
        assert code == EXIT_OK
        assert out == "digraph G {\n  0 -> 0;\n  1 -> 1;\n}\n"

    def test_triangularize(self, files, capsys, tmp_path):
        gen, _ = files
        out_path = tmp_path / "cert.json"
        code, _, _ = run(["triangularize", gen("2,1", 8), "--out", out_path], capsys)
        assert code == EXIT_OK
        assert json.loads(out_path.read_text())["partition"] == [2, 1]
        code, out, _ = run(["triangularize", gen("2,1", 8, "replace-with-diagonal")], capsys)
        assert code == EXIT_NO and "failure" in json.loads(out)

    def test_factor_modes(self, files, capsys, tmp_path):
        gen, matrix = files
        alg = gen("1,1", 2)
        b = matrix("b.json", [[2, 0.5], [0.5, 1]])
        code, out, _ = run(["factor", alg, b], capsys)
        w = json.loads(out)
        assert code == EXIT_OK and w["residual"] < 1e-12
        cert = tmp_path / "cert.json"
        run(["triangularize", alg, "--out", cert], capsys)
        code, out, _ = run(["factor", alg, b, "--cert", cert], capsys)
        assert code == EXIT_OK and json.loads(out)["residual_c"] < 1e-12
        code, out, _ = run(["factor", alg, b, "--search", "--restarts", 3], capsys)
        assert code == EXIT_OK and json.loads(out)["residual"] < 1e-8

    def test_factor_shape_mismatch(self, files, capsys):
        gen, matrix = files
        assert run(["factor", gen("1,1", 0), matrix("b.json", np.eye(3))], capsys)[0] == EXIT_INVALID

    def test_chol(self, files, capsys):
        _, matrix = files
        b = np.array([[4, 2], [2, 2]], dtype=complex)
        path = matrix("b.json", b)
        code, out, _ = run(["chol", path], capsys)
        r = matrix_from_json(json.loads(out))
        assert code == EXIT_OK
        np.testing.assert_allclose(r.conj().T @ r, b, atol=1e-14)
        code, out, _ = run(["chol", path, "--reverse"], capsys)
        r = matrix_from_json(json.loads(out))
        np.testing.assert_allclose(r @ r.conj().T, b, atol=1e-14)

    def test_chol_not_pd(self, files, capsys):
        _, matrix = files
        code, out, _ = run(["chol", matrix("b.json", [[1, 2], [2, 1]])], capsys)
        assert code == EXIT_NO and json.loads(out)["pivot"] == 1


def test_module_entry_point(tmp_path):
    path = tmp_path / "a.json"
    gen = subprocess.run([sys.executable, "-m", "lma", "gen", "--partition", "1,1", "--out",
                          str(path)], capture_output=True)
    assert gen.returncode == 0
    check = subprocess.run([sys.executable, "-m", "lma", "check", str(path), "--witnesses", "2"],
                           capture_output=True, text=True)
    assert check.returncode == 0 and '"Logmodular"' in check.stdout
