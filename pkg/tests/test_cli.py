import json

import pytest

from lilac import __version__
from lilac.cli import main
from lilac.datasets import corpus_path, corpus_text, example_instance, fixture

SPEC = str(corpus_path("spec.lilac"))


def corpus(name):
    return str(corpus_path(name))


@pytest.fixture
def example_data(tmp_path):
    path = tmp_path / "example.json"
    path.write_text(json.dumps(example_instance("csr")))
    return str(path)


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
    assert capsys.readouterr().out.startswith(f"lilac {__version__}")


def test_check_accepts_shipped_spec(capsys):
    assert main(["check", SPEC]) == 0


def test_check_reports_invalid_spec(tmp_path, capsys):
    bad = tmp_path / "bad.lilac"
    bad.write_text("COMPUTATION d\nresult = sum(0 <= i < n) a[i] * b[i];\nHARNESS h IMPLEMENTS nope { }\n")
    assert main(["check", str(bad)]) == 2
    assert "UnknownComputation" in capsys.readouterr().err


def test_unparsable_and_missing_inputs(tmp_path, capsys):
    empty = tmp_path / "empty.lilac"
    empty.write_text("COMPUTATION\n")
    assert main(["check", str(empty)]) == 1
    assert main(["check", str(tmp_path / "missing.lilac")]) == 1


def test_detect_json(capsys):
    assert main(["detect", "--what", "spmv_csr", "--format", "json", SPEC, corpus("csr_c.lir")]) == 0
    (rec,) = json.loads(capsys.readouterr().out)
    assert rec["what"] == "spmv_csr"
    assert rec["bindings"] == {n: "%" + n for n in ("rows", "output", "row_ptr", "val", "x", "col_ind")}


def test_detect_trace_text(capsys):
    assert main(["detect", "--what", "dotproduct", "--trace", SPEC, corpus("backtrack.lir")]) == 0
    out = capsys.readouterr().out
    assert "5: a[i] * b[i] <- fail!" in out
    assert "backtrack to 3" in out


def test_detect_without_match(capsys):
    assert main(["detect", "--what", "dotproduct", SPEC, corpus("saxpy.lir")]) == 3


def test_detect_budget(capsys):
    assert main(["detect", "--what", "dotproduct", "--budget", "2", SPEC, corpus("backtrack.lir")]) == 5
    assert "BudgetExceeded" in capsys.readouterr().err


def test_run_example(example_data, capsys):
    assert main(["run", corpus("csr_c.lir"), "--entry", "spmv", "--data", example_data]) == 0
    assert "output=[2,4,4,2,0]" in capsys.readouterr().out.splitlines()


def test_rewrite_then_run_with_marshaling(tmp_path, example_data, capsys):
    out = tmp_path / "csr.rw.lir"
    assert main(["rewrite", "--what", "spmv_csr", "--harness", "cusparse_spmv", "-o", str(out), SPEC, corpus("csr_fortran.lir")]) == 0
    assert "call @lilac.spmv_csr(" in out.read_text()
    capsys.readouterr()
    args = ["run", str(out), "--entry", "spmv", "--data", example_data, "--with-reference-harness", SPEC]
    assert main(args + ["--marshal-strategy", "exact", "--stats", "--format", "json"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["output"] == [2.0, 4.0, 4.0, 2.0, 0.0]
    assert {s["n_construct"] for s in result["stats"]} == {1}


def test_rewrite_rejects_mismatched_harness(tmp_path, capsys):
    assert main(["rewrite", "--what", "spmv_csr", "--harness", "naive_dot", SPEC, corpus("csr_c.lir")]) == 2


def test_rewrite_without_match_copies_input(tmp_path, capsys):
    out = tmp_path / "saxpy.lir"
    assert main(["rewrite", "--what", "dotproduct", "-o", str(out), SPEC, corpus("saxpy.lir")]) == 3
    assert out.read_text() == corpus_text("saxpy.lir")


def test_rewrite_refuses_side_effects(capsys):
    assert main(["rewrite", "--what", "spmv_csr", SPEC, corpus("csr_side_effect.lir")]) == 2
    assert "SideEffectsInLoop" in capsys.readouterr().err


def test_run_without_data_is_unbound(capsys):
    assert main(["run", corpus("infinite_loop.lir"), "--entry", "spin"]) == 4
    assert "UnboundVariable" in capsys.readouterr().err


def test_step_limit_is_a_trap(tmp_path, capsys):
    data = tmp_path / "n.json"
    data.write_text('{"n": 5}')
    assert main(["run", corpus("infinite_loop.lir"), "--entry", "spin", "--data", str(data), "--step-limit", "1000"]) == 4
    assert "StepLimitExceeded" in capsys.readouterr().err


def test_normalize(tmp_path, capsys):
    assert main(["normalize", corpus("dot_fortran.lir")]) == 0
    assert "icmp.slt %i, %n" in capsys.readouterr().out


def test_gen_harness(tmp_path, capsys):
    assert main(["gen-harness", "-o", str(tmp_path), SPEC]) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == sorted(f"{h}.gen.cpp" for h in ("mkl_spmv", "cusparse_spmv", "naive_dot", "naive_jds", "blas_gemm"))
    assert main(["gen-harness", "--harness", "nope", "-o", str(tmp_path), SPEC]) == 2
