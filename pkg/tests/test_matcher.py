import pytest

from conftest import load
from lilac.analysis import normalize
from lilac.datasets import VARIANTS, fixture
from lilac.matcher import candidates, detect, detect_with_diagnostics, skeleton_of, solve

BACKTRACK_TRACE = """\
seed i <- %18
seed 0 <- 0
seed length <- %14
seed dot <- %25
1: a[i] <- %21
2: a <- %9
3: b[i] <- %21
4: b <- %9
5: a[i] * b[i] <- fail!
backtrack to 3
6: b[i] <- %23
7: b <- %12
8: a[i] * b[i] <- %24
9: result <- %25"""


def test_skeleton_depths(whats):
    assert skeleton_of(whats["dotproduct"]).forall_depth == 0
    assert skeleton_of(whats["spmv_csr"]).forall_depth == 1
    assert skeleton_of(whats["spmv_jds"]).forall_depth == 1
    assert skeleton_of(whats["gemm"]).forall_depth == 2


@pytest.mark.parametrize(
    "name, what, count",
    [
        ("csr_c.lir", "spmv_csr", 1),
        ("saxpy.lir", "dotproduct", 0),
        ("two_dots.lir", "dotproduct", 2),
        ("gemm_c.lir", "gemm", 1),
        ("dot_icmp_ne.lir", "dotproduct", 0),
    ],
)
def test_candidate_counts(name, what, count, whats):
    m = normalize(load(name))
    assert len(candidates(m, skeleton_of(whats[what]))) == count


def test_backtracking_trace(whats):
    (mt,) = detect(load("backtrack.lir"), whats["dotproduct"])
    assert mt.trace.format() == BACKTRACK_TRACE


def test_trace_replay_agrees_with_solution(whats):
    for fx in VARIANTS + (fixture("backtrack.lir"), fixture("two_dots.lir")):
        for mt in detect(load(fx.file), whats[fx.computation]):
            replay = mt.trace.replay()
            nodes = {k: str(v) for k, v in mt.solution.nodes.items()}
            assert replay.items() <= nodes.items()
            assert replay  # every match records its assignments


def test_csr_bindings(whats):
    (mt,) = detect(load("csr_c.lir"), whats["spmv_csr"])
    assert {k: str(v) for k, v in mt.solution.names.items()} == {
        "rows": "%rows",
        "output": "%output",
        "row_ptr": "%row_ptr",
        "val": "%val",
        "x": "%x",
        "col_ind": "%col_ind",
    }
    assert mt.solution.iterators == {"i": "i", "j": "j"}
    assert mt.header == "outer"


def test_extra_addend_does_not_match(whats):
    assert detect(load("dot_extra_addend.lir"), whats["dotproduct"]) == []


@pytest.mark.parametrize("fx", VARIANTS, ids=lambda f: f.file)
def test_every_source_style_matches_once(fx, whats):
    assert len(detect(load(fx.file), whats[fx.computation])) == 1


@pytest.mark.parametrize(
    "name, what",
    [("jds_c.lir", "spmv_csr"), ("csr_c.lir", "spmv_jds"), ("csr_c.lir", "gemm"), ("gemm_c.lir", "spmv_csr")],
)
def test_formats_are_not_confused(name, what, whats):
    assert detect(load(name), whats[what]) == []


def test_two_dots_in_block_order(whats):
    found = detect(load("two_dots.lir"), whats["dotproduct"])
    assert [str(mt.solution.names["a"]) for mt in found] == ["%a", "%c"]
    assert found[0].header != found[1].header


def test_detection_is_deterministic(whats):
    runs = [[mt.to_json(trace=True) for mt in detect(load("csr_cpp.lir"), whats["spmv_csr"])] for _ in range(3)]
    assert runs[0] == runs[1] == runs[2]


def test_tiny_budget_raises_and_is_reported(whats):
    from lilac.errors import BudgetExceeded

    m = normalize(load("backtrack.lir"))
    (cand,) = candidates(m, skeleton_of(whats["dotproduct"]))
    with pytest.raises(BudgetExceeded):
        solve(m, cand, whats["dotproduct"], budget=2)
    result = detect_with_diagnostics(m, whats["dotproduct"], budget=2)
    assert result.matches == []
    assert [d.code for d in result.diagnostics] == ["BudgetExceeded"]
