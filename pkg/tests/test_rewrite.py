from pathlib import Path

import numpy as np
import pytest

from conftest import load
from lilac.datasets import FIXTURES, example_instance, fixture, random_instance, run_fixture
from lilac.errors import SideEffectsInLoop
from lilac.interp import exact_key
from lilac.ir import Var, print_ir, verify
from lilac.matcher import detect
from lilac.rewrite import SLOT, apply, plan, rewrite

GOLDEN = Path(__file__).parent / "golden"
POSITIVES = [f for f in FIXTURES if f.positive]


def test_csr_call_arguments_follow_the_interface(spec, whats):
    (mt,) = detect(load("csr_c.lir"), whats["spmv_csr"])
    pl = plan(mt, whats=spec.whats)
    assert pl.args == [Var(n) for n in ("rows", "output", "row_ptr", "val", "x", "col_ind")]
    assert not pl.scalar_result_slot


def test_stray_store_in_nest_is_refused(spec, whats):
    (mt,) = detect(load("csr_side_effect.lir"), whats["spmv_csr"])
    with pytest.raises(SideEffectsInLoop):
        plan(mt, whats=spec.whats)


def test_returned_reduction_goes_through_a_result_slot(spec, whats):
    (mt,) = detect(load("dot_cpp.lir"), whats["dotproduct"])
    pl = plan(mt, whats=spec.whats)
    assert pl.scalar_result_slot
    assert pl.args[0] == SLOT
    out = apply(mt.module, [pl])
    ops = [(i.opcode, i.callee) for b in out.function("dot").blocks for i in b.instrs if i.opcode == "call"]
    assert ops == [("call", "lilac.alloc.f64"), ("call", "lilac.dotproduct")]


def test_no_plans_returns_the_module_unchanged():
    m = load("saxpy.lir")
    assert apply(m, []) is m


def test_csr_rewrite_matches_golden(spec, whats):
    m = load("csr_c.lir")
    out = rewrite(m, detect(m, whats["spmv_csr"]), spec.whats)
    assert print_ir(out) == (GOLDEN / "csr_c.rewritten.lir").read_text(encoding="utf-8")


@pytest.mark.parametrize("fx", POSITIVES, ids=lambda f: f.file)
def test_rewritten_modules_verify_and_do_not_match_again(fx, spec, whats):
    m = load(fx.file)
    out = rewrite(m, detect(m, whats[fx.computation]), spec.whats)
    assert verify(out) == []
    assert detect(out, whats[fx.computation]) == []
    calls = [i.callee for b in out.function(fx.entry).blocks for i in b.instrs if i.opcode == "call"]
    assert "lilac." + fx.computation in calls


@pytest.mark.parametrize("fx", POSITIVES, ids=lambda f: f.file)
def test_rewrite_preserves_results_bit_for_bit(fx, spec, whats, registry, rng):
    m = load(fx.file)
    out = rewrite(m, detect(m, whats[fx.computation]), spec.whats)
    instances = [example_instance(fx.family)]
    instances += [random_instance(fx.family, rng) for _ in range(20)]
    for inst in instances:
        data = fx.data(inst, np.random.default_rng(7))
        before = run_fixture(m, fx, data)
        after = run_fixture(out, fx, data, harnesses=registry)
        assert exact_key(before) == exact_key(after)


def test_rewrite_without_matches_is_identity(spec):
    m = load("saxpy.lir")
    assert rewrite(m, [], spec.whats) is m
