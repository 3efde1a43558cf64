import copy

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lilac.datasets import EXAMPLE_CSR, csr_instance, csr_to_dense, dense_spmv, random_csr
from lilac.errors import (
    DuplicateIterator,
    EmptyBody,
    KindConflict,
    MultiIndexUnsupported,
    OutOfBounds,
    ParseError,
    UnboundVariable,
)
from lilac.what import (
    Add,
    Addr,
    Const,
    DotOp,
    ForAll,
    Kind,
    Mul,
    Name,
    Range,
    WhatProgram,
    infer_interface,
    interpret_what,
    parse_what,
    print_what,
)

SPMV = """COMPUTATION spmv_csr
forall (0 <= i < rows) {
  output[i] = dot(row_ptr[i] <= j < row_ptr[i+1]) val[j] * x[col_ind[j]];
}"""
DOT = "COMPUTATION dotproduct result = sum(0 <= i < length) a[i] * b[i];"


def sig(p):
    return [(q.name, q.kind) for q in infer_interface(p)]


def test_dotproduct_parses_to_a_bare_reduction():
    (p,) = parse_what(DOT)
    assert isinstance(p.body, DotOp)
    assert p.body.keyword == "sum"
    assert {q.name for q in infer_interface(p)} == {"result", "length", "a", "b"}


def test_spmv_parses_to_one_forall_around_a_reduction():
    (p,) = parse_what(SPMV)
    assert isinstance(p.body, ForAll)
    assert isinstance(p.body.body, DotOp)
    assert p.iterators == ["i", "j"]


def test_dot_and_sum_are_synonyms():
    (a,) = parse_what(DOT)
    (b,) = parse_what(DOT.replace("sum", "dot"))
    assert a.body.range == b.body.range and a.body.lhs == b.body.lhs


@pytest.mark.parametrize(
    "text, error",
    [
        ("COMPUTATION x forall (0 <= i < n) { }", EmptyBody),
        ("COMPUTATION x", EmptyBody),
        ("COMPUTATION x forall (0 <= i < n) { y[i] = dot(0 <= i < n) a[i] * b[i]; }", DuplicateIterator),
        ("COMPUTATION x y = dot(0 <= i < n) a[i][i] * b[i];", MultiIndexUnsupported),
        ("COMPUTATION x y = dot(0 <= i < n) a[i] + b[i];", ParseError),
        ("COMPUTATION x y = dot(0 <= i < i) a[i] * b[i];", ParseError),
        ("COMPUTATION x y = dot(0 <= i < n) a * b[i];", ParseError),
        ("", ParseError),
    ],
)
def test_malformed_programs_are_rejected(text, error):
    with pytest.raises(error):
        parse_what(text)


def test_syntax_errors_carry_positions():
    with pytest.raises(ParseError) as info:
        parse_what("COMPUTATION x\n  y = dot(0 <= i < n) a[i] ? b[i];")
    assert info.value.line == 2 and info.value.col > 0


def test_spmv_interface_follows_usage_rules():
    (p,) = parse_what(SPMV)
    assert sig(p) == [
        ("rows", Kind.SCALAR_INT),
        ("output", Kind.ARRAY_FLOAT_OUT),
        ("row_ptr", Kind.ARRAY_INT),
        ("val", Kind.ARRAY_FLOAT_IN),
        ("x", Kind.ARRAY_FLOAT_IN),
        ("col_ind", Kind.ARRAY_INT),
    ]


def test_dot_interface_has_a_length_one_output():
    (p,) = parse_what(DOT)
    params = infer_interface(p)
    assert sig(p) == [
        ("result", Kind.ARRAY_FLOAT_OUT),
        ("length", Kind.SCALAR_INT),
        ("a", Kind.ARRAY_FLOAT_IN),
        ("b", Kind.ARRAY_FLOAT_IN),
    ]
    assert params[0].scalar_target


def test_value_and_index_roles_conflict():
    (p,) = parse_what("COMPUTATION bad y = dot(0 <= i < n) v[i] * x[v[i]];")
    with pytest.raises(KindConflict):
        infer_interface(p)


def test_interface_is_stable_across_reparses(spec):
    for w in spec.whats:
        again = parse_what(print_what(w))[0]
        assert infer_interface(again) == infer_interface(w)


def _spmv_env(x):
    return {**{k: list(v) if isinstance(v, list) else v for k, v in EXAMPLE_CSR.items()}, "x": x, "output": [0.0] * 5}


@pytest.mark.parametrize("x, expected", [([1.0] * 5, [2, 4, 4, 2, 0]), ([1.0, 2.0, 3.0, 4.0, 5.0], [4, 12, 15, 8, 2])])
def test_spmv_on_the_example_matrix(x, expected):
    (p,) = parse_what(SPMV)
    out = interpret_what(p, _spmv_env(x))
    assert out["output"] == [float(v) for v in expected]
    dense = csr_to_dense(5, 5, EXAMPLE_CSR["val"], EXAMPLE_CSR["col_ind"], EXAMPLE_CSR["row_ptr"])
    assert out["output"] == list(dense @ np.array(x))


def test_orthogonal_dot_is_zero():
    (p,) = parse_what(DOT)
    out = interpret_what(p, {"length": 2, "a": [1.0, 0.0], "b": [0.0, 1.0], "result": [5.0]})
    assert out["result"] == [0.0]


def test_unbound_and_out_of_range_accesses():
    (p,) = parse_what(DOT)
    with pytest.raises(UnboundVariable):
        interpret_what(p, {"length": 1, "a": [1.0], "result": [0.0]})
    with pytest.raises(OutOfBounds):
        interpret_what(p, {"length": 3, "a": [1.0], "b": [1.0], "result": [0.0]})


def test_spmv_matches_dense_brute_force_on_random_matrices():
    (p,) = parse_what(SPMV)
    rng = np.random.default_rng(7)
    for _ in range(50):
        csr = random_csr(rng, max_n=64, max_density=0.3)
        n = csr["rows"]
        x = list(rng.standard_normal(n))
        out = interpret_what(p, csr_instance(csr, x))["output"]
        dense = csr_to_dense(n, n, csr["val"], csr["col_ind"], csr["row_ptr"])
        assert out == dense_spmv(dense, x)


def test_only_the_target_is_written(spec):
    rng = np.random.default_rng(3)
    (p,) = parse_what(SPMV)
    env = csr_instance(random_csr(rng), rng.standard_normal(64))
    env["x"] = env["x"] + [0.0] * 64
    shadow = copy.deepcopy(env)
    out = interpret_what(p, env)
    for k in env:
        if k != "output":
            assert out[k] == shadow[k]
    assert env == shadow  # the caller's bindings are untouched


# ---------------------------------------------------------------- round trip

_names = st.sampled_from(["n", "m", "k", "len", "off"])
_arrays = st.sampled_from(["idx", "ptr", "perm"])


def _int_expr(depth, iterators):
    leaves = [_names.map(Name), st.integers(0, 9).map(Const)]
    if iterators:
        leaves.append(st.sampled_from(iterators).map(Name))
    leaf = st.one_of(*leaves)
    if depth == 0:
        return leaf
    sub = _int_expr(depth - 1, iterators)
    return st.one_of(
        leaf,
        st.builds(Add, sub, sub),
        st.builds(Mul, sub, sub),
        st.builds(lambda b, e: Addr(b, (e,)), _arrays, sub),
    )


@st.composite
def programs(draw):
    depth = draw(st.integers(0, 2))
    its = ["i", "j", "k2"][: depth + 1]
    ranges = []
    for d in range(depth + 1):
        lo = draw(_int_expr(1, its[:d]))
        hi = draw(_int_expr(1, its[:d]))
        ranges.append(Range(lo, its[d], hi))
    visible = its
    target = Addr("out", (draw(_int_expr(1, its[:depth])),)) if depth else Addr("out", ())
    lhs = Addr("u", (draw(_int_expr(2, visible)),))
    rhs = Addr("w", (draw(_int_expr(2, visible)),))
    body = DotOp(target, ranges[-1], lhs, rhs, draw(st.sampled_from(["dot", "sum"])))
    for r in reversed(ranges[:-1]):
        body = ForAll(r, body)
    return WhatProgram("gen", body)


@settings(max_examples=100, deadline=None)
@given(programs())
def test_print_then_parse_is_identity(p):
    text = print_what(p)
    (q,) = parse_what(text)
    assert q == p
    assert print_what(q) == text
