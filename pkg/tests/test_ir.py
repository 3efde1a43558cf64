import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from conftest import load
from lilac.datasets import FIXTURES
from lilac.errors import ParseError, TypeAnnotationMismatch, TypeTrap, UnknownOpcode
from lilac.interp import Memory, run
from lilac.ir import Block, Function, Instr, Lit, Module, Var, parse_ir, print_ir, verify

ALL = [f.file for f in FIXTURES]

DOT = """
func @dot(%a: ptr f64, %b: ptr f64, %n: i64) -> f64 {
entry:
  br loop
loop:
  %i = phi [0, entry], [%i.next, loop]
  %s = phi [0.0, entry], [%s.next, loop]
  %pa = elemptr %a, %i
  %x = load %pa
  %pb = elemptr %b, %i
  %y = load %pb
  %m = fmul %x, %y
  %s.next = fadd %s, %m
  %i.next = add %i, 1
  %c = icmp.slt %i.next, %n
  condbr %c, loop, exit
exit:
  ret %s.next
}
"""


def codes(m):
    return [d.code for d in verify(m)]


def test_dot_loop_parses_into_three_blocks():
    (f,) = parse_ir(DOT).functions
    assert [b.label for b in f.blocks] == ["entry", "loop", "exit"]
    assert f.block("loop").phis[0].labels == ["entry", "loop"]
    assert codes(parse_ir(DOT)) == []


@pytest.mark.parametrize(
    "text, error",
    [
        ("ret", ParseError),
        ("func @f() -> void {\n}", ParseError),
        ("func @f() -> void {\nentry:\n  %x = frob 1, 2\n  ret\n}", UnknownOpcode),
        ("func @f() -> void {\nentry:\n  ret 1\n}", TypeAnnotationMismatch),
        ("func @f() -> i64 {\nentry:\n  ret 1.5\n}", TypeAnnotationMismatch),
        ("func @f() -> void {\nentry:\n  ret\n", ParseError),
        ("func @f(%x: i32) -> void {\nentry:\n  ret\n}", ParseError),
        ("func @f() -> void {\nentry:\n  %s = store 1, %p\n  ret\n}", ParseError),
        ("func @f() -> void {\nentry:\n  ret\nentry:\n  ret\n}", ParseError),
    ],
)
def test_malformed_ir_is_rejected(text, error):
    with pytest.raises(error):
        parse_ir(text)


@pytest.mark.parametrize("name", ALL)
def test_corpus_verifies(name):
    assert verify(load(name)) == []


@pytest.mark.parametrize("name", ALL)
def test_corpus_round_trips(name):
    m = load(name)
    text = print_ir(m)
    again = parse_ir(text)
    assert again == m
    assert print_ir(again) == text


def test_empty_module_prints_as_nothing():
    assert print_ir(Module()) == ""


def test_use_outside_the_defining_branch_is_a_dominance_violation():
    m = parse_ir(
        """
func @f(%c: i1) -> i64 {
entry:
  condbr %c, left, right
left:
  %x = add 1, 2
  br join
right:
  br join
join:
  %y = add %x, 1
  ret %y
}"""
    )
    assert "DominanceViolation" in codes(m)


def test_missing_terminator_is_reported():
    f = Function("f", [], "void", [Block("entry", [Instr("add", [Lit("i64", 1), Lit("i64", 2)], "x")])])
    assert codes(Module([f])) == ["MissingTerminator"]


@pytest.mark.parametrize(
    "body, code",
    [
        ("%x = fadd %n, 1.0\n  ret", "TypeMismatch"),
        ("%p = elemptr %n, 0\n  ret", "TypeMismatch"),
        ("store 1.0, %q\n  ret", "TypeMismatch"),
        ("%z = add %undefined, 1\n  ret", "UndefinedValue"),
        ("call @nowhere(%n)\n  ret", "UnknownCallee"),
        ("%x = call @lilac.harness(%n)\n  ret", "TypeMismatch"),
        ("%a = add %n, 1\n  %a = add %n, 2\n  ret", "DuplicateDefinition"),
    ],
)
def test_type_and_definition_errors(body, code):
    m = parse_ir(f"func @f(%n: i64, %q: ptr i64) -> void {{\nentry:\n  {body}\n}}")
    assert code in codes(m)


def test_phi_must_cover_predecessors():
    m = parse_ir(
        """
func @f(%c: i1) -> i64 {
entry:
  condbr %c, a, b
a:
  br j
b:
  br j
j:
  %v = phi [1, a]
  ret %v
}"""
    )
    assert "PhiCoverage" in codes(m)


# ---------------------------------------------------------------- random modules

PARAMS = [("n", "i64"), ("x", "f64"), ("p", "ptr f64"), ("q", "ptr i64")]


@st.composite
def modules(draw):
    """Forward-branching functions whose values never cross blocks except via phis."""
    nblocks = draw(st.integers(1, 5))
    ret_type = draw(st.sampled_from(["void", "i64", "f64"]))
    labels = [f"b{k}" if k else "entry" for k in range(nblocks)]
    blocks = [Block(l) for l in labels]
    succs = {}
    for k in range(nblocks - 1):
        later = labels[k + 1 :]
        if len(later) > 1 and draw(st.booleans()):
            succs[k] = [labels[k + 1], draw(st.sampled_from(later[1:]))]
        else:
            succs[k] = [labels[k + 1]]
    preds = {l: [] for l in labels}
    for k, ss in succs.items():
        for s in ss:
            preds[s].append(labels[k])
    counter = [0]

    def fresh():
        counter[0] += 1
        return f"v{counter[0]}"

    for k, b in enumerate(blocks):
        pool = {"i64": [Var("n")], "f64": [Var("x")], "ptr f64": [Var("p")], "ptr i64": [Var("q")], "i1": []}
        if preds[b.label] and draw(st.booleans()):
            ty = draw(st.sampled_from(["i64", "f64"]))
            lits = [Lit(ty, draw(st.integers(-5, 5)) if ty == "i64" else float(draw(st.integers(-5, 5)))) for _ in preds[b.label]]
            name = fresh()
            b.instrs.append(Instr("phi", lits, name, labels=list(preds[b.label])))
            pool[ty].append(Var(name))
        for _ in range(draw(st.integers(0, 6))):
            kind = draw(st.sampled_from(["int", "float", "cmp", "load", "store", "alloc"]))
            name = fresh()
            if kind == "int":
                op = draw(st.sampled_from(["add", "sub", "mul"]))
                args = [draw(st.sampled_from(pool["i64"] + [Lit("i64", 3)])) for _ in range(2)]
                b.instrs.append(Instr(op, args, name))
                pool["i64"].append(Var(name))
            elif kind == "float":
                op = draw(st.sampled_from(["fadd", "fsub", "fmul"]))
                args = [draw(st.sampled_from(pool["f64"] + [Lit("f64", 0.5)])) for _ in range(2)]
                b.instrs.append(Instr(op, args, name))
                pool["f64"].append(Var(name))
            elif kind == "cmp":
                op = draw(st.sampled_from(["icmp.eq", "icmp.ne", "icmp.slt", "icmp.sle"]))
                args = [draw(st.sampled_from(pool["i64"])) for _ in range(2)]
                b.instrs.append(Instr(op, args, name))
                pool["i1"].append(Var(name))
            elif kind in ("load", "store"):
                ty = draw(st.sampled_from(["f64", "i64"]))
                base = draw(st.sampled_from(pool["ptr " + ty]))
                ptr = fresh()
                b.instrs.append(Instr("elemptr", [base, Lit("i64", 0)], ptr))
                if kind == "load":
                    b.instrs.append(Instr("load", [Var(ptr)], name))
                    pool[ty].append(Var(name))
                else:
                    b.instrs.append(Instr("store", [draw(st.sampled_from(pool[ty])), Var(ptr)]))
            else:
                ty = draw(st.sampled_from(["f64", "i64"]))
                b.instrs.append(Instr("call", [Lit("i64", 2)], name, callee=f"lilac.alloc.{ty}"))
                pool["ptr " + ty].append(Var(name))
        if k in succs:
            ss = succs[k]
            if len(ss) == 2:
                if not pool["i1"]:
                    c = fresh()
                    b.instrs.append(Instr("icmp.slt", [Var("n"), Lit("i64", 1)], c))
                    pool["i1"].append(Var(c))
                b.instrs.append(Instr("condbr", [draw(st.sampled_from(pool["i1"]))], labels=ss))
            else:
                b.instrs.append(Instr("br", [], labels=ss))
        else:
            args = [] if ret_type == "void" else [draw(st.sampled_from(pool[ret_type]))]
            b.instrs.append(Instr("ret", args))
    return Module([Function("gen", list(PARAMS), ret_type, blocks)])


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(modules())
def test_random_modules_round_trip_and_run(m):
    assert verify(m) == []
    text = print_ir(m)
    again = parse_ir(text)
    assert again == m
    assert print_ir(again) == text
    # verified modules never trap on types
    mem = Memory()
    args = [4, 1.5, mem.alloc("f64", [2.0]), mem.alloc("i64", [7])]
    run(m, "gen", args, mem)


@settings(max_examples=50, deadline=None)
@given(modules(), st.data())
def test_retyped_operands_fail_verification_and_trap(m, data):
    f = m.functions[0]
    sites = [
        (b, ins)
        for b in f.blocks
        for ins in b.instrs
        if ins.opcode in ("add", "sub", "mul", "fadd", "fsub", "fmul") and ins.result
    ]
    if not sites:
        return
    b, ins = data.draw(st.sampled_from(sites))
    ins.args[0] = Var("p")  # a pointer where a number belongs
    assert "TypeMismatch" in codes(m)
    reached = {bl.label for bl in f.blocks}
    mem = Memory()
    args = [4, 1.5, mem.alloc("f64", [2.0]), mem.alloc("i64", [7])]
    try:
        run(m, "gen", args, mem)
    except TypeTrap:
        return
    # only possible when the mutated block was never executed
    assert reached
