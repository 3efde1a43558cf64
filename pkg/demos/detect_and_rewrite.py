"""Walk one sparse kernel through the whole pipeline.

A FORTRAN-style CSR product (1-based counters, counting down) is normalized,
matched against the spmv_csr computation, rewritten into a library call and
run on the 5x5 example matrix, before and after.

    python3 demos/detect_and_rewrite.py
"""

from lilac.analysis import normalize
from lilac.datasets import corpus_path, corpus_text, example_instance, fixture, run_fixture
from lilac.interp import HarnessRegistry, register_reference_harnesses
from lilac.ir import parse_ir, print_ir
from lilac.lilacfile import parse_lilac
from lilac.matcher import detect
from lilac.rewrite import rewrite

spec = parse_lilac(corpus_path("spec.lilac").read_text())
spmv = next(w for w in spec.whats if w.name == "spmv_csr")
fx = fixture("csr_fortran.lir")
program = parse_ir(corpus_text(fx.file))

print("== input loop nest ==")
print(print_ir(program))

# Counters are rebased to start at zero and compare with `<` so the matcher
# only ever sees one loop shape.
print("== after normalization ==")
print(print_ir(normalize(program)))

(match,) = detect(program, spmv)
print("== match ==")
for name, value in match.solution.names.items():
    print(f"  {name:8} -> {value}")

rewritten = rewrite(program, [match], spec.whats)
print("\n== rewritten ==")
print(print_ir(rewritten))

# The reference harness evaluates the computation directly, so any
# difference from the original loop would point at the rewrite.
harnesses = HarnessRegistry()
register_reference_harnesses(harnesses, spec.whats)
for x in ([1, 1, 1, 1, 1], [1, 2, 3, 4, 5]):
    data = fx.data(example_instance("csr", x))
    before = run_fixture(program, fx, data)["output"]
    after = run_fixture(rewritten, fx, data, harnesses=harnesses)["output"]
    print(f"x={x}: loop {before}  harness {after}")
