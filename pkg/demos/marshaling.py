"""Count host-to-device copies for a repeated sparse product.

The program multiplies the same CSR matrix by a vector three times, copying
the result back into the vector each round.  After rewriting, every harness
call routes its inputs through marshal objects.  The matrix arrays are
copied once, and x is copied again only after the program overwrites it.
The naive strategy copies everything on every call.

Then a longer synthetic trace: 1000 calls, 10 writes.

    python3 demos/marshaling.py
"""

import numpy as np

from lilac.datasets import corpus_path, corpus_text, example_instance, fixture, run_fixture
from lilac.interp import HarnessRegistry, Memory, register_reference_harnesses
from lilac.ir import parse_ir
from lilac.lilacfile import parse_lilac
from lilac.marshal import HOOK_LIBRARY, MarshalContext, MarshalObject, Strategy, pageprotect_available
from lilac.matcher import detect
from lilac.rewrite import rewrite

spec = parse_lilac(corpus_path("spec.lilac").read_text())
spmv = next(w for w in spec.whats if w.name == "spmv_csr")
fx = fixture("spmv_repeat.lir")
program = parse_ir(corpus_text(fx.file))
rewritten = rewrite(program, detect(program, spmv), spec.whats)
data = fx.data(example_instance("csr", [1, 2, 3, 4, 5]))
expected = run_fixture(program, fx, data)["output"]

strategies = ["naive", "checksum", "exact"] + (["pageprotect"] if pageprotect_available() else [])
for strategy in strategies:
    ctx = MarshalContext(strategy)
    harnesses = HarnessRegistry()
    register_reference_harnesses(harnesses, spec.whats, marshal=ctx)
    got = run_fixture(rewritten, fx, data, harnesses=harnesses, marshal_page_backed=strategy == "pageprotect")
    ctx.release_all()
    copies = {s["region"].split("/")[1]: s["n_update"] for s in ctx.stats()}
    print(f"{strategy:12} output {'ok' if got['output'] == expected else 'WRONG'}  copies {copies}")

print()
for strategy in strategies:
    mem = Memory(page_backed=True)
    buf = mem.buffer(mem.alloc("f64", np.zeros(4096)))
    obj = MarshalObject(HOOK_LIBRARY["CudaRead"], Strategy(strategy))
    for call in range(1000):
        if call % 100 == 50:
            buf.store(call, 1.0)
        obj.acquire(buf)
    obj.release()
    print(f"{strategy:12} {obj.counters.as_dict()}")
