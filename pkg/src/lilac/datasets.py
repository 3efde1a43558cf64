"""Sparse matrix data: the 5x5 example matrix, format converters, random
instances and per-fixture argument builders for the shipped corpus."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Callable

import numpy as np

# 5x5 example matrix in CSR form
EXAMPLE_CSR = {
    "rows": 5,
    "val": [1.0, 1.0, 2.0, 2.0, -1.0, 3.0, 2.0, 2.0, -1.0, 1.0],
    "col_ind": [0, 2, 1, 3, 1, 2, 3, 3, 2, 4],
    "row_ptr": [0, 2, 4, 7, 8, 10],
}

# the same matrix in jagged diagonal storage; perm maps row -> sorted slot
EXAMPLE_JDS = {
    "rows": 5,
    "perm": [1, 2, 0, 4, 3],
    "val": [-1.0, 1.0, 2.0, -1.0, 2.0, 3.0, 1.0, 2.0, 1.0, 2.0],
    "col_ind": [1, 0, 1, 2, 3, 2, 2, 3, 4, 3],
    "jd_ptr": [0, 5, 9, 10],
    "nzcnt": [3, 2, 2, 2, 1],
}


def csr_to_dense(rows: int, cols: int, val, col_ind, row_ptr) -> np.ndarray:
    a = np.zeros((rows, cols))
    for i in range(rows):
        for k in range(row_ptr[i], row_ptr[i + 1]):
            a[i, col_ind[k]] += val[k]
    return a


def jds_to_dense(rows: int, cols: int, perm, val, col_ind, jd_ptr, nzcnt) -> np.ndarray:
    a = np.zeros((rows, cols))
    for i in range(rows):
        s = perm[i]
        for j in range(nzcnt[s]):
            a[i, col_ind[jd_ptr[j] + s]] += val[jd_ptr[j] + s]
    return a


def dense_to_csr(a: np.ndarray) -> dict:
    val, col_ind, row_ptr = [], [], [0]
    for row in a:
        for j in np.flatnonzero(row):
            val.append(float(row[j]))
            col_ind.append(int(j))
        row_ptr.append(len(val))
    return {"rows": int(a.shape[0]), "val": val, "col_ind": col_ind, "row_ptr": row_ptr}


def csr_to_jds(rows: int, val, col_ind, row_ptr) -> dict:
    """Reorder rows by decreasing length (stable) and store column-major by diagonal."""
    counts = [row_ptr[i + 1] - row_ptr[i] for i in range(rows)]
    order = sorted(range(rows), key=lambda i: -counts[i])
    perm = [0] * rows
    for slot, row in enumerate(order):
        perm[row] = slot
    nzcnt = [counts[r] for r in order]
    width = max(nzcnt, default=0)
    jd_ptr, jval, jcol = [], [], []
    for j in range(width):
        jd_ptr.append(len(jval))
        for r in order:
            if counts[r] > j:
                jval.append(float(val[row_ptr[r] + j]))
                jcol.append(int(col_ind[row_ptr[r] + j]))
    jd_ptr.append(len(jval))
    return {"rows": rows, "perm": perm, "val": jval, "col_ind": jcol, "jd_ptr": jd_ptr, "nzcnt": nzcnt}


def dense_spmv(a: np.ndarray, x) -> list:
    """Row-by-row left-to-right sums over nonzeros, matching loop order."""
    out = []
    for row in a:
        s = 0.0
        for j in np.flatnonzero(row):
            s = s + float(row[j]) * float(x[j])
        out.append(s)
    return out


def random_dense(rng: np.random.Generator, n: int, density: float) -> np.ndarray:
    mask = rng.random((n, n)) < density
    vals = np.round(rng.standard_normal((n, n)) * 4, 3)
    vals[vals == 0] = 0.5
    return np.where(mask, vals, 0.0)


def random_csr(rng: np.random.Generator, max_n: int = 64, max_density: float = 0.3) -> dict:
    n = int(rng.integers(1, max_n + 1))
    density = float(rng.uniform(0.0, max_density))
    return dense_to_csr(random_dense(rng, n, density))


# ---------------------------------------------------------------- instances
# An instance maps computation-level names to values.


def csr_instance(csr: dict, x) -> dict:
    return {**csr, "x": [float(v) for v in x], "output": [0.0] * csr["rows"]}


def jds_instance(csr: dict, x) -> dict:
    j = csr_to_jds(csr["rows"], csr["val"], csr["col_ind"], csr["row_ptr"])
    return {**j, "x": [float(v) for v in x], "output": [0.0] * csr["rows"]}


def dot_instance(a, b) -> dict:
    return {"length": len(a), "a": [float(v) for v in a], "b": [float(v) for v in b], "result": [0.0]}


def gemm_instance(a: np.ndarray, b: np.ndarray) -> dict:
    m, p = a.shape
    n = b.shape[1]
    return {
        "m": m,
        "n": n,
        "p": p,
        "a": [float(v) for v in a.ravel()],
        "b": [float(v) for v in b.ravel()],
        "c": [0.0] * (m * n),
    }


def example_instance(family: str, x=(1, 1, 1, 1, 1)) -> dict:
    """The 5x5 example matrix times ``x``, phrased for each computation family.

    Dot products take row 2 of the matrix against ``x``; gemm multiplies the
    dense matrix by ``x`` as a 5x1 column.
    """
    if family == "csr":
        return csr_instance(EXAMPLE_CSR, x)
    if family == "jds":
        return {**EXAMPLE_JDS, "x": [float(v) for v in x], "output": [0.0] * 5}
    dense = csr_to_dense(5, 5, EXAMPLE_CSR["val"], EXAMPLE_CSR["col_ind"], EXAMPLE_CSR["row_ptr"])
    if family == "dot":
        return dot_instance(dense[2], x)
    if family == "gemm":
        return gemm_instance(dense, np.asarray(x, dtype=float).reshape(5, 1))
    raise KeyError(family)


def random_instance(family: str, rng: np.random.Generator) -> dict:
    if family in ("csr", "jds"):
        csr = random_csr(rng)
        x = np.round(rng.standard_normal(csr["rows"]) * 4, 3)
        return csr_instance(csr, x) if family == "csr" else jds_instance(csr, x)
    if family == "dot":
        n = int(rng.integers(0, 65))
        return dot_instance(rng.standard_normal(n), rng.standard_normal(n))
    if family == "gemm":
        m, n, p = (int(v) for v in rng.integers(1, 9, size=3))
        return gemm_instance(rng.standard_normal((m, p)), rng.standard_normal((p, n)))
    raise KeyError(family)


# ---------------------------------------------------------------- corpus


@dataclass(frozen=True)
class Fixture:
    file: str
    entry: str
    family: str | None  # None: not runnable on generated data
    computation: str | None
    positive: bool
    rename: tuple = ()  # (ir param, instance name)
    extra: Callable[[dict, np.random.Generator], dict] | None = None
    by_reference: bool = False

    def text(self) -> str:
        return corpus_text(self.file)

    def data(self, instance: dict, rng: np.random.Generator | None = None) -> dict:
        """Map an instance onto this fixture's parameter names."""
        rng = rng if rng is not None else np.random.default_rng(0)
        d = dict(instance)
        for param, name in self.rename:
            d[param] = instance[name]
        if self.extra is not None:
            d.update(self.extra(instance, rng))
        return d


def _nnz_log(inst, rng):
    return {"log": [0.0] * len(inst["val"])}


def _extra_c(inst, rng):
    return {"c": [float(v) for v in rng.standard_normal(inst["length"])]}


def _two_dots(inst, rng):
    return {"r1": [0.0], "r2": [0.0], "c": [float(v) for v in rng.standard_normal(inst["length"])]}


def _saxpy(inst, rng):
    return {"n": inst["length"], "alpha": 1.5, "x": inst["a"], "y": list(inst["b"])}


def _repeat(inst, rng):
    # square matrices only: x is overwritten with output
    return {"iters": 3}


FIXTURES = (
    Fixture("csr_c.lir", "spmv", "csr", "spmv_csr", True),
    Fixture("csr_cpp.lir", "spmv", "csr", "spmv_csr", True),
    Fixture("csr_fortran.lir", "spmv", "csr", "spmv_csr", True, by_reference=True),
    Fixture("dot_c.lir", "dot", "dot", "dotproduct", True),
    Fixture("dot_cpp.lir", "dot", "dot", "dotproduct", True),
    Fixture("dot_fortran.lir", "dot", "dot", "dotproduct", True, by_reference=True),
    Fixture("jds_c.lir", "spmv_jds", "jds", "spmv_jds", True),
    Fixture("jds_cpp.lir", "spmv_jds", "jds", "spmv_jds", True),
    Fixture("jds_fortran.lir", "spmv_jds", "jds", "spmv_jds", True, by_reference=True),
    Fixture("gemm_c.lir", "gemm", "gemm", "gemm", True),
    Fixture("gemm_cpp.lir", "gemm", "gemm", "gemm", True),
    Fixture("gemm_fortran.lir", "gemm", "gemm", "gemm", True, by_reference=True),
    Fixture("backtrack.lir", "dot", "dot", "dotproduct", True, rename=(("9", "a"), ("12", "b"), ("14", "length"))),
    Fixture("two_dots.lir", "two_dots", "dot", "dotproduct", True, extra=_two_dots),
    Fixture("dead_temp.lir", "dot_scratch", "dot", "dotproduct", True),
    Fixture("spmv_repeat.lir", "power", "csr", "spmv_csr", True, extra=_repeat),
    Fixture("saxpy.lir", "saxpy", "dot", "dotproduct", False, extra=_saxpy),
    Fixture("dot_extra_addend.lir", "dot3", "dot", "dotproduct", False, extra=_extra_c),
    Fixture("csr_side_effect.lir", "spmv_logged", "csr", "spmv_csr", False, extra=_nnz_log),
    Fixture("dot_icmp_ne.lir", "dot_ne", "dot", "dotproduct", False),
    Fixture("infinite_loop.lir", "spin", None, None, False),
    Fixture("irreducible.lir", "irreducible", None, None, False),
)

# the four computations in C, C++ and FORTRAN style
VARIANTS = tuple(f for f in FIXTURES if f.file.split("_")[-1] in ("c.lir", "cpp.lir", "fortran.lir"))


def fixture(file: str) -> Fixture:
    for f in FIXTURES:
        if f.file == file:
            return f
    raise KeyError(file)


def corpus_path(name: str):
    return resources.files("lilac.corpus").joinpath(name)


def corpus_text(name: str) -> str:
    return corpus_path(name).read_text(encoding="utf-8")


def run_fixture(m, fx: Fixture, data: dict, harnesses=None, step_limit: int = 10**7, marshal_page_backed=False):
    """Run ``fx.entry`` of ``m`` on ``data``; return the observable state."""
    from .interp import Memory, bind_data, run, snapshot

    mem = Memory(page_backed=marshal_page_backed)
    f = m.function(fx.entry)
    args = bind_data(f, data, mem, wrap_scalars=fx.by_reference)
    ret, mem = run(m, fx.entry, args, mem, step_limit=step_limit, harnesses=harnesses)
    return snapshot(f, args, ret, mem)
