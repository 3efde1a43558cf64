import shutil
import subprocess
from pathlib import Path

import pytest

from lilac.errors import MissingClass, ValidationFailed
from lilac.harnessgen import RUNTIME_HEADER, entry_symbol, gen_all, gen_harness
from lilac.how import parse_how
from lilac.lilacfile import parse_lilac
from lilac.what import infer_interface

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def sources(spec):
    return gen_all(spec.how, spec.whats)


def test_harness_names_in_declaration_order(sources):
    assert list(sources) == ["mkl_spmv", "cusparse_spmv", "naive_dot", "naive_jds", "blas_gemm"]


def test_empty_description_generates_nothing():
    assert gen_all(parse_how(""), []) == {}


def test_cusparse_matches_golden(sources):
    assert sources["cusparse_spmv"] == (GOLDEN / "cusparse_spmv.gen.cpp").read_text(encoding="utf-8")


def test_marshal_class_code_is_wrapped_verbatim(sources, spec):
    text = sources["cusparse_spmv"]
    cuda = spec.how.marshal_class("CudaRead")
    assert "void CudaRead_update(type_in* in, int size, type_out& out)\n{" + cuda.update_code + "}" in text
    assert "void CudaRead_construct(type_in* in, int size, type_out& out)\n{" + cuda.construct_code + "}" in text
    assert "void CudaRead_destruct(type_in* in, int size, type_out& out)\n{" + cuda.destruct_code + "}" in text
    assert "using CudaRead = lilac::ReadObject<" in text
    assert "using CudaWrite = lilac::WriteObject<" in text


def test_each_code_block_is_spliced_once(sources, spec):
    h = spec.how.harness("cusparse_spmv")
    text = sources["cusparse_spmv"]
    for block in (h.code, h.before_first, h.after_last):
        assert text.count(block) == 1
    for c in spec.how.marshal_classes:
        if c.name in ("CudaRead", "CudaWrite", "ReadLast", "ReadableMax"):
            assert text.count(c.update_code) == 1


def test_bindings_acquired_in_order_and_outputs_written_back(sources):
    text = sources["cusparse_spmv"]
    order = [text.index(f"{name} = st.{name}_marshal.acquire(") for name in ("nnz", "cols", "d_val", "d_col", "d_row", "d_x", "d_out")]
    assert order == sorted(order)
    assert "st.d_out_marshal.write_back(output, rows);" in text
    assert text.count("write_back") == 1
    assert text.index("std::atexit") < order[0]


def test_harness_without_marshaling_needs_no_runtime(sources):
    text = sources["naive_dot"]
    assert RUNTIME_HEADER not in text
    assert f'extern "C" void {entry_symbol("dotproduct")}(double* result, int length, double* a, double* b)' in text


def test_generation_is_deterministic(spec):
    assert gen_all(spec.how, spec.whats) == gen_all(spec.how, spec.whats)


def test_unknown_class_is_missing(spec, whats):
    h = spec.how.harness("cusparse_spmv")
    with pytest.raises(MissingClass):
        gen_harness(h, infer_interface(whats["spmv_csr"]), [])


def test_invalid_description_is_refused():
    src = parse_lilac("COMPUTATION d\nresult = sum(0 <= i < n) a[i] * b[i];\nHARNESS h IMPLEMENTS nothing { }\n")
    with pytest.raises(ValidationFailed) as e:
        gen_all(src.how, src.whats)
    assert [d.code for d in e.value.diagnostics] == ["UnknownComputation"]


CXX = shutil.which("c++")

# host-side stand-ins for the device libraries used by the cusparse harness
CUDA_STUB = r"""
#pragma once
#include <cstdlib>
#include <cstring>
enum cudaMemcpyKind { cudaMemcpyHostToDevice, cudaMemcpyDeviceToHost };
extern long stub_mallocs, stub_frees, stub_h2d, stub_d2h;
template <typename T> int cudaMalloc(T** p, std::size_t n) { *p = (T*)std::malloc(n ? n : 1); ++stub_mallocs; return 0; }
inline int cudaFree(void* p) { std::free(p); ++stub_frees; return 0; }
inline int cudaMemcpy(void* d, const void* s, std::size_t n, cudaMemcpyKind k) {
  std::memcpy(d, s, n);
  ++(k == cudaMemcpyHostToDevice ? stub_h2d : stub_d2h);
  return 0;
}
"""

CUSPARSE_STUB = r"""
#pragma once
typedef int cusparseHandle_t;
typedef int cusparseMatDescr_t;
enum { CUSPARSE_OPERATION_NON_TRANSPOSE };
inline int cusparseCreate(cusparseHandle_t* h) { *h = 1; return 0; }
inline int cusparseCreateMatDescr(cusparseMatDescr_t* d) { *d = 1; return 0; }
inline int cusparseDestroy(cusparseHandle_t) { return 0; }
inline int cusparseDestroyMatDescr(cusparseMatDescr_t) { return 0; }
inline int cusparseDcsrmv(cusparseHandle_t, int, int m, int, int, const double* alpha, cusparseMatDescr_t,
                          const double* val, const int* row, const int* col, const double* x,
                          const double*, double* y) {
  for (int i = 0; i < m; i++) {
    double s = 0.0;
    for (int k = row[i]; k < row[i + 1]; k++) s += val[k] * x[col[k]];
    y[i] = *alpha * s;
  }
  return 0;
}
"""

DRIVER = r"""
#include <cstdio>
#include <cstdlib>
long stub_mallocs = 0, stub_frees = 0, stub_h2d = 0, stub_d2h = 0;
extern "C" void lilac_spmv_csr(int, double*, int*, double*, double*, int*);
static void report() { std::printf("mallocs=%ld frees=%ld h2d=%ld d2h=%ld\n", stub_mallocs, stub_frees, stub_h2d, stub_d2h); }
int main() {
  std::atexit(report);  // registered first, so it runs after the harness teardown
  int row_ptr[] = {0, 2, 4, 7, 8, 10};
  int col_ind[] = {0, 2, 1, 3, 1, 2, 3, 3, 2, 4};
  double val[] = {1, 1, 2, 2, -1, 3, 2, 2, -1, 1};
  double x[] = {1, 1, 1, 1, 1};
  double out[5];
  for (int t = 0; t < 10; t++) {
    if (t == 5) x[4] = 3;
    lilac_spmv_csr(5, out, row_ptr, val, x, col_ind);
  }
  for (int i = 0; i < 5; i++) std::printf("%g ", out[i]);
  std::printf("\n");
  return 0;
}
"""


@pytest.mark.skipif(CXX is None, reason="no C++ compiler")
def test_cusparse_harness_builds_and_caches_inputs(sources, tmp_path):
    from lilac.harnessgen import include_dir

    (tmp_path / "cuda_runtime.h").write_text(CUDA_STUB)
    (tmp_path / "cusparse.h").write_text(CUSPARSE_STUB)
    (tmp_path / "harness.cpp").write_text(sources["cusparse_spmv"])
    (tmp_path / "driver.cpp").write_text(DRIVER)
    exe = tmp_path / "spmv"
    cmd = [CXX, "-std=c++17", "-I", str(tmp_path), "-I", str(include_dir()), "harness.cpp", "driver.cpp", "-o", str(exe)]
    build = subprocess.run(cmd, capture_output=True, text=True, cwd=tmp_path)
    assert build.returncode == 0, build.stderr
    out = subprocess.run([str(exe)], capture_output=True, text=True, check=True).stdout.splitlines()
    # the last column doubles after x[4] changes
    assert out[0].split() == ["2", "4", "4", "2", "2"]
    # five device buffers; four inputs copied once plus x again after its change;
    # ten write-backs; everything freed at exit
    assert out[1] == "mallocs=5 frees=5 h2d=5 d2h=10"


@pytest.mark.skipif(CXX is None, reason="no C++ compiler")
@pytest.mark.parametrize("name", ["naive_dot", "naive_jds"])
def test_plain_harnesses_compile(sources, name, tmp_path):
    src = tmp_path / f"{name}.cpp"
    src.write_text(sources[name])
    proc = subprocess.run([CXX, "-std=c++17", "-fsyntax-only", str(src)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
