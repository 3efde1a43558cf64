import pytest

from lilac.errors import DuplicateHarness, ParseError, UnbalancedCodeBlock
from lilac.how import parse_how, print_how, validate_how
from lilac.what import parse_what

CUDA_READ = """INPUT CudaRead {
  cudaMemcpy(out, in, size * sizeof(*in), cudaMemcpyHostToDevice);
}
BeforeFirstExecution {
  cudaMalloc(&out, size * sizeof(*in));
}
AfterLastExecution {
  cudaFree(out);
}"""

READABLE_MAX = """INPUT ReadableMax {
  out = -1;
  for (int k = 0; k < size; k++) if (in[k] > out) out = in[k];
  out = out + 1;
}"""

SPMV = parse_what(
    "COMPUTATION spmv_csr forall (0 <= i < rows) {"
    " output[i] = dot(row_ptr[i] <= j < row_ptr[i+1]) val[j] * x[col_ind[j]]; }"
)


def test_cuda_read_has_all_three_blocks():
    (c,) = parse_how(CUDA_READ).marshal_classes
    assert (c.kind, c.name) == ("INPUT", "CudaRead")
    assert "cudaMemcpy" in c.update_code
    assert "cudaMalloc" in c.construct_code
    assert "cudaFree" in c.destruct_code


def test_cached_scalar_class_has_only_an_update_block():
    (c,) = parse_how(READABLE_MAX).marshal_classes
    assert c.construct_code is None and c.destruct_code is None
    assert "out = out + 1;" in c.update_code


def test_code_blocks_keep_nested_braces_and_strings():
    text = 'HARNESS h IMPLEMENTS spmv_csr { if (a) { f("}"); } /* } */ }'
    (h,) = parse_how(text).harnesses
    assert h.code == ' if (a) { f("}"); } /* } */ '


@pytest.mark.parametrize(
    "text, error",
    [
        ("HARNESS h spmv_csr { }", ParseError),
        ("HARNESS h IMPLEMENTS spmv_csr { unterminated", UnbalancedCodeBlock),
        ("HARNESS h IMPLEMENTS a { }\nHARNESS h IMPLEMENTS b { }", DuplicateHarness),
        ("INPUT A { }\nINPUT A { }", DuplicateHarness),
        ("HARNESS h IMPLEMENTS a { } Marshaling { int n = C of v [1 .. 3] }", ParseError),
        ("HARNESS h IMPLEMENTS a { } Marshaling { int n = C of v [0 .. w[1]] }", ParseError),
        ("COMPUTATION x", ParseError),
    ],
)
def test_malformed_how_is_rejected(text, error):
    with pytest.raises(error):
        parse_how(text)


def test_shipped_spec_validates(spec):
    assert spec.validate() == []


def test_cusparse_harness_bindings(spec):
    h = spec.how.harness("cusparse_spmv")
    assert [b.out_name for b in h.bindings] == ["nnz", "cols", "d_val", "d_col", "d_row", "d_x", "d_out"]
    assert h.bindings[1].class_name == "ReadableMax" and h.bindings[1].array_name == "col_ind"
    assert h.persistent_vars == (("cusparseHandle_t", "handle"), ("cusparseMatDescr_t", "descr"))
    assert h.headers == ("cuda_runtime.h", "cusparse.h")
    assert validate_how(parse_how(CUDA_READ + "\n" + READABLE_MAX), SPMV) == []


def _codes(text, whats=SPMV):
    return [d.code for d in validate_how(parse_how(text), whats)]


def test_validation_reports_each_problem_in_order():
    text = CUDA_READ + """
HARNESS h IMPLEMENTS spmv_csr { }
Marshaling {
  double* a = CudaRead of matrix_values [0 .. rows]
  double* b = Missing of val [0 .. rows]
  double* c = CudaRead of val [0 .. nnz]
}
HARNESS g IMPLEMENTS spmv_coo { }
"""
    assert _codes(text) == ["UnknownArray", "UnknownClass", "OpenExtent", "UnknownComputation"]


def test_binding_outputs_extend_later_extents():
    text = READABLE_MAX + CUDA_READ + """
HARNESS h IMPLEMENTS spmv_csr { }
Marshaling { int cols = ReadableMax of col_ind [0 .. rows] double* d = CudaRead of x [0 .. cols] }"""
    assert _codes(text) == []
    reordered = text.replace("[0 .. rows]", "[0 .. cols2]")
    assert "OpenExtent" in _codes(reordered)


def test_duplicate_persistent_variables_are_reported():
    text = "HARNESS h IMPLEMENTS spmv_csr { } PersistentVariables { int a; int a; }"
    assert _codes(text) == ["DuplicatePersistentVariable"]


def test_validation_is_pure(spec):
    first = validate_how(spec.how, spec.whats)
    bad = parse_how("HARNESS g IMPLEMENTS nothing { } Marshaling { int n = X of y [0 .. z] }")
    assert validate_how(bad, spec.whats) == validate_how(bad, spec.whats)
    assert validate_how(spec.how, spec.whats) == first


def test_print_then_parse_preserves_code_blocks(spec):
    text = print_how(spec.how)
    again = parse_how(text)
    assert again.harnesses == spec.how.harnesses
    assert again.marshal_classes == spec.how.marshal_classes
    assert print_how(again) == text


def test_persistent_variables_without_separators():
    (h,) = parse_how("HARNESS h IMPLEMENTS s { } PersistentVariables { void* buf int count }").harnesses
    assert h.persistent_vars == (("void*", "buf"), ("int", "count"))
