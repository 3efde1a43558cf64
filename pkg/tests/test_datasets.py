import numpy as np
from hypothesis import given, settings, strategies as st

from lilac.datasets import (
    EXAMPLE_CSR,
    EXAMPLE_JDS,
    csr_to_dense,
    csr_to_jds,
    dense_spmv,
    dense_to_csr,
    jds_to_dense,
    random_dense,
)

EXAMPLE_DENSE = np.array(
    [
        [1, 0, 1, 0, 0],
        [0, 2, 0, 2, 0],
        [0, -1, 3, 2, 0],
        [0, 0, 0, 2, 0],
        [0, 0, -1, 0, 1],
    ],
    dtype=float,
)


def test_both_example_encodings_decode_to_the_same_matrix():
    assert np.array_equal(csr_to_dense(5, 5, EXAMPLE_CSR["val"], EXAMPLE_CSR["col_ind"], EXAMPLE_CSR["row_ptr"]), EXAMPLE_DENSE)
    j = EXAMPLE_JDS
    assert np.array_equal(jds_to_dense(5, 5, j["perm"], j["val"], j["col_ind"], j["jd_ptr"], j["nzcnt"]), EXAMPLE_DENSE)


def test_jds_conversion_reproduces_the_example():
    assert csr_to_jds(5, EXAMPLE_CSR["val"], EXAMPLE_CSR["col_ind"], EXAMPLE_CSR["row_ptr"]) == EXAMPLE_JDS


def test_example_product_with_ones():
    assert dense_spmv(EXAMPLE_DENSE, [1] * 5) == [2.0, 4.0, 4.0, 2.0, 0.0]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.floats(0, 1))
def test_format_round_trips(seed, n, density):
    a = random_dense(np.random.default_rng(seed), n, density)
    csr = dense_to_csr(a)
    assert np.array_equal(csr_to_dense(n, n, csr["val"], csr["col_ind"], csr["row_ptr"]), a)
    j = csr_to_jds(n, csr["val"], csr["col_ind"], csr["row_ptr"])
    assert np.array_equal(jds_to_dense(n, n, j["perm"], j["val"], j["col_ind"], j["jd_ptr"], j["nzcnt"]), a)
    assert j["nzcnt"] == sorted(j["nzcnt"], reverse=True)
    assert sorted(j["perm"]) == list(range(n))
