import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grbf.tensor import (
    contract_even,
    double_trace,
    outer,
    outer_power,
    partial_trace,
    symmetrize,
)


def loop_contract(A, B):
    p = B.ndim
    out = np.zeros(A.shape[0::2])
    for odd in itertools.product(*[range(n) for n in out.shape]):
        for even in itertools.product(*[range(n) for n in B.shape]):
            idx = tuple(x for pair in zip(odd, even) for x in pair)
            out[odd] += A[idx] * B[even]
    assert out.ndim == p
    return out


class TestOuterPower:
    def test_square(self):
        np.testing.assert_array_equal(outer_power([1, 2], 2), [[1, 2], [2, 4]])

    def test_zero_power_is_scalar_one(self):
        T = outer_power([5.0, -1.0, 3.0], 0)
        assert T.shape == ()
        assert float(T) == 1.0

    def test_cube_of_scalar_vector(self):
        np.testing.assert_array_equal(outer_power([3.0], 3), [[[27.0]]])

    def test_negative_power_rejected(self):
        with pytest.raises(ValueError):
            outer_power([1.0], -1)

    def test_outer_concatenates_modes(self):
        T = outer(np.ones(2), np.ones((3, 4)))
        assert T.shape == (2, 3, 4)


class TestSymmetrize:
    def test_two_mode(self):
        e1e2 = outer([1.0, 0.0], [0.0, 1.0])
        np.testing.assert_allclose(symmetrize(e1e2), [[0, 0.5], [0.5, 0]])

    def test_symmetric_fixed_point(self):
        v = np.array([1.0, -2.0, 0.5])
        T = outer_power(v, 3)
        np.testing.assert_allclose(symmetrize(T), T, rtol=1e-15)

    def test_order_one(self):
        np.testing.assert_array_equal(symmetrize([1.0, 2.0]), [1.0, 2.0])

    def test_unequal_extents(self):
        with pytest.raises(ValueError):
            symmetrize(np.zeros((2, 3)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 3), st.integers(2, 4), st.integers(0, 2**31 - 1))
    def test_idempotent(self, d, order, seed):
        T = np.random.default_rng(seed).normal(size=(d,) * order)
        S = symmetrize(T)
        np.testing.assert_allclose(symmetrize(S), S, rtol=1e-13, atol=1e-15)


class TestContractEven:
    def test_matvec(self):
        A = np.arange(6.0).reshape(2, 3)
        b = np.array([1.0, -1.0, 2.0])
        np.testing.assert_allclose(contract_even(A, b), A @ b)

    def test_all_ones(self):
        out = contract_even(np.ones((2, 2, 2, 2)), np.ones((2, 2)))
        np.testing.assert_array_equal(out, np.full((2, 2), 4.0))

    def test_identity_pairing(self):
        I = np.eye(2)
        A = outer(I, I)
        out = contract_even(A, I)
        np.testing.assert_allclose(out, loop_contract(A, I))
        np.testing.assert_allclose(out, I)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            contract_even(np.ones((2, 3)), np.ones(2))
        with pytest.raises(ValueError):
            contract_even(np.ones((2, 2, 2)), np.ones(2))

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.integers(1, 3), min_size=2, max_size=6).filter(lambda s: len(s) % 2 == 0),
        st.integers(0, 2**31 - 1),
    )
    def test_matches_loop(self, shape, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=shape)
        B = rng.normal(size=shape[1::2])
        expected = loop_contract(A, B)
        np.testing.assert_allclose(contract_even(A, B), expected, rtol=1e-14, atol=1e-14)


class TestPartialTrace:
    def test_delta_delta(self):
        I = np.eye(2)
        T = outer(I, I)
        np.testing.assert_allclose(partial_trace(T, 0, 1), 2 * I)

    def test_matrix_trace(self):
        M = np.arange(9.0).reshape(3, 3)
        assert float(partial_trace(M, 0, 1)) == np.trace(M)

    def test_double_trace_matches_loop(self):
        T = np.random.default_rng(3).normal(size=(3, 3, 3, 3))
        expected = sum(T[i, i, k, k] for i in range(3) for k in range(3))
        np.testing.assert_allclose(double_trace(T), expected, rtol=1e-14)

    def test_errors(self):
        with pytest.raises(ValueError):
            partial_trace(np.zeros((2, 2)), 0, 0)
        with pytest.raises(ValueError):
            partial_trace(np.zeros((2, 3)), 0, 1)
        with pytest.raises(ValueError):
            partial_trace(np.zeros((2, 2)), 0, 2)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 3), st.integers(0, 2**31 - 1))
    def test_disjoint_traces_commute(self, d, seed):
        T = np.random.default_rng(seed).normal(size=(d,) * 4)
        a = partial_trace(partial_trace(T, 2, 3), 0, 1)
        b = partial_trace(partial_trace(T, 0, 1), 0, 1)
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)
