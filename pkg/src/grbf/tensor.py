"""Small dense tensor toolkit used by the moment and quadrature formulas.

Tensors are plain row-major :class:`numpy.ndarray` objects; a scalar tensor is
a 0-d array.  Only the handful of operations the Gaussian integral engine needs
are provided.
"""

from itertools import permutations
from math import factorial

import numpy as np


def outer(*factors):
    """Outer product of any number of tensors, modes concatenated in order."""
    out = np.ones(())
    for f in factors:
        out = np.multiply.outer(out, np.asarray(f, dtype=float))
    return out


def outer_power(v, k):
    """``v ⊗ v ⊗ ... ⊗ v`` (``k`` copies); ``k = 0`` gives the scalar 1."""
    if k < 0:
        raise ValueError(f"outer power must be non-negative, got {k}")
    v = np.asarray(v, dtype=float)
    return outer(*([v] * k))


def symmetrize(T):
    """Average of ``T`` over every permutation of its modes.

    Raises
    ------
    ValueError
        If the modes do not all have the same extent.
    """
    T = np.asarray(T, dtype=float)
    if T.ndim < 2:
        return T.copy()
    if len(set(T.shape)) != 1:
        raise ValueError(f"symmetrize needs equal extents, got shape {T.shape}")
    acc = np.zeros_like(T)
    for perm in permutations(range(T.ndim)):
        acc += T.transpose(perm)
    return acc / factorial(T.ndim)


def contract_even(A, B):
    """Even-mode contraction ``A ×_E B``.

    ``A`` has ``2p`` modes and ``B`` has ``p`` modes matching the even
    positions (2nd, 4th, ...) of ``A``.  The result keeps the odd positions::

        out[i1, i3, ...] = sum A[i1, i2, i3, i4, ...] * B[i2, i4, ...]
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim % 2 or A.ndim // 2 != B.ndim:
        raise ValueError(
            f"contract_even needs A with 2p modes and B with p modes, "
            f"got {A.ndim} and {B.ndim}"
        )
    even = tuple(range(1, A.ndim, 2))
    if tuple(A.shape[i] for i in even) != B.shape:
        raise ValueError(
            f"even extents of A {tuple(A.shape[i] for i in even)} "
            f"do not match B {B.shape}"
        )
    return np.tensordot(A, B, axes=(even, tuple(range(B.ndim))))


def partial_trace(T, i, j):
    """Sum the diagonal over modes ``i`` and ``j``, dropping both."""
    T = np.asarray(T, dtype=float)
    if i == j:
        raise ValueError("partial_trace needs two distinct modes")
    if not (0 <= i < T.ndim and 0 <= j < T.ndim):
        raise ValueError(f"modes ({i}, {j}) out of range for order {T.ndim}")
    if T.shape[i] != T.shape[j]:
        raise ValueError(
            f"extents of modes {i} and {j} differ: {T.shape[i]} vs {T.shape[j]}"
        )
    return np.trace(T, axis1=i, axis2=j)


def double_trace(T):
    """``tr_12 tr_34`` of an order-4 tensor (modes counted from 1)."""
    return partial_trace(partial_trace(T, 2, 3), 0, 1)
