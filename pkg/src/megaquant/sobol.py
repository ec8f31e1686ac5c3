"""Sobol low-discrepancy sequence generator.

Direction numbers are the published Joe and Kuo values (the
new-joe-kuo-6.21201 table), transcribed here for the first 48
dimensions. Points are produced in Gray-code order with 30-bit
precision, so index 0 is the origin and any point is random-access
computable from its index alone.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import CapabilityError, DomainError

_BITS = 30

# (primitive polynomial bits, initial direction numbers m_1..m_s) for
# dimensions 2..48; dimension 1 is the van der Corput sequence in base 2.
_JOE_KUO = (
    (3, (1,)),
    (7, (1, 3)),
    (11, (1, 3, 1)),
    (13, (1, 1, 1)),
    (19, (1, 1, 3, 3)),
    (25, (1, 3, 5, 13)),
    (37, (1, 1, 5, 5, 17)),
    (41, (1, 1, 5, 5, 5)),
    (47, (1, 1, 7, 11, 19)),
    (55, (1, 1, 5, 1, 1)),
    (59, (1, 1, 1, 3, 11)),
    (61, (1, 3, 5, 5, 31)),
    (67, (1, 3, 3, 9, 7, 49)),
    (91, (1, 1, 1, 15, 21, 21)),
    (97, (1, 3, 1, 13, 27, 49)),
    (103, (1, 1, 1, 15, 7, 5)),
    (109, (1, 3, 1, 15, 13, 25)),
    (115, (1, 1, 5, 5, 19, 61)),
    (131, (1, 3, 7, 11, 23, 15, 103)),
    (137, (1, 3, 7, 13, 13, 15, 69)),
    (143, (1, 1, 3, 13, 7, 35, 63)),
    (145, (1, 3, 5, 9, 1, 25, 53)),
    (157, (1, 3, 1, 13, 9, 35, 107)),
    (167, (1, 3, 1, 5, 27, 61, 31)),
    (171, (1, 1, 5, 11, 19, 41, 61)),
    (185, (1, 3, 5, 3, 3, 13, 69)),
    (191, (1, 1, 7, 13, 1, 19, 1)),
    (193, (1, 3, 7, 5, 13, 19, 59)),
    (203, (1, 1, 3, 9, 25, 29, 41)),
    (211, (1, 3, 5, 13, 23, 1, 55)),
    (213, (1, 3, 7, 3, 13, 59, 17)),
    (229, (1, 3, 1, 3, 5, 53, 69)),
    (239, (1, 1, 5, 5, 23, 33, 13)),
    (241, (1, 1, 7, 7, 1, 61, 123)),
    (247, (1, 1, 7, 9, 13, 61, 49)),
    (253, (1, 3, 3, 5, 3, 55, 33)),
    (285, (1, 3, 1, 15, 31, 13, 49, 245)),
    (299, (1, 3, 5, 15, 31, 59, 63, 97)),
    (301, (1, 3, 1, 11, 11, 11, 77, 249)),
    (333, (1, 3, 1, 11, 27, 43, 71, 9)),
    (351, (1, 1, 7, 15, 21, 11, 81, 45)),
    (355, (1, 3, 7, 3, 25, 31, 65, 79)),
    (357, (1, 3, 1, 1, 19, 11, 3, 205)),
    (361, (1, 1, 5, 9, 19, 21, 29, 157)),
    (369, (1, 3, 7, 11, 1, 33, 89, 185)),
    (391, (1, 3, 3, 3, 15, 9, 79, 71)),
    (397, (1, 3, 7, 11, 15, 39, 119, 27)),
)

MAX_DIMENSION = 1 + len(_JOE_KUO)


@lru_cache(maxsize=8)
def _direction_vectors(dimension: int) -> np.ndarray:
    """Integer direction vectors V[dim, bit] for bit = 0.._BITS-1."""
    if dimension > MAX_DIMENSION:
        raise CapabilityError(
            f"Sobol direction numbers embedded for {MAX_DIMENSION} dimensions, "
            f"requested {dimension}")
    v = np.zeros((dimension, _BITS), dtype=np.int64)
    v[0] = [1 << (_BITS - k) for k in range(1, _BITS + 1)]
    for j in range(1, dimension):
        poly, m_init = _JOE_KUO[j - 1]
        s = poly.bit_length() - 1
        for k in range(min(s, _BITS)):
            v[j, k] = m_init[k] << (_BITS - 1 - k)
        for k in range(s, _BITS):
            acc = v[j, k - s] ^ (v[j, k - s] >> s)
            for i in range(1, s):
                if (poly >> (s - i)) & 1:
                    acc ^= v[j, k - i]
            v[j, k] = acc
    return v


def sobol_sample(dimension: int, index: int, skip: int = 0) -> np.ndarray:
    """Point number ``skip + index`` of the Sobol sequence in [0,1)^dimension."""
    if dimension < 1:
        raise DomainError("dimension must be >= 1")
    if index < 0 or skip < 0:
        raise DomainError("index and skip must be >= 0")
    v = _direction_vectors(dimension)
    gray = (skip + index) ^ ((skip + index) >> 1)
    acc = np.zeros(dimension, dtype=np.int64)
    bit = 0
    while gray:
        if gray & 1:
            acc ^= v[:, bit]
        gray >>= 1
        bit += 1
        if bit >= _BITS:
            raise CapabilityError(f"index {skip + index} exceeds 2^{_BITS} points")
    return acc / float(1 << _BITS)


def sobol_points(dimension: int, n: int, skip: int = 0) -> np.ndarray:
    """The ``n`` consecutive points starting at sequence position ``skip``."""
    if n < 0:
        raise DomainError("n must be >= 0")
    out = np.empty((n, dimension), dtype=np.float64)
    for i in range(n):
        out[i] = sobol_sample(dimension, i, skip)
    return out
