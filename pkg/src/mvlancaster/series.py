"""Multi-indices and box-truncated multivariate power series.

A series in ``m`` variables truncated at degree ``D`` per variable is a dense
array of shape ``(D+1,) * m``; entry ``[k_1, ..., k_m]`` is the coefficient of
``w_1^k_1 ... w_m^k_m``. Products of such arrays are exact inside the box.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def compositions(total, parts):
    """All vectors of ``parts`` non-negative integers summing to ``total``, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def multi_indices(parts, max_degree, min_degree=0):
    """Multi-indices ordered by total degree, ties broken lexicographically."""
    out = []
    for deg in range(min_degree, max_degree + 1):
        out.extend(sorted(compositions(deg, parts)))
    return out


def degree(n):
    return int(sum(n))


def multinomial(total, parts):
    """``total! / (prod(parts)! (total - |parts|)!)`` for integer ``total``."""
    rest = total - sum(parts)
    if rest < 0:
        return 0
    out = math.factorial(total) // math.factorial(rest)
    for k in parts:
        out //= math.factorial(k)
    return out


def falling(x, k):
    """Falling factorial ``x (x-1) ... (x-k+1)`` for real ``x``, broadcasting."""
    out = np.ones_like(np.asarray(x, dtype=float))
    for i in range(k):
        out = out * (x - i)
    return out


def rising(x, k):
    """Rising factorial ``x (x+1) ... (x+k-1)`` by iterated product."""
    out = 1.0
    for i in range(k):
        out *= x + i
    return out


def _grid(m, D):
    return np.indices((D + 1,) * m).reshape(m, -1).T


def linear_power(coeffs, exponent, D):
    """Coefficients of ``(1 + sum_l c_l w_l) ** exponent`` for real ``exponent``."""
    coeffs = np.asarray(coeffs, dtype=float)
    m = coeffs.size
    idx = _grid(m, D)
    tot = idx.sum(axis=1)
    out = np.empty(len(idx))
    for row, (k, t) in enumerate(zip(idx, tot)):
        val = float(falling(exponent, int(t)))
        for l in range(m):
            if k[l]:
                val *= coeffs[l] ** k[l] / math.factorial(k[l])
        out[row] = val
    return out.reshape((D + 1,) * m)


def mul_linear(series, coeffs):
    """Multiply a box series by ``1 + sum_l c_l w_l``."""
    out = series.copy()
    for l, c in enumerate(coeffs):
        if c == 0:
            continue
        dst = [slice(None)] * series.ndim
        src = [slice(None)] * series.ndim
        dst[l] = slice(1, None)
        src[l] = slice(None, -1)
        out[tuple(dst)] += c * series[tuple(src)]
    return out


def mul(a, b):
    """Box-truncated product of two series of equal shape."""
    D = a.shape[0] - 1
    out = np.zeros_like(a)
    for k in itertools.product(range(D + 1), repeat=a.ndim):
        coef = a[k]
        if coef == 0:
            continue
        dst = tuple(slice(ki, None) for ki in k)
        src = tuple(slice(None, D + 1 - ki) for ki in k)
        out[dst] += coef * b[src]
    return out


def one(m, D):
    out = np.zeros((D + 1,) * m)
    out[(0,) * m] = 1.0
    return out
