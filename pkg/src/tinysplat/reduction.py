"""Deterministic 32-lane group reductions.

A lane group is the software stand-in for a 32-wide execution unit: each
lane contributes one partial sum and the group collapses them in a fixed
binary tree (shuffle-style, pairs at stride 16, 8, 4, 2, 1), so results
are bit-reproducible regardless of how lanes were filled.

`exp_aligned_reduce` instead sums through an integer path: find the
largest binary exponent, align every mantissa to it with round-to-nearest
-even at 23 fractional bits, add the integers exactly, and scale back.
The absolute error versus an exact sum is bounded by 32 * 2**(e_max-23).
"""
from __future__ import annotations

import numpy as np

LANES = 32
MANTISSA_BITS = 23


def lane_group_reduce(values, axis: int = -1):
    """Tree-sum of 32 lane partials along `axis` (lanes with nothing to add
    contribute 0). Accepts any shape with 32 along the reduced axis."""
    v = np.asarray(values)
    if v.shape[axis] != LANES:
        raise ValueError(f"lane axis must have {LANES} entries, got {v.shape[axis]}")
    v = np.moveaxis(v, axis, -1)
    step = LANES // 2
    while step >= 1:
        v = v[..., :step] + v[..., step : 2 * step]
        step //= 2
    return v[..., 0]


def exp_aligned_reduce(values, axis: int = -1):
    """Exponent-aligned integer sum of 32 values along `axis`.

    Returns float64 carrying the exact value of
    sum(round(v * 2**(23 - e_max))) * 2**(e_max - 23), where e_max is the
    largest IEEE exponent (floor(log2 |v|)) among nonzero inputs. All-zero
    groups reduce to 0.0 without touching the exponent logic.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.shape[axis] != LANES:
        raise ValueError(f"lane axis must have {LANES} entries, got {v.shape[axis]}")
    v = np.moveaxis(v, axis, -1)
    nonzero = v != 0.0
    _, e_frexp = np.frexp(v)
    e_ieee = e_frexp - 1  # |v| in [2^e, 2^(e+1))
    e_max = np.max(np.where(nonzero, e_ieee, np.iinfo(np.int32).min), axis=-1)
    any_nonzero = nonzero.any(axis=-1)
    e_max = np.where(any_nonzero, e_max, 0)

    shift = (MANTISSA_BITS - e_max).astype(np.int32)
    mantissas = np.rint(np.ldexp(v, shift[..., None])).astype(np.int64)
    total = mantissas.sum(axis=-1)
    out = np.ldexp(total.astype(np.float64), -shift)
    return np.where(any_nonzero, out, 0.0)


def exp_aligned_error_bound(values, axis: int = -1):
    """Worst-case |exp_aligned_reduce - exact sum| for the given group(s)."""
    v = np.asarray(values, dtype=np.float64)
    v = np.moveaxis(v, axis, -1)
    nonzero = v != 0.0
    _, e_frexp = np.frexp(v)
    e_max = np.max(np.where(nonzero, e_frexp - 1, np.iinfo(np.int32).min), axis=-1)
    e_max = np.where(nonzero.any(axis=-1), e_max, 0)
    return LANES * np.ldexp(1.0, e_max - MANTISSA_BITS)
