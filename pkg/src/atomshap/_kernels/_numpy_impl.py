"""Pure-numpy kernel implementations (reference semantics for the numba path)."""

import numpy as np


def complex_raw(q_re, q_im, ent_re, ent_im):
    """Raw bilinear scores for combined query vectors against all entities.

    q_re/q_im: [B, L] combined subject*relation vectors; ent_*: [E, L].
    Returns float64 [B, E].
    """
    return q_re @ ent_re.T + q_im @ ent_im.T


def minmax_rows(mat):
    """Per-row min-max to [0, 1]. Degenerate all-equal rows map to all-1 when
    the constant is positive, all-0 otherwise."""
    mat = np.asarray(mat, dtype=np.float64)
    lo = mat.min(axis=1, keepdims=True)
    hi = mat.max(axis=1, keepdims=True)
    span = hi - lo
    out = np.empty_like(mat)
    degenerate = span[:, 0] == 0.0
    ok = ~degenerate
    out[ok] = (mat[ok] - lo[ok]) / span[ok]
    out[degenerate] = (lo[degenerate] > 0.0).astype(np.float64)
    return out


def combine_product_max(parents, mat):
    """z[e] = max_b parents[b] * mat[b, e]; also the first-argmax parent index."""
    prod = mat * parents[:, None]
    return prod.max(axis=0), prod.argmax(axis=0).astype(np.int64)


def count_strictly_greater(scores, mask, target):
    """|{e in mask, e != target : scores[e] > scores[target]}|"""
    greater = (scores > scores[target]) & mask
    greater[target] = False
    return int(greater.sum())
