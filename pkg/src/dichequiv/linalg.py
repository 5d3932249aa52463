"""Small dense linear algebra helpers.

All norms are Euclidean vector norms and the induced operator 2-norm.
"""

import numpy as np


def vnorm(v):
    return float(np.linalg.norm(np.asarray(v, dtype=float)))


def opnorm(a):
    """Operator 2-norm of a matrix, or of each matrix in a stack."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        return float(np.linalg.norm(a, 2))
    return np.linalg.norm(a, 2, axis=(-2, -1))


def multilinear_norm_bound(t):
    """Upper bound on the norm of an s-linear map R^d x ... x R^d -> R^d.

    The tensor ``t`` has shape (d, d, ..., d); the bound is the operator norm of
    its flattening to d x d^(s), which dominates sup |t[u1, ..., us]| over unit
    vectors because |u1 (x) ... (x) us| = 1.
    """
    t = np.asarray(t, dtype=float)
    if t.ndim <= 2:
        return opnorm(t) if t.ndim == 2 else vnorm(t)
    return float(np.linalg.norm(t.reshape(t.shape[0], -1), 2))


def random_orthogonal(d, rng):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def rotation(d, angle, axis=0):
    """Rotation by ``angle`` in the plane of coordinates (axis, axis + 1)."""
    out = np.eye(d)
    if d < 2:
        return out
    i, j = axis % d, (axis + 1) % d
    c, s = np.cos(angle), np.sin(angle)
    out[i, i], out[j, j] = c, c
    out[i, j], out[j, i] = -s, s
    return out
