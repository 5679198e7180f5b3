"""Shared test helpers: finite differences and relative-error measures.

The finite-difference routine here is the oracle for every analytic gradient
in the package; keep it dumb and obviously correct.
"""
from __future__ import annotations

import numpy as np


def central_diff(f, x, h=1e-6):
    """Central finite-difference gradient of scalar f at flat vector x."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros(x.size)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def rel_err(a, b):
    """Relative error between two gradient vectors, safe near zero."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-10)
    return np.linalg.norm(a - b) / scale
