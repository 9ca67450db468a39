"""Small shared numerical utilities: quadrature, stable sums, order fits."""

import math
import os
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def gl_nodes(a, b, n):
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = gauss_legendre(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def stable_sum(values):
    """Exactly rounded sum in a fixed (C-order) traversal.

    Used for the heterogeneous accumulations that feed pass/fail decisions;
    large homogeneous arrays go through numpy's deterministic pairwise sum.
    """
    return math.fsum(np.asarray(values, dtype=float).ravel(order="C"))


def cumtrapz(values, times):
    """Cumulative trapezoid along the last axis; first entry is zero."""
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    dt = np.diff(times)
    increments = 0.5 * dt * (values[..., 1:] + values[..., :-1])
    out = np.zeros(values.shape)
    np.cumsum(increments, axis=-1, out=out[..., 1:])
    return out


def trapz(values, times):
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    dt = np.diff(times)
    return float(np.sum(0.5 * dt * (values[..., 1:] + values[..., :-1]), axis=-1))


def trapezoid_weights(times):
    """Weights w with sum(w * f) = trapezoid rule of f over the grid."""
    times = np.asarray(times, dtype=float)
    w = np.zeros(times.shape)
    dt = np.diff(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def order_estimate(scales, errors):
    """Least-squares slope of log(error) against log(scale).

    Standard order-of-accuracy estimate from a refinement ladder; entries at
    the rounding floor (error 0) are dropped.
    """
    scales = np.asarray(scales, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = errors > 0.0
    if keep.sum() < 2:
        return float("nan")
    slope = np.polyfit(np.log(scales[keep]), np.log(errors[keep]), 1)[0]
    return float(slope)


def worker_count():
    """Worker cap for parallel maps; ROUGH_TRANSPORT_THREADS overrides."""
    env = os.environ.get("ROUGH_TRANSPORT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(4, os.cpu_count() or 1))
