"""Periodic 1-D grid, discrete calculus and the P1 interpolant.

Grid functions are plain numpy arrays whose last axis runs over the ``M``
sites ``x_k = k h`` of the torus, ``h = 1/M``.  Every operator here acts
along that last axis, so an ``n x M`` species matrix (or a stack of them)
can be passed directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SERIES_REL = 1e-10


@dataclass(frozen=True)
class Grid:
    M: int

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"grid needs an integer M >= 2, got {self.M}")
        object.__setattr__(self, "M", int(self.M))

    @property
    def h(self) -> float:
        return 1.0 / self.M

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.M) * self.h

    def wrap(self, k):
        return np.mod(k, self.M)

    def sample(self, func) -> np.ndarray:
        """Evaluate a closed-form function at the nodes."""
        return np.asarray(func(self.x), dtype=float)


def _spacing(w: np.ndarray) -> float:
    M = w.shape[-1]
    if M < 2:
        raise ValueError("grid functions need at least two sites")
    return 1.0 / M


def forward_diff(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return (np.roll(w, -1, axis=-1) - w) / _spacing(w)


def backward_diff(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return (w - np.roll(w, 1, axis=-1)) / _spacing(w)


def laplacian(w) -> np.ndarray:
    """Three-point periodic Laplacian ``(w(k+1) + w(k-1) - 2 w(k)) / h^2``."""
    w = np.asarray(w, dtype=float)
    h = _spacing(w)
    return (np.roll(w, -1, axis=-1) + np.roll(w, 1, axis=-1) - 2.0 * w) / (h * h)


def _check_p(p: float):
    if not p >= 1:
        raise ValueError(f"norm exponent must satisfy p >= 1, got {p}")


def discrete_norm(w, p: float = 2.0):
    """``(h sum_k |w_k|^p)^(1/p)`` along the last axis."""
    _check_p(p)
    w = np.asarray(w, dtype=float)
    return (_spacing(w) * np.sum(np.abs(w) ** p, axis=-1)) ** (1.0 / p)


class PiecewiseLinear:
    """Periodic P1 interpolant of node values on the unit torus."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        self.M = self.values.shape[-1]
        self.h = 1.0 / self.M

    def __call__(self, x):
        x = np.mod(np.asarray(x, dtype=float), 1.0)
        s = x * self.M
        k = np.floor(s).astype(int)
        # floating point can push s to exactly M on the upper edge
        k = np.minimum(k, self.M - 1)
        frac = s - k
        left = self.values[..., k]
        right = self.values[..., (k + 1) % self.M]
        return (1.0 - frac) * left + frac * right

    def derivative(self, x):
        """Piecewise constant slope; the right-continuous branch at nodes."""
        x = np.mod(np.asarray(x, dtype=float), 1.0)
        k = np.minimum(np.floor(x * self.M).astype(int), self.M - 1)
        return forward_diff(self.values)[..., k]


def hat(x, h: float):
    """The P1 basis function ``T(x) = (1 - |x|/h)`` on ``|x| <= h``."""
    x = np.abs(np.asarray(x, dtype=float))
    return np.where(x <= h, 1.0 - x / h, 0.0)


def interpolate(w) -> PiecewiseLinear:
    return PiecewiseLinear(w)


def cell_power_mean(a, b, p: float):
    """``int_0^1 |beta a + (1-beta) b|^p d beta`` in closed form.

    Uses ``(A^(p+1) - B^(p+1)) / ((p+1)(A - B))`` on magnitudes, the split
    formula when the segment crosses zero, and a second-order series when
    ``A`` and ``B`` nearly coincide.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    A = np.abs(a)
    B = np.abs(b)

    # everything is scaled by the larger magnitude so tiny data cannot underflow
    big = np.maximum(A, B)
    safe = np.where(big > 0, big, 1.0)
    r = np.minimum(A, B) / safe
    crossing = (a * b) < 0
    close = ~crossing & (1.0 - r <= _SERIES_REL)
    with np.errstate(divide="ignore", invalid="ignore"):
        split = (1.0 + r ** (p + 1)) / ((p + 1) * (1.0 + r))
        closed = (1.0 - r ** (p + 1)) / ((p + 1) * (1.0 - r))
        # mean^p (1 + p(p-1)/6 * (half-width / mean)^2)
        q = (1.0 - r) / (1.0 + r)
        series = (0.5 * (1.0 + r)) ** p * (1.0 + p * (p - 1) * q * q / 6.0)
    scaled = np.where(crossing, split, np.where(close, series, closed))
    return np.where(big > 0, big**p * scaled, 0.0)


def interpolant_lp_norm(w, p: float = 2.0):
    """Exact ``L^p(T)`` norm of the P1 interpolant, cell by cell."""
    _check_p(p)
    w = np.asarray(w, dtype=float)
    h = _spacing(w)
    per_cell = cell_power_mean(w, np.roll(w, -1, axis=-1), p)
    return (h * np.sum(per_cell, axis=-1)) ** (1.0 / p)


def interpolant_gradient_norm(w, p: float = 2.0):
    """``L^p`` norm of the interpolant's derivative (piecewise constant)."""
    _check_p(p)
    return discrete_norm(forward_diff(w), p)


def p1_inner(a, b):
    """Exact ``int_T a_tilde * b_tilde`` for two grid functions."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    h = _spacing(a)
    a1 = np.roll(a, -1, axis=-1)
    b1 = np.roll(b, -1, axis=-1)
    return h * np.sum(2 * a * b + a * b1 + a1 * b + 2 * a1 * b1, axis=-1) / 6.0
