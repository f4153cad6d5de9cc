"""Closed-form benchmark loss surfaces and finite-difference derivatives.

Surface functions are vectorized: they take an array whose leading axis runs
over coordinates (shape ``(dim, ...)``) and return values of shape ``(...)``.
Finite-difference stencils exploit this by evaluating every stencil point in
a single call.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import surface_constants as C
from .errors import DimensionMismatch, NonFinite

GRAD_STEP = 1e-5
HESS_STEP = 1e-4


def _filter_sim(p):
    k = C.FILTER_SIM
    p1, p2 = p[0], p[1]
    a1 = (
        k["quad_1"] * (p1 + k["shift_quad"]) ** 2
        + k["atan_wide_gain_1"] * np.arctan(k["atan_wide_slope"] * p1 - k["atan_wide_shift"]) ** 2
        + k["atan_narrow_gain_1"] * np.arctan(k["atan_narrow_slope"] * (p1 + k["atan_narrow_shift"])) ** 2
    )
    a2 = (
        k["quad_2"] * (p2 + k["shift_quad"]) ** 2
        + k["atan_wide_gain_2"] * np.arctan(k["atan_wide_slope"] * p2 - k["atan_wide_shift"]) ** 2
        + k["atan_narrow_gain_2"] * np.arctan(k["atan_narrow_slope"] * (p2 + k["atan_narrow_shift"])) ** 2
    )
    return (k["scale_1"] * a1 - k["offset_1"]) * (a2 - k["offset_2"])


def _eig_round(p):
    k = C.EIG_ROUND
    p1, p2 = p[0], p[1]
    wells = np.log(np.sin(k["inner_freq"] * np.sin(p1)) + k["log_shift"]) + np.log(
        np.sin(k["inner_freq"] * np.sin(p2)) + k["log_shift"]
    )
    return (
        k["log_gain"] * wells
        + k["ripple_gain"] * (np.sin(k["ripple_freq_1"] * p1) * np.sin(k["ripple_freq_2"] * p2))
        + k["quad"] * p1**2
        + k["quad"] * p2**2
        + k["offset"]
    )


def _square_wave_ish(x):
    return np.cos(x) + np.sin(3 * x) / 3 + np.cos(5 * x) / 5 + np.sin(7 * x) / 7


def _complex_sim(p):
    k = C.COMPLEX_SIM
    p1, p2 = p[0], p[1]
    f1 = (k["quad_1"] * p1) ** 2 + _square_wave_ish(p1) + k["offset_1"]
    f2 = (k["quad_2"] * p2) ** 2 + _square_wave_ish(p2) + k["offset_2"]
    return k["scale"] * f1 * f2


def _quadratic(p):
    return np.sum(np.asarray(p) ** 2, axis=0)


def _one_dim_m(p):
    # Sharp well at 0 between bumps at +-1; shallow outer minima near +-1.742.
    k = C.ONE_DIM_M
    x = p[0]
    h, w, c = k["bump_height"], k["bump_width"], k["bump_center"]
    offset = 2.0 * h * math.exp(-w * c * c)
    return k["quad"] * x**2 + h * np.exp(-w * (x - c) ** 2) + h * np.exp(-w * (x + c) ** 2) - offset


@dataclass(frozen=True)
class Surface:
    name: str
    dim: int
    fn: Callable

    def __call__(self, p):
        return self.fn(p)

    def check(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape != (self.dim,):
            raise DimensionMismatch(f"{self.name} expects a vector of length {self.dim}, got shape {p.shape}")
        return p

    def loss_and_grad(self, p):
        """Objective protocol used by the optimizers: one stencil call yields both."""
        return loss_and_gradient(self, self.check(p))


FILTER_SIM = Surface("filter-sim", 2, _filter_sim)
EIG_ROUND = Surface("eig-round", 2, _eig_round)
COMPLEX_SIM = Surface("complex-sim", 2, _complex_sim)
QUADRATIC = Surface("quadratic", 2, _quadratic)
ONE_DIM_M = Surface("one-dim-m", 1, _one_dim_m)

SURFACES = {s.name: s for s in (FILTER_SIM, EIG_ROUND, COMPLEX_SIM, QUADRATIC, ONE_DIM_M)}


def quadratic(dim):
    """Sum of squares in ``dim`` coordinates."""
    return Surface(f"quadratic-{dim}d", dim, _quadratic)


def get_surface(name: str) -> Surface:
    try:
        return SURFACES[name]
    except KeyError:
        raise KeyError(f"unknown surface {name!r}; choose from {sorted(SURFACES)}") from None


def _finite(values, what):
    values = np.asarray(values, dtype=float)
    if not np.isfinite(values).all():
        raise NonFinite(f"non-finite {what}")
    return values


def surface_eval(surface: Surface, p) -> float:
    p = surface.check(p)
    return float(_finite(surface(p), f"loss on {surface.name} at {p.tolist()}"))


@functools.lru_cache(maxsize=None)
def _gradient_offsets(n, h):
    # columns: centre, +h e_i, -h e_i
    offsets = np.concatenate([np.zeros((n, 1)), np.eye(n) * h, -np.eye(n) * h], axis=1)
    offsets.flags.writeable = False
    return offsets


def loss_and_gradient(f, p, h=GRAD_STEP):
    """Value and central-difference gradient from a single ``2n + 1`` point evaluation."""
    p = np.asarray(p, dtype=float)
    n = p.size
    values = _finite(f(p[:, None] + _gradient_offsets(n, h)), "function value in gradient stencil")
    return float(values[0]), (values[1 : n + 1] - values[n + 1 :]) / (2 * h)


def central_gradient(f, p, h=GRAD_STEP):
    """``(f(p + h e_i) - f(p - h e_i)) / 2h`` for each coordinate.

    ``f`` must accept a ``(dim, m)`` array of column points.
    """
    return loss_and_gradient(f, p, h)[1]


def central_hessian(f, p, h=HESS_STEP, symmetrize=True):
    """Second central differences; off-diagonals by the four-point cross stencil.

    With ``symmetrize=False`` the raw matrix is returned, whose (i, j) and
    (j, i) entries come from differently ordered sums of the same stencil.
    """
    p = np.asarray(p, dtype=float)
    n = p.size
    eye = np.eye(n) * h
    cols = [np.zeros(n)]
    cols += [eye[:, i] for i in range(n)] + [-eye[:, i] for i in range(n)]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for i, j in pairs:
        ei, ej = eye[:, i], eye[:, j]
        cols += [ei + ej, ei - ej, -ei + ej, -ei - ej]
    values = _finite(f(p[:, None] + np.stack(cols, axis=1)), "function value in Hessian stencil")
    f0 = values[0]
    plus, minus = values[1 : n + 1], values[n + 1 : 2 * n + 1]
    H = np.empty((n, n))
    H[np.diag_indices(n)] = (plus - 2 * f0 + minus) / (h * h)
    base = 2 * n + 1
    for k, (i, j) in enumerate(pairs):
        fpp, fpm, fmp, fmm = values[base + 4 * k : base + 4 * k + 4]
        H[i, j] = ((fpp - fpm) - (fmp - fmm)) / (4 * h * h)
        H[j, i] = ((fpp - fmp) - (fpm - fmm)) / (4 * h * h)
    if symmetrize:
        H = 0.5 * (H + H.T)
    return H


def surface_gradient(surface: Surface, p, h=GRAD_STEP) -> np.ndarray:
    return central_gradient(surface, surface.check(p), h)


def surface_hessian(surface: Surface, p, h=HESS_STEP, symmetrize=True) -> np.ndarray:
    return central_hessian(surface, surface.check(p), h, symmetrize)


@dataclass(frozen=True)
class HessianEigenpair:
    lambda_max: float
    lambda_min: float


def hessian_eigenvalues(H) -> HessianEigenpair:
    """Closed-form eigenvalues of a symmetric 1x1 or 2x2 matrix."""
    H = np.asarray(H, dtype=float)
    if not np.all(np.isfinite(H)):
        raise NonFinite("non-finite Hessian")
    if H.shape == (1, 1):
        v = float(H[0, 0])
        return HessianEigenpair(v, v)
    if H.shape != (2, 2):
        raise DimensionMismatch(f"expected a 1x1 or 2x2 matrix, got shape {H.shape}")
    a, b, d = H[0, 0], H[0, 1], H[1, 1]
    if abs(b - H[1, 0]) > 1e-9 * max(1.0, float(np.abs(H).max())):
        raise ValueError("hessian_eigenvalues needs a symmetric matrix")
    tr = a + d
    # (a - d)^2 + 4b^2 equals tr^2 - 4 det but cannot cancel catastrophically
    root = math.sqrt((a - d) ** 2 + 4 * b * b)
    return HessianEigenpair(float((tr + root) / 2), float((tr - root) / 2))
