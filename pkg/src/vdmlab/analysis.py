"""Instruments for flatness and for checking the two deformation theorems."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import io
from .errors import DegenerateDirection, PreconditionError, StructureError, ZeroNorm
from .optim import Method, TrajectoryRecord
from .rng import SplitMix64
from .surfaces import (
    HESS_STEP,
    Surface,
    central_hessian,
    hessian_eigenvalues,
    surface_eval,
    surface_gradient,
    surface_hessian,
)
from .vdm import DeformationSpec

CRITICAL_GRAD_NORM = 1e-6
EIGEN_RTOL = 1e-4
RANK_ONE_RTOL = 1e-3
THEOREM2_TOL = 1e-9


def _eigvals(H):
    if H.shape[0] <= 2:
        pair = hessian_eigenvalues(H)
        return np.array([pair.lambda_max, pair.lambda_min])
    return np.linalg.eigvalsh(H)[::-1]


def composed(surface: Surface, vdm: DeformationSpec):
    """Vectorized ``delta(l(p))``."""

    def fn(p):
        values = np.asarray(surface(p), dtype=float)
        return np.array([vdm.value(float(x)) for x in values.ravel()]).reshape(values.shape)

    return fn


@dataclass
class Theorem1Report:
    point: np.ndarray
    ddelta: float
    d2delta: float
    grad_norm: float
    is_critical: bool
    lhs: np.ndarray  # eigenvalues of the composed Hessian
    rhs: np.ndarray  # ddelta * eigenvalues of the original Hessian
    residual: np.ndarray  # H_composed - ddelta * H
    rank_one: np.ndarray  # d2delta * g g^T, the analytic residual

    @property
    def residual_norm(self):
        return float(np.linalg.norm(self.residual))

    @property
    def eigen_error(self):
        """Largest eigenvalue mismatch relative to the spectral scale of the rhs."""
        scale = max(float(np.max(np.abs(self.rhs))), 1e-300)
        return float(np.max(np.abs(self.lhs - self.rhs))) / scale

    @property
    def rank_one_error(self):
        scale = max(float(np.linalg.norm(self.rank_one)), 1e-300)
        return float(np.linalg.norm(self.residual - self.rank_one)) / scale

    @property
    def passed(self):
        if self.is_critical:
            return self.eigen_error <= EIGEN_RTOL
        return self.rank_one_error <= RANK_ONE_RTOL

    def to_json(self):
        return {
            "check": "theorem1",
            "point": self.point,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual_norm,
            "pass": self.passed,
        }


def theorem1_check(surface: Surface, vdm: DeformationSpec, p, h=HESS_STEP) -> Theorem1Report:
    """Compare the Hessian of ``delta(l)`` with ``delta'(l)`` times the Hessian of ``l``.

    At critical points the two agree; elsewhere they differ by the rank-one
    term ``delta''(l) grad l grad l^T``, which is reported alongside.
    """
    p = surface.check(p)
    loss = surface_eval(surface, p)
    dd = vdm.derivative(loss)
    d2 = vdm.second_derivative(loss)
    g = surface_gradient(surface, p)
    H = surface_hessian(surface, p, h)
    Hc = central_hessian(composed(surface, vdm), p, h)
    return Theorem1Report(
        point=p,
        ddelta=dd,
        d2delta=d2,
        grad_norm=float(np.linalg.norm(g)),
        is_critical=bool(np.linalg.norm(g) < CRITICAL_GRAD_NORM),
        lhs=_eigvals(Hc),
        rhs=dd * _eigvals(H),
        residual=Hc - dd * H,
        rank_one=d2 * np.outer(g, g),
    )


def refine_critical_point(surface: Surface, p0, tol=CRITICAL_GRAD_NORM / 10, max_iter=50):
    """Newton iteration on the finite-difference gradient; returns the point or None."""
    p = surface.check(p0).copy()
    for _ in range(max_iter):
        g = surface_gradient(surface, p)
        if np.linalg.norm(g) < tol:
            return p
        H = surface_hessian(surface, p)
        try:
            p = p - np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(p)):
            return None
    return p if np.linalg.norm(surface_gradient(surface, p)) < tol else None


@dataclass(frozen=True)
class MRegion:
    """A local M region: one minimum flanked by two maxima inside ``(p_a, p_b)``."""

    p_a: float
    p_max1: float
    p_min: float
    p_max2: float
    p_b: float

    def __post_init__(self):
        if not self.p_a < self.p_max1 < self.p_min < self.p_max2 < self.p_b:
            raise StructureError(f"extrema out of order: {self}")

    @property
    def delta_p_max(self):
        return self.p_max2 - self.p_max1

    def in_v_part(self, x):
        return self.p_max1 < float(x) < self.p_max2

    def in_region(self, x):
        return self.p_a < float(x) < self.p_b


def _derivative_1d(surface, h=1e-5):
    def d(x):
        x = np.asarray(x, dtype=float)
        return (surface(np.array([x + h])) - surface(np.array([x - h]))) / (2 * h)

    return d


def _bisect_root(d, a, b, tol=1e-10, max_iter=200):
    da = d(a)
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        dm = d(mid)
        if abs(dm) < tol or mid in (a, b):
            return mid
        if (dm > 0) == (da > 0):
            a, da = mid, dm
        else:
            b = mid
    return 0.5 * (a + b)


def find_m_region(surface: Surface, bracket=(-1.5, 1.5), grid_n=2000, curvature_tol=1e-8) -> MRegion:
    """Locate max-min-max inside ``bracket`` from sign changes of the derivative.

    Raises StructureError unless the bracket holds exactly three extrema with
    the required curvature signs.
    """
    if surface.dim != 1:
        raise StructureError("M regions are defined for one-dimensional surfaces")
    lo, hi = map(float, bracket)
    d = _derivative_1d(surface)
    grid = np.linspace(lo, hi, int(grid_n))
    slope = d(grid)
    sign = np.sign(slope)
    changes = [i for i in range(len(grid) - 1) if sign[i] != sign[i + 1] and sign[i] != 0]
    if len(changes) != 3:
        raise StructureError(f"expected 3 extrema in ({lo}, {hi}), found {len(changes)}")
    extrema = [float(_bisect_root(d, grid[i], grid[i + 1])) for i in changes]
    curv = [central_hessian(surface, np.array([x]))[0, 0] for x in extrema]
    if not (curv[0] < -curvature_tol and curv[1] > curvature_tol and curv[2] < -curvature_tol):
        raise StructureError(f"extrema curvature signs {np.sign(curv).tolist()} are not (-, +, -)")
    return MRegion(lo, extrema[0], extrema[1], extrema[2], hi)


def gradient_bound(region: MRegion, lr: float, ddelta: float) -> float:
    """Largest |l'(p_k)| compatible with staying inside the V part after one GD step."""
    return region.delta_p_max / (lr * ddelta)


@dataclass
class Theorem2Report:
    max_ratio: float
    checked_steps: int
    exited_at: int | None
    violations: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.violations

    def to_json(self):
        return {
            "check": "theorem2",
            "point": None,
            "lhs": self.max_ratio,
            "rhs": 1.0,
            "residual": max(0.0, self.max_ratio - 1.0),
            "pass": self.passed,
            "checked_steps": self.checked_steps,
            "exited_at": self.exited_at,
        }


def theorem2_bound_check(
    surface: Surface, region: MRegion, trajectory: TrajectoryRecord, vdm: DeformationSpec, config=None
) -> Theorem2Report:
    """Check ``|l'(p_k)| * eta_k * delta'(l(p_k)) <= dp_max`` on every step inside the V part.

    Steps from the first one leaving the V part onward are excluded and the
    exit index is reported.
    """
    method = config.method if config is not None else trajectory.method
    if Method(method) is not Method.GD or Method(trajectory.method) is not Method.GD:
        raise PreconditionError("the gradient bound assumes plain gradient descent")
    if surface.dim != 1:
        raise PreconditionError("the gradient bound is stated for one-dimensional surfaces")
    ratios, violations = [], []
    exited_at = None
    for k in range(len(trajectory) - 1):
        x, x_next = trajectory.params[k], trajectory.params[k + 1]
        if not (region.in_v_part(x[0]) and region.in_v_part(x_next[0])):
            exited_at = k
            break
        slope = abs(float(surface_gradient(surface, x)[0]))
        dd = vdm.derivative(surface_eval(surface, x))
        ratio = slope * trajectory.lr[k] * dd / region.delta_p_max
        ratios.append(ratio)
        if ratio > 1 + THEOREM2_TOL:
            violations.append({"step": k, "p": float(x[0]), "ratio": ratio})
    return Theorem2Report(max(ratios, default=0.0), len(ratios), exited_at, violations)


@dataclass
class ScanCurve:
    alphas: np.ndarray
    losses: np.ndarray
    direction: np.ndarray
    normalization: str
    zeroed_groups: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.alphas) != len(self.losses):
            raise ValueError("alpha grid and loss curve differ in length")
        if np.any(np.diff(self.alphas) <= 0):
            raise ValueError("alpha grid must be strictly ascending")

    def to_csv(self, path):
        io.write_csv(path, ["alpha", "loss"], zip(self.alphas.tolist(), self.losses.tolist()))


NORMALIZATIONS = ("none", "whole-vector", "filter")


def _loss_fn(evaluator):
    return evaluator.loss if hasattr(evaluator, "loss") else evaluator


def _groups(evaluator, n):
    if hasattr(evaluator, "filter_groups"):
        return list(evaluator.filter_groups())
    return [slice(0, n)]


def normalized_direction(evaluator, p, seed, normalization="filter"):
    """Seeded standard-normal direction, rescaled per parameter group.

    Groups of ``p`` with zero norm get a zero direction and are returned in
    the second value; a direction that ends up entirely zero raises ZeroNorm.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    p = np.asarray(p, dtype=float)
    d = SplitMix64(seed).normals(p.size)
    zeroed = []
    if normalization == "whole-vector":
        pn = np.linalg.norm(p)
        if pn == 0:
            raise ZeroNorm("cannot normalize against a zero parameter vector")
        d = d * (pn / np.linalg.norm(d))
    elif normalization == "filter":
        for gi, g in enumerate(_groups(evaluator, p.size)):
            pn = np.linalg.norm(p[g])
            if pn == 0:
                d[g] = 0.0
                zeroed.append(gi)
            else:
                d[g] = d[g] * (pn / np.linalg.norm(d[g]))
        if zeroed:
            warnings.warn(f"zero-norm parameter groups {zeroed}; their direction is zeroed", stacklevel=2)
        if not np.any(d):
            raise ZeroNorm("every parameter group has zero norm")
    return d, zeroed


def direction_scan(evaluator, p, seed, normalization="filter", alpha_max=1.0, n_points=51) -> ScanCurve:
    """Loss along ``p + alpha d`` for alpha on a symmetric grid containing 0."""
    if n_points < 1 or n_points % 2 == 0:
        raise ValueError("n_points must be odd so that alpha = 0 is on the grid")
    p = np.asarray(p, dtype=float)
    d, zeroed = normalized_direction(evaluator, p, seed, normalization)
    alphas = np.linspace(-alpha_max, alpha_max, n_points)
    alphas[n_points // 2] = 0.0
    loss = _loss_fn(evaluator)
    losses = np.array([float(loss(p + a * d)) for a in alphas])
    return ScanCurve(alphas, losses, d, normalization, zeroed)


def line_section(surface: Surface, p_k, p_k1, alphas) -> ScanCurve:
    """Loss on the line through two consecutive iterates, ``(1 - a) p_k + a p_k1``."""
    p_k = surface.check(p_k)
    p_k1 = surface.check(p_k1)
    if np.array_equal(p_k, p_k1):
        raise DegenerateDirection("consecutive iterates coincide")
    alphas = np.asarray(alphas, dtype=float)
    losses = np.array([surface_eval(surface, (1 - a) * p_k + a * p_k1) for a in alphas])
    return ScanCurve(alphas, losses, p_k1 - p_k, "section")


def endpoint_flatness(surface: Surface, p_final) -> dict:
    """Hessian spectrum of the original surface at a final iterate."""
    H = surface_hessian(surface, p_final)
    pair = hessian_eigenvalues(H)
    return {"lambda_max": pair.lambda_max, "lambda_min": pair.lambda_min, "trace": float(np.trace(H))}

