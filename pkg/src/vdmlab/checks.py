"""Verification suites shared by the ``check`` command and the acceptance tests."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import MRegion, find_m_region, refine_critical_point, theorem1_check, theorem2_bound_check
from .errors import DomainError
from .mlp import MlpSpec, _blocks, _forward, backward, forward_loss, init_weights, make_dataset
from .optim import Method, OptimizerConfig, run
from .rng import SplitMix64, derive_seed
from .surfaces import COMPLEX_SIM, EIG_ROUND, FILTER_SIM, ONE_DIM_M, QUADRATIC, central_gradient
from .vdm import ArctanPower, Identity, LogExp, PowerHalfSquare, Scale

CRITICAL_SPECS = (Identity(), Scale(3.0), ArctanPower(10, 1, 1, 1), LogExp(1, 0.99), ArctanPower(18 / math.pi, 1, 2, 1))
CURVED_SPECS = (ArctanPower(10, 1, 1, 1), LogExp(1, 0.99), PowerHalfSquare(), ArctanPower(18 / math.pi, 1, 2, 1), LogExp(1, 0.5))
THEOREM1_SURFACES = (FILTER_SIM, EIG_ROUND, COMPLEX_SIM, QUADRATIC)
SEARCH_BOX = {"filter-sim": (-8.0, 8.0), "eig-round": (-10.0, 10.0), "complex-sim": (-8.0, 12.0), "quadratic": (-3.0, 3.0)}
ONE_DIM_M_BRACKET = (-1.5, 1.5)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    reports: list = field(default_factory=list)

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  {self.detail}"


def _box_point(rng, box, dim=2):
    return np.array([box[0] + (box[1] - box[0]) * rng.uniform() for _ in range(dim)])


def critical_points(n=50, seed=0, max_tries=5000):
    """Distinct numerically critical points (gradient norm < 1e-6), cycling over the surfaces."""
    rng = SplitMix64(seed)
    found = {s.name: [] for s in THEOREM1_SURFACES}
    out = []
    tries = 0
    while len(out) < n and tries < max_tries:
        surface = THEOREM1_SURFACES[tries % len(THEOREM1_SURFACES)]
        tries += 1
        p = refine_critical_point(surface, _box_point(rng, SEARCH_BOX[surface.name]))
        if p is None or any(np.linalg.norm(p - q) < 1e-4 for q in found[surface.name]):
            continue
        if surface.name == "quadratic" and found["quadratic"]:
            continue  # one critical point only
        found[surface.name].append(p)
        out.append((surface, p))
    return out


def theorem1_critical_suite(n=50, seed=0):
    reports, failures = [], 0
    for i, (surface, p) in enumerate(critical_points(n, seed)):
        spec = CRITICAL_SPECS[i % len(CRITICAL_SPECS)]
        try:
            rep = theorem1_check(surface, spec, p)
        except DomainError:
            spec = Identity()
            rep = theorem1_check(surface, spec, p)
        ok = rep.is_critical and rep.passed
        failures += not ok
        reports.append((surface.name, spec.to_string(), rep))
    worst = max((r.eigen_error for _, _, r in reports), default=float("nan"))
    return CheckResult(
        "theorem1-critical",
        failures == 0 and len(reports) == n,
        f"{len(reports)} critical points, worst eigen rel err {worst:.2e} (tol 1e-4)",
        reports,
    )


def noncritical_points(n=50, seed=1, min_grad=0.1):
    rng = SplitMix64(seed)
    out, tries = [], 0
    while len(out) < n and tries < 100 * n:
        surface = THEOREM1_SURFACES[tries % len(THEOREM1_SURFACES)]
        spec = CURVED_SPECS[tries % len(CURVED_SPECS)]
        tries += 1
        p = _box_point(rng, SEARCH_BOX[surface.name])
        g = central_gradient(surface, p)
        loss = float(surface(p))
        if np.linalg.norm(g) < min_grad or loss < 0:
            continue
        try:
            rank_one = abs(spec.second_derivative(loss)) * float(g @ g)
        except DomainError:
            continue
        if rank_one < 1e-3:
            continue
        out.append((surface, spec, p))
    return out


def theorem1_noncritical_suite(n=50, seed=1):
    reports, failures = [], 0
    for surface, spec, p in noncritical_points(n, seed):
        rep = theorem1_check(surface, spec, p)
        failures += rep.is_critical or not rep.passed
        reports.append((surface.name, spec.to_string(), rep))
    worst = max((r.rank_one_error for _, _, r in reports), default=float("nan"))
    return CheckResult(
        "theorem1-noncritical",
        failures == 0 and len(reports) == n,
        f"{len(reports)} points, worst rank-one rel err {worst:.2e} (tol 1e-3)",
        reports,
    )


THEOREM2_LRS = (0.05, 0.2, 0.5, 1.0)
THEOREM2_SPECS = (Identity(), LogExp(1, 0.99), ArctanPower(10, 1, 1, 1), Scale(2.0), LogExp(1, 0.5))


def theorem2_trajectories(region: MRegion, n_per_combo=1, seed=2, steps=60):
    out = []
    for ci, (lr, spec) in enumerate((lr, s) for lr in THEOREM2_LRS for s in THEOREM2_SPECS):
        for j in range(n_per_combo):
            rng = SplitMix64(derive_seed(seed, ci * n_per_combo + j))
            x0 = region.p_max1 + (region.p_max2 - region.p_max1) * (0.05 + 0.9 * rng.uniform())
            cfg = OptimizerConfig(Method.GD, lr, 0.0, (), 1.0, steps)
            out.append((lr, spec, cfg, run(cfg, ONE_DIM_M, spec, [x0])))
    return out


def theorem2_suite(seed=2):
    region = find_m_region(ONE_DIM_M, ONE_DIM_M_BRACKET)
    reports, violations, checked = [], 0, 0
    for lr, spec, cfg, rec in theorem2_trajectories(region, seed=seed):
        rep = theorem2_bound_check(ONE_DIM_M, region, rec, spec, cfg)
        violations += len(rep.violations)
        checked += rep.checked_steps
        reports.append((lr, spec.to_string(), rep))
    worst = max(r.max_ratio for _, _, r in reports)
    return CheckResult(
        "theorem2-bound",
        violations == 0 and len(reports) >= 20 and checked > 0,
        f"{len(reports)} GD trajectories, {checked} steps in the V part, max ratio {worst:.6f}, violations {violations}",
        reports,
    )


def _relu_pattern(spec, w, X):
    pre, _ = _forward(_blocks(spec, w), X)
    return [z > 0 for z in pre[:-1]]


def mlp_gradcheck(n_coords=50, seed=3, h=1e-5, rtol=1e-4):
    """Backprop against central differences on sampled coordinates of a 2-8-2 net.

    Coordinates whose perturbation flips any ReLU are resampled.
    """
    spec = MlpSpec((2, 8, 2))
    ds = make_dataset("two-gaussians", 64, 8, 0.3, seed)
    X, y = ds.X_train, ds.y_train
    w = init_weights(spec, derive_seed(seed, 0))
    rng = SplitMix64(derive_seed(seed, 1))
    w[:] = w + 0.1 * rng.normals(w.size)  # nonzero biases
    grad = backward(spec, w, X, y)
    base = _relu_pattern(spec, w, X)
    worst, n, tries = 0.0, 0, 0
    while n < n_coords and tries < 50 * n_coords:
        tries += 1
        i = rng.randbelow(w.size)
        e = np.zeros_like(w)
        e[i] = h
        pats = (_relu_pattern(spec, w + e, X), _relu_pattern(spec, w - e, X))
        if any(not all(np.array_equal(a, b) for a, b in zip(base, pat)) for pat in pats):
            continue
        fd = (forward_loss(spec, w + e, X, y)[0] - forward_loss(spec, w - e, X, y)[0]) / (2 * h)
        err = abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-7)
        worst = max(worst, err)
        n += 1
    return CheckResult("mlp-gradcheck", n == n_coords and worst < rtol, f"{n} coordinates, worst rel err {worst:.2e} (tol {rtol:g})")


def zero_init_loss_check():
    checks = []
    for classes in (2, 10):
        spec = MlpSpec((2, 4, classes), init="zeros")
        ds = make_dataset("two-gaussians", 16, 4, 0.3, 0)
        loss, _ = forward_loss(spec, init_weights(spec, 0), ds.X_train, ds.y_train)
        checks.append((classes, loss, abs(loss - math.log(classes))))
    ok = all(err <= 1e-15 * math.log(c) for c, _, err in checks)
    return CheckResult("mlp-zero-init-loss", ok, "; ".join(f"C={c}: {l!r}" for c, l, _ in checks))


def surface_gradcheck(n=100, seed=4, h=1e-5, rtol=1e-5):
    """Central differences with step h and h/2 agree on seeded points of every 2D surface."""
    rng = SplitMix64(seed)
    worst = 0.0
    for surface in THEOREM1_SURFACES:
        for _ in range(n):
            p = _box_point(rng, SEARCH_BOX[surface.name])
            g1 = central_gradient(surface, p, h)
            g2 = central_gradient(surface, p, h / 2)
            scale = max(np.linalg.norm(g1), 1.0)
            worst = max(worst, float(np.linalg.norm(g1 - g2)) / scale)
    return CheckResult("surface-gradcheck", worst <= rtol, f"{n} points per surface, worst rel diff {worst:.2e} (tol {rtol:g})")


SUITES = {
    "theorem1": (theorem1_critical_suite, theorem1_noncritical_suite),
    "theorem2": (theorem2_suite,),
    "gradcheck": (mlp_gradcheck, zero_init_loss_check, surface_gradcheck),
}


def run_suite(name):
    names = list(SUITES) if name == "all" else [name]
    return [fn() for n in names for fn in SUITES[n]]
