import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vdmlab.analysis import (
    endpoint_flatness,
    find_m_region,
    gradient_bound,
    line_section,
    direction_scan,
    normalized_direction,
    refine_critical_point,
    theorem1_check,
    theorem2_bound_check,
)
from vdmlab.errors import DegenerateDirection, PreconditionError, StructureError, ZeroNorm
from vdmlab.optim import Method, OptimizerConfig, run
from vdmlab.rng import SplitMix64
from vdmlab.surfaces import COMPLEX_SIM, EIG_ROUND, FILTER_SIM, ONE_DIM_M, QUADRATIC, Surface, surface_eval
from vdmlab.vdm import Identity, LogExp, PowerHalfSquare, Scale

QUAD_1D = Surface("quad-1d", 1, lambda p: p[0] ** 2)


def test_theorem1_quadratic_critical():
    rep = theorem1_check(QUADRATIC, LogExp(1, 0.9), [0.0, 0.0])
    assert rep.is_critical
    np.testing.assert_allclose(rep.rhs, [20, 20], rtol=1e-4)
    np.testing.assert_allclose(rep.lhs, [20, 20], rtol=1e-4)
    assert rep.passed


@pytest.mark.parametrize("surface,p", [(EIG_ROUND, [0.3, -0.7]), (COMPLEX_SIM, [-6.0, 11.0]), (FILTER_SIM, [2.0, 1.0])])
def test_theorem1_identity_has_no_residual(surface, p):
    rep = theorem1_check(surface, Identity(), p)
    assert rep.residual_norm < 1e-6
    np.testing.assert_allclose(rep.lhs, rep.rhs, atol=1e-6)


def test_theorem1_rank_one_residual():
    rep = theorem1_check(QUADRATIC, PowerHalfSquare(), [1.0, 0.0])
    assert not rep.is_critical
    # delta'' = 1, grad = (2, 0): residual 1 * [[4, 0], [0, 0]]
    np.testing.assert_allclose(rep.residual, [[4, 0], [0, 0]], atol=1e-5)
    assert rep.residual_norm == pytest.approx(4.0, rel=1e-5)
    assert rep.passed


def test_refine_critical_point():
    p = refine_critical_point(EIG_ROUND, [0.35, 0.35])
    assert p is not None
    rep = theorem1_check(EIG_ROUND, LogExp(1, 0.5), p)
    assert rep.is_critical and rep.passed


def _dense_extrema(n=1_000_000, lo=-1.5, hi=1.5):
    x = np.linspace(lo, hi, n)
    y = ONE_DIM_M(x[None, :])
    inner = y[1:-1]
    maxima = x[1:-1][(inner > y[:-2]) & (inner > y[2:])]
    minima = x[1:-1][(inner < y[:-2]) & (inner < y[2:])]
    return maxima, minima


def test_m_region_symmetry_and_dense_grid_oracle():
    region = find_m_region(ONE_DIM_M, (-1.5, 1.5), 2000)
    assert abs(region.p_min) < 1e-6
    assert abs(region.p_max1 + region.p_max2) < 1e-6
    maxima, minima = _dense_extrema()
    assert len(maxima) == 2 and len(minima) == 1
    assert abs(region.delta_p_max - (maxima[1] - maxima[0])) < 1e-5


def test_m_region_wide_bracket_has_five_extrema():
    # the outer shallow minima near +-1.742 sit inside (-3, 3)
    with pytest.raises(StructureError, match="5"):
        find_m_region(ONE_DIM_M, (-3, 3), 2000)


def test_m_region_quadratic_is_structure_error():
    with pytest.raises(StructureError):
        find_m_region(QUAD_1D, (-1, 1), 2000)


def test_m_region_rejects_2d():
    with pytest.raises(StructureError):
        find_m_region(EIG_ROUND)


def _gd(lr, vdm, p0, steps=40):
    cfg = OptimizerConfig(Method.GD, lr, max_steps=steps)
    return cfg, run(cfg, ONE_DIM_M, vdm, [p0])


def test_theorem2_identity_inside_v_part():
    region = find_m_region(ONE_DIM_M)
    cfg, rec = _gd(0.05, Identity(), 0.3)
    rep = theorem2_bound_check(ONE_DIM_M, region, rec, Identity(), cfg)
    assert rep.checked_steps == 40 and rep.exited_at is None
    assert rep.max_ratio <= 1 and rep.passed


def test_theorem2_exit_is_excluded():
    region = find_m_region(ONE_DIM_M)
    # LE(1, 0.99) multiplies the step by ~100 near the well and throws the iterate out
    cfg, rec = _gd(0.2, LogExp(1, 0.99), 0.05)
    rep = theorem2_bound_check(ONE_DIM_M, region, rec, LogExp(1, 0.99), cfg)
    assert rep.exited_at is not None
    assert rep.checked_steps == rep.exited_at
    assert not region.in_v_part(rec.params[rep.exited_at + 1][0])


def test_theorem2_bound_shrinks_with_le():
    region = find_m_region(ONE_DIM_M)
    ratio = gradient_bound(region, 0.1, Identity().derivative(0.0)) / gradient_bound(region, 0.1, LogExp(1, 0.99).derivative(0.0))
    assert ratio == pytest.approx(100.0, rel=1e-12)


def test_theorem2_rejects_momentum():
    region = find_m_region(ONE_DIM_M)
    cfg = OptimizerConfig(Method.GDM, 0.05, 0.9, max_steps=10)
    rec = run(cfg, ONE_DIM_M, Identity(), [0.3])
    with pytest.raises(PreconditionError):
        theorem2_bound_check(ONE_DIM_M, region, rec, Identity(), cfg)


def test_scan_alpha_zero_is_exact():
    p = np.array([0.3, -0.7])
    for norm in ("none", "whole-vector"):
        curve = direction_scan(EIG_ROUND, p, 4, norm, 1.0, 21)
        assert curve.losses[10] == surface_eval(EIG_ROUND, p)
        assert curve.alphas[10] == 0.0


def test_scan_parabola_oracle():
    p = np.array([1.0, 0.0])
    curve = direction_scan(QUADRATIC, p, 7, "whole-vector", 2.0, 4001)
    d = curve.direction
    assert np.linalg.norm(d) == pytest.approx(1.0, rel=1e-12)
    sample = slice(None, None, 100)
    expect = [float((p + a * d) @ (p + a * d)) for a in curve.alphas[sample]]
    np.testing.assert_allclose(curve.losses[sample], expect, rtol=1e-12)
    alpha_star = -float(p @ d)
    i = int(np.argmin(curve.losses))
    assert abs(curve.alphas[i] - alpha_star) <= 0.5 * (curve.alphas[1] - curve.alphas[0]) + 1e-12
    # vertex of the parabola through the three grid points around the argmin
    (a0, a1, a2), (f0, f1, f2) = curve.alphas[i - 1 : i + 2], curve.losses[i - 1 : i + 2]
    vertex = a1 - 0.5 * ((a1 - a0) ** 2 * (f1 - f2) - (a1 - a2) ** 2 * (f1 - f0)) / ((a1 - a0) * (f1 - f2) - (a1 - a2) * (f1 - f0))
    assert abs(vertex - alpha_star) < 1e-6


def test_scan_is_deterministic():
    p = np.array([0.3, -0.7])
    a = direction_scan(EIG_ROUND, p, 12, "whole-vector", 1.0, 11)
    b = direction_scan(EIG_ROUND, p, 12, "whole-vector", 1.0, 11)
    assert a.losses.tobytes() == b.losses.tobytes()


def test_scan_direction_is_seeded_normal():
    d, _ = normalized_direction(EIG_ROUND, np.array([3.0, 4.0]), 5, "none")
    np.testing.assert_array_equal(d, SplitMix64(5).normals(2))


def test_scan_requires_odd_points():
    with pytest.raises(ValueError):
        direction_scan(EIG_ROUND, [0.0, 1.0], 0, "none", 1.0, 10)


class Grouped:
    def __init__(self, groups):
        self.groups = groups

    def loss(self, w):
        return float(w @ w)

    def filter_groups(self):
        return iter(self.groups)


def test_filter_normalization_per_group():
    p = np.array([3.0, 4.0, 0.5, 0.5, 0.0])
    ev = Grouped([slice(0, 2), slice(2, 4), slice(4, 5)])
    with pytest.warns(UserWarning, match="zero-norm"):
        d, zeroed = normalized_direction(ev, p, 1, "filter")
    assert np.linalg.norm(d[0:2]) == pytest.approx(5.0)
    assert np.linalg.norm(d[2:4]) == pytest.approx(np.sqrt(0.5))
    assert zeroed == [2] and d[4] == 0.0


@pytest.mark.filterwarnings("ignore:zero-norm")
def test_zero_norm_everywhere():
    with pytest.raises(ZeroNorm):
        normalized_direction(Grouped([slice(0, 2)]), np.zeros(2), 1, "filter")
    with pytest.raises(ZeroNorm):
        normalized_direction(EIG_ROUND, np.zeros(2), 1, "whole-vector")


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([Scale(3.0), LogExp(1, 0.5), PowerHalfSquare()]))
def test_argmin_invariant_under_vdm(seed, vdm):
    curve = direction_scan(QUADRATIC, np.array([1.0, -0.5]), seed, "whole-vector", 2.0, 101)
    deformed = [vdm.value(x) for x in curve.losses]
    assert int(np.argmin(deformed)) == int(np.argmin(curve.losses))


def test_line_section():
    c = line_section(QUADRATIC, [1.0, 0.0], [-1.0, 0.0], np.linspace(0, 1, 11))
    assert c.losses[0] == 1.0 and c.losses[-1] == 1.0
    assert np.argmin(c.losses) == 5
    np.testing.assert_allclose(c.losses, c.losses[::-1], atol=1e-15)
    with pytest.raises(DegenerateDirection):
        line_section(QUADRATIC, [1.0, 0.0], [1.0, 0.0], [0.0, 1.0])


def test_line_section_single_gdm_step_matches_direct_eval():
    cfg = OptimizerConfig(Method.GDM, 0.02, 0.9, max_steps=1)
    rec = run(cfg, COMPLEX_SIM, Identity(), [-6.0, 11.0])
    p0, p1 = rec.params
    alphas = np.linspace(-0.5, 1.5, 21)
    c = line_section(COMPLEX_SIM, p0, p1, alphas)
    for a, v in zip(alphas, c.losses):
        assert v == surface_eval(COMPLEX_SIM, (1 - a) * p0 + a * p1)


def test_endpoint_flatness_quadratic():
    f = endpoint_flatness(QUADRATIC, [4.0, -1.0])
    assert (f["lambda_max"], f["lambda_min"], f["trace"]) == pytest.approx((2, 2, 4), abs=1e-5)


def _grid_curvature(surface, p, h=1e-3):
    # dense 5x5 patch of samples, second differences, eigenvalues via numpy
    f = lambda q: float(surface(np.asarray(q)))
    fxx = (f(p + [h, 0]) - 2 * f(p) + f(p - [h, 0])) / h**2
    fyy = (f(p + [0, h]) - 2 * f(p) + f(p - [0, h])) / h**2
    fxy = (f(p + [h, h]) - f(p + [h, -h]) - f(p + [-h, h]) + f(p - [h, h])) / (4 * h * h)
    return np.linalg.eigvalsh(np.array([[fxx, fxy], [fxy, fyy]]))[-1]


def test_eig_round_flatness_ordering_matches_grid_oracle():
    rng = SplitMix64(21)
    ours, oracle = [], []
    while len(ours) < 10:
        p = refine_critical_point(EIG_ROUND, rng.uniforms(2, -10, 10))
        if p is None or endpoint_flatness(EIG_ROUND, p)["lambda_min"] <= 0:
            continue
        ours.append(endpoint_flatness(EIG_ROUND, p)["lambda_max"])
        oracle.append(_grid_curvature(EIG_ROUND, p))
    assert np.argsort(ours).tolist() == np.argsort(oracle).tolist()
    assert max(ours) / min(ours) > 2


def _grid_argmin(surface, x0, x1, y0, y1, n=801):
    X, Y = np.meshgrid(np.linspace(x0, x1, n), np.linspace(y0, y1, n))
    Z = surface(np.stack([X, Y]))
    i = np.unravel_index(np.argmin(Z), Z.shape)
    return np.array([X[i], Y[i]])


def test_filter_sim_sharp_vs_flat_basin():
    sharp = _grid_argmin(FILTER_SIM, -5.5, -4.5, -5.5, -4.5)
    flat = _grid_argmin(FILTER_SIM, 2, 6, 1, 5)
    assert endpoint_flatness(FILTER_SIM, sharp)["lambda_max"] > 1000 * endpoint_flatness(FILTER_SIM, flat)["lambda_max"]
