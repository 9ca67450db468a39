"""Lagrangian flow maps: integration accuracy and the flow-level identities."""

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rough_transport.errors import (DivergenceUnboundedError, DomainTooSmallError,
                                    StepBlowupError)
from rough_transport.fields import VelocityFieldSpec
from rough_transport.flow import (change_of_variables_residual,
                                  compressibility_estimate, flow_convergence_study,
                                  forward_backward_mismatch, integrate_flow,
                                  jacobian, jacobian_ode_residual, make_seed_grid,
                                  seeds_from_points, superlevel_escape)
from rough_transport.numerics import order_estimate
from rough_transport.testfunctions import bump, gaussian

from conftest import field


def test_identity_flow(zero_field):
    grid = make_seed_grid(1.0, 16, 1)
    fl = integrate_flow(zero_field, grid, 8, "forward")
    assert np.array_equal(fl.trajectories[:, -1, :], grid.points)
    assert np.array_equal(fl.positions_at(0), grid.points)


def test_linear_expand_endpoint(linear_field):
    # analytic ODE solution: X(t, x) = x e^t
    fl = integrate_flow(linear_field, seeds_from_points([[1.0]]), 1000, "forward")
    assert abs(fl.positions_at(-1)[0, 0] - math.e) <= 1e-8


def test_rotation_endpoint(rotation_field):
    # quarter rotation carries (1, 0) to (0, 1)
    fl = integrate_flow(rotation_field, seeds_from_points([[1.0, 0.0]]),
                        1000, "forward")
    assert np.linalg.norm(fl.positions_at(-1)[0] - np.array([0.0, 1.0])) <= 1e-8


def test_shear_trajectories_piecewise_constant(shear_field):
    # off the jump line the flow is X(t) = (x + t sign(y), y), exactly
    seeds = seeds_from_points([[0.0, 0.25], [0.0, -1.5]])
    fl = integrate_flow(shear_field, seeds, 64, "forward", allow_nonsmooth=True)
    times = fl.time_grid
    assert np.allclose(fl.trajectories[0, :, 0], times, atol=0.0)
    assert np.allclose(fl.trajectories[1, :, 0], -times, atol=0.0)
    assert np.all(fl.trajectories[:, :, 1] == np.array([[0.25], [-1.5]]))


def test_nonsmooth_requires_optin(shear_field):
    with pytest.raises(ValueError):
        integrate_flow(shear_field, seeds_from_points([[0.0, 0.5]]), 8, "forward")


def test_flow_reproducible_bitwise(linear_field):
    grid = make_seed_grid(1.0, 32, 1)
    a = integrate_flow(linear_field, grid, 100, "forward")
    b = integrate_flow(linear_field, grid, 100, "forward")
    assert np.array_equal(a.trajectories, b.trajectories)


def test_step_blowup_reports_seed():
    cubic = VelocityFieldSpec(
        dimension=1,
        eval_b=lambda t, x: np.asarray(x, dtype=float) ** 3,
        eval_div_b=lambda t, x: 3.0 * np.asarray(x)[..., 0] ** 2,
        regularity_tag="smooth", div_sup=lambda t: float("inf"), horizon=10.0)
    with pytest.raises(StepBlowupError) as err:
        integrate_flow(cubic, seeds_from_points([[0.1], [2.0]]), 400, "forward")
    assert err.value.seed_index == 1


# --- Jacobians ---------------------------------------------------------------

def test_jacobian_divergence_free(rotation_field):
    grid = make_seed_grid(1.0, 8, 2)
    track = jacobian(rotation_field, integrate_flow(rotation_field, grid, 50, "forward"))
    assert np.all(track.jx == 1.0)
    assert track.L == 0.0


@pytest.mark.parametrize("field_id,rate", [("linear_expand", 1.0),
                                           ("linear_contract", -1.0)])
def test_jacobian_exponential(field_id, rate):
    # analytic Jacobian exp(rate * t); trapezoid of a constant is exact
    spec = field(field_id)
    grid = make_seed_grid(1.0, 16, 1)
    fl = integrate_flow(spec, grid, 200, "forward")
    track = jacobian(spec, fl)
    expected = np.exp(rate * fl.time_grid)
    assert np.max(np.abs(track.jx - expected[None, :])) <= 1e-12
    assert track.L == pytest.approx(1.0)
    assert np.all(track.jx <= math.exp(track.L) * (1.0 + 1e-12))
    assert np.all(track.jx >= math.exp(-track.L) * (1.0 - 1e-12))


def test_jacobian_rejects_inconsistent_metadata(linear_field):
    lying = dataclasses.replace(linear_field, div_sup=lambda t: 0.5)
    grid = make_seed_grid(1.0, 8, 1)
    with pytest.raises(DivergenceUnboundedError):
        jacobian(lying, integrate_flow(lying, grid, 50, "forward"))


def test_jacobian_ode_residual_zero_field(zero_field):
    grid = make_seed_grid(1.0, 8, 1)
    fl = integrate_flow(zero_field, grid, 20, "forward")
    res = jacobian_ode_residual(zero_field, fl, jacobian(zero_field, fl))
    assert res.forward == 0.0 and res.inverse == 0.0


def test_jacobian_ode_residual_halves(linear_field):
    grid = make_seed_grid(1.0, 4, 1)

    def worst(steps):
        fl = integrate_flow(linear_field, grid, steps, "forward")
        return jacobian_ode_residual(linear_field, fl, jacobian(linear_field, fl))

    r1 = worst(1000)
    r2 = worst(2000)
    assert r1.worst <= 1e-3
    assert r2.worst <= 0.55 * r1.worst
    # the reciprocal Jacobian obeys the mirrored ODE at matching accuracy
    assert r1.inverse <= 1e-3


def test_jacobian_matches_flow_map_determinant():
    # independent oracle: in d = 1 the Jacobian is dX/dx, estimated by central
    # differences of the flow map across close seeds; the path-integral
    # exponential must reproduce it on a field with genuinely varying stretch
    spec = field("compact_bump")
    h = 1e-5
    xs = [0.3 - h, 0.3, 0.3 + h, -0.6 - h, -0.6, -0.6 + h]
    fl = integrate_flow(spec, seeds_from_points([[x] for x in xs]), 512, "forward")
    track = jacobian(spec, fl)
    for base in (0, 3):
        fd = (fl.positions_at(-1)[base + 2, 0]
              - fl.positions_at(-1)[base, 0]) / (2.0 * h)
        # agreement is limited by the trapezoid path integral, ~tau^2
        assert track.jx[base + 1, -1] == pytest.approx(fd, rel=1e-5)


# --- change of variables ------------------------------------------------------

def test_change_of_variables_identity_gaussian(zero_field):
    # spec example: identity flow leaves pure quadrature error, <= 1e-6 at 512
    grid = make_seed_grid(2.0, 512, 1)
    fl = integrate_flow(zero_field, grid, 4, "forward")
    res = change_of_variables_residual(fl, jacobian(zero_field, fl),
                                       gaussian(1, 0.3), 2.0)
    assert res <= 1e-6


def test_change_of_variables_linear_bump(linear_field):
    grid = make_seed_grid(1.0, 512, 1)
    fl = integrate_flow(linear_field, grid, 512, "forward")
    res = change_of_variables_residual(fl, jacobian(linear_field, fl),
                                       bump(1, 1.0), 1.0)
    assert res <= 1e-5


def test_change_of_variables_rotation_radial(rotation_field):
    grid = make_seed_grid(1.0, 128, 2)
    fl = integrate_flow(rotation_field, grid, 256, "forward")
    res = change_of_variables_residual(fl, jacobian(rotation_field, fl),
                                       bump(2, 0.8), 1.0)
    assert res <= 1e-6


def test_change_of_variables_refinement_order(linear_field):
    errs = []
    cells = [64, 128, 256]
    for n in cells:
        grid = make_seed_grid(1.0, n, 1)
        fl = integrate_flow(linear_field, grid, 2 * n, "forward")
        errs.append(change_of_variables_residual(fl, jacobian(linear_field, fl),
                                                 bump(1, 1.0), 1.0))
    order = order_estimate([1.0 / n for n in cells], errs)
    assert order >= 2.0


def test_change_of_variables_domain_too_small(zero_field):
    grid = make_seed_grid(2.0, 64, 1)
    fl = integrate_flow(zero_field, grid, 4, "forward")
    with pytest.raises(DomainTooSmallError):
        change_of_variables_residual(fl, jacobian(zero_field, fl),
                                     bump(1, 1.0), 0.2)


# --- compressibility and superlevels -----------------------------------------

def test_compressibility_identity(zero_field):
    grid = make_seed_grid(1.0, 256, 1)
    fl = integrate_flow(zero_field, grid, 4, "forward")
    assert compressibility_estimate(fl) == pytest.approx(1.0)


def test_compressibility_contraction(contract_field):
    # uniform contraction by e^{-1} concentrates density by e
    grid = make_seed_grid(1.0, 10_000, 1)
    fl = integrate_flow(contract_field, grid, 300, "forward")
    c = compressibility_estimate(fl)
    assert abs(c - math.e) / math.e <= 0.1


def test_compressibility_rotation(rotation_field):
    grid = make_seed_grid(1.0, 100, 2)
    fl = integrate_flow(rotation_field, grid, 200, "forward")
    assert abs(compressibility_estimate(fl) - 1.0) <= 0.1


def test_superlevel_zero_field(zero_field):
    grid = make_seed_grid(1.0, 64, 1)
    fl = integrate_flow(zero_field, grid, 8, "forward")
    assert superlevel_escape(fl, 1.0, 1.1) == 0.0


def test_superlevel_linear_growth_bound(linear_field):
    # |X(t, x)| <= e^T |x|, so nothing from B_r escapes past r e^T
    grid = make_seed_grid(1.0, 512, 1)
    fl = integrate_flow(linear_field, grid, 200, "forward")
    assert superlevel_escape(fl, 1.0, math.e + 0.01) == 0.0
    assert superlevel_escape(fl, 0.5, 0.5 * math.e + 0.01) == 0.0


def test_superlevel_rotation_norm_preserving(rotation_field):
    grid = make_seed_grid(1.0, 64, 2)
    fl = integrate_flow(rotation_field, grid, 100, "forward")
    assert superlevel_escape(fl, 1.0, 1.42) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.3, max_value=3.0),
       st.floats(min_value=0.0, max_value=2.0))
def test_superlevel_nonincreasing_in_R(r_low, bump_R):
    spec = field("linear_expand")
    grid = make_seed_grid(1.0, 64, 1)
    fl = integrate_flow(spec, grid, 32, "forward")
    a = superlevel_escape(fl, 0.9, r_low)
    b = superlevel_escape(fl, 0.9, r_low + bump_R)
    assert b <= a


def test_forward_backward_composition(linear_field):
    grid = make_seed_grid(1.0, 64, 1)
    fl = integrate_flow(linear_field, grid, 1000, "forward")
    # 10x the integrator's local tolerance for this smooth field
    assert forward_backward_mismatch(linear_field, fl) <= 1e-10


# --- mollified flow convergence ----------------------------------------------

def test_convergence_study_smooth_field(linear_field):
    # mollification is exact on linear fields: discrepancies at rounding floor
    grid = make_seed_grid(1.0, 64, 1)
    rows = flow_convergence_study(linear_field, [0.2, 0.1], grid, 32)
    for _, flow_disc, jac_disc in rows:
        assert flow_disc <= 1e-8
        assert jac_disc <= 1e-8


def test_convergence_study_shear(shear_field):
    grid = make_seed_grid(1.0, (2, 512), 2)
    rows = flow_convergence_study(shear_field, [0.2, 0.1, 0.05], grid, 8)
    discs = [r[1] for r in rows]
    assert all(b < a for a, b in zip(discs, discs[1:]))
    assert max(r[2] for r in rows) <= 1e-10
