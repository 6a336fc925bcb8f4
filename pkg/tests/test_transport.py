import math

import numpy as np
import pytest

from hpe.errors import DegenerateStencil, VelocityEvaluationFailure
from hpe.field import BlobSet, GridField, lp_norm
from hpe.scenarios import odd_gaussian
from hpe.transport import (
    BlobVelocity,
    FlowMapState,
    GridVelocity,
    SelfInducedBlobs,
    TimeStepper,
    UniformVelocity,
    advance_flow,
    evolve_self_consistent,
    jacobian_determinant,
    jacobian_determinants,
    solve_linear_transport,
    time_grid,
    transport_history,
)

from conftest import patch


def test_uniform_flow_is_exact():
    pts = np.array([[0.0, 1.0], [2.5, 0.3]])
    s = advance_flow(FlowMapState.create(pts), TimeStepper(0.1, UniformVelocity((1.0, 0.0))), 20)
    np.testing.assert_allclose(s.positions, pts + [2.0, 0.0], atol=1e-13)
    assert s.time == pytest.approx(2.0)
    np.testing.assert_array_equal(s.seeds, pts)


def test_seeds_are_immutable():
    s = FlowMapState.create([[0.0, 1.0]])
    with pytest.raises(ValueError):
        s.seeds[0, 0] = 1.0


def test_state_rejects_points_below_wall():
    with pytest.raises(ValueError):
        FlowMapState.create([[0.0, -0.1]])
    with pytest.raises(ValueError):
        FlowMapState.create(probe_centers=[[0.0, 1e-4]], probe_spacing=1e-3)


def test_stepper_validation():
    with pytest.raises(ValueError):
        TimeStepper(0.0, UniformVelocity())
    with pytest.raises(ValueError):
        TimeStepper(0.1, UniformVelocity(), scheme="euler")
    with pytest.raises(ValueError):
        advance_flow(FlowMapState.create(), TimeStepper(0.1, UniformVelocity()), -1)


def test_single_vortex_drifts_along_wall():
    blobs = BlobSet([[0.0, 1.0]], [2 * math.pi])
    src = SelfInducedBlobs(blobs)
    s = FlowMapState.create(blobs.positions)
    stepper = TimeStepper(0.01, src)
    for t in (2.5, 5.0, 7.5, 10.0):
        s = advance_flow(s, stepper, 250)
        # classical image-vortex speed Gamma / (4 pi d) = 1/2
        assert s.positions[0, 0] == pytest.approx(-0.5 * t, abs=1e-9)
        assert abs(s.positions[0, 1] - 1.0) <= 1e-6


def test_reversibility():
    src = BlobVelocity(BlobSet([[0.0, 1.0], [0.6, 0.7]], [1.0, -0.5], 0.04))
    pts = np.array([[0.3, 0.5], [-0.4, 1.2], [1.0, 0.2]])
    stepper = TimeStepper(1e-3, src)
    fwd = advance_flow(FlowMapState.create(pts), stepper, 1000)
    back = advance_flow(fwd, stepper, 1000, backward=True)
    np.testing.assert_allclose(back.positions, pts, atol=1e-8)
    assert back.time == pytest.approx(0.0, abs=1e-12)


def test_velocity_failures_propagate():
    def bad(points, t):
        return np.full(np.shape(points), np.nan)

    with pytest.raises(VelocityEvaluationFailure):
        advance_flow(FlowMapState.create([[0.0, 1.0]]), TimeStepper(0.1, bad), 1)


def test_jacobian_identity_and_translation():
    s = FlowMapState.create(probe_centers=[[0.0, 1.0], [1.0, 2.0]])
    # c +- h is rounded once, so the identity stencil is exact to a few ulps
    assert jacobian_determinant(s, 0) == pytest.approx(1.0, abs=1e-12)
    moved = advance_flow(s, TimeStepper(0.1, UniformVelocity((0.7, 0.0))), 10)
    np.testing.assert_allclose(jacobian_determinants(moved), 1.0, atol=1e-10)


def test_jacobian_single_vortex():
    blobs = BlobSet([[0.0, 1.0]], [2 * math.pi])
    probes = [[0.0, 2.5], [2.0, 1.0], [-1.5, 1.2], [1.0, 0.4]]
    s = FlowMapState.create(blobs.positions, probe_centers=probes, probe_spacing=1e-3)
    s = advance_flow(s, TimeStepper(0.01, SelfInducedBlobs(blobs)), 500)
    assert np.max(np.abs(jacobian_determinants(s) - 1.0)) <= 1e-3


def test_jacobian_error_is_second_order_in_probe_spacing():
    # close to the vortex core the map shears strongly and the centered stencil error dominates
    blobs = BlobSet([[0.0, 1.0]], [2 * math.pi])
    errs = []
    for h in (1e-3, 1e-4):
        s = FlowMapState.create(blobs.positions, probe_centers=[[0.4, 1.4]], probe_spacing=h)
        s = advance_flow(s, TimeStepper(0.01, SelfInducedBlobs(blobs)), 500)
        errs.append(abs(jacobian_determinant(s, 0) - 1.0))
    assert errs[0] / errs[1] == pytest.approx(100.0, rel=0.05)


def test_degenerate_stencil():
    s = FlowMapState.create(probe_centers=[[0.0, 1.0]])
    collapsed = FlowMapState(s.time, s.positions, s.seeds, np.tile([[0.0, 1.0]], (1, 4, 1)), 1e-3)
    with pytest.raises(DegenerateStencil):
        jacobian_determinant(collapsed, 0)


def test_time_grid():
    assert time_grid(1.0, 0.1) == (10, pytest.approx(0.1))
    n, h = time_grid(1.0, 0.3)
    assert n == 4 and h == pytest.approx(0.25)
    assert time_grid(0.0, 0.1)[0] == 0


def test_zero_velocity_leaves_data_unchanged(patch64):
    res = solve_linear_transport(patch64, UniformVelocity((0.0, 0.0)), 1.0, 0.1)
    np.testing.assert_array_equal(res.field.values, patch64.values)
    assert res.out_of_window == 0


@pytest.mark.parametrize("n", [64, 128])
def test_uniform_shift(n):
    fn = odd_gaussian(1.0, 0.5, (-1.0, 2.0))
    theta0 = GridField.from_function(fn, (-3.2, 3.2), 6.4, n, n)
    res = solve_linear_transport(theta0, UniformVelocity((1.0, 0.0)), 2.0, 0.1)
    X1, X2 = theta0.mesh()
    err = np.max(np.abs(res.field.values - fn(X1 - 2.0, X2)))
    assert err <= 5.0 * theta0.spacing**3


def test_uniform_shift_interpolation_order():
    errs = []
    for n in (48, 96):
        fn = odd_gaussian(1.0, 0.5, (-1.0, 2.0))
        theta0 = GridField.from_function(fn, (-3.2, 3.2), 6.4, n, n)
        # shift by a non-grid amount so every foot point needs interpolation
        res = solve_linear_transport(theta0, UniformVelocity((1.0, 0.0)), 1.03, 1.03)
        X1, X2 = theta0.mesh()
        errs.append(np.max(np.abs(res.field.values - fn(X1 - 1.03, X2))))
    assert errs[0] / errs[1] >= 2**3 * 0.8


def test_lp_conservation_under_refinement():
    drifts = []
    for n in (64, 128):
        theta0 = patch(n)
        res = solve_linear_transport(theta0, GridVelocity(theta0), 1.0, 0.05)
        d = [abs(lp_norm(res.field, p) / lp_norm(theta0, p) - 1.0) for p in (1.0, 1.5, 2.0)]
        drifts.append(max(d))
    assert drifts[0] <= 1e-2 and drifts[1] <= 1e-2
    assert drifts[1] < drifts[0]


def test_boundary_nodes_stay_on_boundary(patch64):
    blobs = BlobSet([[0.3, 0.8], [-0.5, 1.1]], [2.0, -1.0], 0.04)
    res = solve_linear_transport(patch64, BlobVelocity(blobs), 1.0, 0.05)
    assert res.boundary_drift <= 1e-8
    assert res.overshoot <= 1e-2
    assert not np.any(res.field.values[0])


def test_out_of_window_counted(patch64):
    res = solve_linear_transport(patch64, UniformVelocity((1.0, 0.0)), 1.0, 0.5)
    assert res.out_of_window == patch64.shape[0] * int(round(1.0 / patch64.spacing))


def test_back_trace_agrees_with_map_composition(patch64):
    steps, dt = 10, 0.05
    direct = solve_linear_transport(patch64, GridVelocity(patch64), steps * dt, dt)
    composed = transport_history(patch64, [patch64.values] * (steps + 1), dt).final
    diff = lp_norm(composed.with_values(composed.values - direct.field.values), 1.5)
    assert diff <= 1e-3 * lp_norm(patch64, 1.5)


def test_back_trace_agrees_with_particle_advection():
    theta0 = patch(64)
    vel = GridVelocity(theta0)
    nodes = theta0.nodes()
    pick = np.flatnonzero(np.abs(theta0.values.ravel()) > 0.2)[::5]
    moved = advance_flow(FlowMapState.create(nodes[pick]), TimeStepper(0.05, vel), 20)
    res = solve_linear_transport(theta0, vel, 1.0, 0.05)
    from scipy.interpolate import RectBivariateSpline

    spl = RectBivariateSpline(theta0.x2, theta0.x1, res.field.values, kx=3, ky=3)
    carried = spl.ev(moved.positions[:, 1], moved.positions[:, 0])
    np.testing.assert_allclose(carried, theta0.values.ravel()[pick], atol=5e-3)


def test_self_consistent_evolution_conserves_norms():
    omega0 = patch(48)
    seen = []
    traj = evolve_self_consistent(omega0, 0.5, 0.1, callback=lambda n, t, v: seen.append((n, t)))
    assert [n for n, _ in seen] == list(range(6))
    assert traj.times[-1] == pytest.approx(0.5)
    for p in (1.0, 2.0):
        assert lp_norm(traj.final, p) == pytest.approx(lp_norm(omega0, p), rel=1e-2)
