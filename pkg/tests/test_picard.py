import csv
import math

import numpy as np
import pytest

from hpe.errors import CalibrationFailure, InvalidConstant, NonConvergence
from hpe.field import lp_norm_array, sobolev_norm
from hpe.picard import (
    PICARD_COLUMNS,
    PicardConfig,
    calibrate_C,
    chain_windows,
    choose_window,
    contraction_probe,
    geometric_fit,
    nonlinear_endpoint,
    picard_iterate,
    window_bound,
    window_formula,
    write_picard_csv,
)

from conftest import patch

CFG = PicardConfig(dt=0.1)


@pytest.fixture(scope="module")
def omega():
    return patch(48)


def test_config_validation():
    with pytest.raises(ValueError):
        PicardConfig(p=2.0)
    with pytest.raises(ValueError):
        PicardConfig(k=2)
    with pytest.raises(ValueError):
        PicardConfig(window_policy="fixed")


def test_window_formula_examples():
    assert window_formula(0.25, 4.0) == pytest.approx(0.5)
    # log 2 > 1/2 makes the second branch active for every M
    for cm in (0.1, 2 * math.log(2), 7.0):
        assert window_formula(cm, 1.0) == pytest.approx(1.0 / (2.0 * cm))
    assert window_formula(1.0, 0.0) == math.inf
    with pytest.raises(InvalidConstant):
        window_formula(0.0, 1.0)


def test_choose_window_homogeneity(omega):
    C = 1e-3
    T1 = choose_window(omega, CFG, C)
    T2 = choose_window(omega.with_values(2 * omega.values), CFG, C)
    assert T2 == pytest.approx(0.5 * T1, rel=1e-12)
    assert window_bound(omega, CFG) == pytest.approx(2 * sobolev_norm(omega, 3, 1.5))
    with pytest.raises(InvalidConstant):
        choose_window(omega, CFG, -1.0)


def test_fixed_window_policy(omega):
    cfg = PicardConfig(window_policy="fixed", fixed_T0=0.7)
    assert choose_window(omega, cfg, 1.0) == 0.7


def test_zero_data_is_a_fixed_point(omega):
    zero = omega.with_values(np.zeros(omega.shape))
    st = picard_iterate(zero, CFG, 1.0)
    assert st.converged and st.residuals == [0.0]
    assert calibrate_C(zero, (1.0, 2.0), CFG) == CFG.C_floor


def test_far_symmetric_vortex_is_nearly_steady():
    far = patch(96, sigma=0.3, center=(0.0, 4.0), width=8.0)
    st = picard_iterate(far, PicardConfig(dt=0.05, tol=1e-8), 0.02)
    assert st.converged and len(st.residuals) <= 3


def test_state_bookkeeping(omega):
    st = picard_iterate(omega, PicardConfig(dt=0.1, tol=1e-6), 1.0)
    assert len(st.iterates) == len(st.residuals) + 1
    assert len(st.endpoint_wkp) == len(st.iterates)
    assert all(r >= 0 for r in st.residuals)
    assert st.iterates[0].values is not omega.values
    # the residual sequence decays after the first sweep
    assert np.all(np.diff(st.residuals) <= 0)
    # every endpoint stays in the ball of radius M, with 10% slack
    assert max(st.endpoint_wkp) <= 1.1 * st.M_bound


def test_zero_tolerance_never_converges(omega):
    with pytest.raises(NonConvergence) as info:
        picard_iterate(omega, PicardConfig(dt=0.1, tol=0.0, max_iters=3), 1.0)
    st = info.value.state
    assert not st.converged and len(st.residuals) == 3


def test_shorter_window_contracts_more(omega):
    k = [contraction_probe(omega, T, CFG) for T in (4.0, 2.0, 1.0)]
    assert k[0] > k[1] > k[2]


def test_calibration(omega):
    with pytest.raises(ValueError):
        calibrate_C(omega, (1.0,), CFG)
    C = calibrate_C(omega, (1.0, 2.0, 4.0, 8.0), CFG)
    T0 = choose_window(omega, CFG, C)
    assert contraction_probe(omega, T0, CFG) <= 0.5
    # holdout: a fresh field of comparable norm contracts on its implied window
    other = patch(48, amplitude=1.1, sigma=0.55, center=(0.3, 2.1))
    assert contraction_probe(other, choose_window(other, CFG, C), CFG) <= 0.6


def test_calibration_scales_with_amplitude(omega):
    C1 = calibrate_C(omega, (1.0, 2.0, 4.0, 8.0), CFG)
    C2 = calibrate_C(omega.with_values(2 * omega.values), (0.5, 1.0, 2.0, 4.0), CFG)
    # the largest contracting window halves, so C_hat = 1 / (2 M T) is unchanged
    assert C2 == pytest.approx(C1, rel=0.2)


def test_calibration_failure(omega):
    strong = omega.with_values(40 * omega.values)
    with pytest.raises(CalibrationFailure):
        calibrate_C(strong, (4.0, 8.0), CFG)


def test_fixed_point_matches_nonlinear_stepper(omega):
    cfg = PicardConfig(dt=0.1, tol=1e-9)
    st = picard_iterate(omega, cfg, 1.0)
    ref = nonlinear_endpoint(omega, cfg, 1.0)
    diff = lp_norm_array(st.final.values - ref.values, omega.spacing, cfg.p)
    assert diff <= 3 * cfg.tol


def test_geometric_fit():
    rho, r2 = geometric_fit([0.5**j for j in range(1, 8)])
    assert rho == pytest.approx(0.5) and r2 == pytest.approx(1.0)
    assert math.isnan(geometric_fit([1.0, 0.5])[0])


def test_chain_windows_cover_interval(omega):
    cfg = PicardConfig(dt=0.1, tol=1e-6, window_policy="fixed", fixed_T0=0.4)
    states = chain_windows(omega, cfg, 1.0, 1.0)
    assert sum(s.window_T0 for s in states) == pytest.approx(1.0)
    assert [round(s.window_T0, 12) for s in states] == [0.4, 0.4, 0.2]


def test_csv(tmp_path, omega):
    st = picard_iterate(omega, PicardConfig(dt=0.1, tol=1e-4), 1.0, C_hat=0.01)
    path = tmp_path / "picard.csv"
    write_picard_csv(st, path)
    rows = list(csv.reader(path.open()))
    assert tuple(rows[0]) == PICARD_COLUMNS
    assert len(rows) == len(st.residuals) + 1
    assert float(rows[1][4]) == 0.01 and float(rows[-1][1]) == st.residuals[-1]
