"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints a ``PASS``/``FAIL`` line with the measured quantity.
"""
import math
import time

import numpy as np
import pytest

from hpe.config import ScenarioConfig
from hpe.diagnostics import (
    calculus_inequality_sample,
    double_exp_bound_check,
    random_gaussian_mixture,
    read_diagnostics_csv,
    schauder_ratio_probe,
    sobolev_ratio_probe,
    tangential_identity_check,
)
from hpe.field import BlobSet, lp_norm_array
from hpe.picard import geometric_fit, nonlinear_endpoint
from hpe.runner import (
    kernel_gradient_check,
    max_relative_error,
    picard_config,
    random_ensemble,
    run_picard,
    run_simulation,
)
from hpe.scenarios import gaussian_patch
from hpe.summation import DIRECT, SummationConfig, velocity_at, velocity_gradient_at
from hpe.transport import FlowMapState, SelfInducedBlobs, TimeStepper, advance_flow, evolve_self_consistent

TREE = SummationConfig("treecode", 0.5)


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail

    return emit


def test_01_image_vortex_drift(report):
    t0 = time.perf_counter()
    blobs = BlobSet([[0.0, 1.0]], [2 * math.pi])
    state = FlowMapState.create(blobs.positions)
    state = advance_flow(state, TimeStepper(0.01, SelfInducedBlobs(blobs)), 1000)
    secs = time.perf_counter() - t0
    x, y = state.positions[0]
    speed = x / 10.0
    ok = abs(speed + 0.5) <= 1e-4 and abs(y - 1.0) <= 1e-6 and secs < 1.0
    report(1, ok, f"speed {speed:.12f}, height drift {abs(y - 1):.2e}, {secs:.2f}s")


def test_02_boundary_tangency(report):
    t0 = time.perf_counter()
    bs = random_ensemble(500, seed=1)
    rng = np.random.default_rng(2)
    wall = np.column_stack([rng.uniform(-2, 2, 1000), np.zeros(1000)])
    worst = {name: float(np.max(np.abs(velocity_at(wall, bs, c)[:, 1])))
             for name, c in (("direct", DIRECT), ("treecode", TREE))}
    secs = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-10 and secs < 1.0
    report(2, ok, f"max |u2| direct {worst['direct']:.2e}, treecode {worst['treecode']:.2e}, {secs:.2f}s")


def test_03_divergence_free(report):
    t0 = time.perf_counter()
    bs = random_ensemble(500, seed=3)
    rng = np.random.default_rng(4)
    pts = np.column_stack([rng.uniform(-1.5, 1.5, 1000), rng.uniform(0.01, 2.5, 1000)])
    J = velocity_gradient_at(pts, bs)
    worst = float(np.max(np.abs(J[:, 0, 0] + J[:, 1, 1])))
    secs = time.perf_counter() - t0
    report(3, worst <= 1e-10 and secs < 1.0, f"max |tr grad u| {worst:.2e}, {secs:.2f}s")


def _norm_drift(n: int, dt: float) -> dict:
    sc = gaussian_patch(n=n)
    h = sc.omega0.spacing
    ref = {s: lp_norm_array(sc.omega0.values, h, s) for s in (1.0, 2.0, math.inf)}
    worst = dict.fromkeys(ref, 0.0)

    def cb(k, t, values):
        for s in ref:
            worst[s] = max(worst[s], abs(lp_norm_array(values, h, s) / ref[s] - 1.0))

    evolve_self_consistent(sc.omega0, 3.0, dt, callback=cb)
    return worst


def test_04_lp_conservation(report):
    t0 = time.perf_counter()
    coarse = _norm_drift(128, 0.05)
    fine = _norm_drift(256, 0.025)
    secs = time.perf_counter() - t0
    ok = (max(coarse.values()) <= 1e-2 and max(fine.values()) <= 3e-3
          and all(fine[s] <= coarse[s] for s in coarse) and secs < 300)
    fmt = lambda d: ", ".join(f"L{'inf' if math.isinf(s) else int(s)} {v:.2e}" for s, v in d.items())
    report(4, ok, f"h: {fmt(coarse)}; h/2: {fmt(fine)}; {secs:.0f}s")


def _dipole_det_error(tmp_path, dt, spacing, name):
    cfg = ScenarioConfig(scenario="wall_dipole", T_final=3.0, dt=dt, probe_spacing=spacing, cadence=1)
    res = run_simulation(cfg, tmp_path / name)
    return float(np.max(read_diagnostics_csv(res.outputs["diagnostics"])["det_jac_err"]))


def test_05_unit_jacobian(tmp_path, report):
    e1 = _dipole_det_error(tmp_path, 0.05, 1e-3, "a")
    e2 = _dipole_det_error(tmp_path, 0.025, 5e-4, "b")
    ok = e1 <= 1e-3 and e1 / e2 >= 2.0
    report(5, ok, f"max |det - 1| {e1:.2e} -> {e2:.2e} after halving (x{e1 / e2:.2f})")


@pytest.fixture(scope="module")
def picard_run(tmp_path_factory):
    cfg = ScenarioConfig(scenario="gaussian_patch")
    res = run_picard(cfg, tmp_path_factory.mktemp("picard"))
    return cfg, res


def test_06_picard_contraction(picard_run, report):
    _, res = picard_run
    st = res.extra["_state"]
    ratios = st.ratios
    rho, r2 = geometric_fit(st.residuals)
    ok = st.converged and float(np.max(ratios)) <= 0.6 and r2 >= 0.95
    report(6, ok, f"{len(st.residuals)} iterations, max ratio {np.max(ratios):.3f}, "
                  f"fit rho {rho:.3f} R^2 {r2:.3f}, T0 {st.window_T0:.3g}, C_hat {st.C_hat:.3e}")


def test_07_fixed_point_consistency(picard_run, report):
    cfg, res = picard_run
    st = res.extra["_state"]
    pcfg = picard_config(cfg)
    ref = nonlinear_endpoint(st.iterates[0], pcfg, st.window_T0)
    diff = lp_norm_array(st.final.values - ref.values, ref.spacing, pcfg.p)
    report(7, diff <= 3 * pcfg.tol, f"||picard - stepper||_Lp {diff:.2e} (bound {3 * pcfg.tol:.0e})")


def test_08_kato_form(tmp_path, report):
    cfg = ScenarioConfig(scenario="wall_dipole", T_final=5.0, dt=0.05, cadence=2)
    res = run_simulation(cfg, tmp_path / "kato")
    recs = res.records
    kato = max(r.kato_ratio for r in recs)
    chk = double_exp_bound_check(recs, res.constants["A"], res.constants["B"], res.constants["C_dexp"])
    later = chk.margin[chk.times > chk.t_cal]
    ok = kato <= 1.5 and chk.ok
    report(8, ok, f"max kato ratio {kato:.3f}, min margin after t={chk.t_cal:g}: {later.min():.3e}, "
                  f"C_fit {res.constants['C_fit']:.3g}, C_dexp {chk.C_fit:.3g}")


def test_09_gradient_kernel(report):
    err = kernel_gradient_check(1000, 1e-5, seed=0)
    report(9, err <= 1e-6, f"max relative FD gap {err:.2e}")


def test_10_treecode(report):
    bs = random_ensemble(2000, seed=0)
    err = max_relative_error(velocity_at(bs.positions, bs, TREE), velocity_at(bs.positions, bs))
    big = random_ensemble(100_000, seed=0)
    velocity_at(big.positions[:8], big, TREE)  # compile outside the timing
    t0 = time.perf_counter()
    velocity_at(big.positions, big, TREE)
    t_tree = time.perf_counter() - t0
    t0 = time.perf_counter()
    velocity_at(big.positions, big)
    t_direct = time.perf_counter() - t0
    ok = err <= 1e-3 and t_tree < t_direct
    report(10, ok, f"N=2000 max rel err {err:.2e}; N=1e5 treecode {t_tree:.1f}s vs direct {t_direct:.1f}s")


def test_11_inequality_samplers(report):
    seed, n0 = 11, 48
    prod = {}
    for n in (n0, 2 * n0):
        rng = np.random.default_rng(seed)
        vals = []
        for _ in range(100):
            f = random_gaussian_mixture(rng, (-3.0, 3.0), 6.0, n)
            g = random_gaussian_mixture(rng, (-3.0, 3.0), 6.0, n)
            vals.append(calculus_inequality_sample(f, g, (1, 1), 2.0, 2.0, math.inf, 2.0, math.inf)[2])
        prod[n] = np.array(vals)
    finite = all(np.all(np.isfinite(v)) for v in prod.values())
    mono = prod[2 * n0].max() <= prod[n0].max()

    scale_gap, refine_gap = 0.0, 0.0
    rng_a = np.random.default_rng(seed + 1)
    rng_b = np.random.default_rng(seed + 1)
    for _ in range(10):
        wa = random_gaussian_mixture(rng_a, (-3.0, 3.0), 6.0, n0, odd=True)
        wb = random_gaussian_mixture(rng_b, (-3.0, 3.0), 6.0, 2 * n0, odd=True)
        for probe in (lambda w: sobolev_ratio_probe(w, 0, 1.5), lambda w: sobolev_ratio_probe(w, 1, 1.5),
                      lambda w: sobolev_ratio_probe(w, 2, 1.5), lambda w: schauder_ratio_probe(w)):
            r = probe(wa)
            scale_gap = max(scale_gap, abs(probe(wa.with_values(3.7 * wa.values)) / r - 1.0))
            refine_gap = max(refine_gap, abs(probe(wb) / r - 1.0))
    ok = finite and mono and scale_gap <= 1e-10 and refine_gap <= 0.10
    report(11, ok, f"product max ratio {prod[n0].max():.4f} -> {prod[2 * n0].max():.4f}; "
                   f"scale gap {scale_gap:.1e}; refinement gap {refine_gap:.3f}")


def test_12_tangential_identity(report):
    r1 = tangential_identity_check(gaussian_patch(n=64).omega0)
    r2 = tangential_identity_check(gaussian_patch(n=128).omega0)
    report(12, r1 / r2 >= 3.0, f"residual {r1:.2e} -> {r2:.2e} (x{r1 / r2:.2f})")
