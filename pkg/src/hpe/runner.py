"""Run orchestration behind the command-line verbs.

Each verb owns one output directory for its lifetime (guarded by a lock
file), writes CSV only, and records its configuration and every calibrated
constant in ``manifest.json``.
"""
from __future__ import annotations

import contextlib
import csv
import dataclasses
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig
from .diagnostics import (
    DIAGNOSTIC_COLUMNS,
    DiagnosticsMonitor,
    DiagnosticsRecord,
    DiagnosticsWriter,
    calculus_inequality_sample,
    random_gaussian_mixture,
    sample_blobs,
    sample_grid,
    schauder_ratio_probe,
    sobolev_ratio_probe,
    tangential_identity_check,
)
from .errors import ConfigError, NonConvergence, NumericAbort
from .field import BlobSet, GridField, write_field
from .kernel import BlobRegularization, biot_savart_kernel, gradient_kernel
from .picard import PicardConfig, calibrate_C, choose_window, picard_iterate, write_picard_csv
from .scenarios import Scenario, from_file, gaussian_patch, shear_layer, single_vortex_wall, wall_dipole
from .summation import DIRECT, SummationConfig, set_threads, velocity_at, velocity_gradient_at
from .transport import (
    FlowMapState,
    GridVelocity,
    SelfInducedBlobs,
    TimeStepper,
    advance_flow,
    evolve_self_consistent,
    time_grid,
)

log = logging.getLogger(__name__)

BENCH_COLUMNS = ("N", "method", "theta", "seconds", "max_rel_err")
PROBE_COLUMNS = ("probe", "sample", "n", "lhs", "rhs", "ratio")
CHECK_COLUMNS = ("check", "value", "threshold", "passed")
LOCK_NAME = ".hpe.lock"


@dataclass
class RunResult:
    out_dir: Path
    outputs: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# plumbing


@contextlib.contextmanager
def output_lock(out_dir: Path):
    """Exclusive ownership of ``out_dir`` for one run."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise ConfigError(f"output directory {out_dir} is in use (remove {lock} if stale)") from exc
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out_dir
    finally:
        with contextlib.suppress(FileNotFoundError):
            lock.unlink()


def _nan_none(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_manifest(result: RunResult, cfg: ScenarioConfig, verb: str) -> Path:
    path = result.out_dir / "manifest.json"
    body = {
        "verb": verb,
        "version": __version__,
        "config": cfg.as_dict(),
        "constants": {k: _nan_none(v) for k, v in result.constants.items()},
        "outputs": {k: str(Path(v).name) for k, v in result.outputs.items()},
    }
    body.update({k: _nan_none(v) for k, v in result.extra.items() if not k.startswith("_")})
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    result.outputs["manifest"] = path
    return path


def _given(v) -> bool:
    return not (isinstance(v, float) and math.isnan(v))


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    mode = cfg.run_mode
    pick = {k: getattr(cfg, k) for k in ("amplitude", "sigma", "height", "separation",
                                          "blob_h", "core_factor", "diag_h") if _given(getattr(cfg, k))}
    if cfg.scenario == "single_vortex_wall":
        if mode != "blob":
            raise ConfigError("single_vortex_wall is a blob scenario")
        kw = {k: pick[k] for k in ("height", "diag_h") if k in pick}
        if _given(cfg.circulation):
            kw["circulation"] = cfg.circulation
        if _given(cfg.core):
            kw["core"] = cfg.core
        return single_vortex_wall(**kw)
    if cfg.scenario == "wall_dipole":
        return wall_dipole(mode=mode, **pick)
    if cfg.scenario == "gaussian_patch":
        kw = {k: pick[k] for k in ("amplitude", "sigma", "height", "core_factor") if k in pick}
        if cfg.n:
            kw["n"] = cfg.n
        return gaussian_patch(mode=mode, **kw)
    if cfg.scenario == "shear_layer":
        kw = {k: pick[k] for k in ("amplitude", "height", "blob_h", "core_factor", "diag_h") if k in pick}
        if "sigma" in pick:
            kw["thickness"] = pick["sigma"]
        return shear_layer(mode=mode, seed=cfg.seed, **kw)
    kw = {"core_factor": pick["core_factor"]} if "core_factor" in pick else {}
    return from_file(cfg.file, mode=mode, **kw)


def summation_config(cfg: ScenarioConfig) -> SummationConfig:
    if cfg.method == "direct":
        return DIRECT
    return SummationConfig("treecode", cfg.theta, cfg.leaf_capacity, cfg.expansion_order)


def _write_blobs(blobs: BlobSet, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("x1,x2,circulation,delta2\n")
        for (a, b), g, d in zip(blobs.positions, blobs.circulations, blobs.delta2):
            fh.write(f"{float(a)!r},{float(b)!r},{float(g)!r},{float(d)!r}\n")


# ---------------------------------------------------------------------------
# simulate


def _zero_run(sc: Scenario, cfg: ScenarioConfig, result: RunResult) -> RunResult:
    lp = {1.0: 0.0, cfg.p: 0.0, 2.0: 0.0, math.inf: 0.0}
    rec = DiagnosticsRecord(0.0, lp, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, p=cfg.p)
    path = result.out_dir / "diagnostics.csv"
    with open(path, "w", newline="") as fh:
        fh.write(",".join(DIAGNOSTIC_COLUMNS) + "\n")
        fh.write(",".join(repr(float(v)) for v in rec.row()) + "\n")
    final = result.out_dir / "final_field.txt"
    write_field(sc.diag_grid.with_values(np.zeros(sc.diag_grid.shape), name="omega"), final)
    result.records.append(rec)
    result.outputs.update(diagnostics=path, final_field=final)
    result.extra["zero_field"] = True
    log.info("initial vorticity vanishes; nothing to evolve")
    return result


def run_simulation(cfg: ScenarioConfig, out_dir=None) -> RunResult:
    """Evolve the scenario to ``T_final`` and record diagnostics every ``cadence`` steps.

    Blob runs advance the ensemble under its own velocity with RK4; grid runs
    use the self-consistent semi-Lagrangian stepper. Jacobian probes ride
    along in both modes.
    """
    out = Path(out_dir or cfg.out)
    set_threads(cfg.threads)
    with output_lock(out):
        result = RunResult(out)
        sc = build_scenario(cfg)
        if sc.is_zero:
            _zero_run(sc, cfg, result)
        elif sc.mode == "blob":
            _simulate_blobs(sc, cfg, result)
        else:
            _simulate_grid(sc, cfg, result)
        result.extra["scenario"] = sc.name
        result.extra["mode"] = sc.mode
        result.extra["scenario_params"] = {k: _nan_none(v) for k, v in sc.params.items()}
        write_manifest(result, cfg, "simulate")
    return result


def _finish_monitor(monitor: DiagnosticsMonitor, writer: DiagnosticsWriter, result: RunResult):
    writer.close()
    result.records = monitor.records
    result.constants["C_fit"] = monitor.C_kato
    result.constants["C_dexp"] = writer.C_dexp
    if monitor.inputs is not None:
        result.constants.update(A=monitor.inputs.A, B=monitor.inputs.B)


def _simulate_blobs(sc: Scenario, cfg: ScenarioConfig, result: RunResult) -> None:
    scfg = summation_config(cfg)
    src = SelfInducedBlobs(sc.blobs, scfg)
    state = FlowMapState.create(sc.blobs.positions, sc.probe_centers, cfg.probe_spacing)
    steps, dt = time_grid(cfg.T_final, cfg.dt)
    stepper = TimeStepper(dt, src)
    monitor = DiagnosticsMonitor(cfg.gamma, cfg.q, cfg.p, seed=cfg.seed)
    path = result.out_dir / "diagnostics.csv"
    writer = DiagnosticsWriter(path, monitor, cfg.T_final)
    gamma0 = sc.blobs.total_circulation
    try:
        for n in range(steps + 1):
            if n % cfg.cadence == 0 or n == steps:
                sample = sample_blobs(src.blobs_at(state.positions), sc.diag_grid, scfg)
                writer.push(monitor.snapshot(state.time, sample, state))
            if n < steps:
                # pin the clock to n*dt so long runs do not accumulate drift
                state = dataclasses.replace(advance_flow(state, stepper, 1), time=(n + 1) * dt)
    except NumericAbort:
        _finish_monitor(monitor, writer, result)
        raise
    _finish_monitor(monitor, writer, result)
    final_blobs = src.blobs_at(state.positions)
    bpath = result.out_dir / "final_blobs.csv"
    _write_blobs(final_blobs, bpath)
    fpath = result.out_dir / "final_field.txt"
    write_field(sample.omega, fpath)
    result.outputs.update(diagnostics=path, final_blobs=bpath, final_field=fpath)
    result.extra.update(
        final_positions=state.positions.tolist() if len(final_blobs) <= 16 else None,
        circulation_drift=final_blobs.total_circulation - gamma0,
        reflections=state.reflections,
        steps=steps,
        dt=dt,
    )
    result.extra["_state"] = state


class _InterpolatedVelocity:
    def __init__(self, a: GridVelocity, b: GridVelocity, t0: float, dt: float):
        self.a, self.b, self.t0, self.dt = a, b, t0, dt

    def __call__(self, points, t):
        w = (t - self.t0) / self.dt
        return (1.0 - w) * self.a(points, t) + w * self.b(points, t)


def _simulate_grid(sc: Scenario, cfg: ScenarioConfig, result: RunResult) -> None:
    om0 = sc.omega0
    steps, dt = time_grid(cfg.T_final, cfg.dt)
    monitor = DiagnosticsMonitor(cfg.gamma, cfg.q, cfg.p, seed=cfg.seed)
    path = result.out_dir / "diagnostics.csv"
    writer = DiagnosticsWriter(path, monitor, cfg.T_final)
    box = {"flow": FlowMapState.create((), sc.probe_centers, cfg.probe_spacing), "vel": None}

    def callback(n, t, values):
        f = om0.with_values(values, name="omega")
        vel = GridVelocity(f)
        if box["vel"] is not None:
            src = _InterpolatedVelocity(box["vel"], vel, t - dt, dt)
            box["flow"] = advance_flow(box["flow"], TimeStepper(dt, src), 1)
        box["vel"] = vel
        if n % cfg.cadence == 0 or n == steps:
            writer.push(monitor.snapshot(t, sample_grid(f), box["flow"]))
        box["last"] = f

    try:
        traj = evolve_self_consistent(om0, cfg.T_final, dt, callback=callback)
    except NumericAbort:
        _finish_monitor(monitor, writer, result)
        raise
    _finish_monitor(monitor, writer, result)
    fpath = result.out_dir / "final_field.txt"
    write_field(traj.final.with_values(traj.final.values, name="omega"), fpath)
    result.outputs.update(diagnostics=path, final_field=fpath)
    result.extra.update(out_of_window=traj.out_of_window, steps=steps, dt=dt)


# ---------------------------------------------------------------------------
# picard


def picard_config(cfg: ScenarioConfig) -> PicardConfig:
    return PicardConfig(p=cfg.p, k=cfg.k, max_iters=cfg.max_iters, tol=cfg.tol,
                        window_policy=cfg.window_policy,
                        fixed_T0=cfg.fixed_T0 if _given(cfg.fixed_T0) else None, dt=cfg.dt)


def run_picard(cfg: ScenarioConfig, out_dir=None) -> RunResult:
    """Calibrate ``C_hat``, pick the window and iterate the Picard map.

    The iteration CSV is written even when the tolerance is never reached;
    :class:`NonConvergence` is re-raised afterwards.
    """
    if cfg.run_mode != "grid":
        raise ConfigError("picard runs need a grid scenario")
    out = Path(out_dir or cfg.out)
    set_threads(cfg.threads)
    with output_lock(out):
        result = RunResult(out)
        sc = build_scenario(cfg)
        pc = picard_config(cfg)
        om = sc.omega0
        if pc.window_policy == "fixed":
            C_hat = math.nan
            T0 = float(pc.fixed_T0)
        else:
            C_hat = calibrate_C(om, cfg.trial_windows, pc)
            T0 = choose_window(om, pc, C_hat)
        result.constants.update(C_hat=C_hat, T0=T0)
        path = out / "picard.csv"
        result.outputs["picard"] = path
        try:
            state = picard_iterate(om, pc, T0, C_hat=C_hat)
        except NonConvergence as exc:
            write_picard_csv(exc.state, path)
            result.extra.update(converged=False, iterations=len(exc.state.residuals))
            write_manifest(result, cfg, "picard")
            raise
        write_picard_csv(state, path)
        fpath = out / "picard_endpoint.txt"
        write_field(state.final, fpath)
        result.outputs["endpoint"] = fpath
        result.constants["M"] = state.M_bound
        result.extra.update(converged=True, iterations=len(state.residuals),
                            max_ratio=float(state.ratios.max()) if state.ratios.size else math.nan)
        result.extra["_state"] = state
        write_manifest(result, cfg, "picard")
    return result


# ---------------------------------------------------------------------------
# bench


def random_ensemble(n: int, seed: int, core: float = 0.01) -> BlobSet:
    rng = np.random.default_rng(seed)
    pos = np.column_stack([rng.uniform(-1.0, 1.0, n), rng.uniform(0.0, 2.0, n)])
    return BlobSet(pos, rng.normal(0.0, 1.0 / math.sqrt(n), n), core * core)


def max_relative_error(approx: np.ndarray, exact: np.ndarray) -> float:
    """``max |approx - exact| / max |exact|`` over the rows of velocity arrays."""
    scale = float(np.max(np.linalg.norm(exact, axis=1)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.linalg.norm(approx - exact, axis=1)) / scale)


def run_bench(cfg: ScenarioConfig, out_dir=None) -> RunResult:
    """Time direct against treecode summation on random ensembles."""
    out = Path(out_dir or cfg.out)
    set_threads(cfg.threads)
    tree_cfg = SummationConfig("treecode", cfg.theta, cfg.leaf_capacity, cfg.expansion_order)
    with output_lock(out):
        result = RunResult(out)
        rows = []
        warm = random_ensemble(64, cfg.seed)
        velocity_at(warm.positions, warm)
        velocity_at(warm.positions, warm, tree_cfg)
        for N in cfg.bench_sizes:
            bs = random_ensemble(int(N), cfg.seed)
            exact = None
            if N <= cfg.bench_direct_max:
                t0 = time.perf_counter()
                exact = velocity_at(bs.positions, bs, DIRECT)
                rows.append((N, "direct", 0.0, time.perf_counter() - t0, 0.0))
            t0 = time.perf_counter()
            approx = velocity_at(bs.positions, bs, tree_cfg)
            secs = time.perf_counter() - t0
            err = max_relative_error(approx, exact) if exact is not None else math.nan
            rows.append((N, "treecode", cfg.theta, secs, err))
            log.info("bench N=%d treecode %.3fs err %.2e", N, secs, err)
        path = out / "bench.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(BENCH_COLUMNS)
            for N, m, th, s, e in rows:
                w.writerow([int(N), m, repr(float(th)), repr(float(s)), repr(float(e))])
        result.outputs["bench"] = path
        result.extra["rows"] = [list(r) for r in rows]
        write_manifest(result, cfg, "bench")
    return result


# ---------------------------------------------------------------------------
# probe and check


def run_probe(cfg: ScenarioConfig, out_dir=None) -> RunResult:
    """Sampling studies for the inequality probes at two resolutions."""
    out = Path(out_dir or cfg.out)
    n0 = cfg.n or 48
    with output_lock(out):
        result = RunResult(out)
        rows = []
        for n in (n0, 2 * n0):
            rng = np.random.default_rng(cfg.seed)
            for j in range(cfg.probe_samples):
                w = random_gaussian_mixture(rng, (-3.0, 3.0), 6.0, n, odd=True)
                f = random_gaussian_mixture(rng, (-3.0, 3.0), 6.0, n)
                g = random_gaussian_mixture(rng, (-3.0, 3.0), 6.0, n)
                for m in (0, 1, 2):
                    r = sobolev_ratio_probe(w, m, cfg.p)
                    rows.append((f"sobolev_m{m}", j, n, math.nan, math.nan, r))
                rows.append(("schauder", j, n, math.nan, math.nan,
                             schauder_ratio_probe(w, cfg.gamma, seed=cfg.seed)))
                lhs, rhs, ratio = calculus_inequality_sample(f, g, (1, 1), 2.0, 2.0, math.inf, 2.0, math.inf)
                rows.append(("product", j, n, lhs, rhs, ratio))
                lhs, rhs, ratio = calculus_inequality_sample(f, g, (1, 1), 2.0, 2.0, math.inf, 2.0, math.inf,
                                                             commutator=True)
                rows.append(("commutator", j, n, lhs, rhs, ratio))
        path = out / "probe.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PROBE_COLUMNS)
            for name, j, n, lhs, rhs, ratio in rows:
                w.writerow([name, j, n, repr(float(lhs)), repr(float(rhs)), repr(float(ratio))])
        result.outputs["probe"] = path
        summary = {}
        for name, _, n, _, _, ratio in rows:
            key = f"{name}_max_n{n}"
            summary[key] = max(summary.get(key, 0.0), ratio)
        result.extra["summary"] = summary
        write_manifest(result, cfg, "probe")
    return result


def kernel_gradient_check(n_pairs: int = 1000, step: float = 1e-5, seed: int = 0) -> float:
    """Largest relative gap between :func:`gradient_kernel` and centered differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        x = (rng.uniform(-2, 2), rng.uniform(0.1, 2))
        y = (rng.uniform(-2, 2), rng.uniform(0.1, 2))
        if math.dist(x, y) < 0.1:
            continue
        J = gradient_kernel(x, y).as_matrix()
        fd = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = step
            up = biot_savart_kernel(np.add(x, e), y)
            dn = biot_savart_kernel(np.subtract(x, e), y)
            fd[:, j] = (np.array(up) - np.array(dn)) / (2 * step)
        worst = max(worst, float(np.max(np.abs(J - fd)) / np.max(np.abs(J))))
    return worst


def run_check(cfg: ScenarioConfig, out_dir=None) -> RunResult:
    """Kernel and identity self-tests; ``passed`` is False if any fails."""
    out = Path(out_dir or cfg.out)
    with output_lock(out):
        result = RunResult(out)
        checks = []
        checks.append(("gradient_kernel_fd", kernel_gradient_check(seed=cfg.seed), 1e-6))
        bs = random_ensemble(500, cfg.seed, core=0.02)
        rng = np.random.default_rng(cfg.seed + 1)
        wall = np.column_stack([rng.uniform(-2, 2, 1000), np.zeros(1000)])
        tree_cfg = SummationConfig("treecode", cfg.theta, cfg.leaf_capacity, cfg.expansion_order)
        for name, sc in (("tangency_direct", DIRECT), ("tangency_treecode", tree_cfg)):
            checks.append((name, float(np.max(np.abs(velocity_at(wall, bs, sc)[:, 1]))), 1e-10))
        inner = np.column_stack([rng.uniform(-1, 1, 1000), rng.uniform(0.01, 2, 1000)])
        J = velocity_gradient_at(inner, bs)
        checks.append(("divergence", float(np.max(np.abs(J[:, 0, 0] + J[:, 1, 1]))), 1e-10))
        res = [tangential_identity_check(gaussian_patch(n=n).omega0) for n in (64, 128)]
        checks.append(("tangential_identity_shrink", res[0] / res[1], 3.0))
        path = out / "check.csv"
        ok = True
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CHECK_COLUMNS)
            for name, v, thr in checks:
                passed = v >= thr if name.endswith("shrink") else v <= thr
                ok &= passed
                w.writerow([name, repr(float(v)), repr(float(thr)), str(passed).lower()])
        result.outputs["check"] = path
        result.extra.update(passed=ok, checks={n: v for n, v, _ in checks})
        write_manifest(result, cfg, "check")
    return result
