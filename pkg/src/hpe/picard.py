"""Picard construction of the nonlinear solution on a short time window.

One application of the map ``T`` freezes a vorticity trajectory, computes its
velocity at every time level, and transports the initial data through it.
Iterating from the constant-in-time extension of ``omega0`` converges to the
solution of the nonlinear problem on windows where ``T`` contracts.

The constant in the window formula is not known in closed form, so an
empirical ``C_hat`` is calibrated from short two-iterate probes.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CalibrationFailure, InvalidConstant, NonConvergence
from .field import GridField, lp_norm_array, sobolev_norm, sobolev_norm_array
from .transport import time_grid, evolve_self_consistent, transport_history

log = logging.getLogger(__name__)

PICARD_COLUMNS = ("iter", "residual_lp", "endpoint_wkp", "window_T0", "C_hat")


@dataclass(frozen=True)
class PicardConfig:
    p: float = 1.5
    k: int = 3
    max_iters: int = 20
    tol: float = 1e-8
    window_policy: str = "paper_formula"
    fixed_T0: float | None = None
    dt: float = 0.05
    max_window: float = 20.0
    C_floor: float = 1e-6

    def __post_init__(self):
        if not 1.0 < self.p < 2.0:
            raise ValueError("p must lie in (1, 2)")
        if self.k < 3:
            raise ValueError("k must be >= 3")
        if not self.tol >= 0.0:
            raise ValueError("tol must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.window_policy not in ("paper_formula", "fixed"):
            raise ValueError(f"unknown window policy {self.window_policy!r}")
        if self.window_policy == "fixed" and not (self.fixed_T0 or 0.0) > 0.0:
            raise ValueError("window_policy 'fixed' needs fixed_T0 > 0")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")


@dataclass(eq=False)
class PicardState:
    """Endpoint snapshots ``omega_j(T0)`` and the distances between them.

    ``iterates[0]`` is the constant extension of ``omega0``; ``residuals[j]``
    is the ``L^p`` distance between ``iterates[j + 1]`` and ``iterates[j]``.
    """

    iterates: list[GridField]
    residuals: list[float]
    window_T0: float
    M_bound: float
    C_hat: float = math.nan
    converged: bool = False
    endpoint_wkp: list[float] = field(default_factory=list)

    @property
    def ratios(self) -> np.ndarray:
        r = np.asarray(self.residuals, dtype=float)
        if r.size < 2:
            return np.empty(0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r[:-1] > 0, r[1:] / r[:-1], 0.0)

    @property
    def final(self) -> GridField:
        return self.iterates[-1]


def window_bound(omega0: GridField, cfg: PicardConfig) -> float:
    """``M = 2 ||omega0||_{W^{k,p}}``."""
    return 2.0 * sobolev_norm(omega0, cfg.k, cfg.p)


def window_formula(C_hat: float, M: float) -> float:
    """``min(log 2 / (C M), 1 / (2 C M))``; infinite when ``M = 0``."""
    if not C_hat > 0.0:
        raise InvalidConstant(f"C_hat must be positive, got {C_hat}")
    cm = C_hat * M
    if cm == 0.0:
        return math.inf
    return min(math.log(2.0) / cm, 1.0 / (2.0 * cm))


def choose_window(omega0: GridField, cfg: PicardConfig, C_hat: float) -> float:
    if not C_hat > 0.0:
        raise InvalidConstant(f"C_hat must be positive, got {C_hat}")
    if cfg.window_policy == "fixed":
        return float(cfg.fixed_T0)
    T0 = window_formula(C_hat, window_bound(omega0, cfg))
    return min(T0, cfg.max_window)


def _constant_extension(omega0: GridField, steps: int) -> np.ndarray:
    lev = np.repeat(omega0.values[None], steps + 1, axis=0)
    lev[:, 0, :] = 0.0
    return lev


def picard_map(omega0: GridField, levels: np.ndarray, dt: float) -> np.ndarray:
    """``T(omega)``: transport ``omega0`` by the velocity of the frozen trajectory ``levels``."""
    return transport_history(omega0, levels, dt).values


def picard_iterate(
    omega0: GridField,
    cfg: PicardConfig,
    T0: float,
    *,
    C_hat: float = math.nan,
    M: float | None = None,
) -> PicardState:
    """Iterate ``omega_{j+1} = T(omega_j)`` on ``[0, T0]`` until the residual drops below ``tol``."""
    if not T0 > 0.0 or not math.isfinite(T0):
        raise ValueError("T0 must be positive and finite")
    steps, dt = time_grid(T0, cfg.dt)
    h = omega0.spacing
    M = window_bound(omega0, cfg) if M is None else M
    levels = _constant_extension(omega0, steps)
    state = PicardState([omega0.with_values(levels[-1])], [], T0, M, C_hat)
    state.endpoint_wkp.append(sobolev_norm_array(levels[-1], h, cfg.k, cfg.p))
    for j in range(cfg.max_iters):
        new = picard_map(omega0, levels, dt)
        r = lp_norm_array(new[-1] - levels[-1], h, cfg.p)
        levels = new
        state.iterates.append(omega0.with_values(new[-1], name=f"{omega0.name}_iter{j + 1}"))
        state.residuals.append(r)
        state.endpoint_wkp.append(sobolev_norm_array(new[-1], h, cfg.k, cfg.p))
        log.info("picard iter %d residual %.3e", j + 1, r)
        if r < cfg.tol:
            state.converged = True
            return state
    raise NonConvergence(
        f"no residual below tol={cfg.tol} after {cfg.max_iters} iterations "
        f"(last {state.residuals[-1]:.3e})",
        state,
    )


def contraction_probe(omega0: GridField, T: float, cfg: PicardConfig) -> float:
    """First residual ratio ``r_1 / r_0`` of two Picard sweeps on ``[0, T]``."""
    steps, dt = time_grid(T, cfg.dt)
    h = omega0.spacing
    lev0 = _constant_extension(omega0, steps)
    lev1 = picard_map(omega0, lev0, dt)
    r0 = lp_norm_array(lev1[-1] - lev0[-1], h, cfg.p)
    if r0 == 0.0:
        return 0.0
    lev2 = picard_map(omega0, lev1, dt)
    return lp_norm_array(lev2[-1] - lev1[-1], h, cfg.p) / r0


def calibrate_C(
    omega0: GridField,
    trial_windows: Sequence[float],
    cfg: PicardConfig = PicardConfig(),
    *,
    target: float = 0.5,
    refine: int = 3,
) -> float:
    """Smallest ``C_hat`` whose implied window still contracts by ``target``.

    With ``M`` fixed, the implied window ``1 / (2 C M)`` shrinks as ``C``
    grows, so the smallest admissible ``C_hat`` belongs to the largest
    window whose measured contraction is at most ``target``. That window is
    bracketed by the trials and then refined by bisection.
    """
    windows = sorted(float(T) for T in trial_windows)
    if len(windows) < 2:
        raise ValueError("calibration needs at least two trial windows")
    if any(not T > 0.0 for T in windows):
        raise ValueError("trial windows must be positive")
    M = window_bound(omega0, cfg)
    if M == 0.0:
        return cfg.C_floor
    kappa = {T: contraction_probe(omega0, T, cfg) for T in windows}
    for T in windows:
        log.info("calibration window %.4g contraction %.4f", T, kappa[T])
    good = [T for T in windows if kappa[T] <= target]
    if not good:
        raise CalibrationFailure(f"no trial window contracts by {target}: {kappa}")
    lo = max(good)
    bad = [T for T in windows if T > lo]
    if bad:
        hi = min(bad)
        for _ in range(refine):
            mid = 0.5 * (lo + hi)
            k = contraction_probe(omega0, mid, cfg)
            log.info("calibration bisection %.4g contraction %.4f", mid, k)
            if k <= target:
                lo = mid
            else:
                hi = mid
    # the formula's second branch is always the active one: T0 = 1 / (2 C M)
    return max(1.0 / (2.0 * M * lo), cfg.C_floor)


def nonlinear_endpoint(omega0: GridField, cfg: PicardConfig, T0: float) -> GridField:
    """Self-consistent grid evolution to ``T0`` on the Picard time grid."""
    return evolve_self_consistent(omega0, T0, cfg.dt).final


def geometric_fit(residuals: Sequence[float]) -> tuple[float, float]:
    """Least-squares fit of ``log r_j = a + j log rho``; returns ``(rho, R^2)``."""
    r = np.asarray([x for x in residuals if x > 0.0], dtype=float)
    if r.size < 3:
        return (math.nan, math.nan)
    j = np.arange(r.size, dtype=float)
    y = np.log(r)
    slope, icpt = np.polyfit(j, y, 1)
    fit = icpt + slope * j
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return (math.exp(slope), r2)


def chain_windows(omega0: GridField, cfg: PicardConfig, C_hat: float, T_final: float) -> list[PicardState]:
    """Cover ``[0, T_final]`` by consecutive Picard windows.

    Each window restarts from the previous endpoint and recomputes its
    length from the current norm.
    """
    states = []
    t = 0.0
    current = omega0
    while t < T_final - 1e-12:
        T0 = min(choose_window(current, cfg, C_hat), T_final - t)
        st = picard_iterate(current, cfg, T0, C_hat=C_hat)
        states.append(st)
        current = st.final
        t += T0
    return states


def write_picard_csv(state: PicardState, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PICARD_COLUMNS)
        for j, r in enumerate(state.residuals):
            w.writerow([j + 1, repr(float(r)), repr(float(state.endpoint_wkp[j + 1])),
                        repr(float(state.window_T0)), repr(float(state.C_hat))])
