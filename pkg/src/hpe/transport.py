"""Flow maps along characteristics and semi-Lagrangian linear transport.

Two complementary representations of the transport solution are provided:

* particle flow maps (:class:`FlowMapState`, :func:`advance_flow`) that carry
  tracers, vortex blobs and finite-difference Jacobian probes forward with
  classical RK4;
* grid back-tracing (:func:`solve_linear_transport`) that evaluates the
  initial data at the foot of each characteristic with cubic spline
  interpolation.

For time-dependent grid velocities, :class:`CharacteristicsSolver` builds the
backward map step by step by composition, ``A^{n+1} = A^n o X^n``, where
``X^n`` is a one-step RK4 back-trace. The nonlinear grid evolution and the
Picard map share this machinery, so their fixed points coincide.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy import ndimage

from .errors import DegenerateStencil, VelocityEvaluationFailure
from .field import BlobSet, GridField
from .summation import (
    DIRECT,
    QuadTree,
    SummationConfig,
    build_tree,
    grid_quadrature,
    velocity_at,
)

log = logging.getLogger(__name__)

PROBE_OFFSETS = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


class VelocitySource(Protocol):
    def __call__(self, points: np.ndarray, t: float) -> np.ndarray:
        """Velocity ``(n, 2)`` at ``points`` ``(n, 2)`` and time ``t``."""


# ---------------------------------------------------------------------------
# velocity sources


@dataclass(frozen=True)
class UniformVelocity:
    u: tuple[float, float] = (1.0, 0.0)

    def __call__(self, points, t):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return np.broadcast_to(np.asarray(self.u, dtype=float), pts.shape).copy()


def _reflect_eval(fn, points):
    # the image construction makes u1 even and u2 odd in x2, so targets that
    # stray below the wall mid-stage are evaluated at their mirror point
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    below = pts[:, 1] < 0.0
    if not below.any():
        return fn(pts)
    q = pts.copy()
    q[below, 1] *= -1.0
    v = fn(q)
    v[below, 1] *= -1.0
    return v


class BlobVelocity:
    """Velocity of a frozen blob ensemble."""

    def __init__(self, blobs, cfg: SummationConfig = DIRECT):
        self.blobs = BlobSet.from_blobs(blobs)
        self.cfg = cfg
        self.tree: QuadTree | None = None
        if cfg.method == "treecode":
            self.tree = build_tree(self.blobs, cfg.leaf_capacity, cfg.expansion_order)

    def __call__(self, points, t):
        return _reflect_eval(lambda q: velocity_at(q, self.blobs, self.cfg, tree=self.tree), points)


class SelfInducedBlobs:
    """Velocity induced by blobs that move with the flow.

    The first ``len(blobs)`` rows of every evaluation are taken to be the
    current blob positions; any further rows are passive tracers.
    """

    def __init__(self, blobs, cfg: SummationConfig = DIRECT):
        bs = BlobSet.from_blobs(blobs)
        self.circulations = bs.circulations
        self.delta2 = bs.delta2
        self.cfg = cfg

    @property
    def n_carriers(self) -> int:
        return self.circulations.shape[0]

    def blobs_at(self, positions) -> BlobSet:
        pos = np.array(positions[: self.n_carriers], dtype=float)
        pos[:, 1] = np.abs(pos[:, 1])
        return BlobSet(pos, self.circulations, self.delta2)

    def __call__(self, points, t):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        blobs = self.blobs_at(pts)
        return _reflect_eval(lambda q: velocity_at(q, blobs, self.cfg), pts)


class _Doubled:
    """Geometry of the doubled grid that carries odd/even extensions."""

    def __init__(self, shape: tuple[int, int], origin: tuple[float, float], h: float):
        self.ny, self.nx = shape
        self.x0 = origin[0]
        self.h = h

    def coords(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return np.array([pts[:, 1] / self.h + (self.ny - 1), (pts[:, 0] - self.x0) / self.h])

    def inside(self, coords) -> np.ndarray:
        r, c = coords
        return (r >= 0) & (r <= 2 * self.ny - 2) & (c >= 0) & (c <= self.nx - 1)

    @staticmethod
    def mirror_rows(F, sign: float) -> np.ndarray:
        F = np.asarray(F, dtype=float)
        return np.concatenate([sign * F[:0:-1], F], axis=0)


def _spline(F, mode: str) -> np.ndarray:
    return ndimage.spline_filter(np.asarray(F, dtype=float), order=3, mode=mode)


def _interp(coef, coords, mode: str) -> np.ndarray:
    return ndimage.map_coordinates(coef, coords, order=3, mode=mode, prefilter=False)


class GridVelocity:
    """Frozen velocity from a gridded vorticity via FFT quadrature.

    The velocity is computed on the doubled grid and interpolated with
    cubic splines; outside the window the nearest values are used.
    """

    def __init__(self, omega: GridField):
        self.geometry = _Doubled(omega.shape, omega.origin, omega.spacing)
        u = grid_quadrature(omega.shape, omega.spacing).velocity(omega.values, full=True)
        self.coef = np.stack([_spline(u[0], "nearest"), _spline(u[1], "nearest")])

    def __call__(self, points, t):
        c = self.geometry.coords(points)
        return np.column_stack([_interp(self.coef[0], c, "nearest"), _interp(self.coef[1], c, "nearest")])


class VelocityHistory:
    """Grid velocities at uniform time levels, linear in time between them."""

    def __init__(self, geometry: _Doubled, coefs: Sequence[np.ndarray], t0: float, dt: float):
        self.geometry = geometry
        self.coefs = list(coefs)
        self.t0 = t0
        self.dt = dt

    def coefficients_at(self, t: float) -> np.ndarray:
        s = (t - self.t0) / self.dt
        n = min(max(int(math.floor(s)), 0), len(self.coefs) - 2)
        a = s - n
        if a == 0.0:
            return self.coefs[n]
        if a == 1.0:
            return self.coefs[n + 1]
        return (1.0 - a) * self.coefs[n] + a * self.coefs[n + 1]

    def __call__(self, points, t):
        coef = self.coefficients_at(t)
        c = self.geometry.coords(points)
        return np.column_stack([_interp(coef[0], c, "nearest"), _interp(coef[1], c, "nearest")])


# ---------------------------------------------------------------------------
# flow maps


@dataclass(frozen=True)
class TimeStepper:
    dt: float
    velocity_source: Callable
    scheme: str = "rk4"

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if self.scheme != "rk4":
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass(frozen=True, eq=False)
class FlowMapState:
    """Particles with their seeds plus 4-point Jacobian probes.

    ``probes[k]`` holds the images of ``c + h e1, c - h e1, c + h e2,
    c - h e2`` for probe center ``c`` and spacing ``h = probe_spacing``.
    """

    time: float
    positions: np.ndarray
    seeds: np.ndarray
    probes: np.ndarray
    probe_spacing: float = 1e-3
    reflections: int = 0

    @classmethod
    def create(cls, points=(), probe_centers=(), probe_spacing: float = 1e-3, time: float = 0.0):
        pts = np.array(points, dtype=float).reshape(-1, 2)
        if np.any(pts[:, 1] < 0.0):
            raise ValueError("particles must start in the closed half plane")
        centers = np.array(probe_centers, dtype=float).reshape(-1, 2)
        if not probe_spacing > 0.0:
            raise ValueError("probe_spacing must be positive")
        probes = centers[:, None, :] + probe_spacing * PROBE_OFFSETS[None, :, :]
        if np.any(probes[..., 1] < 0.0):
            raise ValueError("probe stencil crosses the wall")
        seeds = pts.copy()
        seeds.setflags(write=False)
        return cls(float(time), pts, seeds, probes, float(probe_spacing), 0)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def n_probes(self) -> int:
        return self.probes.shape[0]


def _rk4(f, y, t, dt):
    k1 = f(y, t)
    k2 = f(y + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = f(y + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = f(y + dt * k3, t + dt)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _checked(source):
    def f(y, t):
        try:
            v = np.asarray(source(y, t), dtype=float)
        except VelocityEvaluationFailure:
            raise
        except (ValueError, ArithmeticError) as exc:
            raise VelocityEvaluationFailure(str(exc)) from exc
        if not np.all(np.isfinite(v)):
            raise VelocityEvaluationFailure("velocity source returned non-finite values")
        return v

    return f


def advance_flow(state: FlowMapState, stepper: TimeStepper, steps: int, *, backward: bool = False) -> FlowMapState:
    """Advance particles and probes by ``steps`` RK4 steps of ``+-dt``.

    Points that end a step below the wall are reflected to ``|x2|`` and
    counted in ``reflections``.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    n = state.n_particles
    y = np.concatenate([state.positions, state.probes.reshape(-1, 2)])
    dt = -stepper.dt if backward else stepper.dt
    f = _checked(stepper.velocity_source)
    t = state.time
    flips = 0
    for _ in range(steps):
        y = _rk4(f, y, t, dt)
        below = y[:, 1] < 0.0
        if below.any():
            flips += int(below.sum())
            y[below, 1] = -y[below, 1]
        t = state.time + (_ + 1) * dt
    if flips:
        log.debug("reflected %d particle positions across the wall", flips)
    return replace(
        state,
        time=t,
        positions=y[:n],
        probes=y[n:].reshape(state.probes.shape),
        reflections=state.reflections + flips,
    )


def jacobian_determinant(state: FlowMapState, probe_index: int) -> float:
    """Centered finite-difference ``det(grad Phi)`` at one probe."""
    p = state.probes[probe_index]
    for a, b in ((0, 1), (2, 3)):
        if math.dist(p[a], p[b]) < 1e-12:
            raise DegenerateStencil(f"probe {probe_index} collapsed")
    h2 = 2.0 * state.probe_spacing
    c1 = (p[0] - p[1]) / h2
    c2 = (p[2] - p[3]) / h2
    return float(c1[0] * c2[1] - c1[1] * c2[0])


def jacobian_determinants(state: FlowMapState) -> np.ndarray:
    return np.array([jacobian_determinant(state, k) for k in range(state.n_probes)])


# ---------------------------------------------------------------------------
# grid transport


class _InitialData:
    """Cubic spline of the odd extension of ``theta0``; zero outside the window."""

    def __init__(self, theta0: GridField):
        self.field = theta0
        self.geometry = _Doubled(theta0.shape, theta0.origin, theta0.spacing)
        if np.any(theta0.values[0] != 0.0):
            log.debug("initial data nonzero on the wall; odd extension zeroes that row")
        ext = grid_quadrature(theta0.shape, theta0.spacing).extend(theta0.values)
        self.ext = ext
        self.coef = _spline(ext, "grid-constant")

    def __call__(self, points) -> tuple[np.ndarray, int]:
        c = self.geometry.coords(points)
        vals = _interp(self.coef, c, "grid-constant")
        r = np.rint(c)
        # feet that land on a node (to rounding) take the node value exactly
        exact = np.all(np.abs(c - r) <= 1e-9, axis=0) & self.geometry.inside(c)
        if exact.any():
            ri = r[:, exact].astype(np.int64)
            vals[exact] = self.ext[ri[0], ri[1]]
        outside = ~self.geometry.inside(c)
        vals[outside] = 0.0
        return vals, int(outside.sum())


@dataclass(frozen=True, eq=False)
class TransportResult:
    field: GridField
    out_of_window: int = 0
    reflections: int = 0
    overshoot: float = 0.0
    boundary_drift: float = 0.0


def overshoot_fraction(theta0, theta) -> float:
    """Excursion of ``theta`` beyond the range of ``theta0``, relative to that range."""
    lo, hi = float(np.min(theta0)), float(np.max(theta0))
    span = hi - lo
    if span == 0.0:
        return 0.0
    ex = max(float(np.max(theta)) - hi, lo - float(np.min(theta)), 0.0)
    return ex / span


def time_grid(T: float, dt: float) -> tuple[int, float]:
    if not T >= 0.0:
        raise ValueError("T must be non-negative")
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    n = int(math.ceil(T / dt - 1e-9))
    return n, (T / n if n else dt)


def solve_linear_transport(theta0: GridField, velocity_source, T: float, dt: float) -> TransportResult:
    """Transport ``theta0`` to time ``T`` through a frozen velocity.

    Every node is traced back to time 0 with RK4 and ``theta0`` is evaluated
    at the foot point by cubic spline interpolation. Feet outside the window
    contribute 0 and are counted in ``out_of_window``.
    """
    steps, h = time_grid(T, dt)
    data = _InitialData(theta0)
    nodes = theta0.nodes()
    on_wall = nodes[:, 1] == 0.0
    f = _checked(velocity_source)
    y = nodes.copy()
    flips = 0
    for n in range(steps):
        y = _rk4(f, y, T - n * h, -h)
        below = y[:, 1] < 0.0
        if below.any():
            flips += int(below.sum())
            y[below, 1] = -y[below, 1]
    vals, outside = data(y)
    if outside:
        log.info("%d back-traced nodes left the window", outside)
    theta = vals.reshape(theta0.shape)
    theta[0, :] = 0.0  # the odd extension vanishes on the wall
    return TransportResult(
        field=theta0.with_values(theta),
        out_of_window=outside,
        reflections=flips,
        overshoot=overshoot_fraction(theta0.values, theta),
        boundary_drift=float(np.max(np.abs(y[on_wall, 1]), initial=0.0)),
    )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Grid snapshots at ``times``; ``values[n]`` is the field at ``times[n]``."""

    template: GridField
    times: np.ndarray
    values: np.ndarray
    out_of_window: int = 0

    def at(self, n: int) -> GridField:
        return self.template.with_values(self.values[n])

    @property
    def final(self) -> GridField:
        return self.at(len(self.times) - 1)


class CharacteristicsSolver:
    """Backward-map composition on a fixed grid and time step.

    ``A^n`` maps a node at ``t_n`` to its foot at time 0. It is stored as a
    displacement ``D^n = A^n - id`` on the half-plane nodes and extended to
    the doubled grid by parity (``D1`` even, ``D2`` odd).
    """

    def __init__(self, theta0: GridField, dt: float):
        self.theta0 = theta0
        self.dt = float(dt)
        self.data = _InitialData(theta0)
        self.geometry = self.data.geometry
        self.quad = grid_quadrature(theta0.shape, theta0.spacing)
        self.nodes = theta0.nodes()
        self.out_of_window = 0

    def velocity_coefficients(self, values) -> np.ndarray:
        u = self.quad.velocity(values, full=True)
        return np.stack([_spline(u[0], "nearest"), _spline(u[1], "nearest")])

    def identity(self) -> np.ndarray:
        return np.zeros((2,) + self.theta0.shape)

    def _velocity(self, coef, y):
        c = self.geometry.coords(y)
        return np.column_stack([_interp(coef[0], c, "nearest"), _interp(coef[1], c, "nearest")])

    def step(self, disp: np.ndarray, coef_n: np.ndarray, coef_np1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One step from ``D^n`` to ``(D^{n+1}, theta^{n+1})``.

        The velocity on ``[t_n, t_{n+1}]`` interpolates linearly between the
        two coefficient sets.
        """
        mid = 0.5 * (coef_n + coef_np1)
        h = self.dt
        y = self.nodes
        k1 = self._velocity(coef_np1, y)
        k2 = self._velocity(mid, y - 0.5 * h * k1)
        k3 = self._velocity(mid, y - 0.5 * h * k2)
        k4 = self._velocity(coef_n, y - h * k3)
        foot = y - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        c = self.geometry.coords(foot)
        d1 = _interp(_spline(_Doubled.mirror_rows(disp[0], 1.0), "nearest"), c, "nearest")
        d2 = _interp(_spline(_Doubled.mirror_rows(disp[1], -1.0), "nearest"), c, "nearest")
        a = foot + np.column_stack([d1, d2])
        theta, outside = self.data(a)
        self.out_of_window += outside
        new = (a - self.nodes).T.reshape((2,) + self.theta0.shape)
        new[1, 0, :] = 0.0  # wall nodes stay on the wall
        theta = theta.reshape(self.theta0.shape)
        theta[0, :] = 0.0
        return new, theta

    def sweep(self, coefs: Sequence[np.ndarray]) -> np.ndarray:
        """Transport through prescribed velocity levels; returns all snapshots."""
        out = np.empty((len(coefs),) + self.theta0.shape)
        out[0] = self.theta0.values
        out[0, 0, :] = 0.0
        disp = self.identity()
        for n in range(len(coefs) - 1):
            disp, out[n + 1] = self.step(disp, coefs[n], coefs[n + 1])
        return out


def transport_history(theta0: GridField, levels: Sequence[np.ndarray], dt: float) -> Trajectory:
    """Linear transport of ``theta0`` by the velocities of vorticity ``levels``.

    ``levels[n]`` is the (frozen) vorticity whose velocity acts at ``t_n = n dt``.
    """
    solver = CharacteristicsSolver(theta0, dt)
    coefs = [solver.velocity_coefficients(v) for v in levels]
    vals = solver.sweep(coefs)
    return Trajectory(theta0, dt * np.arange(len(levels)), vals, solver.out_of_window)


def evolve_self_consistent(
    omega0: GridField,
    T: float,
    dt: float,
    *,
    tol: float = 1e-13,
    max_inner: int = 60,
    callback=None,
) -> Trajectory:
    """Nonlinear grid evolution: vorticity transported by its own velocity.

    Each step solves the implicit system for ``theta^{n+1}`` (whose velocity
    enters the step) by fixed-point iteration to relative tolerance ``tol``.
    ``callback(n, t, values)`` is invoked after every accepted step.
    """
    steps, h = time_grid(T, dt)
    solver = CharacteristicsSolver(omega0, h)
    vals = np.empty((steps + 1,) + omega0.shape)
    vals[0] = omega0.values
    vals[0, 0, :] = 0.0
    disp = solver.identity()
    coef = [solver.velocity_coefficients(vals[0])]
    if callback is not None:
        callback(0, 0.0, vals[0])
    for n in range(steps):
        guess = coef[n] if n == 0 else 2.0 * coef[n] - coef[n - 1]
        scale = max(float(np.max(np.abs(vals[n]))), 1e-300)
        prev = None
        for it in range(max_inner):
            new_disp, theta = solver.step(disp, coef[n], guess)
            if prev is not None and float(np.max(np.abs(theta - prev))) <= tol * scale:
                break
            prev = theta
            guess = solver.velocity_coefficients(theta)
        else:
            log.warning("inner iteration at step %d stopped after %d sweeps", n, max_inner)
        disp = new_disp
        vals[n + 1] = theta
        coef.append(solver.velocity_coefficients(theta))
        if callback is not None:
            callback(n + 1, (n + 1) * h, theta)
    return Trajectory(omega0, h * np.arange(steps + 1), vals, solver.out_of_window)
