"""Runtime monitors and offline samplers for the a-priori estimates.

Monitors (per snapshot): ``L^s`` norms, ``|grad omega|_inf``,
``|u|_{W^{1,inf}}``, the Hoelder seminorm, the Kato-type ratio, the
double-exponential bound, Jacobian drift, wall tangency and divergence.

Samplers (offline): Sobolev and Schauder ratio probes, the product and
commutator calculus inequalities, and the tangential-derivative identity for
the stream function.

Constants are never asserted. Each monitor fits its constant once on a
calibration window and then tracks the shape of the inequality.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ExponentMismatch, InsufficientResolution, NumericAbort, ZeroDenominator
from .field import (
    BlobSet,
    GridField,
    derivative_tensor_norm,
    gradient,
    holder_seminorm_array,
    lp_norm_array,
    partial,
    sobolev_norm_array,
)
from .summation import (
    DIRECT,
    SummationConfig,
    blob_vorticity,
    grid_quadrature,
    velocity_at,
    velocity_gradient_at,
)
from .transport import FlowMapState, jacobian_determinants

log = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = (
    "time", "l1", "lp", "l2", "linf", "grad_linf", "u_w1inf", "holder_gamma",
    "kato_ratio", "dexp_lhs", "dexp_rhs", "det_jac_err", "boundary_tangency_max",
    "divergence_max",
)


# ---------------------------------------------------------------------------
# records


@dataclass
class DiagnosticsRecord:
    time: float
    lp_norms: dict
    grad_linf: float
    u_w1inf: float
    holder_gamma: float
    kato_ratio: float
    dexp_lhs: float
    dexp_rhs: float
    det_jac_err: float
    boundary_tangency_max: float
    divergence_max: float
    delta_t: float = 1.0
    p: float = 1.5

    def row(self) -> list[float]:
        lp = self.lp_norms
        return [self.time, lp[1.0], lp[self.p], lp[2.0], lp[math.inf], self.grad_linf,
                self.u_w1inf, self.holder_gamma, self.kato_ratio, self.dexp_lhs,
                self.dexp_rhs, self.det_jac_err, self.boundary_tangency_max,
                self.divergence_max]

    def check_finite(self) -> None:
        bad = [c for c, v in zip(DIAGNOSTIC_COLUMNS, self.row()) if not math.isfinite(v)]
        if bad:
            raise NumericAbort(f"non-finite diagnostics at t={self.time}: {', '.join(bad)}")


@dataclass(frozen=True)
class KatoBoundInputs:
    """Initial-data constants of the Kato-type and double-exponential bounds.

    ``A = |omega0|_inf + |omega0|_q`` and
    ``B = 1 + log(3 + |grad omega0|_inf / |omega0|_inf)``.
    """

    gamma: float
    q: float
    A: float
    B: float
    linf0: float
    lq0: float
    delta_t: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 1.0 <= self.q < 2.0:
            raise ValueError("q must lie in [1, 2)")

    @classmethod
    def from_initial(cls, omega0, gamma: float = 0.5, q: float = 1.5) -> "KatoBoundInputs":
        vals = omega0.values if isinstance(omega0, GridField) else np.asarray(omega0)
        h = omega0.spacing
        linf = lp_norm_array(vals, h, math.inf)
        lq = lp_norm_array(vals, h, q)
        g = lp_norm_array(gradient(vals, h), h, math.inf)
        B = 1.0 + math.log(3.0 + g / linf) if linf > 0 else 1.0 + math.log(3.0)
        return cls(gamma, q, linf + lq, B, linf, lq, 1.0)

    def kato_shape(self, holder: float) -> float:
        """``A (1 + log(1 + [omega]_gamma / |omega0|_inf)) + |omega0|_q``."""
        if self.linf0 == 0.0:
            return 0.0
        return self.A * (1.0 + math.log1p(holder / self.linf0)) + self.lq0


def kato_delta(linf: float, holder: float, gamma: float) -> float:
    """``(|omega|_inf / |omega|_{C^gamma})^{1/gamma}`` with the full Hoelder norm."""
    full = linf + holder
    if full == 0.0:
        return 1.0
    return (linf / full) ** (1.0 / gamma)


@dataclass(frozen=True, eq=False)
class StretchField:
    """``beta = sum_ij d_i u^j n_i n_j`` with ``n = grad omega / |grad omega|``."""

    beta: GridField

    @classmethod
    def compute(cls, omega: GridField, grad_u: np.ndarray) -> "StretchField":
        g = gradient(omega.values, omega.spacing)
        mag = np.sqrt(g[0] ** 2 + g[1] ** 2)
        with np.errstate(invalid="ignore", divide="ignore"):
            n = np.where(mag > 0.0, g / np.where(mag > 0.0, mag, 1.0), 0.0)
        # grad_u[j, i] = d u_j / d x_i
        beta = np.einsum("jiyx,iyx,jyx->yx", grad_u, n, n)
        return cls(omega.with_values(beta, name="beta"))


def _frobenius(t: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(t * t, axis=(0, 1)))


# ---------------------------------------------------------------------------
# sampling omega, u and grad u


@dataclass(frozen=True, eq=False)
class FieldSample:
    """Vorticity, velocity and velocity gradient on the nodes of one grid."""

    omega: GridField
    u: np.ndarray
    grad_u: np.ndarray
    wall_u2: np.ndarray


def sample_grid(omega: GridField) -> FieldSample:
    quad = grid_quadrature(omega.shape, omega.spacing)
    u = quad.velocity(omega.values)
    J = quad.gradient(omega.values)
    return FieldSample(omega, u, J, u[1, 0, :])


def sample_blobs(blobs, grid: GridField, cfg: SummationConfig = DIRECT) -> FieldSample:
    """Evaluate a blob ensemble on the nodes of ``grid``.

    Point vortices have no bounded samples, so they are observed through a
    display core of two grid cells (vorticity, velocity and gradient alike).
    """
    bs = BlobSet.from_blobs(blobs)
    nodes = grid.nodes()
    shape = grid.shape
    shown = bs if np.all(bs.delta2 > 0) else BlobSet(
        bs.positions, bs.circulations, np.where(bs.delta2 > 0, bs.delta2, (2.0 * grid.spacing) ** 2))
    w = blob_vorticity(nodes, shown).reshape(shape)
    w[0, :] = 0.0
    u = velocity_at(nodes, shown, cfg).T.reshape((2,) + shape)
    J = velocity_gradient_at(nodes, shown, cfg)
    J = np.moveaxis(J, 0, -1).reshape((2, 2) + shape)
    return FieldSample(grid.with_values(w, name="omega"), u, J, u[1, 0, :])


class DiagnosticsMonitor:
    """Turns successive samples into :class:`DiagnosticsRecord` objects.

    The first snapshot fixes the initial-data constants and calibrates the
    Kato constant so that ``kato_ratio(0) = 1``.
    """

    def __init__(self, gamma: float = 0.5, q: float = 1.5, p: float = 1.5, *,
                 holder_pairs: int = 256, seed: int = 0):
        self.gamma = gamma
        self.q = q
        self.p = p
        self.holder_pairs = holder_pairs
        self.seed = seed
        self.inputs: KatoBoundInputs | None = None
        self.C_kato: float | None = None
        self.records: list[DiagnosticsRecord] = []

    def snapshot(self, t: float, sample: FieldSample, flow: FlowMapState | None = None) -> DiagnosticsRecord:
        om = sample.omega
        h = om.spacing
        w = om.values
        if self.inputs is None:
            self.inputs = KatoBoundInputs.from_initial(om, self.gamma, self.q)
        inp = self.inputs
        lp = {s: lp_norm_array(w, h, s) for s in (1.0, self.p, 2.0, math.inf)}
        g = lp_norm_array(gradient(w, h), h, math.inf)
        umax = float(np.max(np.sqrt(sample.u[0] ** 2 + sample.u[1] ** 2)))
        w1inf = umax + float(np.max(_frobenius(sample.grad_u)))
        holder = holder_seminorm_array(w, h, self.gamma, self.holder_pairs, seed=self.seed)
        shape = inp.kato_shape(holder)
        if self.C_kato is None:
            self.C_kato = w1inf / shape if shape > 0 else 0.0
        denom = self.C_kato * shape
        kato = w1inf / denom if denom > 0 else 0.0
        lhs = 1.0 + math.log(3.0 + g / inp.linf0) if inp.linf0 > 0 else inp.B
        dets = jacobian_determinants(flow) if flow is not None and flow.n_probes else np.ones(1)
        rec = DiagnosticsRecord(
            time=float(t),
            lp_norms=lp,
            grad_linf=g,
            u_w1inf=w1inf,
            holder_gamma=holder,
            kato_ratio=kato,
            dexp_lhs=lhs,
            dexp_rhs=inp.B,
            det_jac_err=float(np.max(np.abs(dets - 1.0))),
            boundary_tangency_max=float(np.max(np.abs(sample.wall_u2))),
            divergence_max=float(np.max(np.abs(sample.grad_u[0, 0] + sample.grad_u[1, 1]))),
            delta_t=kato_delta(lp[math.inf], holder, self.gamma),
            p=self.p,
        )
        rec.check_finite()
        self.records.append(rec)
        return rec


def snapshot(omega, u_eval=None, flow: FlowMapState | None = None, gamma: float = 0.5,
             q: float = 1.5, p: float = 1.5, *, t: float = 0.0, grid: GridField | None = None,
             monitor: DiagnosticsMonitor | None = None) -> DiagnosticsRecord:
    """One diagnostics record for a gridded field or a blob ensemble.

    Grids use FFT quadrature for ``u`` and the principal-value gradient;
    blob ensembles are sampled on the nodes of ``grid`` with the summation
    method ``u_eval`` (a :class:`SummationConfig`, direct by default). Pass
    the same ``monitor`` for every time of a run so that ``t = 0`` calibrates.
    """
    monitor = DiagnosticsMonitor(gamma, q, p) if monitor is None else monitor
    if isinstance(omega, GridField):
        sample = sample_grid(omega)
    else:
        if grid is None:
            raise ValueError("blob snapshots need a sampling grid")
        sample = sample_blobs(omega, grid, u_eval or DIRECT)
    return monitor.snapshot(t, sample, flow)


# ---------------------------------------------------------------------------
# double-exponential bound


@dataclass(frozen=True)
class DoubleExpCheck:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    margin: np.ndarray
    passed: np.ndarray
    C_fit: float
    t_cal: float

    @property
    def ok(self) -> bool:
        return bool(np.all(self.passed[self.times > self.t_cal]))


def fit_dexp_constant(times, lhs, A: float, B: float, t_cal: float) -> float:
    """Smallest ``C >= 0`` with ``lhs(t) <= B exp(C A t)`` on ``(0, t_cal]``."""
    times = np.asarray(times, dtype=float)
    lhs = np.asarray(lhs, dtype=float)
    sel = (times > 0) & (times <= t_cal)
    if A <= 0 or not sel.any():
        return 0.0
    c = np.log(np.maximum(lhs[sel], 1e-300) / B) / (A * times[sel])
    return max(float(np.max(c)), 0.0)


def double_exp_bound_check(records: Sequence[DiagnosticsRecord], A: float, B: float,
                           C_fit: float | None = None, *, calibration_fraction: float = 0.25) -> DoubleExpCheck:
    """Compare ``1 + log(3 + |grad omega|/|omega0|)`` with ``B exp(C A t)``.

    Without ``C_fit`` the constant is fitted on the first
    ``calibration_fraction`` of the record span.
    """
    times = np.array([r.time for r in records])
    lhs = np.array([r.dexp_lhs for r in records])
    t_cal = float(times[0] + calibration_fraction * (times[-1] - times[0])) if len(times) else 0.0
    if C_fit is None:
        C_fit = fit_dexp_constant(times, lhs, A, B, t_cal)
    rhs = B * np.exp(C_fit * A * times)
    margin = rhs - lhs
    # equality at the calibration points is a pass up to rounding
    passed = margin >= -1e-12 * np.maximum(np.abs(rhs), 1.0)
    return DoubleExpCheck(times, lhs, rhs, margin, passed, float(C_fit), t_cal)


# ---------------------------------------------------------------------------
# CSV output


def format_row(values: Iterable[float]) -> str:
    return ",".join(repr(float(v)) for v in values)


class DiagnosticsWriter:
    """Single-writer CSV stream.

    Rows wait in a buffer until the double-exponential constant has been
    fitted on the calibration window, then every row is written with its
    ``dexp_rhs`` filled in.
    """

    def __init__(self, path, monitor: DiagnosticsMonitor, t_final: float,
                 calibration_fraction: float = 0.25):
        self.path = Path(path)
        self.monitor = monitor
        self.t_cal = calibration_fraction * t_final
        self.C_dexp: float | None = None
        self._pending: list[DiagnosticsRecord] = []
        self._fh = open(self.path, "w", newline="")
        self._fh.write(",".join(DIAGNOSTIC_COLUMNS) + "\n")

    def _fit(self):
        inp = self.monitor.inputs
        recs = self._pending
        self.C_dexp = fit_dexp_constant([r.time for r in recs], [r.dexp_lhs for r in recs],
                                        inp.A, inp.B, self.t_cal)

    def _emit(self, rec: DiagnosticsRecord):
        inp = self.monitor.inputs
        rec.dexp_rhs = inp.B * math.exp(self.C_dexp * inp.A * rec.time)
        self._fh.write(format_row(rec.row()) + "\n")

    def push(self, rec: DiagnosticsRecord) -> None:
        if self.C_dexp is None:
            self._pending.append(rec)
            if rec.time >= self.t_cal:
                self.flush()
        else:
            self._emit(rec)
            self._fh.flush()

    def flush(self) -> None:
        if self._pending:
            if self.C_dexp is None:
                self._fit()
            for rec in self._pending:
                self._emit(rec)
            self._pending.clear()
        self._fh.flush()

    def close(self) -> None:
        self.flush()
        self._fh.close()


def write_diagnostics_csv(records: Sequence[DiagnosticsRecord], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        fh.write(",".join(DIAGNOSTIC_COLUMNS) + "\n")
        for r in records:
            fh.write(format_row(r.row()) + "\n")


def read_diagnostics_csv(path) -> dict[str, np.ndarray]:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(-1, len(head))
    return {c: data[:, i] for i, c in enumerate(head)}


# ---------------------------------------------------------------------------
# gradient-magnitude transport


def gradient_transport_residual(omegas: Sequence[GridField], us: Sequence[np.ndarray], dt: float) -> float:
    """Residual of ``d_t |grad w| + u . grad |grad w| + beta |grad w| = 0``.

    Central differences in time and space; ``beta`` uses finite-difference
    velocity gradients. Returns the largest spatial ``L^2`` norm over the
    interior time levels.
    """
    if len(omegas) < 3 or len(us) != len(omegas):
        raise InsufficientResolution("need at least 3 snapshots with matching velocities")
    h = omegas[0].spacing
    if min(omegas[0].shape) < 3:
        raise InsufficientResolution("grid too small for centered differences")
    mags = []
    for om in omegas:
        g = gradient(om.values, h)
        mags.append(np.sqrt(g[0] ** 2 + g[1] ** 2))
    worst = 0.0
    for n in range(1, len(omegas) - 1):
        u = np.asarray(us[n], dtype=float)
        gu = np.stack([gradient(u[0], h), gradient(u[1], h)])  # gu[j, i] = d_i u_j
        beta = StretchField.compute(omegas[n], gu).beta.values
        m = mags[n]
        dm = gradient(m, h)
        R = (mags[n + 1] - mags[n - 1]) / (2.0 * dt) + u[0] * dm[0] + u[1] * dm[1] + beta * m
        worst = max(worst, lp_norm_array(R, h, 2.0))
    return worst


# ---------------------------------------------------------------------------
# ratio probes


def sobolev_ratio_probe(omega: GridField, m: int, p: float) -> float:
    """``|u|_{W^{m, 2p/(2-p)}} / |omega|_{W^{m,p}}`` with quadrature velocity."""
    if not 0 <= m <= 2:
        raise ValueError("m must lie in {0, 1, 2}")
    if not 1.0 < p < 2.0:
        raise ValueError("p must lie in (1, 2)")
    h = omega.spacing
    den = sobolev_norm_array(omega.values, h, m, p)
    if den == 0.0:
        raise ZeroDenominator("vorticity vanishes")
    u = grid_quadrature(omega.shape, h).velocity(omega.values)
    return sobolev_norm_array(u, h, m, 2.0 * p / (2.0 - p)) / den


def schauder_ratio_probe(omega: GridField, gamma: float = 0.5, *, sample_pairs: int = 256,
                         seed: int = 0) -> float:
    """``[grad u]_gamma / [omega]_gamma`` with the principal-value gradient."""
    h = omega.spacing
    den = holder_seminorm_array(omega.values, h, gamma, sample_pairs, seed=seed)
    if den == 0.0:
        raise ZeroDenominator("vorticity is constant")
    J = grid_quadrature(omega.shape, h).gradient(omega.values)
    return holder_seminorm_array(J, h, gamma, sample_pairs, seed=seed) / den


def _inv(s: float) -> float:
    return 0.0 if math.isinf(s) else 1.0 / s


def spectral_partial(values, h: float, a: int, b: int) -> np.ndarray:
    """``d1^a d2^b`` by FFT differentiation on the sampling window.

    Exact up to rounding for band-limited data that decays at the window
    edges; the unpaired Nyquist mode is dropped for odd orders.
    """
    F = np.asarray(values, dtype=float)
    ny, nx = F.shape
    k1 = 2.0 * np.pi * np.fft.fftfreq(nx, h)
    k2 = 2.0 * np.pi * np.fft.fftfreq(ny, h)
    m1 = (1j * k1) ** a
    m2 = (1j * k2) ** b
    if a % 2 and nx % 2 == 0:
        m1[nx // 2] = 0.0
    if b % 2 and ny % 2 == 0:
        m2[ny // 2] = 0.0
    return np.real(np.fft.ifft2(np.fft.fft2(F) * m2[:, None] * m1[None, :]))


def _tensor_norm(values, h: float, order: int, deriv) -> np.ndarray:
    if order == 0:
        return np.abs(np.asarray(values, dtype=float))
    acc = np.zeros(np.shape(values))
    for a in range(order, -1, -1):
        acc += math.comb(order, a) * deriv(values, h, a, order - a) ** 2
    return np.sqrt(acc)


def calculus_inequality_sample(f: GridField, g: GridField, alpha, s: float, s1: float, s2: float,
                               s3: float, s4: float, *, commutator: bool = False,
                               derivative: str = "spectral") -> tuple[float, float, float]:
    """Product (or commutator) estimate ``lhs <= C rhs`` sampled with ``C = 1``.

    ``alpha`` is a multi-index ``(a1, a2)``. Derivatives are spectral by
    default (``derivative="fd"`` selects second-order differences);
    integrals use the trapezoidal rule. Returns ``(lhs, rhs, lhs/rhs)`` with
    the ratio set to 0 whenever ``lhs`` vanishes.
    """
    inv = _inv(s)
    if not (math.isclose(inv, _inv(s1) + _inv(s2), abs_tol=1e-12)
            and math.isclose(inv, _inv(s3) + _inv(s4), abs_tol=1e-12)):
        raise ExponentMismatch(f"1/{s} must equal 1/{s1} + 1/{s2} and 1/{s3} + 1/{s4}")
    if f.shape != g.shape or f.spacing != g.spacing:
        raise ValueError("f and g must share a grid")
    if derivative not in ("spectral", "fd"):
        raise ValueError(f"unknown derivative scheme {derivative!r}")
    deriv = spectral_partial if derivative == "spectral" else partial
    a1, a2 = (int(alpha), 0) if np.isscalar(alpha) else (int(alpha[0]), int(alpha[1]))
    order = a1 + a2
    if order < 1:
        raise ValueError("|alpha| must be >= 1")
    h = f.spacing
    F, G = f.values, g.values
    lhs_field = deriv(F * G, h, a1, a2)
    if commutator:
        lhs_field = lhs_field - F * deriv(G, h, a1, a2)
    lhs = lp_norm_array(lhs_field, h, s)
    Df = lp_norm_array(_tensor_norm(F, h, order, deriv), h, s1)
    if commutator:
        grad_f = np.stack([deriv(F, h, 1, 0), deriv(F, h, 0, 1)])
        second = lp_norm_array(grad_f, h, s4) * lp_norm_array(_tensor_norm(G, h, order - 1, deriv), h, s3)
    else:
        second = lp_norm_array(F, h, s4) * lp_norm_array(_tensor_norm(G, h, order, deriv), h, s3)
    rhs = Df * lp_norm_array(G, h, s2) + second
    if lhs == 0.0:
        return (0.0, rhs, 0.0)
    return (lhs, rhs, lhs / rhs if rhs > 0 else math.inf)


def random_gaussian_mixture(rng: np.random.Generator, x1_range, height: float, n: int,
                            n_bumps: int = 3, *, odd: bool = False) -> GridField:
    """Sum of random Gaussians on an ``n x n`` half-plane grid.

    Centers lie in the middle 30% of the window and widths between 5% and
    8% of its length, so every bump has decayed below ``1e-8`` at the
    window edges. ``odd`` subtracts mirror images so the field vanishes on
    the wall.
    """
    x0, x1 = x1_range
    L = x1 - x0
    params = []
    for _ in range(n_bumps):
        c1 = x0 + L * (0.35 + 0.3 * rng.random())
        c2 = height * (0.35 + 0.3 * rng.random())
        sig = L * (0.05 + 0.03 * rng.random())
        amp = rng.uniform(-1.0, 1.0)
        params.append((c1, c2, sig, amp))

    def fn(X1, X2):
        out = np.zeros_like(X1)
        for c1, c2, sig, amp in params:
            out += amp * np.exp(-((X1 - c1) ** 2 + (X2 - c2) ** 2) / sig**2)
            if odd:
                out -= amp * np.exp(-((X1 - c1) ** 2 + (X2 + c2) ** 2) / sig**2)
        return out

    return GridField.from_function(fn, x1_range, height, n, n, name="mixture")


# ---------------------------------------------------------------------------
# tangential identity


def tangential_identity_check(omega: GridField) -> float:
    """``L^2`` gap between two evaluations of ``d psi / d x1``.

    One differentiates the Green's quadrature in ``x``; the other applies the
    Green's quadrature to ``d omega / d y1``.
    """
    h = omega.spacing
    quad = grid_quadrature(omega.shape, h)
    direct = quad.d1_stream(omega.values)
    moved = quad.stream(partial(omega.values, h, 1, 0))
    return lp_norm_array(direct - moved, h, 2.0)
