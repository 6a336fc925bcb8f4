"""Velocity and velocity-gradient sums over blob ensembles and their images.

Two evaluation routes share one kernel:

* ``direct``: every (target, source) pair, O(N^2).
* ``treecode``: Barnes-Hut quadtree over blobs *and* their mirrored images.
  Cells that pass the opening test are replaced by a Taylor expansion of the
  cored kernel about the cell center, truncated after the monopole
  (``expansion_order=0``) or at a higher order (default 6).

Grid fields get a third route, :class:`GridQuadrature`, which evaluates the
same point-vortex sum over all grid nodes by FFT convolution of the odd
extension.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np
import scipy.fft as sfft

from .errors import EmptyField, TreeDepthExceeded, VelocityEvaluationFailure
from .field import BlobSet, GridField
from .kernel import TWO_PI

MAX_DEPTH = 64
MAX_ORDER = 8


@dataclass(frozen=True)
class SummationConfig:
    method: str = "direct"
    opening_angle: float = 0.5
    leaf_capacity: int = 16
    expansion_order: int = 6  # 0 is the plain monopole

    def __post_init__(self):
        if self.method not in ("direct", "treecode"):
            raise ValueError(f"unknown summation method {self.method!r}")
        # 0 is accepted as the degenerate open-every-cell limit
        if not 0.0 <= self.opening_angle <= 1.5:
            raise ValueError("opening_angle must lie in [0, 1.5]")
        if self.leaf_capacity < 1:
            raise ValueError("leaf_capacity must be >= 1")
        if not 0 <= self.expansion_order <= MAX_ORDER:
            raise ValueError(f"expansion_order must lie in [0, {MAX_ORDER}]")


DIRECT = SummationConfig()


# ---------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True)
def _accumulate_velocity(x, y, px, py, g, s, out):
    d1 = x - px
    d2 = y - py
    r = d1 * d1 + d2 * d2 + s
    if r > 0.0:
        out[0] += g * d2 / r
        out[1] -= g * d1 / r


@numba.njit(cache=True)
def _accumulate_gradient(x, y, px, py, g, s, out):
    d1 = x - px
    d2 = y - py
    r = d1 * d1 + d2 * d2 + s
    if r > 0.0:
        r2 = r * r
        diff = d1 * d1 - d2 * d2
        out[0] += g * (-2.0 * d1 * d2) / r2
        out[1] += g * (diff + s) / r2
        out[2] += g * (diff - s) / r2
        out[3] += g * (2.0 * d1 * d2) / r2


def _expansion_tables(pmax: int = MAX_ORDER):
    """Integer coefficients of the mixed derivatives of the cored kernel.

    With ``F = conj(z) / (|z|^2 + s)`` and ``R = |z|^2 + s``,
    ``d_z^a d_zbar^b F = sum_j cd[a, b, j] conj(z)^(a+1-j) z^(b-j) R^-(a+1+b-j)``.
    ``pf[a, b]`` is the Taylor prefactor ``(-1)^(a+b) / (a! b!)``.
    """
    n_ab = pmax + 2
    cd = np.zeros((n_ab, n_ab, n_ab + 1))
    pf = np.zeros((n_ab, n_ab))
    for a in range(n_ab):
        n = a + 1
        for b in range(n_ab):
            pf[a, b] = (-1) ** (a + b) / (math.factorial(a) * math.factorial(b))
            for j in range(min(b, n) + 1):
                rising = math.prod(range(n, n + b - j))
                cd[a, b, j] = ((-1) ** (a + b - j) * math.factorial(a) * math.comb(b, j)
                               * math.factorial(n) // math.factorial(n - j) * rising)
    return cd, pf


_CD, _PF = _expansion_tables()


@numba.njit(cache=True)
def _mixed_derivative(a, b, zp, zbp, irp, cd):
    n = a + 1
    acc = 0j
    for j in range(min(b, n) + 1):
        acc += cd[a, b, j] * zbp[n - j] * zp[b - j] * irp[n + b - j]
    return acc


@numba.njit(cache=True)
def _far_field(dx, dy, mom, s, order, gradient, cd, pf, zp, zbp, irp, out):
    # Taylor expansion of the cored kernel about the cell center in complex
    # form: u1 - i u2 = i W, W = sum over sources of Gamma F(z - e),
    # mom[a, b] = sum of Gamma e^a conj(e)^b.
    z = complex(dx, dy)
    zb = z.conjugate()
    ir = 1.0 / (dx * dx + dy * dy + s)
    zp[0] = 1.0
    zbp[0] = 1.0
    irp[0] = 1.0
    for i in range(1, zp.shape[0]):
        zp[i] = zp[i - 1] * z
        zbp[i] = zbp[i - 1] * zb
        irp[i] = irp[i - 1] * ir
    if not gradient:
        w = 0j
        for a in range(order + 1):
            for b in range(order + 1 - a):
                w += pf[a, b] * mom[a, b] * _mixed_derivative(a, b, zp, zbp, irp, cd)
        out[0] -= w.imag
        out[1] -= w.real
        return
    wz = 0j
    wb = 0j
    for a in range(order + 1):
        for b in range(order + 1 - a):
            c = pf[a, b] * mom[a, b]
            wz += c * _mixed_derivative(a + 1, b, zp, zbp, irp, cd)
            wb += c * _mixed_derivative(a, b + 1, zp, zbp, irp, cd)
    da = 1j * (wz + wb)
    db = wb - wz
    # the cored kernel is divergence free; keep the trace exactly zero
    m11 = 0.5 * (da.real + db.imag)
    out[0] += m11
    out[1] += db.real
    out[2] -= da.imag
    out[3] -= m11


@numba.njit(parallel=True, cache=True)
def _direct_velocity(tx, ty, px, py, pg, ps):
    n = tx.shape[0]
    out = np.zeros((n, 2))
    for i in numba.prange(n):
        acc = np.zeros(2)
        for j in range(px.shape[0]):
            _accumulate_velocity(tx[i], ty[i], px[j], py[j], pg[j], ps[j], acc)
        out[i, 0] = acc[0] / (2.0 * np.pi)
        out[i, 1] = acc[1] / (2.0 * np.pi)
    return out


@numba.njit(parallel=True, cache=True)
def _direct_gradient(tx, ty, px, py, pg, ps):
    n = tx.shape[0]
    out = np.zeros((n, 4))
    for i in numba.prange(n):
        acc = np.zeros(4)
        for j in range(px.shape[0]):
            _accumulate_gradient(tx[i], ty[i], px[j], py[j], pg[j], ps[j], acc)
        for k in range(4):
            out[i, k] = acc[k] / (2.0 * np.pi)
    return out


@numba.njit(parallel=True, cache=True)
def _tree_sum(tx, ty, px, py, pg, ps, start, count, child, leaf,
              cx, cy, cs, crad, mom, theta, gradient, order, cd, pf):
    n = tx.shape[0]
    width = 4 if gradient else 2
    out = np.zeros((n, width))
    for i in numba.prange(n):
        acc = np.zeros(width)
        stack = np.empty(4 * MAX_DEPTH + 8, dtype=np.int64)
        zp = np.empty(order + 4, dtype=np.complex128)
        zbp = np.empty(order + 4, dtype=np.complex128)
        irp = np.empty(order + 4)
        top = 0
        stack[0] = 0
        top = 1
        x = tx[i]
        y = ty[i]
        while top > 0:
            top -= 1
            k = stack[top]
            dx = x - cx[k]
            dy = y - cy[k]
            dist = math.sqrt(dx * dx + dy * dy)
            # the root straddles the wall, where blobs and images cancel; always open it
            if k > 0 and crad[k] < theta * dist:
                _far_field(dx, dy, mom[k], cs[k], order, gradient, cd, pf, zp, zbp, irp, acc)
            elif leaf[k]:
                for j in range(start[k], start[k] + count[k]):
                    if gradient:
                        _accumulate_gradient(x, y, px[j], py[j], pg[j], ps[j], acc)
                    else:
                        _accumulate_velocity(x, y, px[j], py[j], pg[j], ps[j], acc)
            else:
                for q in range(3, -1, -1):
                    c = child[k, q]
                    if c >= 0:
                        stack[top] = c
                        top += 1
        for m in range(width):
            out[i, m] = acc[m] / (2.0 * np.pi)
    return out


@numba.njit(cache=True)
def _aggregate(px, py, pg, ps, start, count, bx, by, bh, order):
    m = start.shape[0]
    cx = np.zeros(m)
    cy = np.zeros(m)
    cg = np.zeros(m)
    ca = np.zeros(m)
    cs = np.zeros(m)
    crad = np.zeros(m)
    mom = np.zeros((m, order + 1, order + 1), dtype=np.complex128)
    ep = np.empty(order + 1, dtype=np.complex128)
    ebp = np.empty(order + 1, dtype=np.complex128)
    for k in range(m):
        sg = 0.0
        sa = 0.0
        sx = 0.0
        sy = 0.0
        ss = 0.0
        gx = 0.0
        gy = 0.0
        for j in range(start[k], start[k] + count[k]):
            a = abs(pg[j])
            sg += pg[j]
            sa += a
            sx += a * px[j]
            sy += a * py[j]
            ss += a * ps[j]
            gx += px[j]
            gy += py[j]
        if sa > 0.0:
            cx[k] = sx / sa
            cy[k] = sy / sa
            cs[k] = ss / sa
        else:
            cx[k] = gx / count[k]
            cy[k] = gy / count[k]
        cg[k] = sg
        ca[k] = sa
        for j in range(start[k], start[k] + count[k]):
            e = complex(px[j] - cx[k], py[j] - cy[k])
            ep[0] = pg[j]
            ebp[0] = 1.0
            for i in range(1, order + 1):
                ep[i] = ep[i - 1] * e
                ebp[i] = ebp[i - 1] * e.conjugate()
            for a in range(order + 1):
                for b in range(order + 1 - a):
                    mom[k, a, b] += ep[a] * ebp[b]
        # bounding circle of the cell box about the expansion center
        ex = abs(cx[k] - bx[k]) + bh[k]
        ey = abs(cy[k] - by[k]) + bh[k]
        crad[k] = math.sqrt(ex * ex + ey * ey)
    return cx, cy, cg, ca, cs, crad, mom


# ---------------------------------------------------------------------------
# sources and tree


def _as_blobset(blobs) -> BlobSet:
    bs = BlobSet.from_blobs(blobs)
    if len(bs) == 0:
        raise EmptyField("blob ensemble is empty")
    return bs


def materialize_images(blobs) -> np.ndarray:
    """Stack blobs and their mirror images as rows ``(x1, x2, Gamma, delta^2)``."""
    bs = _as_blobset(blobs)
    p = bs.positions
    real = np.column_stack([p, bs.circulations, bs.delta2])
    image = np.column_stack([p[:, 0], -p[:, 1], -bs.circulations, bs.delta2])
    return np.vstack([real, image])


@dataclass(frozen=True, eq=False)
class QuadTree:
    """Frozen quadtree over blobs plus images.

    ``points`` holds ``(x1, x2, Gamma, delta^2)`` in tree order; node ``k``
    owns ``points[start[k]:start[k]+count[k]]``. The root box is centered on
    the wall so the first ``x2`` split separates blobs from images.
    """

    points: np.ndarray
    start: np.ndarray
    count: np.ndarray
    child: np.ndarray
    leaf: np.ndarray
    depth: np.ndarray
    centroid: np.ndarray
    circulation: np.ndarray
    abs_circulation: np.ndarray
    core2: np.ndarray
    radius: np.ndarray
    moments: np.ndarray
    leaf_capacity: int

    @property
    def expansion_order(self) -> int:
        return self.moments.shape[1] - 1

    @property
    def n_nodes(self) -> int:
        return self.start.shape[0]

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.leaf)


def build_tree(blobs, leaf_capacity: int = 16, expansion_order: int = 6) -> QuadTree:
    if leaf_capacity < 1:
        raise ValueError("leaf_capacity must be >= 1")
    if not 0 <= expansion_order <= MAX_ORDER:
        raise ValueError(f"expansion_order must lie in [0, {MAX_ORDER}]")
    pts = materialize_images(blobs)
    # canonical order makes the result independent of insertion order
    order = np.lexsort((pts[:, 3], pts[:, 2], pts[:, 1], pts[:, 0]))
    pts = pts[order]
    x, y = pts[:, 0], pts[:, 1]
    xc = 0.5 * (x.min() + x.max())
    half = max(np.abs(x - xc).max(), np.abs(y).max())
    half = half * (1.0 + 1e-12) + 1e-300

    starts, counts, depths, leafs = [], [], [], []
    boxes = [(xc, 0.0, half)]
    children: list[list[int]] = []
    deep = False
    # (node id, start, count, center x, center y, half width, depth)
    stack = [(0, 0, len(pts), xc, 0.0, half, 0)]
    starts.append(0), counts.append(len(pts)), depths.append(0), leafs.append(True)
    children.append([-1, -1, -1, -1])
    while stack:
        k, s, c, bx, by, hw, d = stack.pop()
        if c <= leaf_capacity:
            continue
        if d >= MAX_DEPTH:
            deep = True
            continue
        seg = pts[s : s + c]
        quad = (seg[:, 0] >= bx).astype(np.int64) + 2 * (seg[:, 1] >= by).astype(np.int64)
        idx = np.argsort(quad, kind="stable")
        pts[s : s + c] = seg[idx]
        quad = quad[idx]
        bounds = np.searchsorted(quad, np.arange(5))
        leafs[k] = False
        q_hw = 0.5 * hw
        pending = []
        for q in range(4):
            lo, hi = bounds[q], bounds[q + 1]
            if hi == lo:
                continue
            cid = len(starts)
            starts.append(s + lo), counts.append(hi - lo), depths.append(d + 1), leafs.append(True)
            children.append([-1, -1, -1, -1])
            children[k][q] = cid
            qx = bx + (q_hw if q & 1 else -q_hw)
            qy = by + (q_hw if q & 2 else -q_hw)
            boxes.append((qx, qy, q_hw))
            pending.append((cid, s + lo, hi - lo, qx, qy, q_hw, d + 1))
        stack.extend(reversed(pending))
    if deep:
        warnings.warn(
            TreeDepthExceeded(f"coincident blobs exceeded depth {MAX_DEPTH}; merged into one leaf"),
            stacklevel=2,
        )
    start = np.array(starts, dtype=np.int64)
    count = np.array(counts, dtype=np.int64)
    box = np.array(boxes, dtype=float)
    cx, cy, cg, ca, cs, crad, mom = _aggregate(pts[:, 0].copy(), pts[:, 1].copy(),
                                          pts[:, 2].copy(), pts[:, 3].copy(), start, count,
                                          box[:, 0].copy(), box[:, 1].copy(), box[:, 2].copy(),
                                          expansion_order)
    return QuadTree(
        points=pts,
        start=start,
        count=count,
        child=np.array(children, dtype=np.int64),
        leaf=np.array(leafs, dtype=np.bool_),
        depth=np.array(depths, dtype=np.int64),
        centroid=np.column_stack([cx, cy]),
        circulation=cg,
        abs_circulation=ca,
        core2=cs,
        radius=crad,
        moments=mom,
        leaf_capacity=leaf_capacity,
    )


def _targets(targets) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(targets, dtype=float).reshape(-1, 2)
    if np.any(t[:, 1] < 0.0):
        raise ValueError("targets must lie in the closed upper half plane")
    return np.ascontiguousarray(t[:, 0]), np.ascontiguousarray(t[:, 1])


def _tree_query(tree: QuadTree, targets, theta: float, gradient: bool,
                order: int | None = None) -> np.ndarray:
    order = tree.expansion_order if order is None else min(order, tree.expansion_order)
    tx, ty = _targets(targets)
    p = tree.points
    return _tree_sum(
        tx, ty,
        np.ascontiguousarray(p[:, 0]), np.ascontiguousarray(p[:, 1]),
        np.ascontiguousarray(p[:, 2]), np.ascontiguousarray(p[:, 3]),
        tree.start, tree.count, tree.child, tree.leaf,
        np.ascontiguousarray(tree.centroid[:, 0]), np.ascontiguousarray(tree.centroid[:, 1]),
        tree.core2, tree.radius, tree.moments,
        float(theta), gradient, int(order), _CD, _PF,
    )


def direct_sum(targets, points, gradient: bool = False) -> np.ndarray:
    """Pairwise sum over explicit source rows ``(x1, x2, Gamma, delta^2)``.

    Summation follows row order; coincident unregularized pairs are skipped.
    """
    tx, ty = _targets(targets)
    p = np.asarray(points, dtype=float)
    cols = [np.ascontiguousarray(p[:, i]) for i in range(4)]
    fn = _direct_gradient if gradient else _direct_velocity
    return fn(tx, ty, *cols)


def _evaluate(targets, blobs, cfg: SummationConfig, gradient: bool, tree: QuadTree | None):
    try:
        if cfg.method == "direct":
            out = direct_sum(targets, materialize_images(blobs), gradient)
        else:
            if tree is None:
                tree = build_tree(blobs, cfg.leaf_capacity, cfg.expansion_order)
            out = _tree_query(tree, targets, cfg.opening_angle, gradient, cfg.expansion_order)
    except (EmptyField, ValueError):
        raise
    except Exception as exc:  # numba / memory failures
        raise VelocityEvaluationFailure(str(exc)) from exc
    if not np.all(np.isfinite(out)):
        raise VelocityEvaluationFailure("non-finite velocity from summation")
    return out


def velocity_at(targets, blobs, cfg: SummationConfig = DIRECT, *, tree: QuadTree | None = None) -> np.ndarray:
    """Velocity ``(n, 2)`` induced at ``targets`` by ``blobs`` and their images.

    A prebuilt ``tree`` can be passed to amortize construction over
    several queries against the same ensemble.
    """
    return _evaluate(targets, blobs, cfg, False, tree)


def velocity_gradient_at(targets, blobs, cfg: SummationConfig = DIRECT, *,
                         tree: QuadTree | None = None) -> np.ndarray:
    """Velocity Jacobians, shape ``(n, 2, 2)``, ``[i, j] = d u_i / d x_j``."""
    out = _evaluate(targets, blobs, cfg, True, tree)
    return out.reshape(-1, 2, 2)


def set_threads(n: int) -> None:
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


# ---------------------------------------------------------------------------
# grid quadrature


def log_cell_average(h: float) -> float:
    """``(1/h^2) * integral of log|z|`` over the square cell of side ``h``."""
    a = 0.5 * h
    return math.log(a) + 0.5 * math.log(2.0) - 1.5 + math.pi / 4.0


class GridQuadrature:
    """Point-vortex sums over every node of a half-plane grid, via FFT.

    The half-plane field is oddly extended across the wall and convolved
    with free-space kernels on the doubled grid; this is exactly the
    direct sum over nodes plus images with the self term removed (singular
    kernels) or cell-averaged (logarithm). Results can be returned on the
    half-plane rows only or on the full doubled grid.
    """

    def __init__(self, shape: tuple[int, int], h: float, pv_radius: float | None = None):
        self.ny, self.nx = shape
        self.h = float(h)
        self.pv_radius = 2.0 * self.h if pv_radius is None else float(pv_radius)
        self.full_ny = 2 * self.ny - 1
        ky, kx = 2 * self.full_ny - 1, 2 * self.nx - 1
        self._fshape = (sfft.next_fast_len(self.full_ny + ky - 1, real=True),
                        sfft.next_fast_len(self.nx + kx - 1, real=True))
        b = np.arange(-(self.full_ny - 1), self.full_ny) * self.h
        a = np.arange(-(self.nx - 1), self.nx) * self.h
        Z1, Z2 = np.meshgrid(a, b)
        self._z = (Z1, Z2)
        self._cache: dict[str, np.ndarray] = {}

    def _kernel(self, name: str) -> np.ndarray:
        if name in self._cache:
            return self._cache[name]
        Z1, Z2 = self._z
        r2 = Z1 * Z1 + Z2 * Z2
        w = self.h * self.h / TWO_PI
        c = self.full_ny - 1, self.nx - 1
        with np.errstate(divide="ignore", invalid="ignore"):
            if name == "u1":
                K = Z2 / r2
            elif name == "u2":
                K = -Z1 / r2
            elif name == "d1psi":
                K = Z1 / r2
            elif name == "psi":
                K = 0.5 * np.log(r2)
            elif name in ("m11", "m12"):
                r4 = r2 * r2
                K = -2.0 * Z1 * Z2 / r4 if name == "m11" else (Z1 * Z1 - Z2 * Z2) / r4
                K[r2 < (self.pv_radius * (1 - 1e-12)) ** 2] = 0.0
            else:
                raise KeyError(name)
        K[c] = log_cell_average(self.h) if name == "psi" else 0.0
        spec = sfft.rfft2(K * w, self._fshape)
        self._cache[name] = spec
        return spec

    def extend(self, values) -> np.ndarray:
        F = np.asarray(values, dtype=float)
        return np.concatenate([-F[:0:-1], np.zeros((1, F.shape[1])), F[1:]], axis=0)

    def _convolve(self, ext, name: str, full: bool) -> np.ndarray:
        spec = ext if np.iscomplexobj(ext) else sfft.rfft2(ext, self._fshape)
        out = sfft.irfft2(spec * self._kernel(name), self._fshape)
        r0, c0 = self.full_ny - 1, self.nx - 1
        res = out[r0 : r0 + self.full_ny, c0 : c0 + self.nx]
        return res if full else res[self.ny - 1 :]

    def velocity(self, omega, full: bool = False) -> np.ndarray:
        """``(2, rows, nx)`` velocity; ``full`` returns all doubled-grid rows."""
        spec = sfft.rfft2(self.extend(omega), self._fshape)
        return np.stack([self._convolve(spec, "u1", full), self._convolve(spec, "u2", full)])

    def gradient(self, omega, full: bool = False) -> np.ndarray:
        """``(2, 2, rows, nx)`` Jacobian with principal-value exclusion.

        The lattice sum skips ``|z| < pv_radius`` and the local rotation
        ``(omega/2) [[0, 1], [-1, 0]]`` is added back.
        """
        ext = self.extend(omega)
        spec = sfft.rfft2(ext, self._fshape)
        m11 = self._convolve(spec, "m11", full)
        m12 = self._convolve(spec, "m12", full)
        local = 0.5 * (ext if full else np.asarray(omega, dtype=float))
        return np.array([[m11, m12 + local], [m12 - local, -m11]])

    def stream(self, omega, full: bool = False) -> np.ndarray:
        return self._convolve(self.extend(omega), "psi", full)

    def d1_stream(self, omega, full: bool = False) -> np.ndarray:
        """``d psi / d x1`` from the analytically differentiated kernel."""
        return self._convolve(self.extend(omega), "d1psi", full)


@functools.lru_cache(maxsize=16)
def grid_quadrature(shape: tuple[int, int], h: float, pv_radius: float | None = None) -> GridQuadrature:
    return GridQuadrature(shape, h, pv_radius)


def grid_velocity(f: GridField, full: bool = False) -> np.ndarray:
    return grid_quadrature(f.shape, f.spacing).velocity(f.values, full)


def grid_velocity_gradient(f: GridField, full: bool = False) -> np.ndarray:
    return grid_quadrature(f.shape, f.spacing).gradient(f.values, full)


# ---------------------------------------------------------------------------
# vorticity carried by blobs


@numba.njit(parallel=True, cache=True)
def _blob_vorticity(tx, ty, px, py, pg, ps):
    n = tx.shape[0]
    out = np.zeros(n)
    for i in numba.prange(n):
        acc = 0.0
        for j in range(px.shape[0]):
            s = ps[j]
            d1 = tx[i] - px[j]
            a2 = ty[i] - py[j]
            b2 = ty[i] + py[j]
            r = d1 * d1 + a2 * a2 + s
            q = d1 * d1 + b2 * b2 + s
            acc += pg[j] * s * (1.0 / (r * r) - 1.0 / (q * q))
        out[i] = acc / np.pi
    return out


def blob_vorticity(points, blobs) -> np.ndarray:
    """Vorticity of cored blobs and their images at ``points``.

    The algebraic core spreads circulation ``Gamma`` over
    ``delta^2 / (pi (|z|^2 + delta^2)^2)``, the profile whose velocity is the
    cored kernel. Point vortices carry no sampleable vorticity.
    """
    bs = _as_blobset(blobs)
    if np.any(bs.delta2 <= 0.0):
        raise ValueError("vorticity sampling needs cored blobs (delta > 0)")
    tx, ty = _targets(points)
    p = bs.positions
    return _blob_vorticity(tx, ty, np.ascontiguousarray(p[:, 0]), np.ascontiguousarray(p[:, 1]),
                           bs.circulations, bs.delta2)
