"""Sampled vorticity: half-plane grids, blob ensembles, norms and seminorms.

All norms are window-relative: a :class:`GridField` is a finite truncation of
the half plane, integrals are composite trapezoidal sums over that window.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import EmptyField, InsufficientResolution
from .kernel import NO_REG, BlobRegularization, HalfPlanePoint


@dataclass(frozen=True, eq=False)
class PlaneField:
    """Uniform sample of a scalar on ``origin + (i h, j h)``.

    ``values[j, i]`` sits at ``x1 = origin[0] + i*h``, ``x2 = origin[1] + j*h``.
    The array is made read-only on construction.
    """

    origin: tuple[float, float]
    spacing: float
    values: np.ndarray
    name: str = "field"

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("field values must be a 2D array")
        if not self.spacing > 0.0:
            raise ValueError("spacing must be positive")
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"field {self.name!r} has non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def extent(self) -> tuple[float, float]:
        ny, nx = self.shape
        return ((nx - 1) * self.spacing, (ny - 1) * self.spacing)

    @property
    def x1(self) -> np.ndarray:
        return self.origin[0] + self.spacing * np.arange(self.shape[1])

    @property
    def x2(self) -> np.ndarray:
        return self.origin[1] + self.spacing * np.arange(self.shape[0])

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2)

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(ny*nx, 2)``, row-major."""
        X1, X2 = self.mesh()
        return np.column_stack([X1.ravel(), X2.ravel()])

    def with_values(self, values, name: str | None = None):
        return replace(self, values=values, name=self.name if name is None else name)

    def window(self) -> tuple[float, float, float, float]:
        """``(x1_min, x1_max, x2_min, x2_max)``."""
        Lx, Ly = self.extent
        return (self.origin[0], self.origin[0] + Lx, self.origin[1], self.origin[1] + Ly)


@dataclass(frozen=True, eq=False)
class GridField(PlaneField):
    """Half-plane grid whose bottom row lies on the wall."""

    def __post_init__(self):
        super().__post_init__()
        if self.origin[1] != 0.0:
            raise ValueError("a half-plane grid must start on x2 = 0")

    @classmethod
    def from_function(cls, fn, x1_range, height, n1, n2, name="field"):
        """Sample ``fn(X1, X2)`` on ``n1 x n2`` intervals (``n+1`` nodes each).

        ``x1_range`` is ``(x1_min, x1_max)``; the spacing is taken from the
        first axis and must match ``height / n2``.
        """
        h = (x1_range[1] - x1_range[0]) / n1
        if not math.isclose(h, height / n2, rel_tol=1e-12):
            raise ValueError("grid must be square-celled")
        x1 = x1_range[0] + h * np.arange(n1 + 1)
        x2 = h * np.arange(n2 + 1)
        X1, X2 = np.meshgrid(x1, x2)
        return cls((x1_range[0], 0.0), h, fn(X1, X2), name)


# ---------------------------------------------------------------------------
# blobs


@dataclass(frozen=True)
class VortexBlob:
    pos: HalfPlanePoint
    circulation: float
    core: BlobRegularization = NO_REG

    def __post_init__(self):
        if not isinstance(self.pos, HalfPlanePoint):
            object.__setattr__(self, "pos", HalfPlanePoint(*self.pos))
        if not math.isfinite(self.circulation):
            raise ValueError("circulation must be finite")


class BlobSet(Sequence):
    """Array-backed ensemble of vortex blobs.

    Behaves as a read-only sequence of :class:`VortexBlob` while keeping
    positions, circulations and squared core radii in contiguous arrays
    for the summation kernels.
    """

    def __init__(self, positions, circulations, delta2=0.0):
        pos = np.array(positions, dtype=float).reshape(-1, 2)
        gam = np.array(circulations, dtype=float).reshape(-1)
        if pos.shape[0] != gam.shape[0]:
            raise ValueError("positions and circulations differ in length")
        if np.any(pos[:, 1] < 0.0):
            raise ValueError("blob below the wall")
        if not np.all(np.isfinite(gam)):
            raise ValueError("circulations must be finite")
        d2 = np.broadcast_to(np.asarray(delta2, dtype=float), gam.shape).copy()
        self.positions = pos
        self.circulations = gam
        self.delta2 = d2

    @classmethod
    def from_blobs(cls, blobs) -> "BlobSet":
        if isinstance(blobs, BlobSet):
            return blobs
        blobs = list(blobs)
        pos = [(b.pos.x1, b.pos.x2) for b in blobs]
        gam = [b.circulation for b in blobs]
        d2 = [b.core.delta2 for b in blobs]
        return cls(np.reshape(pos, (-1, 2)), gam, d2)

    def __len__(self) -> int:
        return self.circulations.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return BlobSet(self.positions[i], self.circulations[i], self.delta2[i])
        d2 = self.delta2[i]
        core = BlobRegularization(math.sqrt(d2), "algebraic") if d2 > 0 else NO_REG
        return VortexBlob(HalfPlanePoint(*self.positions[i]), float(self.circulations[i]), core)

    def __iter__(self) -> Iterator[VortexBlob]:
        for i in range(len(self)):
            yield self[i]

    def moved(self, positions) -> "BlobSet":
        out = BlobSet.__new__(BlobSet)
        out.positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        out.circulations = self.circulations
        out.delta2 = self.delta2
        return out

    @property
    def total_circulation(self) -> float:
        return float(math.fsum(self.circulations))


def blobs_from_grid(f: GridField, reg: BlobRegularization = NO_REG, threshold: float = 0.0) -> BlobSet:
    """One blob per node with ``|f| > threshold``, circulation ``f h^2``."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    mask = np.abs(f.values) > threshold
    if not mask.any():
        raise EmptyField(f"no node of {f.name!r} exceeds threshold {threshold}")
    X1, X2 = f.mesh()
    pos = np.column_stack([X1[mask], X2[mask]])
    return BlobSet(pos, f.values[mask] * f.spacing**2, reg.delta2)


# ---------------------------------------------------------------------------
# quadrature and norms


def trapezoid_weights(shape, h: float) -> np.ndarray:
    ny, nx = shape
    wx = np.ones(nx)
    wy = np.ones(ny)
    if nx > 1:
        wx[[0, -1]] = 0.5
    if ny > 1:
        wy[[0, -1]] = 0.5
    return np.outer(wy, wx) * h * h


def _magnitude(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        return np.abs(v)
    return np.sqrt(np.sum(v * v, axis=tuple(range(v.ndim - 2))))


def lp_norm_array(values, h: float, s: float) -> float:
    """Trapezoidal ``L^s`` norm of a sampled scalar or vector field.

    Leading axes beyond the last two are treated as components and combined
    with the Euclidean norm before integrating.
    """
    a = _magnitude(values)
    if math.isinf(s):
        return float(a.max()) if a.size else 0.0
    if s < 1:
        raise ValueError("exponent must be >= 1")
    w = trapezoid_weights(a.shape, h)
    scale = a.max()
    if scale == 0.0:
        return 0.0
    # scaled to keep |f|^s representable for large s
    return float(scale * np.sum(w * (a / scale) ** s) ** (1.0 / s))


def lp_norm(f: PlaneField, s: float) -> float:
    return lp_norm_array(f.values, f.spacing, s)


def partial(values, h: float, a: int, b: int) -> np.ndarray:
    """``d1^a d2^b`` by repeated second-order differences.

    Centered in the interior, one-sided second order on every edge row and
    column (no ghost values are needed below the wall).
    """
    out = np.asarray(values, dtype=float)
    for _ in range(a):
        out = np.gradient(out, h, axis=-1, edge_order=2)
    for _ in range(b):
        out = np.gradient(out, h, axis=-2, edge_order=2)
    return out


def _check_resolution(shape, k):
    if min(shape[-2:]) < 2 * k + 1:
        raise InsufficientResolution(
            f"need at least {2 * k + 1} nodes per axis for order {k}, have {shape}"
        )


def sobolev_norm_array(values, h: float, k: int, s: float) -> float:
    """``W^{k,s}`` norm: l^s sum over multi-indices (sum of sups for s = inf)."""
    if k < 0:
        raise ValueError("order must be non-negative")
    _check_resolution(np.shape(values), max(k, 1))
    terms = [
        lp_norm_array(partial(values, h, a, m - a), h, s)
        for m in range(k + 1)
        for a in range(m, -1, -1)
    ]
    if math.isinf(s):
        return float(sum(terms))
    top = max(terms)
    if top == 0.0:
        return 0.0
    return float(top * sum((t / top) ** s for t in terms) ** (1.0 / s))


def sobolev_norm(f: PlaneField, k: int, s: float) -> float:
    return sobolev_norm_array(f.values, f.spacing, k, s)


def gradient(values, h: float) -> np.ndarray:
    """``(d1 f, d2 f)`` stacked on a leading axis."""
    return np.stack([partial(values, h, 1, 0), partial(values, h, 0, 1)])


def grad_linf(f: PlaneField) -> float:
    return float(_magnitude(gradient(f.values, f.spacing)).max())


def derivative_tensor_norm(values, h: float, order: int) -> np.ndarray:
    """Pointwise Euclidean norm of ``D^order f`` (all ordered index tuples)."""
    if order == 0:
        return np.abs(np.asarray(values, dtype=float))
    acc = np.zeros(np.shape(values))
    for a in range(order, -1, -1):
        mult = math.comb(order, a)
        acc += mult * partial(values, h, a, order - a) ** 2
    return np.sqrt(acc)


_NEAR_CACHE: dict[int, np.ndarray] = {}


def _near_offsets(radius: int) -> np.ndarray:
    if radius not in _NEAR_CACHE:
        r = range(-radius, radius + 1)
        offs = [
            (a, b)
            for b in range(0, radius + 1)
            for a in r
            if (b > 0 or a > 0) and a * a + b * b <= radius * radius
        ]
        _NEAR_CACHE[radius] = np.array(offs, dtype=int)
    return _NEAR_CACHE[radius]


def _offset_quotient(F, a: int, b: int) -> float:
    ny, nx = F.shape[-2:]
    if abs(a) >= nx or b >= ny:
        return 0.0
    if a >= 0:
        lo, hi = F[..., : ny - b, : nx - a], F[..., b:, a:]
    else:
        lo, hi = F[..., : ny - b, -a:], F[..., b:, : nx + a]
    return float(np.max(_magnitude(hi - lo))) if lo.size else 0.0


def holder_seminorm_array(
    F, h: float, gamma: float, sample_pairs: int = 256, *, seed: int = 0, near_radius: int = 8
) -> float:
    """Lower-bound estimate of ``sup |f(x)-f(y)| / |x-y|^gamma`` over node pairs.

    Every displacement within ``near_radius`` cells is scanned exhaustively.
    On top of that ``sample_pairs`` random long-range displacements are drawn
    (uniform in length up to the window diagonal, uniform in direction) and
    each is scanned over every node pair it connects, so the estimate is
    translation covariant and resolution independent at large scales.
    The draw for ``n`` samples is a prefix of the draw for ``n + 1``.
    Vector or tensor samples (leading component axes) use the Euclidean
    norm of the difference.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if sample_pairs < 1:
        raise ValueError("sample_pairs must be >= 1")
    F = np.asarray(F, dtype=float)
    ny, nx = F.shape[-2:]
    best = 0.0
    for a, b in _near_offsets(near_radius):
        q = _offset_quotient(F, a, b)
        if q > 0.0:
            best = max(best, q / (h * math.hypot(a, b)) ** gamma)
    rng = np.random.default_rng(seed)
    u = rng.random((sample_pairs, 2))
    rmin = near_radius * h
    rmax = max(math.hypot(nx - 1, ny - 1) * h, rmin)
    for r_u, phi_u in u:
        r = rmin + (rmax - rmin) * r_u
        phi = math.pi * phi_u
        a = int(round(r * math.cos(phi) / h))
        b = int(round(r * math.sin(phi) / h))
        if b < 0 or (b == 0 and a <= 0):
            a, b = -a, -b
        if a == 0 and b == 0:
            continue
        q = _offset_quotient(F, a, b)
        if q > 0.0:
            best = max(best, q / (h * math.hypot(a, b)) ** gamma)
    return best


def holder_seminorm(f: PlaneField, gamma: float, sample_pairs: int = 256, *, seed: int = 0) -> float:
    return holder_seminorm_array(f.values, f.spacing, gamma, sample_pairs, seed=seed)


def distribution_function(f: PlaneField, tau: float) -> float:
    """Trapezoidal measure of ``{|f| > tau}``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    w = trapezoid_weights(f.shape, f.spacing)
    return float(np.sum(w[np.abs(f.values) > tau]))


@dataclass(frozen=True)
class NormReport:
    lp: dict
    sobolev_kp: float
    holder_gamma: float
    grad_linf: float
    window: tuple[float, float, float, float]
    k: int = 3
    p: float = 1.5
    gamma: float = 0.5


def norm_report(f: PlaneField, *, p: float = 1.5, k: int = 3, gamma: float = 0.5,
                sample_pairs: int = 256) -> NormReport:
    lp = {s: lp_norm(f, s) for s in (1.0, p, 2.0, math.inf)}
    return NormReport(
        lp=lp,
        sobolev_kp=sobolev_norm(f, k, p),
        holder_gamma=holder_seminorm(f, gamma, sample_pairs),
        grad_linf=grad_linf(f),
        window=f.window(),
        k=k,
        p=p,
        gamma=gamma,
    )


# ---------------------------------------------------------------------------
# extension and mollification


def odd_extension(f: GridField) -> PlaneField:
    """Antisymmetric reflection of ``f`` across the wall.

    The wall row is replaced by the average of the two one-sided values,
    which is zero; a warning is issued if it was not zero already.
    """
    F = f.values
    if np.any(F[0] != 0.0):
        warnings.warn(f"{f.name!r} is nonzero on the wall; wall row set to 0", stacklevel=2)
    full = np.concatenate([-F[:0:-1], np.zeros((1, F.shape[1])), F[1:]], axis=0)
    Ly = f.extent[1]
    return PlaneField((f.origin[0], -Ly), f.spacing, full, f.name + "_odd")


def bump(r2) -> np.ndarray:
    """Unnormalized standard bump ``exp(-1/(1-|x|^2))`` on the unit ball."""
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def mollifier_stencil(n: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Node offsets ``(a, b)`` and unit-sum weights of the shifted bump.

    The kernel ``rho(n(x - y) + 2 e2)`` is supported where ``y`` lies in the
    ball of radius ``1/n`` about ``x + (2/n) e2``, i.e. strictly above ``x``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    R = int(math.ceil(1.0 / (n * h))) + 1
    B = int(math.ceil(3.0 / (n * h))) + 1
    a, b = np.meshgrid(np.arange(-R, R + 1), np.arange(0, B + 1))
    z1 = -n * a * h
    z2 = -n * b * h + 2.0
    w = bump(z1 * z1 + z2 * z2)
    keep = w > 0.0
    if not keep.any():
        raise InsufficientResolution(f"mollifier radius 1/{n} is below grid spacing {h}")
    w = w[keep]
    return np.column_stack([a[keep], b[keep]]), w / w.sum()


def mollify_shifted(f: GridField, n: int) -> GridField:
    """Upward-shifted mollification ``g^n``, smooth up to the wall.

    Values beyond the window edges are continued by edge replication, so
    ``g^n`` is a convex combination of node values of ``f``.
    """
    offs, w = mollifier_stencil(n, f.spacing)
    R = int(np.abs(offs[:, 0]).max())
    B = int(offs[:, 1].max())
    F = np.pad(f.values, ((0, B), (R, R)), mode="edge")
    ny, nx = f.shape
    out = np.zeros((ny, nx))
    for (a, b), wk in zip(offs, w):
        out += wk * F[b : b + ny, R + a : R + a + nx]
    return f.with_values(out, f"{f.name}_moll{n}")


# ---------------------------------------------------------------------------
# text serialization


def write_field(f: PlaneField, path) -> None:
    Lx, Ly = f.extent
    lines = [
        f"origin={f.origin[0]!r},{f.origin[1]!r}",
        f"extent={Lx!r},{Ly!r}",
        f"spacing={f.spacing!r}",
        f"name={f.name}",
    ]
    lines += [" ".join(repr(float(v)) for v in row) for row in f.values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path) -> PlaneField:
    header = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, sep, val = line.partition("=")
        if sep and key in ("origin", "extent", "spacing", "name"):
            header[key] = val
        else:
            rows.append([float(v) for v in line.split()])
    missing = {"origin", "extent", "spacing", "name"} - header.keys()
    if missing:
        raise ValueError(f"field file {path} lacks header keys {sorted(missing)}")
    origin = tuple(float(v) for v in header["origin"].split(","))
    spacing = float(header["spacing"])
    values = np.array(rows, dtype=float)
    ext = tuple(float(v) for v in header["extent"].split(","))
    ny, nx = values.shape
    if not (math.isclose(ext[0], (nx - 1) * spacing, rel_tol=1e-9, abs_tol=1e-12)
            and math.isclose(ext[1], (ny - 1) * spacing, rel_tol=1e-9, abs_tol=1e-12)):
        raise ValueError(f"extent {ext} inconsistent with {values.shape} nodes at spacing {spacing}")
    cls = GridField if origin[1] == 0.0 else PlaneField
    return cls(origin, spacing, values, header["name"])
