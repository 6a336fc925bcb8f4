"""Half-plane Green's function, Biot-Savart kernel and its gradient.

Conventions used throughout the package:

* ``perp(z) = (z2, -z1)``, so ``u = perp(grad psi) = (d2 psi, -d1 psi)``.
  A positive vortex at height ``d`` above the wall drifts in the ``-x1``
  direction with speed ``Gamma / (4 pi d)``.
* Gradient matrices are Jacobians, ``m[i][j] = d u_i / d x_j``.
* The wall is ``x2 = 0``; images live at ``(y1, -y2)``.
"""
from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import SingularPair

TWO_PI = 2.0 * math.pi


class HalfPlanePoint(namedtuple("HalfPlanePoint", "x1 x2")):
    __slots__ = ()

    def __new__(cls, x1, x2):
        x1, x2 = float(x1), float(x2)
        if not x2 >= 0.0:
            raise ValueError(f"point ({x1}, {x2}) lies below the wall")
        return super().__new__(cls, x1, x2)


class KernelValue(NamedTuple):
    u1: float
    u2: float


class GradientKernelValue(NamedTuple):
    m11: float
    m12: float
    m21: float
    m22: float

    @property
    def trace(self) -> float:
        return self.m11 + self.m22

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m21, self.m22]])

    def __add__(self, other):
        return GradientKernelValue(*(a + b for a, b in zip(self, other)))


@dataclass(frozen=True)
class BlobRegularization:
    """Algebraic blob core: ``|z|^2`` becomes ``|z|^2 + delta^2``.

    ``kind="none"`` gives the singular point-vortex kernel; left unset, the
    kind follows from whether ``delta`` is positive.
    """

    delta: float = 0.0
    kind: str | None = None

    def __post_init__(self):
        if self.kind is None:
            object.__setattr__(self, "kind", "algebraic" if self.delta > 0.0 else "none")
        if self.kind not in ("none", "algebraic"):
            raise ValueError(f"unknown regularization kind {self.kind!r}")
        if self.kind == "algebraic" and not self.delta > 0.0:
            raise ValueError("algebraic regularization needs delta > 0")

    @property
    def delta2(self) -> float:
        return self.delta * self.delta if self.kind == "algebraic" else 0.0


NO_REG = BlobRegularization()


def mirror(p) -> tuple[float, float]:
    """Reflect a point across the wall. Involution."""
    return (float(p[0]), -float(p[1]))


def perp(z) -> tuple[float, float]:
    return (z[1], -z[0])


def _check_pair(x, y):
    if x[0] == y[0] and x[1] == y[1]:
        raise SingularPair(f"coincident points {tuple(x)}")


def greens_function(x, y) -> float:
    """Dirichlet Green's function of the half plane, ``(1/2pi)(log|x-y| - log|x-ybar|)``."""
    _check_pair(x, y)
    d1 = x[0] - y[0]
    r2 = d1 * d1 + (x[1] - y[1]) ** 2
    q2 = d1 * d1 + (x[1] + y[1]) ** 2
    return (math.log(r2) - math.log(q2)) / (2.0 * TWO_PI)


def biot_savart_kernel(x, y, reg: BlobRegularization = NO_REG) -> KernelValue:
    """Velocity at ``x`` induced by unit circulation at ``y`` plus its image.

    The regularization shift is applied identically to the direct and image
    denominators, which keeps ``u2 = 0`` exact on the wall. With a core,
    coincident points give the finite image-only value.
    """
    if reg.kind == "none":
        _check_pair(x, y)
    d2reg = reg.delta2
    d1 = x[0] - y[0]
    a2 = x[1] - y[1]
    b2 = x[1] + y[1]
    r = d1 * d1 + a2 * a2 + d2reg
    q = d1 * d1 + b2 * b2 + d2reg
    direct = (a2 / r, -d1 / r) if r > 0.0 else (0.0, 0.0)
    image = (b2 / q, -d1 / q)
    return KernelValue(
        (direct[0] - image[0]) / TWO_PI, (direct[1] - image[1]) / TWO_PI
    )


def gradient_kernel(x, y, reg: BlobRegularization = NO_REG) -> GradientKernelValue:
    """Jacobian of :func:`biot_savart_kernel` in ``x``.

    Unregularized this is ``(M_s + M_r) / 2pi`` with the singular part
    built from ``x - y`` and the regular part from ``x - ybar``. With a
    core the antisymmetric ``+-delta^2`` correction appears; the trace
    stays identically zero.
    """
    if reg.kind == "none":
        _check_pair(x, y)
    s = reg.delta2
    d1 = x[0] - y[0]
    a2 = x[1] - y[1]
    b2 = x[1] + y[1]
    m11 = m12 = m21 = 0.0
    r = d1 * d1 + a2 * a2 + s
    if r > 0.0:
        r2 = r * r
        m11 = -2.0 * d1 * a2 / r2
        diff = d1 * d1 - a2 * a2
        m12 = (diff + s) / r2
        m21 = (diff - s) / r2
    q = d1 * d1 + b2 * b2 + s
    q2 = q * q
    m11 += 2.0 * d1 * b2 / q2
    diff = d1 * d1 - b2 * b2
    m12 -= (diff + s) / q2
    m21 -= (diff - s) / q2
    m11 /= TWO_PI
    return GradientKernelValue(m11, m12 / TWO_PI, m21 / TWO_PI, -m11)


def singular_part(x, y) -> np.ndarray:
    """``M_s(x, y)`` as printed, without the ``1/2pi`` factor."""
    _check_pair(x, y)
    d1 = x[0] - y[0]
    d2 = x[1] - y[1]
    r4 = (d1 * d1 + d2 * d2) ** 2
    off = (d1 * d1 - d2 * d2) / r4
    return np.array([[-2.0 * d1 * d2 / r4, off], [off, 2.0 * d1 * d2 / r4]])


def regular_part(x, y) -> np.ndarray:
    """``M_r(x, y)``, the image contribution, without the ``1/2pi`` factor."""
    d1 = x[0] - y[0]
    b2 = x[1] + y[1]
    q4 = (d1 * d1 + b2 * b2) ** 2
    off = -(d1 * d1 - b2 * b2) / q4
    return np.array([[2.0 * d1 * b2 / q4, off], [off, -2.0 * d1 * b2 / q4]])


def local_rotation_term(omega_at_x: float) -> GradientKernelValue:
    """The ``(omega/2) [[0, 1], [-1, 0]]`` piece of the velocity gradient."""
    half = 0.5 * omega_at_x
    return GradientKernelValue(0.0, half, -half, 0.0)


# vectorized forms -----------------------------------------------------------


def velocity_direct_np(targets, sources, gamma, delta2=0.0) -> np.ndarray:
    """Dense numpy Biot-Savart sum including images.

    Coincident direct pairs contribute nothing (self-interaction dropped);
    for point vortices this is the ``delta -> 0`` limit of a blob core.
    Intended for small problems and as an independent oracle.
    """
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    s = np.atleast_2d(np.asarray(sources, dtype=float))
    g = np.asarray(gamma, dtype=float)
    d1 = t[:, None, 0] - s[None, :, 0]
    a2 = t[:, None, 1] - s[None, :, 1]
    b2 = t[:, None, 1] + s[None, :, 1]
    r = d1 * d1 + a2 * a2 + delta2
    q = d1 * d1 + b2 * b2 + delta2
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_r = np.where(r > 0.0, 1.0 / r, 0.0)
        inv_q = np.where(q > 0.0, 1.0 / q, 0.0)
    u1 = (a2 * inv_r - b2 * inv_q) @ g
    u2 = (-d1 * inv_r + d1 * inv_q) @ g
    return np.stack([u1, u2], axis=-1) / TWO_PI
