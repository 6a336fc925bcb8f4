import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hpe.errors import SingularPair
from hpe.kernel import (
    NO_REG,
    BlobRegularization,
    HalfPlanePoint,
    biot_savart_kernel,
    gradient_kernel,
    greens_function,
    local_rotation_term,
    mirror,
    regular_part,
    singular_part,
    velocity_direct_np,
)

interior = st.tuples(st.floats(-5, 5), st.floats(0.05, 5))


def test_mirror_examples():
    assert mirror((1, 2)) == (1.0, -2.0)
    assert mirror((0, 0)) == (0.0, 0.0)
    assert mirror(mirror((3, 5))) == (3.0, 5.0)


def test_point_below_wall_rejected():
    with pytest.raises(ValueError):
        HalfPlanePoint(0.0, -1e-9)
    assert HalfPlanePoint(1, 0) == (1.0, 0.0)


def test_greens_function_examples():
    # (1/2pi) log(1/3) from the two distances 1 and 3
    assert greens_function((0, 2), (0, 1)) == pytest.approx(math.log(1 / 3) / (2 * math.pi), rel=1e-14)
    assert greens_function((0, 2), (0, 1)) == pytest.approx(-0.17485, abs=1e-5)
    assert greens_function((5, 0), (1, 1)) == 0.0
    with pytest.raises(SingularPair):
        greens_function((1, 1), (1, 1))


@given(interior, interior)
def test_greens_function_nonpositive(x, y):
    if math.dist(x, y) < 1e-6:
        return
    assert greens_function(x, y) <= 1e-15


def test_biot_savart_examples():
    u = biot_savart_kernel((0, 1), (0, 2))
    assert u.u1 == pytest.approx(-2 / (3 * math.pi), rel=1e-14)
    assert u.u2 == 0.0
    reg = BlobRegularization(1.0, "algebraic")
    u = biot_savart_kernel((0, 1), (0, 1), reg)
    assert u.u1 == pytest.approx(-1 / (5 * math.pi), rel=1e-14)
    assert u.u2 == 0.0
    with pytest.raises(SingularPair):
        biot_savart_kernel((0, 1), (0, 1))


def test_regularization_kind_follows_delta():
    assert BlobRegularization(0.2).kind == "algebraic"
    assert BlobRegularization().kind == "none"
    assert BlobRegularization(0.2, "none").delta2 == 0.0
    with pytest.raises(ValueError):
        BlobRegularization(0.0, "algebraic")
    with pytest.raises(ValueError):
        BlobRegularization(0.1, "gaussian")


@given(st.floats(-10, 10), interior, st.sampled_from([NO_REG, BlobRegularization(0.3)]))
def test_wall_tangency(x1, y, reg):
    assert biot_savart_kernel((x1, 0.0), y, reg).u2 == 0.0


def _free_part(x, y):
    # add back the image term to isolate the whole-plane kernel
    k = np.array(biot_savart_kernel(x, y))
    d1, b2 = x[0] - y[0], x[1] + y[1]
    return k + np.array([b2, -d1]) / (d1 * d1 + b2 * b2) / (2 * math.pi)


@given(interior, interior)
def test_free_part_antisymmetric(x, y):
    if math.dist(x, y) < 1e-3:
        return
    np.testing.assert_allclose(_free_part(x, y), -_free_part(y, x), rtol=1e-9, atol=1e-12)


def test_kernel_decays_along_ray():
    y = (0.0, 1.0)
    mags = [math.hypot(*biot_savart_kernel((r, 1.0), y)) for r in np.geomspace(2, 200, 30)]
    assert all(a > b for a, b in zip(mags, mags[1:]))
    # dipole decay: doubling the distance shrinks the kernel about 4x
    r1 = math.hypot(*biot_savart_kernel((100.0, 1.0), y))
    r2 = math.hypot(*biot_savart_kernel((200.0, 1.0), y))
    assert r1 / r2 == pytest.approx(4.0, rel=0.01)


def test_gradient_kernel_examples():
    Ms = singular_part((0, 1), (0, 2))
    np.testing.assert_array_equal(Ms, [[0.0, -1.0], [-1.0, 0.0]])
    assert Ms[0, 1] == Ms[1, 0]
    J = gradient_kernel((0, 1), (0, 2))
    full = (Ms + regular_part((0, 1), (0, 2))) / (2 * math.pi)
    np.testing.assert_allclose(J.as_matrix(), full, rtol=1e-14, atol=1e-16)
    with pytest.raises(SingularPair):
        gradient_kernel((1, 1), (1, 1))


@given(interior, interior, st.sampled_from([NO_REG, BlobRegularization(0.25)]))
def test_gradient_kernel_traceless(x, y, reg):
    if reg is NO_REG and math.dist(x, y) < 1e-3:
        return
    assert gradient_kernel(x, y, reg).trace == 0.0


def _fd_jacobian(x, y, step, reg=NO_REG):
    out = np.empty((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        up = np.array(biot_savart_kernel(np.add(x, e), y, reg))
        dn = np.array(biot_savart_kernel(np.subtract(x, e), y, reg))
        out[:, j] = (up - dn) / (2 * step)
    return out


def test_gradient_kernel_matches_finite_differences():
    x, y = (0.3, 1.7), (1.1, 0.9)
    J = gradient_kernel(x, y).as_matrix()
    fd = _fd_jacobian(x, y, 1e-5)
    np.testing.assert_allclose(J, fd, rtol=1e-6)


def test_regularized_gradient_matches_finite_differences():
    reg = BlobRegularization(0.4)
    x, y = (0.2, 0.8), (0.1, 0.9)
    np.testing.assert_allclose(gradient_kernel(x, y, reg).as_matrix(), _fd_jacobian(x, y, 1e-5, reg),
                               rtol=1e-6, atol=1e-9)


def test_local_rotation_examples():
    assert local_rotation_term(0.0) == (0.0, 0.0, 0.0, 0.0)
    assert local_rotation_term(2.0) == (0.0, 1.0, -1.0, 0.0)
    assert local_rotation_term(-4.0) == (0.0, -2.0, 2.0, 0.0)


def test_vectorized_sum_matches_scalar_kernel(rng):
    t = np.column_stack([rng.uniform(-1, 1, 5), rng.uniform(0.1, 1, 5)])
    s = np.column_stack([rng.uniform(-1, 1, 7), rng.uniform(0.1, 1, 7)])
    g = rng.normal(size=7)
    v = velocity_direct_np(t, s, g)
    ref = np.array([[sum(gj * np.array(biot_savart_kernel(ti, sj)) for sj, gj in zip(s, g))][0] for ti in t])
    np.testing.assert_allclose(v, ref, rtol=1e-12)
