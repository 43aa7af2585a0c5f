import math

import numpy as np
import pytest

from twopatch import grid as g


def test_grid_validation():
    with pytest.raises(ValueError, match="dimension"):
        g.build_grid(3, 1.0, 5)
    with pytest.raises(ValueError, match="L must be"):
        g.build_grid(1, 0.0, 5)
    with pytest.raises(ValueError, match="odd"):
        g.build_grid(1, 1.0, 4)
    with pytest.raises(ValueError, match="odd"):
        g.build_grid(2, 1.0, 1)


def test_spacing_shape_size():
    gr = g.build_grid(2, 3.0, 7)
    assert gr.h == 1.0
    assert gr.shape == (7, 7)
    assert gr.size == 49
    assert g.build_grid(1, 2.0, 9).shape == (9,)


def test_axis_is_bitwise_antisymmetric_with_center_zero():
    gr = g.build_grid(1, 1.7, 23)
    ax = gr.axis()
    assert ax[11] == 0.0
    np.testing.assert_array_equal(ax[::-1], -ax)
    assert ax[0] == -1.7 and ax[-1] == 1.7


def test_coords_layout():
    gr = g.build_grid(2, 1.0, 3)
    c = gr.coords()
    assert c.shape == (3, 3, 2)
    np.testing.assert_array_equal(c[0, 2], [-1.0, 1.0])
    np.testing.assert_array_equal(c[1, 1], [0.0, 0.0])


def test_laplacian_exact_on_quadratic_interior():
    # Centered second differences are exact on polynomials up to degree 3,
    # so ||x||^2 must map to the constant 2n away from the boundary ring.
    for n in (1, 2):
        gr = g.build_grid(n, 2.0, 17)
        c = gr.coords()
        f = np.sum(c * c, axis=-1)
        lap = g.laplacian(gr, f)
        interior = lap[1:-1] if n == 1 else lap[1:-1, 1:-1]
        np.testing.assert_allclose(interior, 2.0 * n, rtol=0, atol=1e-11)


def test_laplacian_sees_zero_ghost_nodes():
    gr = g.build_grid(1, 1.0, 5)
    f = np.ones(5)
    lap = g.laplacian(gr, f)
    # interior: 1 + 1 - 2 = 0; edges: 0 + 1 - 2 = -1, over h^2 = 0.25
    np.testing.assert_allclose(lap, [-4.0, 0.0, 0.0, 0.0, -4.0])


def test_gaussian_integral_matches_sqrt_two_pi():
    # trapezoid of exp(-x^2/2) over [-8, 8] at h = 1/8; tails below 1e-15
    gr = g.build_grid(1, 8.0, 129)
    x = gr.axis()
    f = np.exp(-0.5 * x * x)
    assert g.integrate(gr, f) == pytest.approx(2.5066282746310002, abs=1e-6)


def test_quadrature_second_order_on_smooth_field():
    gr1 = g.build_grid(2, 2.0, 21)
    gr2 = g.build_grid(2, 2.0, 41)

    def smooth(gr):
        c = gr.coords()
        return np.cos(c[..., 0]) * np.cos(c[..., 1])

    exact = (2.0 * math.sin(2.0)) ** 2
    e1 = abs(g.integrate(gr1, smooth(gr1)) - exact)
    e2 = abs(g.integrate(gr2, smooth(gr2)) - exact)
    assert e1 / e2 > 3.5  # halving h should shrink the error ~4x


def test_reflect_field_involution_and_symmetry():
    rng = np.random.default_rng(0)
    for n in (1, 2):
        gr = g.build_grid(n, 1.0, 9)
        f = rng.normal(size=gr.shape)
        r = g.reflect_field(gr, f)
        np.testing.assert_array_equal(g.reflect_field(gr, r), f)
        # reflection must be mass-preserving under the trapezoid rule
        assert g.integrate(gr, r) == pytest.approx(g.integrate(gr, f), rel=1e-12)


def test_reflect_field_commutes_with_laplacian_bitwise():
    # both are index-local stencils, so the commutation is exact
    gr = g.build_grid(2, 1.5, 11)
    rng = np.random.default_rng(4)
    f = rng.normal(size=gr.shape)
    a = g.laplacian(gr, g.reflect_field(gr, f))
    b = g.reflect_field(gr, g.laplacian(gr, f))
    np.testing.assert_array_equal(a, b)


def test_field2_shape_check_and_copy():
    with pytest.raises(ValueError, match="shapes differ"):
        g.Field2(np.zeros(3), np.zeros(4))
    f = g.Field2(np.arange(3.0), np.arange(3.0))
    c = f.copy()
    c.u1[0] = 99.0
    assert f.u1[0] == 0.0


def test_shape_mismatch_errors():
    gr = g.build_grid(1, 1.0, 5)
    bad = np.zeros(7)
    for fn in (g.laplacian, g.integrate, g.reflect_field):
        with pytest.raises(ValueError, match="does not match"):
            fn(gr, bad)
