"""Wire layout geometry and discretization."""

import numpy as np
import pytest

from ctapsim import chipgeom as cg


@pytest.fixture(scope="module")
def ci_layout():
    return cg.standard_layout(cg.Ordering.COUNTER_INTUITIVE)


@pytest.fixture(scope="module")
def int_layout():
    return cg.standard_layout(cg.Ordering.INTUITIVE)


def test_standard_values(ci_layout):
    lay = ci_layout
    assert lay.d0 == 7e-6 and lay.d_min == 4.3e-6
    assert lay.z_max == 1000e-6 and lay.x_span == 20e-6 and lay.y_span == 4e-6
    assert lay.b_bias == 0.014 and lay.b_ioffe == 0.03
    assert lay.wire("left").current == 0.1
    assert lay.wire("middle").current == 0.07
    assert np.isclose(lay.omega_z, 2 * np.pi * 5)
    assert np.isclose(lay.mass, 9.9883e-27, rtol=1e-4)


def test_counter_intuitive_right_bump_comes_first(ci_layout):
    # the distal (M-R) coupling must peak before the L-M one for an atom
    # moving toward +z
    right = ci_layout.wire("right").centerline
    left = ci_layout.wire("left").centerline
    assert right.center < left.center


def test_intuitive_is_z_mirror(ci_layout, int_layout):
    zs = np.linspace(0, 1000e-6, 501)
    for wid in ("left", "right"):
        a = ci_layout.wire(wid).x_of_z(zs)
        b = int_layout.wire(wid).x_of_z(1000e-6 - zs)
        assert np.allclose(a, b, atol=1e-18)


def test_intuitive_swaps_bump_centers(ci_layout, int_layout):
    assert (int_layout.wire("left").centerline.center
            == ci_layout.wire("right").centerline.center)
    assert (int_layout.wire("right").centerline.center
            == ci_layout.wire("left").centerline.center)


def test_separation_at_z0(ci_layout):
    for wid, sign in (("left", -1), ("right", +1)):
        assert abs(cg.wire_offset(ci_layout, wid, 0.0) - sign * 7e-6) < 1e-12


def test_left_wire_straight_run(ci_layout):
    assert cg.wire_offset(ci_layout, "left", 25e-6) == pytest.approx(-7e-6, abs=1e-18)


def test_midline_wire_is_straight(ci_layout):
    zs = np.linspace(0, 1000e-6, 101)
    assert np.all(ci_layout.wire("middle").x_of_z(zs) == 0.0)


def test_closest_approach_at_bump_center(ci_layout):
    z_left = ci_layout.wire("left").centerline.center
    assert np.isclose(z_left, 525e-6)
    assert cg.wire_offset(ci_layout, "left", z_left) == pytest.approx(-4.3e-6, abs=1e-15)
    z_right = ci_layout.wire("right").centerline.center
    assert np.isclose(z_right, 475e-6)
    assert cg.wire_offset(ci_layout, "right", z_right) == pytest.approx(4.3e-6, abs=1e-15)


def test_mirror_property(ci_layout):
    zs = np.linspace(0, 1000e-6, 997)
    left = ci_layout.wire("left").x_of_z(zs)
    right = ci_layout.wire("right").x_of_z(1000e-6 - zs)
    assert np.allclose(left, -right, atol=1e-18)


def test_separation_bounds(ci_layout):
    zs = np.linspace(0, 1000e-6, 2001)
    for wid in ("left", "right"):
        x = np.abs(ci_layout.wire(wid).x_of_z(zs))
        assert np.all(x <= 7e-6 + 1e-15)
        assert np.all(x >= 4.3e-6 - 1e-15)


def test_wire_offset_guards(ci_layout):
    with pytest.raises(ValueError, match="unknown wire"):
        cg.wire_offset(ci_layout, "top", 0.0)
    with pytest.raises(ValueError, match="outside"):
        cg.wire_offset(ci_layout, "left", 2e-3)


def test_layout_validation():
    with pytest.raises(ValueError, match="d_min"):
        cg.make_layout(d0=4e-6, d_min=5e-6, z_max=1e-3, x_span=2e-5, y_span=4e-6,
                       straight_run=5e-5, i_left=0.1, i_middle=0.1, i_right=0.1,
                       b_bias=0.01, b_ioffe=0.03, omega_z=30.0)


# ------------------------------------------------------------- discretize

def straight_wire(length=1e-3, seg=1e-6, pad=0.0, current=1.0):
    return cg.WirePath(current, cg.StraightCenterline(0.0), -pad, length + pad, seg)


def test_discretize_counts_straight():
    segs = cg.discretize(straight_wire(length=1e-3, seg=1e-6))
    assert len(segs) == 1000
    padded = cg.discretize(straight_wire(length=1e-3, seg=1e-6, pad=500e-6))
    assert len(padded) == 2000   # 1000 in the box plus 2 x 500 of padding


def test_discretize_halving_doubles():
    n1 = len(cg.discretize(straight_wire(seg=1e-6)))
    n2 = len(cg.discretize(straight_wire(seg=0.5e-6)))
    assert n2 == 2 * n1


def test_discretize_rejects_bad_segment_length():
    with pytest.raises(ValueError):
        cg.discretize(straight_wire(seg=0.0))


def test_segments_share_endpoints_and_signed_current(ci_layout):
    segs = cg.discretize(ci_layout.wire("left"))
    assert np.allclose(segs.a[1:], segs.b[:-1])
    assert segs.current == 0.1


def test_chord_deviation_curved(ci_layout):
    # polyline against the analytic centerline on a dense sample
    wire = ci_layout.wire("left")
    segs = cg.discretize(wire)
    mids = 0.5 * (segs.a + segs.b)
    x_exact = wire.x_of_z(mids[:, 2])
    assert np.abs(mids[:, 0] - x_exact).max() <= 1e-9


def test_merged_discretization_collapses_straight_spans(ci_layout):
    wire = ci_layout.wire("left")
    fine = cg.discretize(wire)
    merged = cg.discretize_merged(wire)
    assert len(merged) < len(fine) / 2
    # identical endpoints and identical polyline vertices inside the bump
    assert np.allclose(merged.a[0], fine.a[0])
    assert np.allclose(merged.b[-1], fine.b[-1])
    middle = cg.discretize_merged(ci_layout.wire("middle"))
    assert len(middle) == 1
