import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aquastereo.errors import (
    BehindCamera,
    DegenerateRays,
    NoForwardIntersection,
    TotalInternalReflection,
)
from aquastereo.geometry import (
    MediaIndices,
    PortPlane,
    Ray,
    closest_point_pair,
    closest_points_batch,
    intersect_ray_plane,
    refract_batch,
    refract_direction,
    trace_port_batch,
    trace_through_port,
)

from conftest import random_unit

Z = np.array([0.0, 0.0, 1.0])


def _dir(deg):
    a = math.radians(deg)
    return np.array([math.sin(a), 0.0, math.cos(a)])


def _sin_to(d, n):
    return np.linalg.norm(np.cross(d, n))


# -- value types ---------------------------------------------------------------


def test_ray_normalises_and_validates():
    r = Ray([0, 0, 0], [0, 0, 1], 1.33)
    assert r.medium_index == 1.33
    with pytest.raises(ValueError):
        Ray([0, 0, 0], [0, 0, 2], 1.0)
    with pytest.raises(ValueError):
        Ray([0, 0, 0], [0, 0, 1], 0.9)


def test_port_and_media_invariants():
    p = PortPlane(Z, 0.05, 0.01)
    assert p.outer_offset == pytest.approx(0.06)
    with pytest.raises(ValueError):
        PortPlane(Z, 0.05, 0.0)
    with pytest.raises(ValueError):
        PortPlane([0, 0, 1.1], 0.05, 0.01)
    with pytest.raises(ValueError):
        MediaIndices(1.0, 2.5, 1.33)
    with pytest.raises(ValueError):
        MediaIndices(0.99, 1.5, 1.33)


# -- refraction ----------------------------------------------------------------


@pytest.mark.parametrize("n1,n2", [(1.0, 1.5), (1.49, 1.33), (1.33, 1.0)])
def test_normal_incidence_is_fixed_point(n1, n2):
    assert np.array_equal(refract_direction(Z, Z, n1, n2), Z)


def test_equal_indices_return_incident():
    d = _dir(37.0)
    assert np.array_equal(refract_direction(d, Z, 1.4, 1.4), d)


def test_snell_30_degrees():
    out = refract_direction(_dir(30.0), Z, 1.0, 1.5)
    theta2 = math.degrees(math.acos(out @ Z))
    assert theta2 == pytest.approx(math.degrees(math.asin(1 / 3)), abs=1e-12)
    assert theta2 == pytest.approx(19.471, abs=1e-3)


def test_total_internal_reflection():
    with pytest.raises(TotalInternalReflection):
        refract_direction(_dir(80.0), Z, 1.49, 1.33)


def test_normal_flipped_to_propagation():
    d = _dir(25.0)
    assert np.allclose(refract_direction(d, -Z, 1.0, 1.33), refract_direction(d, Z, 1.0, 1.33))


@settings(max_examples=300, deadline=None)
@given(
    theta=st.floats(0.0, 1.5),
    phi=st.floats(0.0, 2 * math.pi),
    n1=st.floats(1.0, 2.0),
    n2=st.floats(1.0, 2.0),
)
def test_snell_and_coplanarity_property(theta, phi, n1, n2):
    d = np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
    d /= np.linalg.norm(d)
    if n1 * math.sin(theta) / n2 > 1.0 - 1e-9:
        return
    out = refract_direction(d, Z, n1, n2)
    assert abs(np.linalg.norm(out) - 1.0) < 1e-12
    assert abs(n1 * _sin_to(d, Z) - n2 * _sin_to(out, Z)) < 1e-12
    assert abs(np.linalg.det(np.stack([d, out, Z]))) < 1e-12


def test_continuity_at_normal_incidence():
    prev = None
    for eps in (1e-2, 1e-4, 1e-6, 1e-8):
        out = refract_direction(_dir(math.degrees(eps)), Z, 1.0, 1.49)
        err = np.linalg.norm(out - Z)
        if prev is not None:
            assert err < prev
        prev = err
    assert prev < 1e-8


def test_batch_flags_tir_without_raising():
    dirs = np.stack([_dir(10.0), _dir(80.0)])
    out, ok = refract_batch(dirs, Z, 1.49, 1.33)
    assert ok.tolist() == [True, False]
    assert np.allclose(out[0], refract_direction(dirs[0], Z, 1.49, 1.33), atol=0)


# -- ray-plane -----------------------------------------------------------------


def test_intersect_examples():
    assert np.allclose(intersect_ray_plane(Ray([0, 0, 0], Z, 1.0), Z, 2.0), [0, 0, 2])
    with pytest.raises(NoForwardIntersection):
        intersect_ray_plane(Ray([1, 1, 0], -Z, 1.0), Z, 2.0)
    hit = intersect_ray_plane(Ray([0, 0, 0], [1 / math.sqrt(2), 0, 1 / math.sqrt(2)], 1.0), Z, 3.0)
    assert np.allclose(hit, [3, 0, 3], atol=1e-12)
    with pytest.raises(NoForwardIntersection):
        intersect_ray_plane(Ray([0, 0, 0], [1, 0, 0], 1.0), Z, 3.0)


def test_intersection_lies_on_plane(rng):
    n = random_unit(rng, 1)[0]
    for _ in range(200):
        o = rng.normal(size=3)
        d = random_unit(rng, 1, around=n, max_angle=1.4)[0]
        off = o @ n + rng.uniform(0.01, 10)
        p = intersect_ray_plane(Ray(o, d, 1.0), n, off)
        assert abs(p @ n - off) <= 1e-12 * (1 + abs(off))


# -- flat port -----------------------------------------------------------------

PORT = PortPlane(Z, 0.05, 0.01)
WATER = MediaIndices(1.0, 1.49, 1.33)


def test_port_normal_incidence():
    out = trace_through_port(Ray([0.1, 0.2, 0], Z, 1.0), PORT, WATER)
    assert np.allclose(out.direction, Z)
    assert np.allclose(out.origin, [0.1, 0.2, 0.06])
    assert out.medium_index == 1.33


def test_port_without_refraction_keeps_direction():
    d = _dir(23.0)
    out = trace_through_port(Ray([0, 0, 0], d, 1.0), PORT, MediaIndices(1, 1, 1))
    assert np.array_equal(out.direction, d)


def test_port_20_degrees_by_hand():
    d0 = _dir(20.0)
    out = trace_through_port(Ray([0, 0, 0], d0, 1.0), PORT, WATER)
    ang = math.degrees(math.acos(out.direction @ Z))
    assert ang == pytest.approx(math.degrees(math.asin(math.sin(math.radians(20)) / 1.33)), abs=1e-10)
    assert ang == pytest.approx(14.90, abs=0.01)
    # lateral offset by two plane hits with the hand-computed glass angle
    tg = math.asin(math.sin(math.radians(20)) / 1.49)
    x = 0.05 * math.tan(math.radians(20)) + 0.01 * math.tan(tg)
    assert out.origin == pytest.approx([x, 0.0, 0.06], abs=1e-14)


def test_port_segments_coplanar_and_reversible(rng):
    n = np.array([0.0, math.sin(0.2), math.cos(0.2)])
    port = PortPlane(n, 0.05, 0.01)
    o = rng.normal(scale=0.05, size=(500, 3)) * [1, 1, 0]
    d = random_unit(rng, 500, around=n, max_angle=0.8)
    ow, dw, ok = trace_port_batch(o, d, port, WATER)
    assert ok.all()
    for k in range(500):
        assert abs(np.linalg.det(np.stack([d[k], dw[k], n]))) < 1e-12
        # reverse: water -> glass -> air
        back, _ = refract_batch(-dw[k : k + 1], n, 1.33, 1.49)
        back, _ = refract_batch(back, n, 1.49, 1.0)
        assert np.max(np.abs(-back[0] - d[k])) < 1e-10


# -- closest points ------------------------------------------------------------


def test_intersecting_rays():
    p = np.array([1.0, 2.0, 3.0])
    a = Ray([0, 0, 0], p / np.linalg.norm(p), 1.0)
    q = np.array([0.5, 0, 0])
    b = Ray(q, (p - q) / np.linalg.norm(p - q), 1.0)
    _, _, mid, gap = closest_point_pair(a, b)
    assert np.allclose(mid, p, atol=1e-12)
    assert gap < 1e-12


def test_skew_rays_closed_form():
    a = Ray([-1, 0, 0], [1, 0, 0], 1.0)
    b = Ray([0, -1, 1], [0, 1, 0], 1.0)
    pa, pb, mid, gap = closest_point_pair(a, b)
    assert np.allclose(pa, [0, 0, 0])
    assert np.allclose(pb, [0, 0, 1])
    assert mid[2] == pytest.approx(0.5)
    assert gap == pytest.approx(1.0)


def test_parallel_and_behind():
    with pytest.raises(DegenerateRays):
        closest_point_pair(Ray([0, 0, 0], Z, 1.0), Ray([1, 0, 0], Z, 1.0))
    with pytest.raises(BehindCamera):
        closest_point_pair(Ray([-1, 0, 0], [-1, 0, 0], 1.0), Ray([0, -1, 1], [0, 1, 0], 1.0))


def test_closest_points_swap_symmetry(rng):
    oa, ob = rng.normal(size=(300, 3)), rng.normal(size=(300, 3))
    da, db = random_unit(rng, 300), random_unit(rng, 300)
    pa, pb, mid, gap, s1 = closest_points_batch(oa, da, ob, db)
    qb, qa, mid2, gap2, s2 = closest_points_batch(ob, db, oa, da)
    assert np.array_equal(pa, qa) and np.array_equal(pb, qb)
    assert np.array_equal(mid, mid2) and np.array_equal(gap, gap2)
    assert np.array_equal(s1, s2)
