"""Camera, plane intersection, homography and box predicate tests."""

import math
import random

import pytest

from assembly_engine import geometry as geo
from assembly_engine.geometry import (
    BBox2D,
    DEFAULT_PLANE,
    FootprintBox3D,
    IntersectionBehindCamera,
    PixelOutOfBounds,
    Ray,
    RayParallelToPlane,
    WorkPlane,
    boxes_intersect,
    intersect_plane,
    look_at_pose,
    pixel_ray,
    point_in_box,
    project_bbox,
    project_bbox_homography,
)

import oracles


def overhead_camera(height=1.0, hfov=math.pi / 2, image=(1000, 1000)):
    return look_at_pose((0.0, 0.0, height), (0.0, 0.0, 0.0), hfov, image)


def random_pose(rng, target=(0.0, 0.0, 0.0)):
    """Viewpoint inside the simulator's default azimuth/elevation ranges."""
    az = rng.uniform(-math.pi, math.pi)
    el = rng.uniform(math.radians(15), math.radians(75))
    r = rng.uniform(0.6, 2.0)
    pos = (
        target[0] + r * math.cos(el) * math.cos(az),
        target[1] + r * math.cos(el) * math.sin(az),
        target[2] + r * math.sin(el),
    )
    return look_at_pose(pos, target, rng.uniform(0.6, 1.8), (1280, 720))


class TestPixelRay:
    def test_center_pixel_is_principal_axis(self):
        cam = overhead_camera()
        ray = pixel_ray(cam, (500.0, 500.0))
        assert ray.origin == (0.0, 0.0, 1.0)
        assert ray.direction == pytest.approx((0.0, 0.0, -1.0), abs=1e-12)

    def test_half_fov_edge_ray(self):
        cam = overhead_camera(hfov=math.pi / 2)
        ray = pixel_ray(cam, (1000.0, 500.0))
        fwd = cam.forward()
        along = sum(d * f for d, f in zip(ray.direction, fwd))
        perp = math.sqrt(max(0.0, 1.0 - along * along))
        assert perp / along == pytest.approx(1.0, abs=1e-12)

    def test_out_of_bounds_pixel(self):
        cam = overhead_camera()
        with pytest.raises(PixelOutOfBounds):
            pixel_ray(cam, (1000.5, 200.0))
        with pytest.raises(PixelOutOfBounds):
            pixel_ray(cam, (10.0, -0.1))

    def test_matches_intrinsic_matrix_oracle(self):
        rng = random.Random(42)
        for _ in range(100):
            cam = random_pose(rng)
            u = rng.uniform(0, cam.image_size[0])
            v = rng.uniform(0, cam.image_size[1])
            ray = pixel_ray(cam, (u, v))
            _, d_expect = oracles.pinhole_ray(
                cam.position, cam.orientation, cam.hfov, cam.image_size, (u, v)
            )
            for got, want in zip(ray.direction, d_expect):
                assert got == pytest.approx(want, abs=1e-9)

    def test_center_alignment_property(self):
        rng = random.Random(7)
        for _ in range(50):
            cam = random_pose(rng)
            cx, cy = cam.principal_point()
            ray = pixel_ray(cam, (cx, cy))
            fwd = cam.forward()
            assert sum(d * f for d, f in zip(ray.direction, fwd)) > 1 - 1e-9


class TestIntersectPlane:
    def test_straight_down(self):
        ray = Ray((0.0, 0.0, 1.0), (0.0, 0.0, -1.0))
        p = intersect_plane(ray, DEFAULT_PLANE)
        assert p == pytest.approx((0.0, 0.0, 0.0))

    def test_parallel_ray(self):
        ray = Ray((0.0, 0.0, 1.0), (1.0, 0.0, 0.0))
        with pytest.raises(RayParallelToPlane):
            intersect_plane(ray, DEFAULT_PLANE)

    def test_behind_camera(self):
        ray = Ray((0.0, 0.0, 1.0), (0.0, 0.0, 1.0))
        with pytest.raises(IntersectionBehindCamera):
            intersect_plane(ray, DEFAULT_PLANE)

    def test_residual_random_rays(self):
        rng = random.Random(3)
        plane = WorkPlane((0.1, -0.2, 0.05), (0.0, 0.0, 1.0))
        for _ in range(200):
            origin = (rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.5, 2.0))
            d = (rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1.5, -0.2))
            n = math.sqrt(sum(c * c for c in d))
            ray = Ray(origin, tuple(c / n for c in d))
            p = intersect_plane(ray, plane)
            residual = abs(
                sum((pc - oc) * nc for pc, oc, nc in zip(p, plane.origin, plane.normal))
            )
            assert residual < 1e-9


class TestProjectBBox:
    def test_full_image_overhead(self):
        cam = overhead_camera(height=1.0, hfov=math.pi / 2, image=(1000, 1000))
        box = project_bbox(cam, BBox2D((0.0, 0.0), (1000.0, 1000.0)), DEFAULT_PLANE, 0.02)
        assert box.center[0] == pytest.approx(0.0, abs=1e-9)
        assert box.center[1] == pytest.approx(0.0, abs=1e-9)
        assert box.half_extents[0] == pytest.approx(1.0, abs=1e-9)
        assert box.half_extents[1] == pytest.approx(1.0, abs=1e-9)
        assert box.center[2] == pytest.approx(0.01, abs=1e-12)

    def test_zero_area_bbox_center(self):
        cam = overhead_camera()
        box = project_bbox(cam, BBox2D((500.0, 500.0), (500.0, 500.0)), DEFAULT_PLANE, 0.02)
        assert box.half_extents[0] == pytest.approx(0.0, abs=1e-12)
        assert box.half_extents[1] == pytest.approx(0.0, abs=1e-12)
        assert box.center[0] == pytest.approx(0.0, abs=1e-9)
        assert box.center[1] == pytest.approx(0.0, abs=1e-9)

    def test_corner_behind_camera_degenerate(self):
        cam = look_at_pose((0.0, -1.0, 0.05), (0.0, 1.0, 0.0), 2.8, (640, 480))
        with pytest.raises(geo.DegenerateProjection):
            project_bbox(cam, BBox2D((0.0, 0.0), (640.0, 240.0)), DEFAULT_PLANE, 0.02)

    def test_homography_path_matches_raycast(self):
        rng = random.Random(1234)
        for _ in range(500):
            cam = random_pose(rng)
            w, h = cam.image_size
            u0, u1 = sorted(rng.uniform(0, w) for _ in range(2))
            v0, v1 = sorted(rng.uniform(0, h) for _ in range(2))
            bbox = BBox2D((u0, v0), (u1, v1))
            try:
                a = project_bbox(cam, bbox, DEFAULT_PLANE, 0.03)
            except geo.DegenerateProjection:
                continue
            b = project_bbox_homography(cam, bbox, DEFAULT_PLANE, 0.03)
            for ca, cb in zip(a.center, b.center):
                assert abs(ca - cb) < 1e-6
            for ha, hb in zip(a.half_extents, b.half_extents):
                assert abs(ha - hb) < 1e-6

    def test_matches_independent_raycast_bounds(self):
        rng = random.Random(99)
        for _ in range(100):
            cam = random_pose(rng)
            w, h = cam.image_size
            u0, u1 = sorted(rng.uniform(0.2 * w, 0.8 * w) for _ in range(2))
            v0, v1 = sorted(rng.uniform(0.2 * h, 0.8 * h) for _ in range(2))
            bbox = BBox2D((u0, v0), (u1, v1))
            try:
                box = project_bbox(cam, bbox, DEFAULT_PLANE, 0.03)
            except geo.DegenerateProjection:
                continue
            x0, x1, y0, y1 = oracles.raycast_footprint_bounds(
                cam.position, cam.orientation, cam.hfov, cam.image_size, bbox.corners()
            )
            assert box.center[0] == pytest.approx((x0 + x1) / 2, abs=1e-9)
            assert box.center[1] == pytest.approx((y0 + y1) / 2, abs=1e-9)
            assert box.half_extents[0] == pytest.approx((x1 - x0) / 2, abs=1e-9)
            assert box.half_extents[1] == pytest.approx((y1 - y0) / 2, abs=1e-9)


class TestBoxPredicates:
    def test_identical_boxes(self):
        b = FootprintBox3D((0.0, 0.0, 0.1), (0.2, 0.1, 0.1), 0.3)
        assert boxes_intersect(b, b)

    def test_far_apart(self):
        a = FootprintBox3D((0.0, 0.0, 0.5), (1.0, 1.0, 0.5))
        b = FootprintBox3D((10.0, 0.0, 0.5), (1.0, 1.0, 0.5))
        assert not boxes_intersect(a, b)

    def test_point_in_box_yawed(self):
        b = FootprintBox3D((1.0, 1.0, 0.1), (0.2, 0.05, 0.1), math.pi / 4)
        along = (0.15 * math.cos(math.pi / 4), 0.15 * math.sin(math.pi / 4))
        assert point_in_box((1.0 + along[0], 1.0 + along[1], 0.1), b)
        assert not point_in_box((1.15, 1.0, 0.1), b)
        assert not point_in_box((1.0, 1.0, 0.35), b)

    def test_symmetric_and_reflexive(self):
        rng = random.Random(5)
        for _ in range(300):
            a = _random_box(rng)
            b = _random_box(rng)
            assert boxes_intersect(a, a)
            assert boxes_intersect(a, b) == boxes_intersect(b, a)

    def test_against_sampling_oracle(self):
        rng = random.Random(11)
        checked = 0
        for _ in range(1000):
            a = _random_box(rng)
            b = _random_box(rng)
            got = boxes_intersect(a, b)
            inside = oracles.boxes_overlap_sampled(a, b, n=1000, margin=-1e-6)
            outside = oracles.boxes_overlap_sampled(a, b, n=1000, margin=1e-6)
            if inside != outside:
                continue  # boundary shell: sampling cannot decide
            assert got == inside, (a, b)
            checked += 1
        assert checked > 900


def _random_box(rng):
    return FootprintBox3D(
        (rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.05, 0.5)),
        (rng.uniform(0.02, 0.6), rng.uniform(0.02, 0.6), rng.uniform(0.02, 0.3)),
        rng.choice([0.0, math.pi / 2, rng.uniform(0, 2 * math.pi)]),
    )


class TestQuaternions:
    def test_slerp_endpoints(self):
        q0 = (1.0, 0.0, 0.0, 0.0)
        q1 = geo.quat_normalize((0.9, 0.1, 0.2, 0.0))
        assert geo.quat_slerp(q0, q1, 0.0) == pytest.approx(q0)
        assert geo.quat_slerp(q0, q1, 1.0) == pytest.approx(q1)

    def test_matrix_quat_round_trip(self):
        rng = random.Random(21)
        for _ in range(100):
            q = geo.quat_normalize(tuple(rng.uniform(-1, 1) for _ in range(4)))
            rows = geo.quat_to_matrix(q)
            q2 = geo.matrix_to_quat(rows)
            # q and -q encode the same rotation
            sign = 1.0 if sum(a * b for a, b in zip(q, q2)) >= 0 else -1.0
            for a, b in zip(q, q2):
                assert a == pytest.approx(sign * b, abs=1e-9)
