"""Camera model, ray/plane intersection, planar homography and box math.

Conventions:
  - Camera frame: +x right, +y down (image v), +z forward (optical axis).
  - Quaternions are (w, x, y, z), world-from-camera, unit norm.
  - The work plane defaults to z = 0 with +z up; footprint boxes are
    expressed in the plane frame (for the default plane that is the world
    frame) with yaw measured about the plane normal.
  - Angles are radians everywhere inside the engine.

Hot-path functions (pixel_ray / intersect_plane / project_bbox) use scalar
Python math: per-call numpy overhead dominates at 3-vector sizes and the
twin ingests hundreds of corner rays per frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EngineError

Vec3 = tuple[float, float, float]


class PixelOutOfBounds(EngineError):
    pass


class RayParallelToPlane(EngineError):
    pass


class IntersectionBehindCamera(EngineError):
    pass


class DegenerateProjection(EngineError):
    pass


# --------------------------------------------------------------------------
# scalar vector helpers


def _add(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def _sub(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _scale(a: Vec3, s: float) -> Vec3:
    return (a[0] * s, a[1] * s, a[2] * s)


def _dot(a: Vec3, b: Vec3) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _cross(a: Vec3, b: Vec3) -> Vec3:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def _norm(a: Vec3) -> float:
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


# --------------------------------------------------------------------------
# quaternion helpers


def quat_normalize(q: tuple[float, float, float, float]) -> tuple[float, float, float, float]:
    w, x, y, z = q
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n == 0.0:
        raise ValueError("zero quaternion")
    return (w / n, x / n, y / n, z / n)


def quat_to_matrix(q: tuple[float, float, float, float]) -> tuple[Vec3, Vec3, Vec3]:
    """Rows of the rotation matrix for a unit quaternion (w, x, y, z)."""
    w, x, y, z = q
    return (
        (1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)),
        (2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)),
        (2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)),
    )


def matrix_to_quat(rows: tuple[Vec3, Vec3, Vec3]) -> tuple[float, float, float, float]:
    m = rows
    t = m[0][0] + m[1][1] + m[2][2]
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        w = 0.25 * s
        x = (m[2][1] - m[1][2]) / s
        y = (m[0][2] - m[2][0]) / s
        z = (m[1][0] - m[0][1]) / s
    elif m[0][0] > m[1][1] and m[0][0] > m[2][2]:
        s = math.sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]) * 2
        w = (m[2][1] - m[1][2]) / s
        x = 0.25 * s
        y = (m[0][1] + m[1][0]) / s
        z = (m[0][2] + m[2][0]) / s
    elif m[1][1] > m[2][2]:
        s = math.sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]) * 2
        w = (m[0][2] - m[2][0]) / s
        x = (m[0][1] + m[1][0]) / s
        y = 0.25 * s
        z = (m[1][2] + m[2][1]) / s
    else:
        s = math.sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]) * 2
        w = (m[1][0] - m[0][1]) / s
        x = (m[0][2] + m[2][0]) / s
        y = (m[1][2] + m[2][1]) / s
        z = 0.25 * s
    return quat_normalize((w, x, y, z))


def quat_slerp(
    q0: tuple[float, float, float, float],
    q1: tuple[float, float, float, float],
    t: float,
) -> tuple[float, float, float, float]:
    """Spherical-linear interpolation along the shorter arc."""
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    dot = sum(a * b for a, b in zip(q0, q1))
    if dot < 0.0:
        q1 = tuple(-c for c in q1)  # type: ignore[assignment]
        dot = -dot
    if dot > 1.0 - 1e-12:
        mixed = tuple(a + t * (b - a) for a, b in zip(q0, q1))
        return quat_normalize(mixed)  # type: ignore[arg-type]
    theta = math.acos(max(-1.0, min(1.0, dot)))
    s = math.sin(theta)
    w0 = math.sin((1 - t) * theta) / s
    w1 = math.sin(t * theta) / s
    return quat_normalize(tuple(w0 * a + w1 * b for a, b in zip(q0, q1)))  # type: ignore[arg-type]


# --------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class CameraPose:
    """Pinhole camera: position, world-from-camera orientation, horizontal FOV.

    Square pixels; vertical FOV follows from the aspect ratio.
    """

    position: Vec3
    orientation: tuple[float, float, float, float]
    hfov: float
    image_size: tuple[int, int]

    def __post_init__(self) -> None:
        w, x, y, z = self.orientation
        n = math.sqrt(w * w + x * x + y * y + z * z)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm {n!r} not unit")
        if not (0.0 < self.hfov < math.pi):
            raise ValueError(f"hfov {self.hfov!r} outside (0, pi)")
        iw, ih = self.image_size
        if iw < 1 or ih < 1:
            raise ValueError("image size must be >= 1 px")

    def rotation_rows(self) -> tuple[Vec3, Vec3, Vec3]:
        return quat_to_matrix(self.orientation)

    def forward(self) -> Vec3:
        r = self.rotation_rows()
        return (r[0][2], r[1][2], r[2][2])

    def focal_px(self) -> float:
        return (self.image_size[0] / 2.0) / math.tan(self.hfov / 2.0)

    def principal_point(self) -> tuple[float, float]:
        return (self.image_size[0] / 2.0, self.image_size[1] / 2.0)


def look_at_pose(
    position: Vec3,
    target: Vec3,
    hfov: float,
    image_size: tuple[int, int],
    up: Vec3 = (0.0, 0.0, 1.0),
) -> CameraPose:
    """Camera at `position` with the optical axis through `target`."""
    f = _sub(target, position)
    fn = _norm(f)
    if fn < 1e-12:
        raise ValueError("camera position equals target")
    zc = _scale(f, 1.0 / fn)
    xc = _cross(zc, up)
    if _norm(xc) < 1e-9:
        # Looking along `up`: fall back to a fixed horizontal reference.
        xc = _cross(zc, (0.0, 1.0, 0.0))
    xc = _scale(xc, 1.0 / _norm(xc))
    yc = _cross(zc, xc)
    rows = (
        (xc[0], yc[0], zc[0]),
        (xc[1], yc[1], zc[1]),
        (xc[2], yc[2], zc[2]),
    )
    return CameraPose(position, matrix_to_quat(rows), hfov, image_size)


@dataclass(frozen=True)
class BBox2D:
    """Axis-aligned image-space box, pixel coordinates, min <= max."""

    min: tuple[float, float]
    max: tuple[float, float]

    def __post_init__(self) -> None:
        if self.min[0] > self.max[0] or self.min[1] > self.max[1]:
            raise ValueError(f"bbox min {self.min} exceeds max {self.max}")

    @staticmethod
    def of(u0: float, v0: float, u1: float, v1: float) -> "BBox2D":
        return BBox2D((min(u0, u1), min(v0, v1)), (max(u0, u1), max(v0, v1)))

    def corners(self) -> tuple[tuple[float, float], ...]:
        (u0, v0), (u1, v1) = self.min, self.max
        return ((u0, v0), (u1, v0), (u1, v1), (u0, v1))

    def clamped(self, image_size: tuple[int, int]) -> "BBox2D":
        w, h = image_size
        return BBox2D(
            (min(max(self.min[0], 0.0), w), min(max(self.min[1], 0.0), h)),
            (min(max(self.max[0], 0.0), w), min(max(self.max[1], 0.0), h)),
        )

    def center(self) -> tuple[float, float]:
        return ((self.min[0] + self.max[0]) / 2.0, (self.min[1] + self.max[1]) / 2.0)


@dataclass(frozen=True)
class FootprintBox3D:
    """Box resting on (or stacked above) the work plane.

    half_extents may have zero planar components for degenerate detections
    (a zero-area bbox projects to a point before any inflation).
    """

    center: Vec3
    half_extents: Vec3
    yaw: float = 0.0

    def __post_init__(self) -> None:
        if any(h < 0 for h in self.half_extents):
            raise ValueError("negative half extent")

    def inflated(self, margin: float) -> "FootprintBox3D":
        hx, hy, hz = self.half_extents
        return FootprintBox3D(self.center, (hx + margin, hy + margin, hz + margin), self.yaw)

    def translated(self, delta: Vec3) -> "FootprintBox3D":
        return FootprintBox3D(_add(self.center, delta), self.half_extents, self.yaw)

    def corners_2d(self) -> tuple[tuple[float, float], ...]:
        """Planar corners (x, y) after yaw, counter-clockwise."""
        cx, cy = self.center[0], self.center[1]
        hx, hy = self.half_extents[0], self.half_extents[1]
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        out = []
        for dx, dy in ((-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)):
            out.append((cx + c * dx - s * dy, cy + s * dx + c * dy))
        return tuple(out)

    def z_interval(self) -> tuple[float, float]:
        return (self.center[2] - self.half_extents[2], self.center[2] + self.half_extents[2])


@dataclass(frozen=True)
class WorkPlane:
    origin: Vec3
    normal: Vec3

    def __post_init__(self) -> None:
        if abs(_norm(self.normal) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")

    def basis(self) -> tuple[Vec3, Vec3]:
        """Deterministic in-plane orthonormal basis; identity axes for z-up."""
        cached = _BASIS_CACHE.get((self.origin, self.normal))
        if cached is not None:
            return cached
        n = self.normal
        ref: Vec3 = (1.0, 0.0, 0.0) if abs(n[0]) < 0.9 else (0.0, 1.0, 0.0)
        e1 = _sub(ref, _scale(n, _dot(ref, n)))
        e1 = _scale(e1, 1.0 / _norm(e1))
        e2 = _cross(n, e1)
        if len(_BASIS_CACHE) < 64:
            _BASIS_CACHE[(self.origin, self.normal)] = (e1, e2)
        return e1, e2

    def to_plane_coords(self, p: Vec3) -> tuple[float, float]:
        e1, e2 = self.basis()
        d = _sub(p, self.origin)
        return (_dot(d, e1), _dot(d, e2))

    def from_plane_coords(self, x: float, y: float) -> Vec3:
        e1, e2 = self.basis()
        return _add(self.origin, _add(_scale(e1, x), _scale(e2, y)))


_BASIS_CACHE: dict = {}

DEFAULT_PLANE = WorkPlane((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))


@dataclass(frozen=True)
class Ray:
    origin: Vec3
    direction: Vec3


# --------------------------------------------------------------------------
# projection operations


def pixel_ray(camera: CameraPose, pixel: tuple[float, float]) -> Ray:
    """World-space viewing ray through an image pixel.

    Pixel coordinates are continuous; the valid range is the closed box
    [0, width] x [0, height].
    """
    u, v = pixel
    w, h = camera.image_size
    if not (0.0 <= u <= w and 0.0 <= v <= h):
        raise PixelOutOfBounds(f"pixel {pixel} outside image {camera.image_size}")
    rows = camera.rotation_rows()
    return _pixel_ray_rows(camera, rows, u, v)


def _pixel_ray_rows(
    camera: CameraPose, rows: tuple[Vec3, Vec3, Vec3], u: float, v: float
) -> Ray:
    f = camera.focal_px()
    cx, cy = camera.principal_point()
    dx = (u - cx) / f
    dy = (v - cy) / f
    # rotate (dx, dy, 1) into the world frame, then normalize
    wx = rows[0][0] * dx + rows[0][1] * dy + rows[0][2]
    wy = rows[1][0] * dx + rows[1][1] * dy + rows[1][2]
    wz = rows[2][0] * dx + rows[2][1] * dy + rows[2][2]
    n = math.sqrt(wx * wx + wy * wy + wz * wz)
    return Ray(camera.position, (wx / n, wy / n, wz / n))


def intersect_plane(ray: Ray, plane: WorkPlane) -> Vec3:
    """Intersection point of a ray with the work plane (t > 0)."""
    denom = _dot(ray.direction, plane.normal)
    if abs(denom) <= 1e-9:
        raise RayParallelToPlane(f"|d.n| = {abs(denom)!r}")
    t = _dot(_sub(plane.origin, ray.origin), plane.normal) / denom
    if t <= 0.0:
        raise IntersectionBehindCamera(f"t = {t!r}")
    return _add(ray.origin, _scale(ray.direction, t))


def project_point(camera: CameraPose, point: Vec3) -> tuple[float, float]:
    """Forward projection of a world point to pixel coordinates.

    Raises DegenerateProjection for points at or behind the camera plane.
    """
    rows = camera.rotation_rows()
    d = _sub(point, camera.position)
    # camera frame: q = R^T d (rows of R are columns of R^T)
    qx = rows[0][0] * d[0] + rows[1][0] * d[1] + rows[2][0] * d[2]
    qy = rows[0][1] * d[0] + rows[1][1] * d[1] + rows[2][1] * d[2]
    qz = rows[0][2] * d[0] + rows[1][2] * d[1] + rows[2][2] * d[2]
    if qz <= 1e-12:
        raise DegenerateProjection(f"point depth {qz!r} not in front of camera")
    f = camera.focal_px()
    cx, cy = camera.principal_point()
    return (cx + f * qx / qz, cy + f * qy / qz)


def project_bbox(
    camera: CameraPose,
    bbox: BBox2D,
    plane: WorkPlane,
    component_height: float,
) -> FootprintBox3D:
    """Project a 2D detection box to a plane-resting 3D footprint box.

    Casts a ray through each bbox corner, intersects the work plane, and
    bounds the hits with an axis-aligned (plane coordinates) rectangle. The
    vertical half-extent is component_height / 2 and the box rests on the
    plane.
    """
    rows = camera.rotation_rows()
    w, h = camera.image_size
    f = camera.focal_px()
    cx, cy = camera.principal_point()
    px, py, pz = camera.position
    ox, oy, oz = plane.origin
    nx, ny, nz = plane.normal
    e1, e2 = plane.basis()
    num = (ox - px) * nx + (oy - py) * ny + (oz - pz) * nz
    coords = []
    for u, v in bbox.corners():
        if not (0.0 <= u <= w and 0.0 <= v <= h):
            raise PixelOutOfBounds(f"bbox corner ({u}, {v}) outside image")
        dx = (u - cx) / f
        dy = (v - cy) / f
        wx = rows[0][0] * dx + rows[0][1] * dy + rows[0][2]
        wy = rows[1][0] * dx + rows[1][1] * dy + rows[1][2]
        wz = rows[2][0] * dx + rows[2][1] * dy + rows[2][2]
        denom = wx * nx + wy * ny + wz * nz
        if abs(denom) <= 1e-9 * math.sqrt(wx * wx + wy * wy + wz * wz):
            raise DegenerateProjection(f"corner ray parallel to plane at ({u}, {v})")
        t = num / denom
        if t <= 0.0:
            raise DegenerateProjection(f"corner ray exits behind the camera at ({u}, {v})")
        ix = px + t * wx - ox
        iy = py + t * wy - oy
        iz = pz + t * wz - oz
        coords.append(
            (ix * e1[0] + iy * e1[1] + iz * e1[2], ix * e2[0] + iy * e2[1] + iz * e2[2])
        )
    x0 = min(c[0] for c in coords)
    x1 = max(c[0] for c in coords)
    y0 = min(c[1] for c in coords)
    y1 = max(c[1] for c in coords)
    hz = component_height / 2.0
    mx, my = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    center = (
        ox + mx * e1[0] + my * e2[0] + hz * nx,
        oy + mx * e1[1] + my * e2[1] + hz * ny,
        oz + mx * e1[2] + my * e2[2] + hz * nz,
    )
    return FootprintBox3D(center, ((x1 - x0) / 2.0, (y1 - y0) / 2.0, hz), 0.0)


# --------------------------------------------------------------------------
# homography route (matrix path; must agree with the raycast path)


def plane_homographies(camera: CameraPose, plane: WorkPlane) -> tuple[np.ndarray, np.ndarray]:
    """(plane-from-pixel, pixel-from-plane) 3x3 projective maps.

    Plane points are homogeneous (x, y, 1) in the plane basis, pixels are
    homogeneous (u, v, 1).
    """
    f = camera.focal_px()
    cx, cy = camera.principal_point()
    K = np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])
    R = np.array(camera.rotation_rows())
    e1, e2 = plane.basis()
    cols = np.column_stack(
        [np.array(e1), np.array(e2), np.array(_sub(plane.origin, camera.position))]
    )
    pixel_from_plane = K @ R.T @ cols
    det = np.linalg.det(pixel_from_plane)
    if abs(det) < 1e-15:
        raise DegenerateProjection("camera center lies on the work plane")
    plane_from_pixel = np.linalg.inv(pixel_from_plane)
    return plane_from_pixel, pixel_from_plane


def apply_homography(H: np.ndarray, x: float, y: float) -> tuple[float, float]:
    v = H @ np.array([x, y, 1.0])
    if abs(v[2]) < 1e-15:
        raise DegenerateProjection("homography maps point to infinity")
    return (float(v[0] / v[2]), float(v[1] / v[2]))


def project_bbox_homography(
    camera: CameraPose,
    bbox: BBox2D,
    plane: WorkPlane,
    component_height: float,
) -> FootprintBox3D:
    """project_bbox computed through the 3x3 homography instead of raycasts."""
    H, _ = plane_homographies(camera, plane)
    coords = [apply_homography(H, u, v) for u, v in bbox.corners()]
    # reject corners mapping behind the camera: the raycast path raises there
    rows = camera.rotation_rows()
    for (u, v), (px, py) in zip(bbox.corners(), coords):
        p = plane.from_plane_coords(px, py)
        d = _sub(p, camera.position)
        dz = rows[0][2] * d[0] + rows[1][2] * d[1] + rows[2][2] * d[2]
        if dz <= 0.0:
            raise DegenerateProjection("bbox corner maps behind the camera")
    x0 = min(c[0] for c in coords)
    x1 = max(c[0] for c in coords)
    y0 = min(c[1] for c in coords)
    y1 = max(c[1] for c in coords)
    hz = component_height / 2.0
    center_on_plane = plane.from_plane_coords((x0 + x1) / 2.0, (y0 + y1) / 2.0)
    center = _add(center_on_plane, _scale(plane.normal, hz))
    return FootprintBox3D(center, ((x1 - x0) / 2.0, (y1 - y0) / 2.0, hz), 0.0)


# --------------------------------------------------------------------------
# box predicates


def point_in_box(p: Vec3, box: FootprintBox3D) -> bool:
    """Closed-box membership (boundary counts as inside)."""
    z0, z1 = box.z_interval()
    if not (z0 <= p[2] <= z1):
        return False
    dx = p[0] - box.center[0]
    dy = p[1] - box.center[1]
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    return abs(lx) <= box.half_extents[0] and abs(ly) <= box.half_extents[1]


def boxes_intersect(a: FootprintBox3D, b: FootprintBox3D) -> bool:
    """Closed-box overlap: z-interval test plus a 2D separating-axis test."""
    az0, az1 = a.z_interval()
    bz0, bz1 = b.z_interval()
    if az1 < bz0 or bz1 < az0:
        return False
    ca = a.corners_2d()
    cb = b.corners_2d()
    for yaw in (a.yaw, b.yaw):
        for axis in ((math.cos(yaw), math.sin(yaw)), (-math.sin(yaw), math.cos(yaw))):
            pa = [axis[0] * x + axis[1] * y for x, y in ca]
            pb = [axis[0] * x + axis[1] * y for x, y in cb]
            if max(pa) < min(pb) or max(pb) < min(pa):
                return False
    return True
