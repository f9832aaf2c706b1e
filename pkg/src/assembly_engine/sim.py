"""Deterministic perception and hand simulators.

Stands in for the headset camera + detector stack: renders a ground-truth
table layout into noisy 2D detections along a camera trajectory and
interpolates scripted hand motion. All randomness comes from counter-keyed
Philox streams seeded by (scenario seed, stream, frame, part index), so
replay is bitwise stable and reordering frames cannot shift any draw.

The detection renderer inverts the engine's bbox projection with a Newton
solve, so a zero-noise detection round-trips through the projection path
back to the exact ground-truth footprint.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .catalog import Catalog, load_catalog
from .errors import EngineError, MalformedDocument
from .geometry import (
    BBox2D,
    CameraPose,
    DEFAULT_PLANE,
    DegenerateProjection,
    FootprintBox3D,
    WorkPlane,
    look_at_pose,
    plane_homographies,
    quat_slerp,
)
from .monitor import HandSample
from .planner import AssemblyState, WorkArea, load_model
from .replanner import GoalSet
from .serialization import digest
from .twin import Detection

SCENARIO_SCHEMA_VERSION = 1

# stream ids for the counter-keyed generators
DETECTION_STREAM = 0
VIEWPOINT_STREAM = 1

# paper-reported viewpoint randomization ranges reused as sampling defaults
AZIMUTH_RANGE = (-math.pi, math.pi)
ELEVATION_RANGE = (math.radians(15.0), math.radians(75.0))


class FrameOutOfRange(EngineError):
    pass


class NoScript(EngineError):
    pass


def stream_rng(seed: int, stream: int, *key: int) -> np.random.Generator:
    """Philox generator keyed by (seed, stream, *key); cross-platform stable."""
    ss = np.random.SeedSequence((seed, stream) + key)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class NoiseParams:
    miss_prob: float = 0.0
    jitter_sigma: float = 0.0  # px
    class_confusion_prob: float = 0.0
    confidence_beta: tuple[float, float] = (8.0, 2.0)
    fps: float = 30.0

    def __post_init__(self) -> None:
        for p in (self.miss_prob, self.class_confusion_prob):
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"probability {p} outside [0, 1]")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")


@dataclass(frozen=True)
class Keyframe:
    frame: int
    pose: CameraPose


@dataclass(frozen=True)
class ScriptIntent:
    """Ground-truth label for a scripted interaction window."""

    kind: str  # pick_correct | pick_wrong
    frame_lo: int
    frame_hi: int
    part_index: Optional[int] = None


@dataclass
class Scenario:
    seed: int
    catalog: Catalog
    model: AssemblyState
    layout: list[tuple[int, FootprintBox3D]]
    keyframes: list[Keyframe]
    noise: NoiseParams
    goals: Optional[GoalSet]
    hand_script: Optional[list[HandSample]]
    script_intents: list[ScriptIntent]
    mode: str
    flags: dict
    work_area: WorkArea
    frames: int
    plane: WorkPlane = DEFAULT_PLANE
    source_digest: str = ""

    def frame_span(self) -> tuple[int, int]:
        return (self.keyframes[0].frame, self.keyframes[-1].frame)


# --------------------------------------------------------------------------
# camera trajectory


def camera_at(scenario: Scenario, frame: int) -> CameraPose:
    keys = scenario.keyframes
    if frame < keys[0].frame or frame > keys[-1].frame:
        raise FrameOutOfRange(
            f"frame {frame} outside trajectory span {keys[0].frame}..{keys[-1].frame}"
        )
    for i in range(len(keys) - 1):
        a, b = keys[i], keys[i + 1]
        if a.frame <= frame <= b.frame:
            if a.frame == b.frame:
                return a.pose
            t = (frame - a.frame) / (b.frame - a.frame)
            pos = tuple(
                (1 - t) * pa + t * pb for pa, pb in zip(a.pose.position, b.pose.position)
            )
            return CameraPose(
                position=pos,
                orientation=quat_slerp(a.pose.orientation, b.pose.orientation, t),
                hfov=(1 - t) * a.pose.hfov + t * b.pose.hfov,
                image_size=a.pose.image_size,
            )
    return keys[-1].pose


def sample_viewpoint(
    seed: int,
    index: int,
    target: tuple[float, float, float] = (0.0, 0.0, 0.0),
    distance: tuple[float, float] = (0.8, 1.6),
    hfov: float = math.radians(60.0),
    image_size: tuple[int, int] = (1280, 720),
) -> CameraPose:
    """Random viewpoint within the default azimuth/elevation ranges."""
    rng = stream_rng(seed, VIEWPOINT_STREAM, index)
    az = rng.uniform(*AZIMUTH_RANGE)
    el = rng.uniform(*ELEVATION_RANGE)
    r = rng.uniform(*distance)
    pos = (
        target[0] + r * math.cos(el) * math.cos(az),
        target[1] + r * math.cos(el) * math.sin(az),
        target[2] + r * math.sin(el),
    )
    return look_at_pose(pos, target, hfov, image_size)


# --------------------------------------------------------------------------
# detection rendering


def footprint_bounds(box: FootprintBox3D) -> tuple[float, float, float, float]:
    xs = [c[0] for c in box.corners_2d()]
    ys = [c[1] for c in box.corners_2d()]
    return (min(xs), max(xs), min(ys), max(ys))


class _ProjectionContext:
    """Per-frame scalar homography rows for the detection renderer."""

    def __init__(self, camera: CameraPose, plane: WorkPlane):
        plane_from_pixel, pixel_from_plane = plane_homographies(camera, plane)
        self.inv = tuple(tuple(float(v) for v in row) for row in plane_from_pixel)
        self.fwd = tuple(tuple(float(v) for v in row) for row in pixel_from_plane)
        self.camera = camera
        self.plane = plane

    def pixel_of(self, x: float, y: float) -> Optional[tuple[float, float]]:
        """Forward map of a plane point; None when behind the camera."""
        r = self.fwd
        w = r[2][0] * x + r[2][1] * y + r[2][2]
        if w <= 1e-12:  # plane point at or behind the camera's focal plane
            return None
        return (
            (r[0][0] * x + r[0][1] * y + r[0][2]) / w,
            (r[1][0] * x + r[1][1] * y + r[1][2]) / w,
        )

    def plane_of(self, u: float, v: float) -> tuple[float, float]:
        r = self.inv
        w = r[2][0] * u + r[2][1] * v + r[2][2]
        if abs(w) < 1e-15:
            raise DegenerateProjection("pixel maps to the plane's horizon")
        return (
            (r[0][0] * u + r[0][1] * v + r[0][2]) / w,
            (r[1][0] * u + r[1][1] * v + r[1][2]) / w,
        )


def solve_detection_bbox(
    camera: CameraPose,
    plane: WorkPlane,
    bounds: tuple[float, float, float, float],
    ctx: Optional[_ProjectionContext] = None,
) -> Optional[tuple[float, float, float, float]]:
    """Image bbox whose plane reprojection has exactly the given bounds.

    Newton iteration on the 4-dim bounds map; the initial guess is the pixel
    hull of the target rectangle. Returns None when the part is not cleanly
    in front of the camera or the solve fails to converge.
    """
    if ctx is None:
        try:
            ctx = _ProjectionContext(camera, plane)
        except DegenerateProjection:
            return None
    x0, x1, y0, y1 = bounds
    pixels = []
    for px, py in ((x0, y0), (x1, y0), (x1, y1), (x0, y1)):
        pix = ctx.pixel_of(px, py)
        if pix is None:
            return None
        pixels.append(pix)

    def f(vec) -> tuple[float, float, float, float]:
        u0, v0, u1, v1 = vec
        cs = (
            ctx.plane_of(u0, v0),
            ctx.plane_of(u1, v0),
            ctx.plane_of(u1, v1),
            ctx.plane_of(u0, v1),
        )
        return (
            min(c[0] for c in cs),
            max(c[0] for c in cs),
            min(c[1] for c in cs),
            max(c[1] for c in cs),
        )

    target = bounds
    vec = [
        min(p[0] for p in pixels),
        min(p[1] for p in pixels),
        max(p[0] for p in pixels),
        max(p[1] for p in pixels),
    ]
    h = 1e-4
    for _ in range(25):
        try:
            cur = f(vec)
        except DegenerateProjection:
            return None
        err = [t - c for t, c in zip(target, cur)]
        if max(abs(e) for e in err) < 1e-10:
            u0, v0, u1, v1 = vec
            return (min(u0, u1), min(v0, v1), max(u0, u1), max(v0, v1))
        J = np.empty((4, 4))
        try:
            for j in range(4):
                probe = list(vec)
                probe[j] += h
                fp = f(probe)
                for i in range(4):
                    J[i, j] = (fp[i] - cur[i]) / h
            step = np.linalg.solve(J, np.array(err))
        except (DegenerateProjection, np.linalg.LinAlgError):
            return None
        vec = [v + s for v, s in zip(vec, step)]
    return None


def render_detections(
    scenario: Scenario, frame: int, consumed: frozenset[int] = frozenset()
) -> tuple[CameraPose, list[Detection]]:
    """Detections for one frame; `consumed` hides parts already built in.

    Parts that project outside the image are dropped rather than clamped:
    the detector analogue does not report partially visible components.
    """
    camera = camera_at(scenario, frame)
    w, hgt = camera.image_size
    detections: list[Detection] = []
    class_ids = sorted(scenario.catalog.types)
    try:
        ctx = _ProjectionContext(camera, scenario.plane)
    except DegenerateProjection:
        return camera, detections
    for idx, (type_id, box) in enumerate(scenario.layout):
        if idx in consumed:
            continue
        solved = solve_detection_bbox(camera, scenario.plane, footprint_bounds(box), ctx)
        if solved is None:
            continue
        u0, v0, u1, v1 = solved
        if u0 < 0 or v0 < 0 or u1 > w or v1 > hgt:
            continue
        rng = stream_rng(scenario.seed, DETECTION_STREAM, frame, idx)
        if scenario.noise.miss_prob > 0 and rng.random() < scenario.noise.miss_prob:
            continue
        if scenario.noise.jitter_sigma > 0:
            du0, dv0, du1, dv1 = rng.normal(0.0, scenario.noise.jitter_sigma, size=4)
            u0, v0, u1, v1 = u0 + du0, v0 + dv0, u1 + du1, v1 + dv1
        class_id = type_id
        if scenario.noise.class_confusion_prob > 0 and rng.random() < scenario.noise.class_confusion_prob:
            others = [c for c in class_ids if c != type_id]
            if others:
                class_id = others[int(rng.integers(len(others)))]
        a, b = scenario.noise.confidence_beta
        confidence = float(rng.beta(a, b))
        bbox = BBox2D.of(u0, v0, u1, v1).clamped(camera.image_size)
        detections.append(Detection(frame, class_id, bbox, confidence))
    return camera, detections


# --------------------------------------------------------------------------
# scripted hand


def scripted_hand(scenario: Scenario, frame: int) -> HandSample:
    """Piecewise-linear hand interpolation; endpoints hold their positions."""
    script = scenario.hand_script
    if not script:
        raise NoScript("scenario has no hand script")
    if frame <= script[0].frame:
        return HandSample(frame, script[0].position, script[0].hand)
    if frame >= script[-1].frame:
        return HandSample(frame, script[-1].position, script[-1].hand)
    for i in range(len(script) - 1):
        a, b = script[i], script[i + 1]
        if a.frame <= frame <= b.frame:
            if a.frame == b.frame:
                return HandSample(frame, b.position, b.hand)
            t = (frame - a.frame) / (b.frame - a.frame)
            pos = tuple((1 - t) * pa + t * pb for pa, pb in zip(a.position, b.position))
            return HandSample(frame, pos, a.hand)
    raise FrameOutOfRange(f"frame {frame} not covered by the hand script")


# --------------------------------------------------------------------------
# scenario documents


def _resolve(doc_or_path, base_dir: Optional[Path], loader):
    if isinstance(doc_or_path, str):
        path = Path(doc_or_path)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return loader(path)
    return loader(doc_or_path)


def load_scenario(source, base_dir: Optional[Path] = None) -> Scenario:
    """Load and validate a scenario document (dict, JSON text, or path)."""
    if isinstance(source, (str, Path)) and (
        isinstance(source, Path) or source.lstrip()[:1] != "{"
    ):
        path = Path(source)
        base_dir = path.parent
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise MalformedDocument(f"cannot read scenario: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"invalid scenario JSON: {exc}") from exc
    elif isinstance(source, str):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"invalid scenario JSON: {exc}") from exc
    elif isinstance(source, dict):
        doc = source
    else:
        raise MalformedDocument(f"unsupported scenario source {type(source)!r}")

    if doc.get("schema_version") != SCENARIO_SCHEMA_VERSION:
        raise MalformedDocument(
            f"unsupported scenario schema_version {doc.get('schema_version')!r}"
        )
    try:
        seed = int(doc["seed"])
        catalog = _resolve(doc["catalog"], base_dir, load_catalog)
        model = _resolve(doc["model"], base_dir, lambda src: load_model(src, catalog))
    except KeyError as exc:
        raise MalformedDocument(f"scenario missing {exc}") from exc

    layout = []
    for i, entry in enumerate(doc.get("layout", [])):
        try:
            tid = int(entry["type_id"])
            ctype = catalog.type(tid)
            x, y = (float(v) for v in entry["xy"])
            yaw = math.radians(float(entry.get("yaw_deg", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"layout[{i}]: {exc}") from exc
        sx, sy, sz = catalog.cell_size
        half = (
            ctype.footprint[0] * sx / 2.0,
            ctype.footprint[1] * sy / 2.0,
            ctype.footprint[2] * sz / 2.0,
        )
        layout.append((tid, FootprintBox3D((x, y, half[2]), half, yaw)))

    cam = doc.get("camera")
    if not isinstance(cam, dict) or not cam.get("keyframes"):
        raise MalformedDocument("scenario camera block missing or empty")
    image_size = tuple(int(v) for v in cam.get("image_size", (1280, 720)))
    hfov = math.radians(float(cam.get("hfov_deg", 60.0)))
    keyframes = []
    for i, kf in enumerate(cam["keyframes"]):
        try:
            pose = look_at_pose(
                tuple(float(v) for v in kf["position"]),
                tuple(float(v) for v in kf.get("look_at", (0.0, 0.0, 0.0))),
                hfov,
                image_size,
            )
            keyframes.append(Keyframe(int(kf["frame"]), pose))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"camera.keyframes[{i}]: {exc}") from exc
    keyframes.sort(key=lambda k: k.frame)

    noise_doc = doc.get("noise", {})
    noise = NoiseParams(
        miss_prob=float(noise_doc.get("miss_prob", 0.0)),
        jitter_sigma=float(noise_doc.get("jitter_sigma", 0.0)),
        class_confusion_prob=float(noise_doc.get("class_confusion_prob", 0.0)),
        confidence_beta=tuple(noise_doc.get("confidence_beta", (8.0, 2.0))),
        fps=float(noise_doc.get("fps", 30.0)),
    )

    goals = None
    if doc.get("goals"):
        g = doc["goals"]
        goals = GoalSet(
            target_height=int(g["target_height"]),
            max_components=int(g["max_components"]),
            per_type_limits={int(k): int(v) for k, v in g.get("per_type_limits", {}).items()}
            or None,
        )

    hand_script = None
    if doc.get("hand_script"):
        hand_script = [
            HandSample(
                int(h["frame"]),
                tuple(float(v) for v in h["position"]),
                str(h.get("hand", "right")),
            )
            for h in doc["hand_script"]
        ]
        hand_script.sort(key=lambda h: h.frame)

    intents = [
        ScriptIntent(
            kind=str(i["kind"]),
            frame_lo=int(i["frame_lo"]),
            frame_hi=int(i["frame_hi"]),
            part_index=None if i.get("part_index") is None else int(i["part_index"]),
        )
        for i in doc.get("script_intents", [])
    ]

    wa = doc.get("work_area", {"x": [0, 8], "y": [0, 8], "z_max": 8})
    work_area = WorkArea(
        x=tuple(int(v) for v in wa["x"]),
        y=tuple(int(v) for v in wa["y"]),
        z_max=int(wa["z_max"]),
    )

    frames = int(doc.get("frames", keyframes[-1].frame + 1))
    mode = str(doc.get("mode", "layer"))
    if mode not in ("layer", "graph"):
        raise MalformedDocument(f"unknown sequencing mode {mode!r}")

    return Scenario(
        seed=seed,
        catalog=catalog,
        model=model,
        layout=layout,
        keyframes=keyframes,
        noise=noise,
        goals=goals,
        hand_script=hand_script,
        script_intents=intents,
        mode=mode,
        flags=dict(doc.get("flags", {})),
        work_area=work_area,
        frames=frames,
        source_digest=digest(doc),
    )
