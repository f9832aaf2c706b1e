"""Digital twin: per-frame detections become persistent work-plane tracks.

Association is greedy nearest-neighbor per class. The gate radius defaults
to half the class's largest footprint dimension; tabletop parts are well
separated so a gate that tight keeps the greedy matching equal to the
optimal assignment. Everything is deterministic: ties resolve by lower
track id, then lower detection index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .catalog import Catalog
from .errors import EngineError
from .geometry import (
    BBox2D,
    CameraPose,
    DEFAULT_PLANE,
    DegenerateProjection,
    FootprintBox3D,
    PixelOutOfBounds,
    WorkPlane,
    project_bbox,
)


class NonMonotonicFrame(EngineError):
    pass


class UnknownClass(EngineError):
    pass


@dataclass(frozen=True)
class Detection:
    frame: int
    class_id: int
    bbox: BBox2D
    confidence: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class Track:
    track_id: int
    class_id: int
    box: FootprintBox3D
    last_seen: int
    hits: int
    smoothed_center: tuple[float, float, float]


@dataclass(frozen=True)
class TwinState:
    frame: int = -1
    tracks: tuple[Track, ...] = ()
    next_track_id: int = 1

    def live(self) -> tuple[Track, ...]:
        return self.tracks


@dataclass(frozen=True)
class TwinParams:
    conf_min: float = 0.25
    alpha: float = 0.4
    expiry_frames: int = 15
    gate_scale: float = 0.5  # gate = gate_scale * max class footprint dim
    merge_fraction: float = 0.5  # merge_radius = merge_fraction * gate


def query_component(state: TwinState, class_id: int) -> list[Track]:
    """Live tracks of one class, sorted by track id."""
    return sorted(
        (t for t in state.tracks if t.class_id == class_id), key=lambda t: t.track_id
    )


class TwinTracker:
    """Holds the catalog/plane/parameter context for frame ingestion."""

    def __init__(
        self,
        catalog: Catalog,
        plane: WorkPlane = DEFAULT_PLANE,
        params: Optional[TwinParams] = None,
    ):
        self.catalog = catalog
        self.plane = plane
        self.params = params or TwinParams()

    def gate_radius(self, class_id: int) -> float:
        dim = self.catalog.type(class_id).max_dim_m(self.catalog.cell_size)
        return self.params.gate_scale * dim

    def ingest(
        self, state: TwinState, camera: CameraPose, detections: Sequence[Detection]
    ) -> TwinState:
        """Project detections onto the plane and update tracks.

        Matched tracks smooth their center with an exponential filter;
        unmatched confident detections spawn tracks; tracks unseen for
        expiry_frames are dropped. Frames must be strictly increasing.
        """
        if not detections:
            frame = state.frame + 1
        else:
            frame = detections[0].frame
            for d in detections:
                if d.frame != frame:
                    raise NonMonotonicFrame("detections span multiple frames")
        if frame <= state.frame:
            raise NonMonotonicFrame(f"frame {frame} not after {state.frame}")

        params = self.params
        projected: list[tuple[int, Detection, FootprintBox3D]] = []
        for idx, det in enumerate(detections):
            if det.class_id not in self.catalog.types:
                raise UnknownClass(f"detection class {det.class_id} not in catalog")
            height = (
                self.catalog.type(det.class_id).footprint[2] * self.catalog.cell_size[2]
            )
            try:
                box = project_bbox(camera, det.bbox, self.plane, height)
            except (DegenerateProjection, PixelOutOfBounds):
                continue  # unusable geometry degenerates to no observation
            projected.append((idx, det, box))

        tracks = {t.track_id: t for t in state.tracks}
        updated: dict[int, Track] = {}
        used_dets: set[int] = set()

        # greedy nearest-neighbor per class, deterministic tie-breaks
        class_ids = sorted({d.class_id for _, d, _ in projected})
        for cid in class_ids:
            gate = self.gate_radius(cid)
            cand = []
            for idx, det, box in projected:
                if det.class_id != cid:
                    continue
                for t in state.tracks:
                    if t.class_id != cid or t.track_id in updated:
                        continue
                    dist = _planar(t.smoothed_center, box.center)
                    if dist <= gate:
                        cand.append((dist, t.track_id, idx))
            cand.sort()
            matched_tracks: set[int] = set()
            for dist, tid, idx in cand:
                if tid in matched_tracks or idx in used_dets:
                    continue
                matched_tracks.add(tid)
                used_dets.add(idx)
                det, box = next((d, b) for i, d, b in projected if i == idx)
                old = tracks[tid]
                a = params.alpha
                sc = tuple(
                    (1 - a) * o + a * n
                    for o, n in zip(old.smoothed_center, box.center)
                )
                updated[tid] = Track(
                    track_id=tid,
                    class_id=cid,
                    box=FootprintBox3D(sc, box.half_extents, box.yaw),
                    last_seen=frame,
                    hits=old.hits + 1,
                    smoothed_center=sc,
                )

        # keep unmatched tracks that have not expired
        survivors: dict[int, Track] = dict(updated)
        for t in state.tracks:
            if t.track_id in updated:
                continue
            if frame - t.last_seen >= params.expiry_frames:
                continue
            survivors[t.track_id] = t

        # spawn tracks for confident unmatched detections
        next_id = state.next_track_id
        for idx, det, box in projected:
            if idx in used_dets or det.confidence < params.conf_min:
                continue
            merge_radius = self.gate_radius(det.class_id) * params.merge_fraction
            too_close = any(
                t.class_id == det.class_id
                and _planar(t.smoothed_center, box.center) < merge_radius
                for t in survivors.values()
            )
            if too_close:
                continue
            survivors[next_id] = Track(
                track_id=next_id,
                class_id=det.class_id,
                box=box,
                last_seen=frame,
                hits=1,
                smoothed_center=box.center,
            )
            next_id += 1

        # enforce the same-class separation invariant: drop the younger track
        final: dict[int, Track] = {}
        for tid in sorted(survivors):
            t = survivors[tid]
            merge_radius = self.gate_radius(t.class_id) * params.merge_fraction
            clash = any(
                k.class_id == t.class_id
                and _planar(k.smoothed_center, t.smoothed_center) < merge_radius
                for k in final.values()
            )
            if not clash:
                final[tid] = t

        return TwinState(
            frame=frame,
            tracks=tuple(final[tid] for tid in sorted(final)),
            next_track_id=next_id,
        )


def ingest_frame(
    state: TwinState,
    camera: CameraPose,
    detections: Sequence[Detection],
    *,
    catalog: Catalog,
    plane: WorkPlane = DEFAULT_PLANE,
    params: Optional[TwinParams] = None,
) -> TwinState:
    return TwinTracker(catalog, plane, params).ingest(state, camera, detections)


def _planar(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def twin_to_dict(state: TwinState) -> dict:
    return {
        "frame": state.frame,
        "tracks": [
            {
                "track_id": t.track_id,
                "class_id": t.class_id,
                "center": list(t.box.center),
                "half_extents": list(t.box.half_extents),
                "yaw": t.box.yaw,
                "last_seen": t.last_seen,
                "hits": t.hits,
            }
            for t in state.tracks
        ],
    }
