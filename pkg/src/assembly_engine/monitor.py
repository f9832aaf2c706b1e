"""Hand-interaction monitor: picks, placements, deviations.

A state machine over palm-centroid samples. Dwell counters debounce
fly-throughs: an event fires only after the hand stays inside a box for
dwell_frames consecutive frames, and refiring requires leaving the box
first. Wrong picks are flagged, not blocked; deviating placements become
replanner input rather than failures.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .catalog import Catalog
from .geometry import FootprintBox3D, point_in_box
from .planner import (
    AssemblyState,
    Placement,
    PlanStep,
    WorkArea,
    enumerate_placements,
    placement_box,
    placement_legal,
    placement_signature,
)
from .twin import TwinState


@dataclass(frozen=True)
class HandSample:
    frame: int
    position: tuple[float, float, float]
    hand: str = "right"


@dataclass(frozen=True)
class InteractionEvent:
    kind: str  # pick_correct | pick_wrong | place_correct | place_deviation | release
    frame: int
    step_index: Optional[int] = None
    track_id: Optional[int] = None
    instance_id: Optional[int] = None
    position: Optional[tuple[float, float, float]] = None
    placement: Optional[Placement] = None
    hand: str = "right"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "frame": self.frame,
            "step_index": self.step_index,
            "track_id": self.track_id,
            "instance_id": self.instance_id,
            "position": None if self.position is None else list(self.position),
            "placement": None
            if self.placement is None
            else {
                "instance_id": self.placement.instance_id,
                "type_id": self.placement.type_id,
                "cell": list(self.placement.cell),
                "yaw": self.placement.yaw,
            },
            "hand": self.hand,
        }


@dataclass(frozen=True)
class MonitorParams:
    dwell_frames: int = 5
    region_margin: float = 0.01
    allow_deviant_pick: bool = True
    # Wrong-pick / deviation feedback can be disabled to mirror setups where
    # error detection runs only for one component family.
    error_feedback: bool = True


@dataclass(frozen=True)
class MonitorState:
    phase: str = "idle"  # idle | holding | placed
    held_type: Optional[int] = None
    held_track_id: Optional[int] = None
    origin_box: Optional[FootprintBox3D] = None
    placed_box: Optional[FootprintBox3D] = None
    dwell: tuple[tuple[tuple, int], ...] = ()
    last_frame: tuple[tuple[str, int], ...] = ()

    def dwell_dict(self) -> dict:
        return dict(self.dwell)

    def last_frame_dict(self) -> dict:
        return dict(self.last_frame)


def observe_hand(
    mstate: MonitorState,
    sample: HandSample,
    twin: TwinState,
    active_step: Optional[PlanStep],
    regions: Sequence[tuple[Placement, FootprintBox3D]],
    params: Optional[MonitorParams] = None,
) -> tuple[MonitorState, list[InteractionEvent]]:
    """Advance the monitor by one hand sample.

    Unknown or missing geometry never raises here; it simply produces no
    event. Sample frames must not regress per hand.
    """
    params = params or MonitorParams()
    last = mstate.last_frame_dict()
    prev = last.get(sample.hand)
    if prev is not None and sample.frame < prev:
        return mstate, []  # regressed sample: drop rather than fault the loop
    last[sample.hand] = sample.frame

    dwell = mstate.dwell_dict()
    inside_now: dict = {}
    events: list[InteractionEvent] = []
    new_state = replace(mstate, last_frame=tuple(sorted(last.items())))
    pos = sample.position

    if mstate.phase == "idle":
        fired = None
        # remove-steps pick from the built structure, not from a track
        if active_step is not None and active_step.action == "remove":
            box = active_step.place_region
            if box is not None and point_in_box(pos, box):
                key = ("remove", active_step.instance_id)
                count = dwell.get(key, 0) + 1
                inside_now[key] = count
                if count == params.dwell_frames:
                    fired = InteractionEvent(
                        kind="pick_correct",
                        frame=sample.frame,
                        step_index=active_step.step_index,
                        instance_id=active_step.instance_id,
                        position=box.center,
                        hand=sample.hand,
                    )
        for track in sorted(twin.tracks, key=lambda t: t.track_id):
            if not point_in_box(pos, track.box):
                continue
            key = ("track", track.track_id)
            count = dwell.get(key, 0) + 1
            inside_now[key] = count
            if count != params.dwell_frames or fired is not None:
                continue
            is_step_track = (
                active_step is not None
                and active_step.action == "place"
                and active_step.bound_track_id == track.track_id
            )
            if is_step_track:
                fired = InteractionEvent(
                    kind="pick_correct",
                    frame=sample.frame,
                    step_index=active_step.step_index,
                    track_id=track.track_id,
                    position=track.box.center,
                    hand=sample.hand,
                )
                new_state = replace(
                    new_state,
                    phase="holding",
                    held_type=track.class_id,
                    held_track_id=track.track_id,
                    origin_box=track.box,
                )
            elif params.error_feedback:
                fired = InteractionEvent(
                    kind="pick_wrong",
                    frame=sample.frame,
                    step_index=None if active_step is None else active_step.step_index,
                    track_id=track.track_id,
                    position=track.box.center,
                    hand=sample.hand,
                )
                if params.allow_deviant_pick:
                    new_state = replace(
                        new_state,
                        phase="holding",
                        held_type=track.class_id,
                        held_track_id=track.track_id,
                        origin_box=track.box,
                    )
        if fired is not None:
            events.append(fired)
            if new_state.phase == "holding":
                inside_now = {}  # fresh counters for the new phase

    elif mstate.phase == "holding":
        fired = None
        for placement, box in regions:
            if not point_in_box(pos, box):
                continue
            key = ("region",) + placement.key()
            count = dwell.get(key, 0) + 1
            inside_now[key] = count
            if count != params.dwell_frames or fired is not None:
                continue
            is_target = (
                active_step is not None
                and active_step.action == "place"
                and placement.key() == active_step.placement.key()
            )
            if is_target:
                fired = InteractionEvent(
                    kind="place_correct",
                    frame=sample.frame,
                    step_index=active_step.step_index,
                    instance_id=placement.instance_id,
                    position=box.center,
                    placement=placement,
                    hand=sample.hand,
                )
            elif params.error_feedback:
                fired = InteractionEvent(
                    kind="place_deviation",
                    frame=sample.frame,
                    step_index=None if active_step is None else active_step.step_index,
                    instance_id=placement.instance_id,
                    position=box.center,
                    placement=placement,
                    hand=sample.hand,
                )
        # putting the part back where it came from abandons the hold
        if fired is None and mstate.origin_box is not None and point_in_box(pos, mstate.origin_box):
            key = ("origin",)
            count = dwell.get(key, 0) + 1
            inside_now[key] = count
            if count == params.dwell_frames:
                fired = InteractionEvent(
                    kind="release",
                    frame=sample.frame,
                    track_id=mstate.held_track_id,
                    position=mstate.origin_box.center,
                    hand=sample.hand,
                )
                new_state = replace(
                    new_state,
                    phase="idle",
                    held_type=None,
                    held_track_id=None,
                    origin_box=None,
                )
        if fired is not None:
            events.append(fired)
            if fired.kind in ("place_correct", "place_deviation"):
                box = next(b for p, b in regions if p.key() == fired.placement.key())
                new_state = replace(
                    new_state,
                    phase="placed",
                    held_type=None,
                    held_track_id=None,
                    origin_box=None,
                    placed_box=box,
                )
            inside_now = {}

    elif mstate.phase == "placed":
        # debounce: wait for the hand to clear the just-placed region
        if mstate.placed_box is None or not point_in_box(pos, mstate.placed_box):
            new_state = replace(new_state, phase="idle", placed_box=None)

    return replace(new_state, dwell=tuple(sorted(inside_now.items()))), events


def placement_regions(
    state: AssemblyState,
    catalog: Catalog,
    active_step: PlanStep,
    held_type: int,
    area: WorkArea,
    params: Optional[MonitorParams] = None,
) -> list[tuple[Placement, FootprintBox3D]]:
    """Candidate placement regions for the held part.

    The active step's target comes first, then every legal alternative
    placement of the held type inside the work area, each inflated by
    region_margin. Regions never overlap existing placements (legality
    includes the overlap check).
    """
    params = params or MonitorParams()
    regions: list[tuple[Placement, FootprintBox3D]] = []
    seen: set = set()

    target = active_step.placement
    if held_type != target.type_id:
        target = Placement(-1, held_type, target.cell, target.yaw)
    if placement_legal(state, target, catalog):
        regions.append(
            (target, placement_box(target, catalog).inflated(params.region_margin))
        )
        seen.add(placement_signature(target, catalog))

    for p in enumerate_placements(state, catalog, area, held_type):
        sig = placement_signature(p, catalog)
        if sig in seen:
            continue
        seen.add(sig)
        regions.append((p, placement_box(p, catalog).inflated(params.region_margin)))
    return regions
