"""Scenario builders.

Scripts are produced closed-loop: a deterministic robot hand drives a live
session (aiming at whatever the engine binds and highlights, exactly like a
person following the display), and the recorded samples freeze into the
scenario document. Replaying the document reproduces the same event stream
because the whole loop is seeded.
"""

from __future__ import annotations

import math
from typing import Optional

from .catalog import builtin_catalog, catalog_to_dict
from .monitor import HandSample
from .planner import PlanComplete, current_step
from .service import Session
from .sim import SCENARIO_SCHEMA_VERSION, load_scenario

AWAY = (-0.35, -0.35, 0.45)  # parking spot far above and outside every box


def _base_doc(
    seed: int,
    model_placements: list[dict],
    layout: list[dict],
    *,
    goals: Optional[dict],
    mode: str,
    flags: dict,
    work_area: dict,
    frames: int,
    noise: Optional[dict] = None,
    camera_height: float = 1.25,
    camera_target: tuple[float, float] = (0.2, 0.1),
) -> dict:
    return {
        "schema_version": SCENARIO_SCHEMA_VERSION,
        "seed": seed,
        "catalog": catalog_to_dict(builtin_catalog("bricks8")),
        "model": {"schema_version": 1, "placements": model_placements},
        "layout": layout,
        "camera": {
            "image_size": [1280, 960],
            "hfov_deg": 70.0,
            "keyframes": [
                {
                    "frame": 0,
                    "position": [camera_target[0], camera_target[1] - 1e-6, camera_height],
                    "look_at": [camera_target[0], camera_target[1], 0.0],
                },
                {
                    "frame": frames - 1,
                    "position": [camera_target[0], camera_target[1] - 1e-6, camera_height],
                    "look_at": [camera_target[0], camera_target[1], 0.0],
                },
            ],
        },
        "noise": noise or {},
        "goals": goals,
        "hand_script": None,
        "script_intents": [],
        "mode": mode,
        "flags": flags,
        "work_area": work_area,
        "frames": frames,
    }


def _part_row(
    type_id: int, n: int, x0: float = 0.42, y0: float = 0.0, dx: float = 0.11,
    per_row: int = 6,
):
    """Loose parts in rows right of the build area."""
    out = []
    for i in range(n):
        out.append(
            {
                "type_id": type_id,
                "xy": [x0 + (i % per_row) * dx, y0 + (i // per_row) * dx],
            }
        )
    return out


class _RobotHand:
    """Deterministic scripted assembler driving a live session."""

    def __init__(self, session: Session, dwell: int, gap: int):
        self.session = session
        self.dwell = dwell
        self.gap = gap
        self.script: list[dict] = []
        self.intents: list[dict] = []

    def feed(self, pos, n: int) -> bool:
        for _ in range(n):
            if self.session.done():
                return False
            frame = self.session.frame + 1
            self.script.append(
                {"frame": frame, "position": [pos[0], pos[1], pos[2]], "hand": "right"}
            )
            self.session.step(hand=HandSample(frame, tuple(pos)))
        return True

    def dwell_at(self, pos, intent: Optional[str] = None, part_index: Optional[int] = None) -> bool:
        start = self.session.frame + 1
        ok = self.feed(pos, self.dwell + 2)
        if intent is not None:
            self.intents.append(
                {
                    "kind": intent,
                    "frame_lo": start,
                    "frame_hi": self.session.frame + 1,
                    "part_index": part_index,
                }
            )
        return ok

    def active_step(self):
        try:
            return current_step(self.session.plan, self.session.twin)
        except PlanComplete:
            return None

    def run(self, wrong_first: bool = False, deviate_cells: Optional[dict] = None) -> None:
        """Follow the plan to completion.

        wrong_first: hover a non-highlighted part before each correct pick.
        deviate_cells: step_index -> lattice cell to place into instead of
        the target (triggers replanning; the robot then follows the new plan).
        """
        deviate_cells = dict(deviate_cells or {})
        session = self.session
        stall = 0
        progress = session.counts["steps_completed"]
        while not session.done() and not session.plan.completed():
            if not self.feed(AWAY, self.gap):
                break
            done_now = session.counts["steps_completed"] + session.counts["deviations"]
            if done_now > progress:
                progress = done_now
                stall = 0
            else:
                stall += 1
                if stall > 20:
                    raise RuntimeError(
                        f"robot made no progress for {stall} attempts "
                        f"(step {session.plan.pending_steps()[0].step_index})"
                    )
            step = self.active_step()
            if step is None:
                break
            if step.part_not_visible or (step.action == "place" and step.pick_region is None):
                continue

            if step.action == "remove":
                self.dwell_at(step.pick_region.center)
                continue

            if wrong_first:
                wrong = self._wrong_track(step)
                if wrong is not None:
                    self.dwell_at(
                        wrong.box.center,
                        intent="pick_wrong",
                        part_index=session._nearest_part(wrong.class_id, wrong.box.center),
                    )
                    if not self.feed(AWAY, self.dwell + 2):
                        break
                    step = self.active_step()
                    if step is None or step.pick_region is None:
                        continue

            picked_part = session._nearest_part(step.type_id, step.pick_region.center)
            self.dwell_at(step.pick_region.center, intent="pick_correct", part_index=picked_part)
            if session.mstate.phase != "holding":
                continue  # pick missed (noise); try the step again

            target_cell = deviate_cells.get(step.step_index)
            if target_cell is not None:
                regions = session._regions(step, session.mstate.held_type)
                region = next(
                    (r for r in regions if r[0].cell == tuple(target_cell)), None
                )
                if region is None:
                    raise RuntimeError(f"no region at deviation cell {target_cell}")
                deviate_cells.pop(step.step_index)
                self.dwell_at(region[1].center)
            else:
                self.dwell_at(step.place_region.center)

    def _wrong_track(self, step):
        live = sorted(self.session.twin.tracks, key=lambda t: t.track_id)
        for t in live:
            if t.track_id != step.bound_track_id:
                return t
        return None


def _record(doc: dict, wrong_first: bool = False, deviate_cells: Optional[dict] = None,
            dwell: int = 5, gap: int = 18) -> dict:
    scenario = load_scenario(doc)
    session = Session(scenario)
    robot = _RobotHand(session, dwell, gap)
    robot.run(wrong_first=wrong_first, deviate_cells=deviate_cells)
    if not session.plan.completed():
        raise RuntimeError("robot failed to finish the plan while recording")
    out = dict(doc)
    out["hand_script"] = robot.script
    out["script_intents"] = robot.intents
    out["frames"] = session.frame + robot.gap + 2
    out["camera"]["keyframes"][-1]["frame"] = out["frames"] - 1
    return out


def build_compliant_scenario(seed: int = 11, n_steps: int = 4) -> dict:
    """Tower assembly followed exactly: no noise, no deviations."""
    model = [
        {"instance_id": i + 1, "type_id": 1, "cell": [1, 1, i], "yaw": 0}
        for i in range(n_steps)
    ]
    doc = _base_doc(
        seed,
        model,
        _part_row(1, n_steps),
        goals={"target_height": n_steps, "max_components": n_steps + 1},
        mode="layer",
        flags={},
        work_area={"x": [0, 4], "y": [0, 4], "z_max": n_steps + 1},
        frames=4000,
    )
    return _record(doc)


def build_deviation_scenario(seed: int = 23) -> dict:
    """One scripted deviation: the second block lands on a fresh column.

    The engine replans, auto-selects the best candidate, and the robot
    finishes the selected continuation.
    """
    model = [
        {"instance_id": i + 1, "type_id": 1, "cell": [1, 1, i], "yaw": 0}
        for i in range(3)
    ]
    # limit the search to the 1x1 brick so the candidate space stays desk-scale
    limits = {str(t): (6 if t == 1 else 0) for t in range(1, 9)}
    doc = _base_doc(
        seed,
        model,
        _part_row(1, 6),
        goals={"target_height": 3, "max_components": 6, "per_type_limits": limits},
        mode="layer",
        flags={"auto_select_candidate": 0},
        work_area={"x": [0, 4], "y": [0, 4], "z_max": 4},
        frames=6000,
    )
    return _record(doc, deviate_cells={1: (3, 3, 0)})


def build_pick_trial_scenario(seed: int = 7, n_trials: int = 20,
                              miss_prob: float = 0.05, jitter_sigma: float = 3.0) -> dict:
    """Alternating wrong/correct pick trials under detection noise.

    Each plan step contributes one wrong-selection trial and one
    correct-selection trial; n_trials must be even. Wrong picks are flagged
    but not allowed to start a hold.
    """
    if n_trials % 2:
        raise ValueError("n_trials must be even (one wrong + one correct per step)")
    n_steps = n_trials // 2
    per_row = 7
    model = [
        {
            "instance_id": i + 1,
            "type_id": 1,
            "cell": [2 * (i % per_row), 2 * ((i // per_row) % per_row), i // (per_row * per_row)],
            "yaw": 0,
        }
        for i in range(n_steps)
    ]
    doc = _base_doc(
        seed,
        model,
        # one spare so a wrong target always exists; packed grid keeps every
        # loose part inside the camera view
        _part_row(1, n_steps + 1, dx=0.1, per_row=11),
        goals=None,
        mode="layer",
        flags={"allow_deviant_pick": False},
        work_area={"x": [0, 2 * per_row], "y": [0, 2 * per_row], "z_max": 2},
        frames=30000,
        noise={"miss_prob": miss_prob, "jitter_sigma": jitter_sigma},
        camera_height=1.8,
        camera_target=(0.71, 0.45),
    )
    doc["catalog"]["inventory"]["1"] = n_steps + 4  # enough bricks for every step
    return _record(doc, wrong_first=True)


def build_latency_scenario(seed: int = 3, n_parts: int = 50, frames: int = 400) -> dict:
    """Many tracked parts with a touring hand; exercises per-frame cost."""
    types = [1 + (i % 8) for i in range(n_parts)]
    layout = []
    for i, tid in enumerate(types):
        layout.append({"type_id": tid, "xy": [0.42 + (i % 8) * 0.12, (i // 8) * 0.12]})
    model = [{"instance_id": 1, "type_id": 1, "cell": [1, 1, 0], "yaw": 0}]
    doc = _base_doc(
        seed,
        model,
        layout,
        goals=None,
        mode="layer",
        flags={},
        work_area={"x": [0, 4], "y": [0, 4], "z_max": 2},
        frames=frames,
        camera_height=1.9,
        camera_target=(0.5, 0.35),
    )
    # touring hand: sweeps over the part grid without settling anywhere
    script = []
    for f in range(0, frames, 2):
        angle = f * 0.13
        script.append(
            {
                "frame": f,
                "position": [
                    0.5 + 0.35 * math.cos(angle),
                    0.35 + 0.3 * math.sin(angle),
                    0.02,
                ],
                "hand": "right",
            }
        )
    doc["hand_script"] = script
    return doc
