"""Session orchestration: the event loop binding sim, twin, planner, monitor,
replanner and stability, plus headless batch runs with metrics and replayable
event logs.

The session loop is single-threaded and authoritative. Every state change
flows through process-order events appended to an append-only log; replaying
the same scenario reproduces the identical log digest and state hash.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .catalog import Catalog
from .errors import EngineError, MalformedDocument
from .monitor import HandSample, MonitorParams, MonitorState, observe_hand, placement_regions
from .planner import (
    Placement,
    Plan,
    PlanComplete,
    apply_placement,
    current_step,
    empty_state,
    remove_placement,
    sequence_graph,
    sequence_layered,
    state_to_dict,
)
from .replanner import (
    BudgetExceeded,
    Deviation,
    InfeasibleGoals,
    ReplanParams,
    replan,
    select_candidate,
)
from .serialization import canonical_dumps, digest
from .sim import Scenario, load_scenario, render_detections, scripted_hand
from .stability import StabilityParams
from .twin import TwinParams, TwinState, TwinTracker, twin_to_dict

LOG_SCHEMA_VERSION = 1

logger = logging.getLogger("assembly_engine")
logger.setLevel(os.environ.get("ASSEMBLY_ENGINE_LOG", "WARNING").upper())


class ScenarioInvalid(EngineError):
    pass


class ReplayDiverged(EngineError):
    pass


class IoFailure(EngineError):
    pass


_AUTO = object()  # sentinel: use the scripted hand for this frame


class Session:
    """One assembly-guidance session bound to a scenario."""

    def __init__(self, scenario: Scenario, session_id: str = "s0"):
        self.session_id = session_id
        self.scenario = scenario
        self.catalog: Catalog = scenario.catalog
        flags = scenario.flags
        self.monitor_params = MonitorParams(
            dwell_frames=int(flags.get("dwell_frames", 5)),
            region_margin=float(flags.get("region_margin", 0.01)),
            allow_deviant_pick=bool(flags.get("allow_deviant_pick", True)),
            error_feedback=bool(flags.get("error_feedback", True)),
        )
        self.tracker = TwinTracker(
            scenario.catalog,
            scenario.plane,
            TwinParams(
                conf_min=float(flags.get("conf_min", 0.25)),
                alpha=float(flags.get("alpha", 0.4)),
                expiry_frames=int(flags.get("expiry_frames", 15)),
            ),
        )
        self.stability_params = StabilityParams(
            rigid_joints=bool(flags.get("rigid_joints", False))
        )
        self.replan_params = ReplanParams(
            node_budget=int(flags.get("replan_node_budget", 200_000))
        )
        self.replan_k = int(flags.get("replan_k", 3))

        if scenario.mode == "graph":
            self.plan = sequence_graph(scenario.model, scenario.catalog)
        else:
            self.plan = sequence_layered(scenario.model, scenario.catalog)

        self.twin = TwinState()
        self.assembly = empty_state(scenario.catalog)
        self.mstate = MonitorState()
        self.pending_candidates = None
        self.consumed: set[int] = set()
        self.part_of_instance: dict[int, int] = {}
        self._pending_part: Optional[int] = None
        self.next_instance_id = (
            max((p.instance_id for p in scenario.model.placements), default=0) + 1000
        )
        self.frame = scenario.frame_span()[0] - 1
        self.events: list[dict] = []
        self.seq = 0
        self.live_hand = False
        self.latencies_ns: list[int] = []
        self.counts = {
            "steps_completed": 0,
            "deviations": 0,
            "replans": 0,
            "replan_failures": 0,
        }
        self._regions_cache: Optional[tuple[tuple, list]] = None

    # -- event log ---------------------------------------------------------

    def _log(self, type_: str, frame: int, **payload) -> dict:
        self.seq += 1
        record = {"seq": self.seq, "type": type_, "frame": frame, **payload}
        self.events.append(record)
        return record

    # -- stepping ----------------------------------------------------------

    def done(self) -> bool:
        return self.frame >= self.scenario.frames - 1

    def step(self, hand=_AUTO) -> list[dict]:
        """Advance one frame; returns the event records it appended."""
        frame = self.frame + 1
        span = self.scenario.frame_span()
        if frame > span[1]:
            raise PlanComplete(f"frame {frame} beyond trajectory end {span[1]}")
        before = len(self.events)

        camera, detections = render_detections(
            self.scenario, frame, frozenset(self.consumed)
        )

        t0 = time.perf_counter_ns()
        self.twin = self.tracker.ingest(self.twin, camera, detections)
        active = None
        try:
            active = current_step(self.plan, self.twin)
        except PlanComplete:
            pass

        sample = self._resolve_hand(hand, frame)
        if sample is not None:
            regions = []
            if self.mstate.phase == "holding" and active is not None:
                regions = self._regions(active, self.mstate.held_type)
            self.mstate, interactions = observe_hand(
                self.mstate, sample, self.twin, active, regions, self.monitor_params
            )
            for ev in interactions:
                self._process_interaction(ev, active)
        self.latencies_ns.append(time.perf_counter_ns() - t0)

        self.frame = frame
        return self.events[before:]

    def run(self) -> None:
        while not self.done():
            self.step()

    def _resolve_hand(self, hand, frame: int) -> Optional[HandSample]:
        if hand is not _AUTO:
            if hand is not None:
                self.live_hand = True  # live input overrides the script for good
                return HandSample(frame, hand.position, hand.hand)
            return None
        if self.live_hand or not self.scenario.hand_script:
            return None
        return scripted_hand(self.scenario, frame)

    def _regions(self, active, held_type):
        key = (len(self.assembly.placements), active.step_index, held_type)
        if self._regions_cache is not None and self._regions_cache[0] == key:
            return self._regions_cache[1]
        regions = placement_regions(
            self.assembly,
            self.catalog,
            active,
            held_type,
            self.scenario.work_area,
            self.monitor_params,
        )
        self._regions_cache = (key, regions)
        return regions

    # -- interaction handling ----------------------------------------------

    def _nearest_part(self, class_id: int, center) -> Optional[int]:
        best = None
        for idx, (tid, box) in enumerate(self.scenario.layout):
            if tid != class_id or idx in self.consumed:
                continue
            d = (box.center[0] - center[0]) ** 2 + (box.center[1] - center[1]) ** 2
            if best is None or (d, idx) < best:
                best = (d, idx)
        return None if best is None else best[1]

    def _process_interaction(self, ev, active) -> None:
        payload = ev.to_dict()
        payload.pop("frame", None)
        self._log("interaction", ev.frame, **payload)
        kind = ev.kind

        if kind in ("pick_correct", "pick_wrong") and self.mstate.phase == "holding":
            self._pending_part = self._nearest_part(
                self.mstate.held_type, self.mstate.origin_box.center
            )
        elif kind == "pick_correct" and active is not None and active.action == "remove":
            self._complete_removal(active, ev.frame)
        elif kind == "release":
            self._pending_part = None
        elif kind == "place_correct":
            placement = active.placement
            self.assembly = apply_placement(self.assembly, placement, self.catalog)
            active.status = "done"
            self.counts["steps_completed"] += 1
            self._consume(placement)
            self._log(
                "step_done", ev.frame,
                step_index=active.step_index,
                instance_id=placement.instance_id,
            )
        elif kind == "place_deviation":
            self._handle_deviation(ev, active)

    def _consume(self, placement: Placement) -> None:
        if self._pending_part is not None:
            self.consumed.add(self._pending_part)
            self.part_of_instance[placement.instance_id] = self._pending_part
        self._pending_part = None
        self._regions_cache = None

    def _complete_removal(self, active, frame: int) -> None:
        instance = active.placement.instance_id
        self.assembly = remove_placement(self.assembly, instance, self.catalog)
        part = self.part_of_instance.pop(instance, None)
        if part is not None:
            self.consumed.discard(part)  # the part goes back on the table
        active.status = "done"
        self.counts["steps_completed"] += 1
        self._regions_cache = None
        self._log("step_done", frame, step_index=active.step_index, instance_id=instance)

    def _handle_deviation(self, ev, active) -> None:
        actual = Placement(
            instance_id=self.next_instance_id,
            type_id=ev.placement.type_id,
            cell=ev.placement.cell,
            yaw=ev.placement.yaw,
        )
        self.next_instance_id += 1
        self.assembly = apply_placement(self.assembly, actual, self.catalog)
        active.status = "deviated"
        self.counts["deviations"] += 1
        self._consume(actual)
        deviation = Deviation(
            expected=active.placement, actual=actual, step_index=active.step_index
        )
        self._log(
            "deviation", ev.frame,
            step_index=active.step_index,
            expected=active.placement.key(),
            actual=actual.key(),
        )
        if self.scenario.goals is None:
            return
        self.counts["replans"] += 1
        try:
            self.pending_candidates = replan(
                self.assembly,
                deviation,
                self.scenario.goals,
                self.catalog,
                self.replan_k,
                area=self.scenario.work_area,
                params=self.replan_params,
                stability_params=self.stability_params,
                next_instance_id=self.next_instance_id,
            )
            self.next_instance_id += sum(
                len(c.additions) for c in self.pending_candidates
            )
        except (InfeasibleGoals, BudgetExceeded) as exc:
            self.counts["replan_failures"] += 1
            self._log("replan_failed", ev.frame, reason=type(exc).__name__, detail=str(exc))
            return
        self._log(
            "candidates", ev.frame,
            count=len(self.pending_candidates),
            candidates=[
                {
                    "edit_cost": c.edit_cost,
                    "stability_score": c.stability.score,
                    "stable": c.stability.stable,
                    "removals": len(c.removals),
                    "additions": len(c.additions),
                    "state_hash": c.state_hash(),
                }
                for c in self.pending_candidates
            ],
        )
        auto = self.scenario.flags.get("auto_select_candidate")
        if auto is not None and self.pending_candidates:
            self.select(int(auto))

    def select(self, index: int) -> Plan:
        plan = select_candidate(self, index)
        self._regions_cache = None
        self._log("candidate_selected", max(self.frame, 0), index=index,
                  steps=len(plan.steps))
        return plan

    # -- reporting -----------------------------------------------------------

    def state_hash(self) -> str:
        return digest(
            {
                "frame": self.frame,
                "twin": twin_to_dict(self.twin),
                "assembly": state_to_dict(self.assembly),
                "plan": [(s.step_index, s.action, s.status) for s in self.plan.steps],
                "monitor": self.mstate.phase,
                "consumed": sorted(self.consumed),
                "counts": self.counts,
            }
        )

    def log_digest(self) -> str:
        return digest(self.events)

    def metrics(self) -> dict:
        """Deterministic run metrics (timing lives in timing_stats)."""
        by_kind: dict[str, int] = {}
        for rec in self.events:
            if rec["type"] == "interaction":
                by_kind[rec["kind"]] = by_kind.get(rec["kind"], 0) + 1
        confirm = self._confirmation_rates()
        remaining = len(self.plan.pending_steps())
        return {
            "schema_version": LOG_SCHEMA_VERSION,
            "scenario_digest": self.scenario.source_digest,
            "seed": self.scenario.seed,
            "frames": self.frame - self.scenario.frame_span()[0] + 1,
            # cumulative across plan swaps: done + deviated + still pending
            "steps_total": self.counts["steps_completed"]
            + self.counts["deviations"]
            + remaining,
            "steps_completed": self.counts["steps_completed"],
            "plan_complete": self.plan.completed(),
            "deviations": self.counts["deviations"],
            "replans": self.counts["replans"],
            "replan_failures": self.counts["replan_failures"],
            "events_by_kind": dict(sorted(by_kind.items())),
            "confirmation": confirm,
            "final_state_hash": self.state_hash(),
            "event_log_digest": self.log_digest(),
        }

    def _confirmation_rates(self) -> dict:
        intents = self.scenario.script_intents
        if not intents:
            return {"pick_correct_rate": None, "pick_wrong_flag_rate": None}
        picked = [
            r for r in self.events
            if r["type"] == "interaction" and r["kind"] in ("pick_correct", "pick_wrong")
        ]
        stats = {"pick_correct": [0, 0], "pick_wrong": [0, 0]}
        for intent in intents:
            if intent.kind not in stats:
                continue
            stats[intent.kind][1] += 1
            hit = any(
                r["kind"] == intent.kind
                and intent.frame_lo <= r["frame"] <= intent.frame_hi
                for r in picked
            )
            if hit:
                stats[intent.kind][0] += 1
        def rate(pair):
            return None if pair[1] == 0 else pair[0] / pair[1]
        return {
            "pick_correct_rate": rate(stats["pick_correct"]),
            "pick_correct_counts": stats["pick_correct"],
            "pick_wrong_flag_rate": rate(stats["pick_wrong"]),
            "pick_wrong_counts": stats["pick_wrong"],
        }

    def timing_stats(self) -> dict:
        lat = sorted(self.latencies_ns)
        if not lat:
            return {"frames": 0}
        def pct(p):
            return lat[min(len(lat) - 1, int(p * len(lat)))] / 1e6
        return {
            "frames": len(lat),
            "mean_ms": sum(lat) / len(lat) / 1e6,
            "p50_ms": pct(0.50),
            "p99_ms": pct(0.99),
            "max_ms": lat[-1] / 1e6,
        }


# --------------------------------------------------------------------------
# logs on disk


def export_log(session: Session, path) -> Path:
    """Canonical event log: header, one record per line, digest footer."""
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8") as f:
            header = {
                "type": "log_header",
                "schema_version": LOG_SCHEMA_VERSION,
                "scenario_digest": session.scenario.source_digest,
                "seed": session.scenario.seed,
            }
            f.write(canonical_dumps(header) + "\n")
            for record in session.events:
                f.write(canonical_dumps(record) + "\n")
            footer = {
                "type": "log_end",
                "events": len(session.events),
                "state_hash": session.state_hash(),
                "log_digest": session.log_digest(),
            }
            f.write(canonical_dumps(footer) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write log {path}: {exc}") from exc
    return path


def read_log(path) -> tuple[dict, list[dict], dict]:
    """Parse a log file; raises ReplayDiverged on truncation or corruption."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read log {path}: {exc}") from exc
    try:
        records = [json.loads(line) for line in lines if line.strip()]
    except json.JSONDecodeError as exc:
        raise ReplayDiverged(f"log {path} is corrupt: {exc}") from exc
    if len(records) < 2 or records[0].get("type") != "log_header":
        raise ReplayDiverged(f"log {path} missing header")
    if records[-1].get("type") != "log_end":
        raise ReplayDiverged(f"log {path} truncated: no log_end record")
    header, footer = records[0], records[-1]
    body = records[1:-1]
    if footer.get("events") != len(body) or digest(body) != footer.get("log_digest"):
        raise ReplayDiverged(f"log {path} digest mismatch")
    return header, body, footer


# --------------------------------------------------------------------------
# headless runner


@dataclass
class MetricsReport:
    metrics: dict
    timing: dict
    out_dir: Optional[Path] = None

    def __getitem__(self, key):
        return self.metrics[key]


def run_headless(
    scenario_source,
    out_dir=None,
    *,
    verify: bool = False,
    seed_override: Optional[int] = None,
) -> MetricsReport:
    """Replay a full scenario; write event log, metrics, and timing files."""
    try:
        scenario = load_scenario(scenario_source)
    except (MalformedDocument, EngineError) as exc:
        raise ScenarioInvalid(str(exc)) from exc
    if seed_override is not None:
        scenario.seed = seed_override

    session = Session(scenario)
    session.run()
    metrics = session.metrics()
    timing = session.timing_stats()

    if verify:
        second = Session(load_scenario(scenario_source))
        if seed_override is not None:
            second.scenario.seed = seed_override
        second.run()
        if second.log_digest() != session.log_digest() or (
            second.state_hash() != session.state_hash()
        ):
            raise ReplayDiverged("second replay produced a different log or state")

    report = MetricsReport(metrics=metrics, timing=timing)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        export_log(session, out / "events.jsonl")
        try:
            (out / "metrics.json").write_text(
                canonical_dumps(metrics) + "\n", encoding="utf-8"
            )
            (out / "timing.json").write_text(
                json.dumps(timing, indent=2) + "\n", encoding="utf-8"
            )
        except OSError as exc:
            raise IoFailure(f"cannot write outputs to {out}: {exc}") from exc
        report.out_dir = out
    return report


def verify_log(scenario_source, log_path) -> bool:
    """Re-run the scenario and compare against a stored log."""
    header, body, footer = read_log(log_path)
    try:
        scenario = load_scenario(scenario_source)
    except (MalformedDocument, EngineError) as exc:
        raise ScenarioInvalid(str(exc)) from exc
    if header.get("scenario_digest") != scenario.source_digest:
        raise ReplayDiverged("log was recorded for a different scenario document")
    session = Session(scenario)
    session.run()
    if session.log_digest() != footer.get("log_digest"):
        raise ReplayDiverged("replay log digest differs from the stored log")
    if session.state_hash() != footer.get("state_hash"):
        raise ReplayDiverged("replay final state differs from the stored log")
    return True
