"""Wire protocol endpoint: one session per connection over WebSocket.

Messages are JSON texts (the transport frames them with explicit lengths and
browsers can connect natively). Each direction carries its own strictly
increasing seq; regressions and unknown types get error replies. A hello
handshake negotiates the schema version before anything else.

client -> server: hello, load_scenario, tick, hand, select_candidate,
                  mode_flags
server -> client: hello_ok, scenario_loaded, twin_snapshot, step_instruction,
                  feedback, candidates, stability_report, metrics, error
"""

from __future__ import annotations

import asyncio
import json
import logging
import threading
from dataclasses import replace as dc_replace
from typing import Optional

import websockets

from .errors import EngineError, MalformedDocument
from .monitor import HandSample
from .planner import PlanComplete
from .serialization import canonical_dumps
from .service import Session
from .sim import load_scenario
from .stability import analyze
from .twin import twin_to_dict

PROTOCOL_SCHEMA_VERSION = 1

logger = logging.getLogger("assembly_engine.server")


def _box_payload(box) -> Optional[dict]:
    if box is None:
        return None
    return {
        "center": list(box.center),
        "half_extents": list(box.half_extents),
        "yaw": box.yaw,
    }


class _Connection:
    def __init__(self, ws):
        self.ws = ws
        self.session: Optional[Session] = None
        self.hello_done = False
        self.last_seq_in = 0
        self.seq_out = 0
        self.live_hand: Optional[HandSample] = None
        self._known_assembly = None

    async def send(self, type_: str, **payload) -> None:
        self.seq_out += 1
        await self.ws.send(canonical_dumps({"type": type_, "seq": self.seq_out, **payload}))

    async def error(self, code: str, message: str) -> None:
        await self.send("error", code=code, message=message)

    async def handle(self, raw: str) -> None:
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError:
            await self.error("MalformedMessage", "message is not valid JSON")
            return
        if not isinstance(msg, dict) or "type" not in msg or "seq" not in msg:
            await self.error("MalformedMessage", "message needs type and seq fields")
            return
        seq = msg["seq"]
        if not isinstance(seq, int) or seq <= self.last_seq_in:
            await self.error(
                "SequenceError", f"seq {seq!r} must exceed {self.last_seq_in}"
            )
            return
        self.last_seq_in = seq

        mtype = msg["type"]
        if not self.hello_done:
            if mtype != "hello":
                await self.error("HandshakeRequired", "first message must be hello")
                await self.ws.close()
                return
            if msg.get("schema_version") != PROTOCOL_SCHEMA_VERSION:
                await self.error(
                    "VersionMismatch",
                    f"server speaks schema_version {PROTOCOL_SCHEMA_VERSION}",
                )
                await self.ws.close()
                return
            self.hello_done = True
            await self.send("hello_ok", schema_version=PROTOCOL_SCHEMA_VERSION)
            return

        handler = getattr(self, f"_on_{mtype}", None)
        if handler is None:
            await self.error("UnknownType", f"unknown message type {mtype!r}")
            return
        if mtype != "load_scenario" and self.session is None:
            await self.error("SessionNotLoaded", "load_scenario first")
            return
        try:
            await handler(msg)
        except EngineError as exc:
            await self.error(type(exc).__name__, str(exc))

    # -- message handlers ----------------------------------------------------

    async def _on_load_scenario(self, msg) -> None:
        source = msg.get("scenario") or msg.get("path")
        if source is None:
            await self.error("MalformedMessage", "load_scenario needs scenario or path")
            return
        try:
            scenario = load_scenario(source)
        except MalformedDocument as exc:
            await self.error("ScenarioInvalid", str(exc))
            return
        self.session = Session(scenario)
        self.live_hand = None
        self._known_assembly = None
        wa = scenario.work_area
        sx, sy, sz = scenario.catalog.cell_size
        await self.send(
            "scenario_loaded",
            scenario_digest=scenario.source_digest,
            frames=scenario.frames,
            mode=scenario.mode,
            steps=len(self.session.plan.steps),
            cell_size=[sx, sy, sz],
            work_area={"x": list(wa.x), "y": list(wa.y), "z_max": wa.z_max},
            plane_extent=[
                [wa.x[0] * sx, wa.x[1] * sx],
                [wa.y[0] * sy, wa.y[1] * sy],
            ],
            types=[
                {
                    "type_id": t.type_id,
                    "name": t.name,
                    "color_tag": t.color_tag,
                    "footprint": list(t.footprint),
                }
                for t in sorted(scenario.catalog.types.values(), key=lambda t: t.type_id)
            ],
        )
        await self._send_view([])

    async def _on_tick(self, msg) -> None:
        frames = int(msg.get("frames", 1))
        if frames < 1:
            await self.error("MalformedMessage", "tick frames must be >= 1")
            return
        session = self.session
        new_events: list[dict] = []
        for _ in range(frames):
            if session.done():
                break
            hand = self.live_hand
            if hand is not None:
                new_events.extend(session.step(hand=hand))
            else:
                new_events.extend(session.step())
        await self._send_view(new_events)

    async def _on_hand(self, msg) -> None:
        try:
            pos = tuple(float(v) for v in msg["position"])
        except (KeyError, TypeError, ValueError):
            await self.error("MalformedMessage", "hand needs a position triple")
            return
        self.live_hand = HandSample(0, pos, str(msg.get("hand", "right")))
        # overrides the script from now on, even if no sample accompanies a tick
        self.session.live_hand = True

    async def _on_select_candidate(self, msg) -> None:
        index = msg.get("index")
        if not isinstance(index, int):
            await self.error("MalformedMessage", "select_candidate needs an index")
            return
        self.session.select(index)
        await self.send("candidates", items=[])  # consumed: clear the cards
        await self._send_view([])

    async def _on_mode_flags(self, msg) -> None:
        flags = msg.get("flags")
        if not isinstance(flags, dict):
            await self.error("MalformedMessage", "mode_flags needs a flags object")
            return
        session = self.session
        session.scenario.flags.update(flags)
        if "allow_deviant_pick" in flags or "error_feedback" in flags:
            session.monitor_params = dc_replace(
                session.monitor_params,
                allow_deviant_pick=bool(
                    flags.get(
                        "allow_deviant_pick", session.monitor_params.allow_deviant_pick
                    )
                ),
                error_feedback=bool(
                    flags.get("error_feedback", session.monitor_params.error_feedback)
                ),
            )
        await self.send("flags_ok", flags=session.scenario.flags)

    # -- view fan-out ----------------------------------------------------------

    async def _send_view(self, new_events: list[dict]) -> None:
        session = self.session
        await self.send("twin_snapshot", **twin_to_dict(session.twin))
        step_payload = None
        try:
            from .planner import current_step

            step = current_step(session.plan, session.twin)
            step_payload = {
                "step_index": step.step_index,
                "action": step.action,
                "type_id": step.type_id,
                "instance_id": step.instance_id,
                "status": step.status,
                "part_not_visible": step.part_not_visible,
                "bound_track_id": step.bound_track_id,
                "pick": _box_payload(step.pick_region),
                "place": _box_payload(step.place_region),
            }
        except PlanComplete:
            pass
        await self.send(
            "step_instruction",
            frame=session.frame,
            step=step_payload,
            plan_complete=session.plan.completed(),
            phase=session.mstate.phase,
        )
        for record in new_events:
            if record["type"] == "interaction" and record["kind"] in (
                "pick_correct",
                "pick_wrong",
            ):
                await self.send(
                    "feedback",
                    frame=record["frame"],
                    kind="check" if record["kind"] == "pick_correct" else "cross",
                    position=record["position"],
                    track_id=record.get("track_id"),
                )
        if any(r["type"] == "candidates" for r in new_events) and session.pending_candidates:
            await self.send(
                "candidates",
                items=[
                    {
                        "index": i,
                        "edit_cost": c.edit_cost,
                        "stability_score": c.stability.score,
                        "stable": c.stability.stable,
                        "removals": len(c.removals),
                        "additions": len(c.additions),
                        "placements": [
                            {"type_id": p.type_id, "cell": list(p.cell), "yaw": p.yaw}
                            for p in c.final_state.placements
                        ],
                    }
                    for i, c in enumerate(session.pending_candidates)
                ],
            )
        if self._known_assembly != session.assembly:
            self._known_assembly = session.assembly
            report = analyze(session.assembly, session.catalog, session.stability_params)
            await self.send(
                "stability_report",
                frame=session.frame,
                report=report.to_dict(),
                placements=[
                    {"type_id": p.type_id, "cell": list(p.cell), "yaw": p.yaw}
                    for p in session.assembly.placements
                ],
            )
        await self.send("metrics", metrics=session.metrics())


async def _handler(ws) -> None:
    conn = _Connection(ws)
    try:
        async for raw in ws:
            await conn.handle(raw)
    except websockets.ConnectionClosed:
        pass


def _parse_bind(bind: str) -> tuple[str, int]:
    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bind address {bind!r} must be host:port")
    return host, int(port)


async def serve_async(bind: str = "127.0.0.1:8765"):
    host, port = _parse_bind(bind)
    return await websockets.serve(_handler, host, port)


def serve(bind: str = "127.0.0.1:8765") -> None:
    """Blocking server entry point (CLI `serve` verb)."""

    async def main():
        server = await serve_async(bind)
        logger.info("listening on %s", bind)
        await asyncio.Future()

    asyncio.run(main())


class EngineServer:
    """Background server for tests and embedding."""

    def __init__(self, bind: str = "127.0.0.1:0"):
        self.bind = bind
        self._loop: Optional[asyncio.AbstractEventLoop] = None
        self._thread: Optional[threading.Thread] = None
        self._server = None
        self.port: Optional[int] = None

    def start(self) -> "EngineServer":
        started = threading.Event()

        def run():
            loop = asyncio.new_event_loop()
            asyncio.set_event_loop(loop)
            self._loop = loop

            async def boot():
                self._server = await serve_async(self.bind)
                sock = next(iter(self._server.sockets))
                self.port = sock.getsockname()[1]
                started.set()

            loop.run_until_complete(boot())
            loop.run_forever()

        self._thread = threading.Thread(target=run, daemon=True)
        self._thread.start()
        if not started.wait(timeout=10):
            raise RuntimeError("server failed to start")
        return self

    @property
    def url(self) -> str:
        host = self.bind.rpartition(":")[0]
        return f"ws://{host}:{self.port}"

    def stop(self) -> None:
        if self._loop is None:
            return

        def shutdown():
            async def close_and_stop():
                if self._server is not None:
                    self._server.close()
                    await self._server.wait_closed()
                self._loop.stop()

            asyncio.ensure_future(close_and_stop())

        self._loop.call_soon_threadsafe(shutdown)
        if self._thread is not None:
            self._thread.join(timeout=5)
