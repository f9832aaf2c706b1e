// Pure view state reducer: the rendered view is a fold over the server
// message stream. Replaying a recorded log through `reduce` rebuilds the
// exact same final view, which the tests rely on.

import type {
  CandidateItem,
  ServerMessage,
  StepPayload,
  TrackPayload,
  TypeInfo,
} from "./protocol";

export interface Badge {
  kind: "check" | "cross";
  position: [number, number, number];
  frame: number;
}

export interface ViewModel {
  connection: "connecting" | "ready" | "version_mismatch" | "closed";
  frame: number;
  steps: number;
  mode: string;
  cellSize: [number, number, number];
  planeExtent: [[number, number], [number, number]];
  types: TypeInfo[];
  tracks: TrackPayload[];
  step: StepPayload | null;
  phase: "idle" | "holding" | "placed";
  planComplete: boolean;
  badges: Badge[];
  candidates: CandidateItem[];
  structure: { type_id: number; cell: [number, number, number]; yaw: number }[];
  stability: { stable: boolean; score: number } | null;
  metrics: Record<string, unknown> | null;
  lastError: string | null;
  // view bounds grow monotonically so the canvas transform stays stable
  bounds: { x0: number; x1: number; y0: number; y1: number };
}

const MAX_BADGES = 8;

export function initialView(): ViewModel {
  return {
    connection: "connecting",
    frame: -1,
    steps: 0,
    mode: "",
    cellSize: [0.032, 0.032, 0.0192],
    planeExtent: [
      [0, 0.2],
      [0, 0.2],
    ],
    types: [],
    tracks: [],
    step: null,
    phase: "idle",
    planComplete: false,
    badges: [],
    candidates: [],
    structure: [],
    stability: null,
    metrics: null,
    lastError: null,
    bounds: { x0: -0.05, x1: 0.25, y0: -0.05, y1: 0.25 },
  };
}

function grownBounds(vm: ViewModel, xs: number[], ys: number[], pad = 0.06) {
  let { x0, x1, y0, y1 } = vm.bounds;
  for (const x of xs) {
    x0 = Math.min(x0, x - pad);
    x1 = Math.max(x1, x + pad);
  }
  for (const y of ys) {
    y0 = Math.min(y0, y - pad);
    y1 = Math.max(y1, y + pad);
  }
  return { x0, x1, y0, y1 };
}

export function reduce(vm: ViewModel, msg: ServerMessage): ViewModel {
  switch (msg.type) {
    case "hello_ok":
      return { ...vm, connection: "ready" };
    case "scenario_loaded":
      return {
        ...vm,
        steps: msg.steps,
        mode: msg.mode,
        cellSize: msg.cell_size,
        planeExtent: msg.plane_extent,
        types: msg.types,
        tracks: [],
        step: null,
        phase: "idle",
        planComplete: false,
        badges: [],
        candidates: [],
        structure: [],
        stability: null,
        metrics: null,
        lastError: null,
        bounds: grownBounds(
          { ...vm, bounds: initialView().bounds },
          msg.plane_extent[0],
          msg.plane_extent[1],
        ),
      };
    case "twin_snapshot": {
      const xs = msg.tracks.map((t) => t.center[0]);
      const ys = msg.tracks.map((t) => t.center[1]);
      return {
        ...vm,
        frame: msg.frame,
        tracks: msg.tracks,
        bounds: grownBounds(vm, xs, ys),
      };
    }
    case "step_instruction":
      return {
        ...vm,
        frame: msg.frame,
        step: msg.step,
        phase: msg.phase,
        planComplete: msg.plan_complete,
      };
    case "feedback": {
      const badges = [
        ...vm.badges,
        { kind: msg.kind, position: msg.position, frame: msg.frame },
      ].slice(-MAX_BADGES);
      return { ...vm, badges };
    }
    case "candidates":
      return { ...vm, candidates: msg.items };
    case "stability_report":
      return { ...vm, structure: msg.placements, stability: msg.report };
    case "metrics":
      return { ...vm, metrics: msg.metrics };
    case "error":
      if (msg.code === "VersionMismatch") {
        return { ...vm, connection: "version_mismatch", lastError: msg.message };
      }
      return { ...vm, lastError: `${msg.code}: ${msg.message}` };
    default:
      return vm;
  }
}

export function replay(messages: ServerMessage[]): ViewModel {
  return messages.reduce(reduce, initialView());
}

// Badges stay visible for a fixed number of engine frames after they fire.
export function visibleBadges(vm: ViewModel, ttlFrames = 45): Badge[] {
  return vm.badges.filter((b) => vm.frame - b.frame <= ttlFrames);
}
