// Wire protocol message shapes. The engine speaks JSON texts over a
// WebSocket; every message carries a strictly increasing seq per direction.

export const PROTOCOL_SCHEMA_VERSION = 1;

export interface BoxPayload {
  center: [number, number, number];
  half_extents: [number, number, number];
  yaw: number;
}

export interface TrackPayload {
  track_id: number;
  class_id: number;
  center: [number, number, number];
  half_extents: [number, number, number];
  yaw: number;
  last_seen: number;
  hits: number;
}

export interface StepPayload {
  step_index: number;
  action: "place" | "remove";
  type_id: number;
  instance_id: number;
  status: string;
  part_not_visible: boolean;
  bound_track_id: number | null;
  pick: BoxPayload | null;
  place: BoxPayload | null;
}

export interface CandidateItem {
  index: number;
  edit_cost: number;
  stability_score: number;
  stable: boolean;
  removals: number;
  additions: number;
  placements: { type_id: number; cell: [number, number, number]; yaw: number }[];
}

export interface TypeInfo {
  type_id: number;
  name: string;
  color_tag: string;
  footprint: [number, number, number];
}

export type ServerMessage =
  | { type: "hello_ok"; seq: number; schema_version: number }
  | {
      type: "scenario_loaded";
      seq: number;
      scenario_digest: string;
      frames: number;
      mode: string;
      steps: number;
      cell_size: [number, number, number];
      work_area: { x: [number, number]; y: [number, number]; z_max: number };
      plane_extent: [[number, number], [number, number]];
      types: TypeInfo[];
    }
  | { type: "twin_snapshot"; seq: number; frame: number; tracks: TrackPayload[] }
  | {
      type: "step_instruction";
      seq: number;
      frame: number;
      step: StepPayload | null;
      plan_complete: boolean;
      phase: "idle" | "holding" | "placed";
    }
  | {
      type: "feedback";
      seq: number;
      frame: number;
      kind: "check" | "cross";
      position: [number, number, number];
      track_id: number | null;
    }
  | { type: "candidates"; seq: number; items: CandidateItem[] }
  | {
      type: "stability_report";
      seq: number;
      frame: number;
      report: { stable: boolean; score: number };
      placements: { type_id: number; cell: [number, number, number]; yaw: number }[];
    }
  | { type: "metrics"; seq: number; metrics: Record<string, unknown> }
  | { type: "error"; seq: number; code: string; message: string };

export type ClientMessage =
  | { type: "hello"; seq: number; schema_version: number }
  | { type: "load_scenario"; seq: number; scenario?: unknown; path?: string }
  | { type: "tick"; seq: number; frames: number }
  | { type: "hand"; seq: number; position: [number, number, number]; hand?: string }
  | { type: "select_candidate"; seq: number; index: number }
  | { type: "mode_flags"; seq: number; flags: Record<string, unknown> };
