// Canvas drawing: top-down orthographic workspace plus a small pseudo-
// isometric structure preview. Pure functions of the view model; the
// transform helpers are shared with the pointer-to-hand mapping.

import type { ViewModel } from "./viewmodel";
import { visibleBadges } from "./viewmodel";

const COLOR_TAGS: Record<string, string> = {
  red: "#e4572e",
  orange: "#f08a24",
  yellow: "#f3c13a",
  lime: "#9fc131",
  green: "#3f9e58",
  teal: "#2a9d8f",
  blue: "#3a6ea5",
  violet: "#7d5ba6",
  gray: "#8d99ae",
  black: "#3b3b3b",
  white: "#e8e8e8",
};

const FALLBACK = ["#e4572e", "#3a6ea5", "#3f9e58", "#f3c13a", "#7d5ba6", "#2a9d8f"];

export function typeColor(vm: ViewModel, typeId: number): string {
  const info = vm.types.find((t) => t.type_id === typeId);
  if (info && COLOR_TAGS[info.color_tag]) return COLOR_TAGS[info.color_tag];
  return FALLBACK[typeId % FALLBACK.length];
}

export interface Transform {
  scale: number;
  ox: number;
  oy: number;
  height: number;
}

export function worldTransform(vm: ViewModel, width: number, height: number): Transform {
  const { x0, x1, y0, y1 } = vm.bounds;
  const scale = Math.min(width / (x1 - x0), height / (y1 - y0));
  return { scale, ox: x0, oy: y0, height };
}

export function toCanvas(t: Transform, x: number, y: number): [number, number] {
  // +y up on the table maps to up on the screen
  return [(x - t.ox) * t.scale, t.height - (y - t.oy) * t.scale];
}

export function toWorld(t: Transform, px: number, py: number): [number, number] {
  return [px / t.scale + t.ox, (t.height - py) / t.scale + t.oy];
}

function boxPath(
  ctx: CanvasRenderingContext2D,
  t: Transform,
  center: [number, number, number],
  half: [number, number, number],
  yaw: number,
) {
  const c = Math.cos(yaw);
  const s = Math.sin(yaw);
  ctx.beginPath();
  const corners: [number, number][] = [
    [-half[0], -half[1]],
    [half[0], -half[1]],
    [half[0], half[1]],
    [-half[0], half[1]],
  ];
  corners.forEach(([dx, dy], i) => {
    const wx = center[0] + c * dx - s * dy;
    const wy = center[1] + s * dx + c * dy;
    const [px, py] = toCanvas(t, wx, wy);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.closePath();
}

export function drawWorkspace(
  ctx: CanvasRenderingContext2D,
  vm: ViewModel,
  width: number,
  height: number,
  pointer: [number, number] | null,
): void {
  const t = worldTransform(vm, width, height);
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#15171c";
  ctx.fillRect(0, 0, width, height);

  // work plane extent
  const [[wx0, wx1], [wy0, wy1]] = vm.planeExtent;
  const [ax, ay] = toCanvas(t, wx0, wy1);
  const [bx, by] = toCanvas(t, wx1, wy0);
  ctx.fillStyle = "#1e2230";
  ctx.fillRect(ax, ay, bx - ax, by - ay);
  ctx.strokeStyle = "#343b52";
  ctx.lineWidth = 1;
  const [sx, sy] = vm.cellSize;
  for (let x = wx0; x <= wx1 + 1e-9; x += sx) {
    const [p0x, p0y] = toCanvas(t, x, wy0);
    const [p1x, p1y] = toCanvas(t, x, wy1);
    ctx.beginPath();
    ctx.moveTo(p0x, p0y);
    ctx.lineTo(p1x, p1y);
    ctx.stroke();
  }
  for (let y = wy0; y <= wy1 + 1e-9; y += sy) {
    const [p0x, p0y] = toCanvas(t, wx0, y);
    const [p1x, p1y] = toCanvas(t, wx1, y);
    ctx.beginPath();
    ctx.moveTo(p0x, p0y);
    ctx.lineTo(p1x, p1y);
    ctx.stroke();
  }

  // built structure footprint (light fill under everything else)
  for (const p of vm.structure) {
    const cx = (p.cell[0] + 0.5) * sx;
    const cy = (p.cell[1] + 0.5) * sy;
    ctx.fillStyle = "#2c3822";
    boxPath(ctx, t, [cx, cy, 0], [sx / 2, sy / 2, 0], 0);
    ctx.fill();
  }

  // twin tracks
  for (const track of vm.tracks) {
    const isBound = vm.step?.bound_track_id === track.track_id;
    ctx.fillStyle = typeColor(vm, track.class_id);
    ctx.globalAlpha = 0.85;
    boxPath(ctx, t, track.center, track.half_extents, track.yaw);
    ctx.fill();
    ctx.globalAlpha = 1.0;
    if (isBound) {
      ctx.strokeStyle = "#6ee86e";
      ctx.lineWidth = 3;
      boxPath(
        ctx, t, track.center,
        [track.half_extents[0] + 0.004, track.half_extents[1] + 0.004, 0],
        track.yaw,
      );
      ctx.stroke();
    }
  }

  // target placement: red outline per the step instruction
  if (vm.step?.place) {
    ctx.strokeStyle = "#ff4040";
    ctx.lineWidth = 3;
    boxPath(ctx, t, vm.step.place.center, vm.step.place.half_extents, vm.step.place.yaw);
    ctx.stroke();
  }

  // feedback badges
  for (const badge of visibleBadges(vm)) {
    const [px, py] = toCanvas(t, badge.position[0], badge.position[1]);
    ctx.font = "bold 22px system-ui";
    ctx.textAlign = "center";
    ctx.textBaseline = "middle";
    if (badge.kind === "check") {
      ctx.fillStyle = "#49d869";
      ctx.fillText("✓", px, py);
    } else {
      ctx.fillStyle = "#ff5050";
      ctx.fillText("✗", px, py);
    }
  }

  // pointer crosshair
  if (pointer) {
    const [px, py] = toCanvas(t, pointer[0], pointer[1]);
    ctx.strokeStyle = "#c9d4ff";
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.arc(px, py, 7, 0, Math.PI * 2);
    ctx.stroke();
  }
}

// Small pseudo-isometric side view of a placement list (structure preview
// and candidate thumbnails).
export function drawStructure(
  ctx: CanvasRenderingContext2D,
  vm: ViewModel,
  placements: { type_id: number; cell: [number, number, number]; yaw: number }[],
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#12141a";
  ctx.fillRect(0, 0, width, height);
  if (!placements.length) return;

  const cells: { x: number; y: number; z: number; color: string }[] = [];
  for (const p of placements) {
    const info = vm.types.find((t) => t.type_id === p.type_id);
    const fp = info ? info.footprint : [1, 1, 1];
    const color = typeColor(vm, p.type_id);
    for (let dx = 0; dx < fp[0]; dx++) {
      for (let dy = 0; dy < fp[1]; dy++) {
        for (let dz = 0; dz < fp[2]; dz++) {
          const [rx, ry] = rotateCell(dx, dy, p.yaw);
          cells.push({ x: p.cell[0] + rx, y: p.cell[1] + ry, z: p.cell[2] + dz, color });
        }
      }
    }
  }
  const minX = Math.min(...cells.map((c) => c.x));
  const maxX = Math.max(...cells.map((c) => c.x));
  const minY = Math.min(...cells.map((c) => c.y));
  const maxY = Math.max(...cells.map((c) => c.y));
  const maxZ = Math.max(...cells.map((c) => c.z));
  const spanU = maxX - minX + 1 + (maxY - minY + 1) * 0.5;
  const spanV = maxZ + 2 + (maxY - minY + 1) * 0.3;
  const u = Math.min((width - 16) / spanU, (height - 16) / spanV);

  // painter's order: back to front, bottom to top
  cells.sort((a, b) => b.y - a.y || a.z - b.z || a.x - b.x);
  for (const cell of cells) {
    const px = 8 + (cell.x - minX + (cell.y - minY) * 0.5) * u;
    const py = height - 8 - (cell.z + (cell.y - minY) * 0.3) * u - u;
    ctx.fillStyle = cell.color;
    ctx.fillRect(px, py, u * 0.95, u * 0.95);
    ctx.strokeStyle = "#00000055";
    ctx.strokeRect(px, py, u * 0.95, u * 0.95);
  }
}

function rotateCell(x: number, y: number, yaw: number): [number, number] {
  switch (yaw) {
    case 90:
      return [-y, x];
    case 180:
      return [-x, -y];
    case 270:
      return [y, -x];
    default:
      return [x, y];
  }
}
