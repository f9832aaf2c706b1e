// Sandbox wiring: connects to the engine, pumps ticks, maps the pointer to
// hand samples, and renders the workspace, structure preview, and candidate
// cards. All engine state shown here comes from server messages; the only
// local state is the pointer and connection status.

import { EngineClient } from "./client";
import type { ServerMessage } from "./protocol";
import { drawStructure, drawWorkspace, toWorld, typeColor, worldTransform } from "./render";
import { initialView, reduce, type ViewModel } from "./viewmodel";

const params = new URLSearchParams(location.search);
const endpoint = params.get("endpoint") ?? "ws://127.0.0.1:8765";
const scenarioUrl = params.get("scenario") ?? "";

const canvas = document.getElementById("workspace") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const structureCanvas = document.getElementById("structure") as HTMLCanvasElement;
const structureCtx = structureCanvas.getContext("2d")!;
const statusEl = document.getElementById("status")!;
const stepEl = document.getElementById("step")!;
const cardsEl = document.getElementById("cards")!;
const bannerEl = document.getElementById("banner")!;
const scenarioInput = document.getElementById("scenario-file") as HTMLInputElement;

let vm: ViewModel = initialView();
let pointer: [number, number] | null = null;
let pointerDown = false;
let ticking = false;
let scenarioLoaded = false;

const client = new EngineClient({
  url: endpoint,
  onMessage: (msg: ServerMessage) => {
    vm = reduce(vm, msg);
    if (msg.type === "hello_ok" && scenarioUrl) {
      void loadScenarioFromUrl(scenarioUrl);
    }
    if (msg.type === "scenario_loaded") {
      scenarioLoaded = true;
    }
    renderAll();
  },
  onStatus: (status) => {
    if (status === "closed") {
      vm = { ...vm, connection: "closed" };
      scenarioLoaded = false;
    }
    renderAll();
  },
});
client.connect();

async function loadScenarioFromUrl(url: string): Promise<void> {
  try {
    const response = await fetch(url);
    client.loadScenario(await response.json());
  } catch (err) {
    bannerEl.textContent = `failed to fetch scenario: ${err}`;
  }
}

scenarioInput.addEventListener("change", () => {
  const file = scenarioInput.files?.[0];
  if (!file) return;
  void file.text().then((text) => client.loadScenario(JSON.parse(text)));
});

// engine time: one tick per animation frame while a scenario is live
function pump(): void {
  if (vm.connection === "ready" && scenarioLoaded && !vm.planComplete && !ticking) {
    ticking = true;
    if (pointerDown && pointer) {
      client.hand(pointerToHand(pointer));
    }
    client.tick(1);
    // metrics arrives last in every tick bundle: release the pump there
  }
  requestAnimationFrame(pump);
}
requestAnimationFrame(pump);

const releaseOnMetrics = (msg: ServerMessage) => {
  if (msg.type === "metrics" || msg.type === "error") ticking = false;
};
const origOnMessage = client["opts"].onMessage;
client["opts"].onMessage = (msg: ServerMessage) => {
  origOnMessage(msg);
  releaseOnMetrics(msg);
};

// Pointer maps to a palm sample on the plane. Hover height follows the
// active step's target while holding so upper-layer placements are
// reachable from a 2D pointer.
function pointerToHand(p: [number, number]): [number, number, number] {
  let z = vm.cellSize[2] / 2;
  if (vm.phase === "holding" && vm.step?.place) {
    z = vm.step.place.center[2];
  }
  return [p[0], p[1], z];
}

canvas.addEventListener("pointermove", (ev) => {
  const rect = canvas.getBoundingClientRect();
  const t = worldTransform(vm, canvas.width, canvas.height);
  pointer = toWorld(t, ev.clientX - rect.left, ev.clientY - rect.top);
  renderAll();
});
canvas.addEventListener("pointerdown", () => {
  pointerDown = true;
});
window.addEventListener("pointerup", () => {
  pointerDown = false;
});
canvas.addEventListener("pointerleave", () => {
  pointer = null;
  renderAll();
});

function renderAll(): void {
  drawWorkspace(ctx, vm, canvas.width, canvas.height, pointer);
  drawStructure(structureCtx, vm, vm.structure, structureCanvas.width, structureCanvas.height);
  renderStatus();
  renderStep();
  renderCards();
}

function renderStatus(): void {
  const bits = [`frame ${vm.frame}`, vm.connection];
  if (vm.stability) {
    bits.push(
      vm.stability.stable
        ? `stable ${(vm.stability.score * 100).toFixed(0)}%`
        : "UNSTABLE",
    );
  }
  statusEl.textContent = bits.join(" | ");
  if (vm.connection === "version_mismatch") {
    bannerEl.textContent = `protocol version mismatch: ${vm.lastError ?? ""}`;
  } else if (vm.connection === "closed") {
    bannerEl.textContent = "connection lost, retrying...";
  } else if (vm.lastError) {
    bannerEl.textContent = vm.lastError;
  } else {
    bannerEl.textContent = "";
  }
}

function renderStep(): void {
  if (vm.planComplete) {
    stepEl.textContent = "assembly complete";
    return;
  }
  const step = vm.step;
  if (!step) {
    stepEl.textContent = scenarioLoaded ? "waiting for step" : "load a scenario";
    return;
  }
  const name =
    vm.types.find((t) => t.type_id === step.type_id)?.name ?? `type ${step.type_id}`;
  const verb = step.action === "remove" ? "remove" : "place";
  const visible = step.part_not_visible ? " (part not visible)" : "";
  stepEl.textContent =
    `step ${step.step_index + 1}/${vm.steps}: ${verb} ${name}` +
    `${vm.phase === "holding" ? " -> target outlined in red" : ""}${visible}`;
}

function renderCards(): void {
  cardsEl.replaceChildren();
  if (!vm.candidates.length) {
    cardsEl.classList.add("empty");
    return;
  }
  cardsEl.classList.remove("empty");
  vm.candidates.forEach((cand) => {
    const card = document.createElement("button");
    card.className = "card" + (cand.stable ? "" : " unstable");
    const thumb = document.createElement("canvas");
    thumb.width = 120;
    thumb.height = 90;
    drawStructure(thumb.getContext("2d")!, vm, cand.placements, 120, 90);
    card.appendChild(thumb);
    const label = document.createElement("div");
    label.textContent =
      `cost ${cand.edit_cost} | ` +
      (cand.stable ? `stability ${(cand.stability_score * 100).toFixed(0)}%` : "unstable");
    card.appendChild(label);
    card.addEventListener("click", () => {
      client.selectCandidate(cand.index);
    });
    cardsEl.appendChild(card);
  });
}

// color legend for the parts on the table
const legend = document.getElementById("legend")!;
setInterval(() => {
  legend.replaceChildren();
  for (const t of vm.types) {
    if (!vm.tracks.some((track) => track.class_id === t.type_id)) continue;
    const item = document.createElement("span");
    item.className = "legend-item";
    const dot = document.createElement("span");
    dot.className = "dot";
    dot.style.background = typeColor(vm, t.type_id);
    item.append(dot, ` ${t.name}`);
    legend.appendChild(item);
  }
}, 500);
