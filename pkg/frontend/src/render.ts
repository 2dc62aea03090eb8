// Canvas rendering of the mirrored session state. Takes any 2D-context-like
// object so tests can record draw calls without a DOM.

import { ActionName, StateMsg } from "./protocol.js";
import { SessionView } from "./view.js";

export interface Ctx2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  font: string;
  textAlign: string;
  fillRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
}

export const TILE_COLORS: Record<string, string> = {
  X: "#8d7b6c", // counter
  O: "#d9a441", // onion source
  D: "#b9c4cc", // dish source
  P: "#4a4a55", // pot
  S: "#4f8a51", // serve window
  _: "#20242c", // floor
  " ": "#20242c",
};

export const HELD_COLORS: Record<string, string> = {
  onion: "#e0b84b",
  dish: "#e8e8e8",
  soup: "#c96a2f",
};

const AGENT_COLORS = ["#4da3ff", "#ff5d5d", "#5dff9c", "#d07bff"];
const FACING_OFFSETS: Record<ActionName, [number, number]> = {
  north: [0, -1],
  south: [0, 1],
  east: [1, 0],
  west: [-1, 0],
  stay: [0, 0],
  interact: [0, 0],
};

export const HUD_HEIGHT = 28;

export function canvasSize(state: StateMsg, cell: number): [number, number] {
  return [state.grid[0].length * cell, state.grid.length * cell + HUD_HEIGHT];
}

export function render(view: SessionView, ctx: Ctx2D, cell = 32): void {
  if (view.state === null) {
    renderBackdrop(ctx, cell, view);
    return;
  }
  const state = view.state;
  const width = state.grid[0].length * cell;
  const height = state.grid.length * cell;

  for (let y = 0; y < state.grid.length; y++) {
    for (let x = 0; x < state.grid[y].length; x++) {
      const ch = state.grid[y][x];
      ctx.fillStyle = TILE_COLORS[ch] ?? TILE_COLORS["_"];
      ctx.fillRect(x * cell, HUD_HEIGHT + y * cell, cell - 1, cell - 1);
    }
  }

  for (const pot of state.pots) {
    const px = pot.x * cell;
    const py = HUD_HEIGHT + pot.y * cell;
    ctx.fillStyle = pot.ready ? "#7bd07b" : "#d0c07b";
    ctx.font = `${Math.floor(cell / 2.4)}px monospace`;
    ctx.textAlign = "center";
    const label =
      pot.timer !== null && pot.timer > 0 ? `${pot.timer}` : `${pot.onions}/3`;
    ctx.fillText(label, px + cell / 2, py + cell / 1.6);
  }

  for (const counter of state.counters) {
    ctx.fillStyle = HELD_COLORS[counter.object] ?? "#fff";
    ctx.beginPath();
    ctx.arc(
      counter.x * cell + cell / 2,
      HUD_HEIGHT + counter.y * cell + cell / 2,
      cell / 6,
      0,
      Math.PI * 2,
    );
    ctx.fill();
  }

  state.agents.forEach((agent, i) => {
    const cx = agent.x * cell + cell / 2;
    const cy = HUD_HEIGHT + agent.y * cell + cell / 2;
    ctx.fillStyle = AGENT_COLORS[i % AGENT_COLORS.length];
    ctx.beginPath();
    ctx.arc(cx, cy, cell / 2.6, 0, Math.PI * 2);
    ctx.fill();
    // Facing wedge.
    const [dx, dy] = FACING_OFFSETS[agent.facing];
    ctx.fillStyle = "#10131a";
    ctx.beginPath();
    ctx.arc(cx + (dx * cell) / 3.2, cy + (dy * cell) / 3.2, cell / 9, 0, Math.PI * 2);
    ctx.fill();
    if (agent.held !== "nothing") {
      ctx.fillStyle = HELD_COLORS[agent.held];
      ctx.beginPath();
      ctx.arc(cx + cell / 4, cy - cell / 4, cell / 7, 0, Math.PI * 2);
      ctx.fill();
    }
  });

  // HUD: server score and step, never locally accumulated.
  ctx.fillStyle = "#10131a";
  ctx.fillRect(0, 0, width, HUD_HEIGHT);
  ctx.fillStyle = "#e8e8e8";
  ctx.font = "14px monospace";
  ctx.textAlign = "left";
  const you = view.slot !== null ? `  you: ${view.slot}` : "";
  const pending = view.pendingAction ? "  [submitted]" : "";
  ctx.fillText(`score ${view.score}  step ${state.step}${you}${pending}`, 6, 19);

  if (view.flash && state.step - view.flash.step <= 3) {
    ctx.fillStyle = "#ffe28a";
    ctx.textAlign = "center";
    ctx.font = `${Math.floor(cell / 1.5)}px monospace`;
    ctx.fillText(`+${view.flash.amount}`, width / 2, HUD_HEIGHT + cell);
  }

  if (view.phase === "finished") {
    ctx.fillStyle = "rgba(10, 12, 18, 0.82)";
    ctx.fillRect(0, HUD_HEIGHT, width, height);
    ctx.fillStyle = "#ffffff";
    ctx.textAlign = "center";
    ctx.font = "22px monospace";
    ctx.fillText(`game over -- score ${view.score}`, width / 2, HUD_HEIGHT + height / 2);
  }

  if (view.banner) {
    ctx.fillStyle = "#b03030";
    ctx.fillRect(0, HUD_HEIGHT, width, 22);
    ctx.fillStyle = "#ffffff";
    ctx.textAlign = "left";
    ctx.font = "13px monospace";
    ctx.fillText(view.banner, 6, HUD_HEIGHT + 16);
  }
}

function renderBackdrop(ctx: Ctx2D, cell: number, view: SessionView): void {
  ctx.fillStyle = "#10131a";
  ctx.fillRect(0, 0, 10 * cell, 6 * cell);
  ctx.fillStyle = "#e8e8e8";
  ctx.font = "16px monospace";
  ctx.textAlign = "left";
  const label =
    view.phase === "lobby"
      ? `waiting for teammates: slots ${view.waitingFor.join(", ")}`
      : view.phase === "disconnected"
        ? "connection lost -- press R to retry"
        : "connecting...";
  ctx.fillText(label, 10, 30);
  if (view.banner) {
    ctx.fillStyle = "#ff9c9c";
    ctx.fillText(view.banner, 10, 56);
  }
}
