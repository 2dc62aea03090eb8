import { describe, expect, it } from "vitest";

import { Ctx2D, canvasSize, render } from "../src/render.js";
import { SessionView } from "../src/view.js";
import { stateMsg } from "./fixtures.js";

class RecordingCtx implements Ctx2D {
  fillStyle: string = "";
  font = "";
  textAlign = "";
  rects: Array<[number, number, number, number]> = [];
  texts: string[] = [];
  arcs = 0;

  fillRect(x: number, y: number, w: number, h: number): void {
    this.rects.push([x, y, w, h]);
  }
  fillText(text: string): void {
    this.texts.push(text);
  }
  beginPath(): void {}
  arc(): void {
    this.arcs += 1;
  }
  fill(): void {}
}

describe("render", () => {
  it("draws every tile, agents, pots, counters, and the HUD", () => {
    const view = new SessionView();
    view.apply({ type: "joined", session: "s", slot: 0 });
    view.apply(stateMsg(4, 23));
    const ctx = new RecordingCtx();
    render(view, ctx, 32);
    // 5x4 tiles plus the HUD bar.
    expect(ctx.rects.length).toBe(20 + 1);
    expect(ctx.texts.some((t) => t.includes("score 23"))).toBe(true);
    expect(ctx.texts.some((t) => t.includes("step 4"))).toBe(true);
    // Pot countdown is rendered while cooking.
    expect(ctx.texts.some((t) => t === "7")).toBe(true);
    // Two agents (body + facing) and one counter object need arcs.
    expect(ctx.arcs).toBeGreaterThanOrEqual(5);
    expect(canvasSize(view.state!, 32)).toEqual([160, 128 + 28]);
  });

  it("shows the submitted indicator and reward flash", () => {
    const view = new SessionView();
    view.apply({ type: "joined", session: "s", slot: 0 });
    view.apply(stateMsg(2, 3));
    view.apply({ type: "step_result", step: 2, events: {}, reward: 20 });
    view.noteSubmitted(2);
    const ctx = new RecordingCtx();
    render(view, ctx, 32);
    expect(ctx.texts.some((t) => t.includes("[submitted]"))).toBe(true);
    expect(ctx.texts.some((t) => t === "+20")).toBe(true);
  });

  it("renders the game-over overlay with the final score", () => {
    const view = new SessionView();
    view.apply(stateMsg(400, 120));
    view.apply({ type: "game_over", score: 120, replay_id: "r" });
    const ctx = new RecordingCtx();
    render(view, ctx, 32);
    expect(ctx.texts.some((t) => t.includes("game over"))).toBe(true);
    expect(ctx.texts.some((t) => t.includes("120"))).toBe(true);
  });

  it("renders lobby and disconnect backdrops", () => {
    const view = new SessionView();
    view.apply({ type: "joined", session: "s", slot: 0 });
    view.apply({ type: "lobby", session: "s", waiting: [1, 2] });
    const ctx = new RecordingCtx();
    render(view, ctx, 32);
    expect(ctx.texts.some((t) => t.includes("waiting for teammates"))).toBe(true);

    view.disconnected();
    const ctx2 = new RecordingCtx();
    render(view, ctx2, 32);
    expect(ctx2.texts.some((t) => t.includes("retry"))).toBe(true);
  });
});
