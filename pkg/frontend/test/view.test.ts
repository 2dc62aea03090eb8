import { describe, expect, it } from "vitest";

import { SessionView } from "../src/view.js";

import { stateMsg } from "./fixtures.js";

describe("SessionView", () => {
  it("walks connecting -> lobby -> running -> finished", () => {
    const view = new SessionView();
    view.apply({ type: "joined", session: "s", slot: 0 });
    expect(view.phase).toBe("lobby");
    view.apply({ type: "lobby", session: "s", waiting: [1] });
    expect(view.waitingFor).toEqual([1]);
    view.apply(stateMsg(0, 0));
    expect(view.phase).toBe("running");
    view.apply({ type: "game_over", score: 60, replay_id: "r1" });
    expect(view.phase).toBe("finished");
    expect(view.score).toBe(60);
    expect(view.replayId).toBe("r1");
  });

  it("mirrors the server score exactly, no local accumulation", () => {
    const view = new SessionView();
    view.apply(stateMsg(0, 0));
    view.apply({ type: "step_result", step: 0, events: {}, reward: 20 });
    // Score still comes from the last state broadcast only.
    expect(view.score).toBe(0);
    view.apply(stateMsg(1, 20));
    expect(view.score).toBe(20);
    view.apply(stateMsg(2, 20));
    expect(view.score).toBe(20);
  });

  it("flashes on paying reward events only", () => {
    const view = new SessionView();
    view.apply(stateMsg(0, 0));
    view.apply({ type: "step_result", step: 0, events: {}, reward: 0 });
    expect(view.flash).toBeNull();
    view.apply({ type: "step_result", step: 1, events: {}, reward: 3 });
    expect(view.flash).toEqual({ amount: 3, step: 1 });
  });

  it("shows error banners and survives malformed frames", () => {
    const view = new SessionView();
    view.apply(stateMsg(0, 0));
    view.applyRaw("garbage{{{");
    expect(view.banner).toMatch(/bad message/);
    expect(view.phase).toBe("running"); // connection kept
    view.apply({ type: "error", code: "stale-step", message: "server is at step 4" });
    expect(view.banner).toMatch(/stale-step/);
  });

  it("tracks the pending-action indicator per step", () => {
    const view = new SessionView();
    view.apply({ type: "joined", session: "s", slot: 0 });
    view.apply(stateMsg(5, 0));
    expect(view.canSubmit()).toBe(true);
    view.noteSubmitted(5);
    expect(view.pendingAction).toBe(true);
    expect(view.canSubmit()).toBe(false);
    view.apply(stateMsg(6, 0));
    expect(view.pendingAction).toBe(false);
    expect(view.canSubmit()).toBe(true);
  });
});
