// Client-side session state: a pure reducer over server messages. The view
// always mirrors the latest state broadcast -- no prediction, no local score
// accumulation.

import { MalformedMessage, ServerMessage, StateMsg, parseServerMessage } from "./protocol.js";

export type Phase = "connecting" | "lobby" | "running" | "finished" | "disconnected";

export interface RewardFlash {
  amount: number;
  step: number;
}

export class SessionView {
  phase: Phase = "connecting";
  slot: number | null = null;
  state: StateMsg | null = null;
  waitingFor: number[] = [];
  flash: RewardFlash | null = null;
  finalScore: number | null = null;
  replayId: string | null = null;
  banner: string | null = null;
  submittedStep: number | null = null;

  get score(): number {
    // HUD score is exactly the server's cumulative score.
    if (this.finalScore !== null) return this.finalScore;
    return this.state ? this.state.score : 0;
  }

  get step(): number {
    return this.state ? this.state.step : 0;
  }

  get pendingAction(): boolean {
    return (
      this.phase === "running" &&
      this.state !== null &&
      this.submittedStep === this.state.step
    );
  }

  canSubmit(): boolean {
    return this.phase === "running" && this.state !== null && !this.pendingAction;
  }

  noteSubmitted(step: number): void {
    this.submittedStep = step;
  }

  applyRaw(raw: string): void {
    let msg: ServerMessage;
    try {
      msg = parseServerMessage(raw);
    } catch (err) {
      if (err instanceof MalformedMessage) {
        this.banner = `bad message: ${err.message}`; // connection stays up
        return;
      }
      throw err;
    }
    this.apply(msg);
  }

  apply(msg: ServerMessage): void {
    switch (msg.type) {
      case "joined":
        this.slot = msg.slot;
        if (this.phase === "connecting") this.phase = "lobby";
        break;
      case "lobby":
        this.phase = "lobby";
        this.waitingFor = msg.waiting;
        break;
      case "state":
        this.state = msg;
        if (this.phase !== "finished") this.phase = "running";
        break;
      case "step_result":
        if (msg.reward > 0) {
          this.flash = { amount: msg.reward, step: msg.step };
        }
        break;
      case "game_over":
        this.phase = "finished";
        this.finalScore = msg.score;
        this.replayId = msg.replay_id;
        break;
      case "error":
        this.banner = `${msg.code}: ${msg.message}`;
        break;
      case "ack":
      case "created":
        break;
    }
  }

  disconnected(): void {
    if (this.phase !== "finished") {
      this.phase = "disconnected";
      this.banner = "connection lost";
    }
  }
}
