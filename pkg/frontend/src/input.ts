// Keyboard -> wire actions, with the one-action-per-step rule. Stay is an
// explicit keypress (period), never a timeout default: humans set the pace.

import { ActionMsg, ActionName, actionMessage } from "./protocol.js";
import { SessionView } from "./view.js";

export const KEYMAP: Record<string, ActionName> = {
  ArrowUp: "north",
  ArrowDown: "south",
  ArrowLeft: "west",
  ArrowRight: "east",
  w: "north",
  s: "south",
  a: "west",
  d: "east",
  " ": "interact",
  ".": "stay",
};

export interface KeyLike {
  key: string;
}

export class InputGate {
  constructor(private session: string) {}

  // Returns the action message to send, or null (unknown key, not running,
  // or this step's action already went out).
  handleKey(event: KeyLike, view: SessionView): ActionMsg | null {
    const action = KEYMAP[event.key];
    if (action === undefined) return null;
    if (!view.canSubmit() || view.state === null || view.slot === null) return null;
    const msg = actionMessage(this.session, view.state.step, view.slot, action);
    view.noteSubmitted(view.state.step);
    return msg;
  }
}
