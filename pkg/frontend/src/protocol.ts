// Wire protocol shared with the session server. One JSON message per frame;
// field names are normative.

export type ActionName = "north" | "south" | "east" | "west" | "stay" | "interact";

export const ACTION_NAMES: ActionName[] = ["north", "south", "east", "west", "stay", "interact"];

export interface AgentView {
  x: number;
  y: number;
  facing: ActionName;
  held: "nothing" | "onion" | "dish" | "soup";
}

export interface PotView {
  x: number;
  y: number;
  onions: number;
  timer: number | null;
  ready: boolean;
}

export interface CounterView {
  x: number;
  y: number;
  object: "onion" | "dish" | "soup";
}

export interface StateMsg {
  type: "state";
  session: string;
  step: number;
  grid: string[];
  agents: AgentView[];
  pots: PotView[];
  counters: CounterView[];
  score: number;
}

export interface StepResultMsg {
  type: "step_result";
  step: number;
  events: Record<string, unknown>;
  reward: number;
}

export interface GameOverMsg {
  type: "game_over";
  score: number;
  replay_id: string;
}

export interface ErrorMsg {
  type: "error";
  code: string;
  message: string;
}

export interface JoinedMsg {
  type: "joined";
  session: string;
  slot: number | null;
}

export interface LobbyMsg {
  type: "lobby";
  session: string;
  waiting: number[];
}

export interface AckMsg {
  type: "ack";
  step: number;
  slot: number;
}

export interface CreatedMsg {
  type: "created";
  session: string;
  slots: string[];
}

export type ServerMessage =
  | StateMsg
  | StepResultMsg
  | GameOverMsg
  | ErrorMsg
  | JoinedMsg
  | LobbyMsg
  | AckMsg
  | CreatedMsg;

export interface ActionMsg {
  type: "action";
  session: string;
  step: number;
  slot: number;
  action: ActionName;
}

export function joinMessage(session: string, slot: number) {
  return { type: "join", session, slot };
}

export function actionMessage(session: string, step: number, slot: number, action: ActionName): ActionMsg {
  return { type: "action", session, step, slot, action };
}

export class MalformedMessage extends Error {}

const REQUIRED_FIELDS: Record<string, string[]> = {
  state: ["step", "grid", "agents", "pots", "score"],
  step_result: ["step", "events"],
  game_over: ["score", "replay_id"],
  error: ["code", "message"],
  joined: ["session"],
  lobby: ["session", "waiting"],
  ack: ["step", "slot"],
  created: ["session"],
};

// Parse one frame; throws MalformedMessage on garbage so the caller can show
// an error banner without dropping the connection.
export function parseServerMessage(raw: string): ServerMessage {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    throw new MalformedMessage("unparseable frame");
  }
  if (typeof data !== "object" || data === null || typeof (data as { type?: unknown }).type !== "string") {
    throw new MalformedMessage("missing type");
  }
  const msg = data as Record<string, unknown> & { type: string };
  const required = REQUIRED_FIELDS[msg.type];
  if (!required) {
    throw new MalformedMessage(`unknown type ${msg.type}`);
  }
  for (const field of required) {
    if (!(field in msg)) {
      throw new MalformedMessage(`${msg.type} missing ${field}`);
    }
  }
  return msg as unknown as ServerMessage;
}
