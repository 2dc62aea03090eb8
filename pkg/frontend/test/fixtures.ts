import { StateMsg } from "../src/protocol.js";

export function stateMsg(step: number, score: number): StateMsg {
  return {
    type: "state",
    session: "s",
    step,
    grid: ["XXPXX", "O1_2O", "X___X", "XDXSX"],
    agents: [
      { x: 1, y: 1, facing: "north", held: "nothing" },
      { x: 3, y: 1, facing: "south", held: "onion" },
    ],
    pots: [{ x: 2, y: 0, onions: 3, timer: 7, ready: false }],
    counters: [{ x: 0, y: 2, object: "dish" }],
    score,
  };
}
