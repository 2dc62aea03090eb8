// Entry point: read server/session/slot from the URL query, join, and run
// the render/input loop. Example:
//   play.html?server=ws://127.0.0.1:8765&session=study&slot=0

import { InputGate } from "./input.js";
import { connect, Connection } from "./net.js";
import { joinMessage } from "./protocol.js";
import { canvasSize, render } from "./render.js";
import { SessionView } from "./view.js";

const CELL = 40;

function start(): void {
  const params = new URLSearchParams(window.location.search);
  const server = params.get("server") ?? "ws://127.0.0.1:8765";
  const session = params.get("session") ?? "default";
  const slot = parseInt(params.get("slot") ?? "0", 10);

  const canvas = document.getElementById("kitchen") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const view = new SessionView();
  const gate = new InputGate(session);
  let conn: Connection | null = null;

  const repaint = () => {
    if (view.state) {
      const [w, h] = canvasSize(view.state, CELL);
      if (canvas.width !== w || canvas.height !== h) {
        canvas.width = w;
        canvas.height = h;
      }
    }
    render(view, ctx, CELL);
  };

  const open = () => {
    conn = connect(server, {
      onOpen: () => {
        conn!.send(joinMessage(session, slot));
        repaint();
      },
      onMessage: (raw) => {
        view.applyRaw(raw);
        repaint(); // every broadcast repaints within the same frame cycle
      },
      onClose: () => {
        view.disconnected();
        repaint();
      },
    });
  };

  window.addEventListener("keydown", (ev) => {
    if (view.phase === "disconnected" && (ev.key === "r" || ev.key === "R")) {
      view.phase = "connecting";
      view.banner = null;
      open();
      repaint();
      return;
    }
    const msg = gate.handleKey(ev, view);
    if (msg && conn) {
      conn.send(msg);
      repaint(); // show the submitted indicator immediately
    }
  });

  open();
  repaint();
}

window.addEventListener("DOMContentLoaded", start);
