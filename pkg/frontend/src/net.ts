// Thin WebSocket wrapper: ordered JSON frames in, JSON frames out.

export interface Connection {
  send(msg: unknown): void;
  close(): void;
}

export interface NetCallbacks {
  onMessage(raw: string): void;
  onOpen(): void;
  onClose(): void;
}

export function connect(url: string, callbacks: NetCallbacks): Connection {
  const ws = new WebSocket(url);
  ws.onopen = () => callbacks.onOpen();
  ws.onmessage = (ev) => callbacks.onMessage(String(ev.data));
  ws.onclose = () => callbacks.onClose();
  ws.onerror = () => {
    // onclose follows; the view shows the retry affordance there.
  };
  return {
    send: (msg) => ws.send(JSON.stringify(msg)),
    close: () => ws.close(),
  };
}
