"""Live-play session server with synchronous stepping.

A session binds each agent slot to a human client, a policy checkpoint, or a
scripted controller. The world advances exactly once per complete action
set: machine actions are computed as soon as a state goes out but wait at
the same barrier as human actions, so machines never outpace people. Every
session persists a replay log; an interrupted session leaves a replayable
prefix.

The session engine is transport-agnostic (methods return the messages to
deliver); the websocket layer below maps them onto JSON text frames, one
message per frame.
"""

from __future__ import annotations

import asyncio
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env.layout import TILE_CHARS, load_layout
from .env.replay import record_episode, write_replay
from .env.sim import reset, step
from .env.state import ACTION_BY_NAME, ACTION_NAMES, HELD_NAMES, HORIZON

PROTOCOL_ACTIONS = set(ACTION_NAMES)


class SessionError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code
        self.message = message


def error_msg(code, message):
    return {"type": "error", "code": code, "message": message}


@dataclass
class SlotBinding:
    spec: str  # "human" or a controller spec string
    controller: object | None = None  # machine slots only
    client_id: str | None = None  # bound human connection

    @property
    def is_human(self):
        return self.spec == "human"


@dataclass
class Outgoing:
    """One message with its audience: a client id, 'all', or 'spectators'."""

    target: object
    message: dict


class Session:
    """One kitchen episode under the synchronous-stepping protocol."""

    def __init__(self, session_id, layout_name, slots, controller_factory=None,
                 seed=0, replay_dir=None, horizon=HORIZON):
        self.id = session_id
        self.layout_name = layout_name
        self.layout = load_layout(layout_name)
        if len(slots) > self.layout.max_agents:
            raise SessionError(
                "bad-bindings",
                f"layout {layout_name!r} supports {self.layout.max_agents} slots, got {len(slots)}",
            )
        self.n = len(slots)
        self.slots = []
        for i, spec in enumerate(slots):
            if spec == "human":
                self.slots.append(SlotBinding(spec="human"))
            else:
                if controller_factory is None:
                    raise SessionError("bad-bindings", f"no controller factory for {spec!r}")
                self.slots.append(SlotBinding(spec=spec, controller=controller_factory(spec, i)))
        self.seed = seed
        self.horizon = min(horizon, HORIZON)
        self.replay_dir = replay_dir
        self.status = "lobby"
        self.state = None
        self.pending = {}
        self.history = []  # (actions, events) pairs
        self.spectators = set()
        self.duplicate_submissions = 0
        self.steps_executed = 0
        self.replay_id = None
        self._rng = np.random.default_rng(seed)

    # -- message builders -------------------------------------------------

    def state_message(self):
        s = self.state
        grid = [
            "".join(TILE_CHARS[self.layout.tile(x, y)] for x in range(self.layout.width))
            for y in range(self.layout.height)
        ]
        return {
            "type": "state",
            "session": self.id,
            "step": s.t,
            "grid": grid,
            "agents": [
                {
                    "x": a.x,
                    "y": a.y,
                    "facing": ACTION_NAMES[int(a.facing)],
                    "held": HELD_NAMES[int(a.held)],
                }
                for a in s.agents
            ],
            "pots": [
                {
                    "x": cell[0],
                    "y": cell[1],
                    "onions": pot.onions,
                    "timer": pot.timer,
                    "ready": pot.ready,
                }
                for cell, pot in sorted(s.pots.items())
            ],
            "counters": [
                {"x": cell[0], "y": cell[1], "object": HELD_NAMES[int(kind)]}
                for cell, kind in sorted(s.counters.items())
            ],
            "score": s.score,
        }

    # -- protocol ----------------------------------------------------------

    def join(self, client_id, slot):
        """Bind a human client; starts the session once every human slot is
        filled. Returns outgoing messages."""
        if self.status == "finished":
            raise SessionError("finished", "session already finished")
        if not 0 <= slot < self.n:
            raise SessionError("bad-slot", f"slot {slot} outside 0..{self.n - 1}")
        binding = self.slots[slot]
        if not binding.is_human:
            raise SessionError("bad-slot", f"slot {slot} is not a human slot")
        if binding.client_id is not None and binding.client_id != client_id:
            raise SessionError("slot-taken", f"slot {slot} already bound")
        binding.client_id = client_id
        out = [Outgoing(client_id, {"type": "joined", "session": self.id, "slot": slot})]
        if self.status == "lobby" and all(
            b.client_id is not None for b in self.slots if b.is_human
        ):
            out += self._start()
        else:
            out.append(
                Outgoing(client_id, {"type": "lobby", "session": self.id,
                                     "waiting": self._missing_humans()})
            )
        return out

    def spectate(self, client_id):
        self.spectators.add(client_id)
        out = [Outgoing(client_id, {"type": "joined", "session": self.id, "slot": None})]
        if self.state is not None:
            out.append(Outgoing(client_id, self.state_message()))
        return out

    def _missing_humans(self):
        return [i for i, b in enumerate(self.slots) if b.is_human and b.client_id is None]

    def _start(self):
        self.status = "running"
        self.state = reset(self.layout, self.n, self.seed)
        out = [Outgoing("all", self.state_message())]
        self._queue_machine_actions()
        out += self._advance_while_complete()
        return out

    def submit_action(self, slot, step_index, action_name, client_id=None):
        """Buffer one action; advances the world when the set completes."""
        if self.status != "running":
            raise SessionError("not-running", f"session is {self.status}")
        if not 0 <= slot < self.n:
            raise SessionError("bad-slot", f"slot {slot} outside 0..{self.n - 1}")
        binding = self.slots[slot]
        if binding.is_human and client_id is not None and binding.client_id != client_id:
            raise SessionError("bad-slot", f"slot {slot} is not bound to this client")
        if action_name not in PROTOCOL_ACTIONS:
            raise SessionError("bad-action", f"unknown action {action_name!r}")
        if step_index != self.state.t:
            raise SessionError("stale-step", f"server is at step {self.state.t}")
        if slot in self.pending:
            self.duplicate_submissions += 1  # last write wins, logged
        self.pending[slot] = ACTION_BY_NAME[action_name]
        out = [Outgoing(client_id, {"type": "ack", "step": step_index, "slot": slot})] if client_id else []
        out += self._advance_while_complete()
        return out

    def _queue_machine_actions(self):
        for i, b in enumerate(self.slots):
            if not b.is_human and i not in self.pending:
                self.pending[i] = int(b.controller.act(self.state, i, self._rng))

    def _advance_while_complete(self):
        out = []
        while self.status == "running" and len(self.pending) == self.n:
            out += self._advance()
        return out

    def _advance(self):
        actions = tuple(int(self.pending[i]) for i in range(self.n))
        prev = self.state
        self.state, events = step(self.state, actions)
        self.steps_executed += 1
        self.pending = {}
        self.history.append((actions, events))
        for b in self.slots:
            if not b.is_human and hasattr(b.controller, "observe"):
                b.controller.observe(prev, actions)
        out = [
            Outgoing("all", {"type": "step_result", "step": prev.t,
                             "events": events.to_json(), "reward": events.reward}),
            Outgoing("all", self.state_message()),
        ]
        if self.state.t >= self.horizon:
            out += self.finish()
        else:
            self._queue_machine_actions()
        return out

    def finish(self, truncated=False):
        """Persist the replay and broadcast game_over; idempotent."""
        if self.status == "finished":
            return []
        self.status = "finished"
        log = record_episode(
            self.layout_name,
            self.seed,
            [b.spec for b in self.slots],
            self.history,
            self.state.score if self.state else 0,
            truncated=truncated or (self.state is not None and self.state.t < self.horizon),
        )
        self.replay_id = f"{self.id}-{len(self.history)}"
        if self.replay_dir is not None:
            Path(self.replay_dir).mkdir(parents=True, exist_ok=True)
            write_replay(log, Path(self.replay_dir) / f"{self.replay_id}.replay")
        self.log = log
        return [
            Outgoing("all", {"type": "game_over", "score": log.final_score,
                             "replay_id": self.replay_id})
        ]


class SessionManager:
    """Owns sessions and resolves machine-slot controller specs."""

    def __init__(self, checkpoint_dir=None, replay_dir=None, default_seed=0):
        self.sessions = {}
        self.checkpoint_dir = checkpoint_dir
        self.replay_dir = replay_dir
        self.default_seed = default_seed

    def create(self, session_id, layout_name, slots, seed=None, horizon=None):
        if session_id in self.sessions:
            raise SessionError("exists", f"session {session_id!r} already exists")

        def factory(spec, slot):
            from .cli import resolve_controller

            return resolve_controller(spec, slot, layout_name, base_dir=self.checkpoint_dir)

        session = Session(
            session_id,
            layout_name,
            slots,
            controller_factory=factory,
            seed=self.default_seed if seed is None else seed,
            replay_dir=self.replay_dir,
            horizon=horizon or HORIZON,
        )
        self.sessions[session_id] = session
        return session

    def get(self, session_id):
        session = self.sessions.get(session_id)
        if session is None:
            raise SessionError("unknown-session", f"no session {session_id!r}")
        return session


def handle_message(manager, client_id, msg):
    """Dispatch one inbound wire message; returns outgoing messages."""
    try:
        mtype = msg.get("type")
        if mtype == "create":
            session = manager.create(
                msg["session"], msg["layout"], msg["slots"], seed=msg.get("seed"),
                horizon=msg.get("horizon"),
            )
            return [Outgoing(client_id, {"type": "created", "session": session.id,
                                         "slots": [b.spec for b in session.slots]})]
        if mtype == "join":
            return manager.get(msg["session"]).join(client_id, msg["slot"])
        if mtype == "spectate":
            return manager.get(msg["session"]).spectate(client_id)
        if mtype == "action":
            session = manager.get(msg["session"])
            return session.submit_action(
                msg["slot"], msg["step"], msg["action"], client_id=client_id
            )
        if mtype == "stop":
            return manager.get(msg["session"]).finish(truncated=True)
        return [Outgoing(client_id, error_msg("bad-type", f"unknown type {mtype!r}"))]
    except SessionError as exc:
        return [Outgoing(client_id, error_msg(exc.code, exc.message))]
    except KeyError as exc:
        return [Outgoing(client_id, error_msg("bad-message", f"missing field {exc}"))]


async def serve(host="127.0.0.1", port=8765, checkpoint_dir=None, replay_dir="replays",
                step_timeout=None, ready_event=None):
    """Run the websocket server until cancelled."""
    import websockets

    manager = SessionManager(checkpoint_dir=checkpoint_dir, replay_dir=replay_dir)
    connections = {}
    members = {}  # session id -> set of client ids
    counter = {"n": 0}

    async def deliver(session, outgoing):
        for out in outgoing:
            frame = json.dumps(out.message)
            if out.target == "all":
                targets = members.get(session.id, set()) | session.spectators
            elif out.target == "spectators":
                targets = set(session.spectators)
            else:
                targets = {out.target} if out.target else set()
            for cid in targets:
                ws = connections.get(cid)
                if ws is not None:
                    try:
                        await ws.send(frame)
                    except Exception:
                        pass

    async def handler(ws):
        counter["n"] += 1
        client_id = f"c{counter['n']}"
        connections[client_id] = ws
        timeout_task = None
        try:
            async for raw in ws:
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await ws.send(json.dumps(error_msg("bad-json", "unparseable frame")))
                    continue
                out = handle_message(manager, client_id, msg)
                session = None
                sid = msg.get("session")
                if sid in manager.sessions:
                    session = manager.sessions[sid]
                    if msg.get("type") in ("join", "spectate"):
                        members.setdefault(sid, set()).add(client_id)
                if session is not None:
                    await deliver(session, out)
                    if step_timeout and session.status == "running":
                        if timeout_task:
                            timeout_task.cancel()
                        timeout_task = asyncio.get_event_loop().call_later(
                            step_timeout, _fill_stays, manager, session, deliver
                        )
                else:
                    for o in out:
                        if o.target == client_id:
                            await ws.send(json.dumps(o.message))
        finally:
            connections.pop(client_id, None)
            for sid, ids in members.items():
                if client_id in ids:
                    ids.discard(client_id)
                    session = manager.sessions.get(sid)
                    # A running session with no connected humans persists its
                    # prefix so the episode stays replayable.
                    if session and session.status == "running" and not ids:
                        session.finish(truncated=True)

    def _fill_stays(manager, session, deliver_fn):
        if session.status != "running":
            return
        out = []
        for i, b in enumerate(session.slots):
            if b.is_human and i not in session.pending:
                out += session.submit_action(i, session.state.t, "stay")
        if out:
            asyncio.ensure_future(deliver_fn(session, out))

    server = await websockets.serve(handler, host, port)
    if ready_event is not None:
        ready_event.set()
    try:
        await asyncio.Future()
    finally:
        server.close()
        await server.wait_closed()


def serve_forever(host="127.0.0.1", port=8765, checkpoint_dir=None,
                  replay_dir="replays", step_timeout=None):
    try:
        asyncio.run(serve(host=host, port=port, checkpoint_dir=checkpoint_dir,
                          replay_dir=replay_dir, step_timeout=step_timeout))
    except KeyboardInterrupt:
        pass
