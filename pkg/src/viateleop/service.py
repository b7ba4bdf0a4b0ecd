"""Real-time session bridge for the interactive mode.

A dedicated thread owns the simulation and advances it at 1 kHz against
the wall clock; WebSocket I/O lives on the asyncio side and exchanges
data with the simulation through latest-wins slots, so a slow or silent
client can never stall the loop.  Inbound handle positions are resampled
onto the tick grid (zero-order hold with a velocity clamp, safety hold on
stale input); outbound state snapshots stream at the configured rate.
Trials are scored by the same metrics module as batch runs, on the same
tick kernel, and full-rate traces can be recorded in the batch CSV
schema.
"""

from __future__ import annotations

import asyncio
import json
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import engine
from .config import ServiceConfig
from .impedance import Mode, impedance_for_mode
from .metrics import (NoImpactError, SettlingSpec, dynamic_metrics,
                      precision_metrics)
from .params import SystemParams, pack_params
from .teleop import Trace

PROTOCOL_VERSION = 1


class SessionError(RuntimeError):
    pass


@dataclass
class _TrialState:
    task: str
    target: float
    start_tick: int
    frames: list = field(default_factory=list)
    settle_run: int = 0  # consecutive in-band ticks so far


class SimulationSession:
    """Owns the simulated teleoperator for one interactive client at a time.

    All mutation of simulation state happens on the thread that calls
    ``tick`` (the pacing thread in live mode, the test directly in virtual
    mode); the public setters only swap small atomic slots.
    """

    def __init__(self, cfg: ServiceConfig, system: SystemParams | None = None,
                 settling: SettlingSpec | None = None):
        self.cfg = cfg
        self.system = system or SystemParams()
        self.settling = settling or SettlingSpec()
        self.dt = self.system.plant.control_dt
        self.mode = Mode(cfg.default_mode)
        self._lock = threading.Lock()
        self._latest_input: Optional[tuple[float, float]] = None  # (mono time, pos)
        self._pending_mode: Optional[Mode] = None
        self._pending_trial: Optional[tuple[str, float]] = None
        self._abort_trial = False
        self.state = engine.new_state_vector()
        cmd = impedance_for_mode(self.mode, 0.0, self.system.law)
        engine.settle_state(self.state, 0.0, 0.0, 0.0, cmd.k, cmd.b,
                            self.system.gains.c1)
        self._wall_pos = 0.0
        self._env = engine.ENV_FREE
        self._pvec = self._pack()
        self.tick_index = 0
        self.trial: Optional[_TrialState] = None
        self.snapshot: dict = {}
        self.results: list = []
        self._recording: Optional[list] = None
        self._frame = np.empty(engine.N_FRAME)
        self._hold_pos = 0.0

    def _pack(self) -> np.ndarray:
        return pack_params(self.system, self.mode.engine_id, self._env,
                           self._wall_pos, engine.COUPLING_KINEMATIC)

    # -- thread-safe client-facing setters ---------------------------------
    def submit_input(self, position: float, mono_time: Optional[float] = None) -> None:
        if not math.isfinite(position):
            raise SessionError("handle position must be finite")
        t = time.monotonic() if mono_time is None else mono_time
        with self._lock:
            self._latest_input = (t, float(position))

    def set_mode(self, mode: Mode) -> None:
        with self._lock:
            self._pending_mode = mode

    def start_trial(self, task: str, target: float) -> None:
        if task not in ("precision", "dynamic"):
            raise SessionError(f"unknown task {task!r}")
        if not math.isfinite(target):
            raise SessionError("target must be finite")
        with self._lock:
            if self._pending_trial is not None or self.trial is not None:
                raise SessionError("a trial is already active")
            self._pending_trial = (task, float(target))

    def abort_trial(self) -> None:
        with self._lock:
            self._abort_trial = True

    def start_recording(self) -> None:
        self._recording = []

    def stop_recording(self) -> Optional[Trace]:
        frames = self._recording
        self._recording = None
        if not frames:
            return None
        return Trace(np.array(frames))

    # -- simulation-side stepping -------------------------------------------
    def _resample_input(self, now_mono: float) -> tuple[float, float]:
        with self._lock:
            latest = self._latest_input
        cur = self.state[engine.S_THETA_M]
        if latest is None or now_mono - latest[0] > self.cfg.stale_hold_s:
            return cur, 0.0  # safety hold
        step = self.cfg.velocity_clamp * self.dt
        delta = np.clip(latest[1] - cur, -step, step)
        return cur + delta, delta / self.dt

    def tick(self, now_mono: Optional[float] = None) -> None:
        """Advance one control tick; call from the owning thread only."""
        now = time.monotonic() if now_mono is None else now_mono
        with self._lock:
            pending_mode, self._pending_mode = self._pending_mode, None
            pending_trial, self._pending_trial = self._pending_trial, None
            abort, self._abort_trial = self._abort_trial, False
        if pending_mode is not None and pending_mode is not self.mode:
            self.mode = pending_mode
            self._pvec = self._pack()
        if abort and self.trial is not None:
            self.trial = None
            self._set_env(engine.ENV_FREE, 0.0)
        if pending_trial is not None and self.trial is None:
            task, target = pending_trial
            if task == "dynamic":
                self._set_env(engine.ENV_WALL, target)
            else:
                self._set_env(engine.ENV_FREE, 0.0)
            self.trial = _TrialState(task=task, target=target,
                                     start_tick=self.tick_index)

        pos_next, vel_next = self._resample_input(now)
        t = self.tick_index * self.dt
        cur_pos = self.state[engine.S_THETA_M]
        cur_vel = self.state[engine.S_OMEGA_M]
        bad = engine.teleop_tick(self.state, self._pvec, t, cur_pos, cur_vel,
                                 pos_next, vel_next, self._frame)
        if bad != 0:
            raise SessionError(f"simulation diverged at tick {self.tick_index}")
        frame = self._frame.copy()
        if self._recording is not None:
            self._recording.append(frame)
        if self.trial is not None:
            self.trial.frames.append(frame)
            self._maybe_finish_trial()
        self.tick_index += 1
        stride = max(1, math.ceil(1.0 / (self.cfg.stream_hz * self.dt)))
        if self.tick_index % stride == 0:
            self._publish()

    def _set_env(self, env: int, wall_pos: float) -> None:
        self._env = env
        self._wall_pos = wall_pos
        self._pvec = self._pack()

    def _trial_window(self, task: str) -> float:
        return (self.cfg.precision_window if task == "precision"
                else self.cfg.dynamic_window)

    def _maybe_finish_trial(self) -> None:
        trial = self.trial
        n = len(trial.frames)
        elapsed = n * self.dt
        done = False
        if trial.task == "dynamic":
            done = trial.frames[-1][5] >= trial.target
        else:
            in_band = abs(trial.frames[-1][5] - trial.target) < self.settling.settle_band
            trial.settle_run = trial.settle_run + 1 if in_band else 0
            hold_n = int(round(self.settling.settle_hold / self.dt))
            done = trial.settle_run >= hold_n
        timeout = elapsed >= self._trial_window(trial.task)
        if not (done or timeout):
            return
        trace = Trace(np.array(trial.frames))
        result: dict = {"type": "trialResult", "task": trial.task,
                        "target": trial.target}
        try:
            if trial.task == "precision":
                outcome = precision_metrics(trace, float(trace.t[0]),
                                            trial.target, self.settling)
            else:
                outcome = dynamic_metrics(trace, trial.target)
            result.update(outcome.to_json_dict())
        except NoImpactError:
            result["error"] = "no impact within the trial window"
        self.trial = None
        self._set_env(engine.ENV_FREE, 0.0)
        self.results.append(result)
        self._publish()

    def _publish(self) -> None:
        f = self._frame
        self.snapshot = {
            "type": "state",
            "t": round(f[0], 6),
            "handle": f[1],
            "tool": f[5],
            "k_actual": f[9],
            "feedback_torque": f[12],
            "mode": self.mode.value,
            "target": self.trial.target if self.trial else None,
            "trial_active": self.trial is not None,
        }

    def pop_results(self) -> list:
        out, self.results = self.results, []
        return out


class SessionRunner:
    """Paces a SimulationSession at 1 kHz on a daemon thread."""

    def __init__(self, session: SimulationSession, max_catchup: int = 50):
        self.session = session
        self.max_catchup = max_catchup
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, daemon=True,
                                        name="viateleop-sim")
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    def _run(self) -> None:
        dt = self.session.dt
        next_t = time.monotonic()
        while not self._stop.is_set():
            now = time.monotonic()
            if now < next_t:
                time.sleep(min(next_t - now, 0.002))
                continue
            behind = int((now - next_t) / dt) + 1
            for _ in range(min(behind, self.max_catchup)):
                self.session.tick(time.monotonic())
                next_t += dt
            if behind > self.max_catchup:
                next_t = time.monotonic()  # drop lost time, stay real-time


def handle_message(session: SimulationSession, raw: str) -> Optional[dict]:
    """Apply one inbound client message; returns an error reply or None."""
    try:
        msg = json.loads(raw)
        kind = msg["type"]
        if kind == "handleInput":
            session.submit_input(float(msg["position"]))
        elif kind == "setMode":
            session.set_mode(Mode(msg["mode"]))
        elif kind == "startTrial":
            session.start_trial(str(msg["task"]), float(msg["target"]))
        elif kind == "ready":
            pass  # the client signals readiness; trials start on startTrial
        else:
            raise SessionError(f"unknown message type {kind!r}")
    except (KeyError, TypeError, ValueError, SessionError) as e:
        return {"type": "error", "message": str(e)}
    return None


def create_app(cfg: ServiceConfig | None = None,
               system: SystemParams | None = None,
               settling: SettlingSpec | None = None,
               static_dir: Path | str | None = None):
    """ASGI app with the /session WebSocket and optional static frontend."""
    from fastapi import FastAPI, WebSocket, WebSocketDisconnect

    cfg = cfg or ServiceConfig()
    session = SimulationSession(cfg, system, settling)
    runner = SessionRunner(session)
    app = FastAPI(title="viateleop session service")
    app.state.session = session
    app.state.runner = runner

    @app.on_event("startup")
    async def _startup():
        runner.start()

    @app.on_event("shutdown")
    async def _shutdown():
        runner.stop()

    @app.websocket("/session")
    async def session_socket(ws: WebSocket):
        await ws.accept()
        await ws.send_text(json.dumps({
            "type": "hello", "protocol": PROTOCOL_VERSION,
            "mode": session.mode.value,
            "stream_hz": cfg.stream_hz,
            "position_range": [-0.42, 0.5],
        }))
        stop = asyncio.Event()

        async def sender():
            period = 1.0 / cfg.stream_hz
            last_sent: Optional[float] = None
            while not stop.is_set():
                for result in session.pop_results():
                    await ws.send_text(json.dumps(result))
                snap = session.snapshot
                if snap and snap.get("t") != last_sent:
                    last_sent = snap["t"]
                    await ws.send_text(json.dumps(snap))
                await asyncio.sleep(period)

        send_task = asyncio.create_task(sender())
        try:
            while True:
                raw = await ws.receive_text()
                reply = handle_message(session, raw)
                if reply is not None:
                    await ws.send_text(json.dumps(reply))
        except WebSocketDisconnect:
            session.abort_trial()
        finally:
            stop.set()
            send_task.cancel()

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="frontend")
    return app


def default_static_dir() -> Optional[Path]:
    root = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return root if root.is_dir() else None


def serve(cfg: ServiceConfig, system: SystemParams | None = None,
          settling: SettlingSpec | None = None) -> None:
    import uvicorn

    app = create_app(cfg, system, settling, static_dir=default_static_dir())
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
