"""Real-socket mode: a TCP cloud endpoint and a real-time edge loop.

Both sides share the virtual mode's :class:`~spo.transport.LatencyModel`.
Delay injection happens in a shim at each receiver: the cloud sleeps one
sampled one-way delay before processing a request, and the edge holds an
arrived response for one sampled one-way delay before the control loop may
see it. Loopback RTT therefore matches the emulated WAN figure.
"""

from __future__ import annotations

import socket
import threading
import time

import numpy as np

from . import transport
from .cloud import CloudSession, make_model, make_policy
from .edge import EdgeSession
from .environments import EnvironmentSpec, is_success, start_state, true_step
from .harness import (
    BaselineKind,
    FIXED_HORIZON,
    RunResult,
    calibrate_weights,
    compile_metrics,
)
from .types import SpoConfig, validate_config


def _one_way(cfg: SpoConfig, rng) -> transport.LatencyModel:
    return transport.one_way_latency(cfg.rtt_base, cfg.jitter_half_width, rng)


class CloudServer:
    """Serves rollout requests over TCP; one isolated session per connection."""

    def __init__(
        self,
        port: int,
        spec: EnvironmentSpec,
        cfg: SpoConfig,
        kind: BaselineKind = BaselineKind.SPO,
        model_kind: str = "oracle",
        drift_bias: float = 0.0,
        drift_noise: float = 0.0,
        host: str = "127.0.0.1",
    ):
        validate_config(cfg)
        self.spec = spec
        self.cfg = cfg
        self.kind = kind
        self.model_kind = model_kind
        self.drift_bias = drift_bias
        self.drift_noise = drift_noise
        self._listener = socket.create_server((host, port))
        self._stop = threading.Event()
        self._session_counter = 0

    @property
    def port(self) -> int:
        return self._listener.getsockname()[1]

    def serve_forever(self) -> None:
        self._listener.settimeout(0.2)
        try:
            while not self._stop.is_set():
                try:
                    conn, _ = self._listener.accept()
                except socket.timeout:
                    continue
                self._session_counter += 1
                thread = threading.Thread(
                    target=self._session, args=(conn, self._session_counter), daemon=True
                )
                thread.start()
        finally:
            self._listener.close()

    def stop(self) -> None:
        self._stop.set()

    def _session(self, conn: socket.socket, session_id: int) -> None:
        policy = make_policy(self.spec)
        model = make_model(
            self.spec, self.model_kind,
            drift_bias=self.drift_bias, drift_noise=self.drift_noise,
            seed=self.cfg.rng_seed + session_id,
        )
        cloud = CloudSession(self.cfg, policy, model, fixed_horizon=FIXED_HORIZON[self.kind])
        latency = _one_way(
            self.cfg, np.random.default_rng([self.cfg.rng_seed, session_id, 1])
        )
        with conn:
            while True:
                try:
                    frame = transport.recv_frame(conn)
                except (ConnectionError, transport.FrameError):
                    return
                if frame is None:
                    return
                time.sleep(latency.sample())  # receiver-side uplink delay shim
                rid, req = transport.decode_request(frame)
                resp = cloud.handle(req)
                out = transport.encode_response(rid, resp, step_index=req.step_index)
                try:
                    transport.send_frame(conn, out)
                except ConnectionError:
                    return


class _DelayedInbox:
    """Reader-thread inbox that reveals responses only after the downlink delay."""

    def __init__(self, sock: socket.socket, d_s: int, d_a: int, latency):
        self._sock = sock
        self._d_s = d_s
        self._d_a = d_a
        self._latency = latency
        self._lock = threading.Lock()
        self._pending: list = []
        self._last_available = 0.0
        self.generated = 0
        self.dead = False
        self._thread = threading.Thread(target=self._reader, daemon=True)
        self._thread.start()

    def _reader(self) -> None:
        while True:
            try:
                frame = transport.recv_frame(self._sock)
            except (ConnectionError, transport.FrameError, OSError):
                frame = None
            if frame is None:
                self.dead = True
                return
            rid, resp = transport.decode_response(frame, self._d_s, self._d_a)
            available_at = time.monotonic() + self._latency.sample()
            with self._lock:
                # FIFO: a later frame never becomes visible before an earlier one.
                available_at = max(available_at, self._last_available)
                self._last_available = available_at
                self._pending.append((available_at, rid, resp))
                self.generated += len(resp.tuples)

    def due(self) -> list:
        now = time.monotonic()
        out = []
        with self._lock:
            while self._pending and self._pending[0][0] <= now:
                _, rid, resp = self._pending.pop(0)
                out.append((rid, resp))
        return out


def edge_connect_run(
    addr: tuple[str, int],
    spec: EnvironmentSpec,
    cfg: SpoConfig,
    kind: BaselineKind = BaselineKind.SPO,
    seed: int = 0,
    weights=None,
) -> RunResult:
    """Run the edge control loop in real time against a remote cloud endpoint."""
    validate_config(cfg)
    if weights is None:
        weights = calibrate_weights(spec, seed=cfg.rng_seed)
    sock = socket.create_connection(addr, timeout=10.0)
    sock.settimeout(None)
    latency = _one_way(cfg, np.random.default_rng([cfg.rng_seed, seed, 2]))
    inbox = _DelayedInbox(sock, spec.d_s, spec.d_a, latency)
    edge = EdgeSession(cfg, weights, spec.d_a, blocking=(kind is BaselineKind.BLOCKING))
    state = start_state(spec, np.random.default_rng([cfg.rng_seed, seed]))
    dt = cfg.control_interval

    records = []
    horizons: list[int] = []
    success = False
    diagnostic = None
    t0 = time.monotonic()
    try:
        for tick in range(spec.max_steps):
            target = t0 + tick * dt
            delay = target - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            for rid, resp in inbox.due():
                if kind is not BaselineKind.BLOCKING:
                    horizons.append(resp.horizon_used)
                edge.install_response(rid, resp)
            rec, refill = edge.edge_tick(state, tick, tick * dt)
            records.append(rec)
            if refill is not None:
                frame = transport.encode_request(refill.request_id, refill.request)
                try:
                    transport.send_frame(sock, frame)
                except OSError:
                    diagnostic = "connection lost while sending refill request"
                    break
            state = true_step(spec, state, rec.action_executed, tick)
            if is_success(spec, state):
                success = True
                break
            if inbox.dead and edge.in_flight_id is not None:
                diagnostic = "connection lost while awaiting refill"
                break
    finally:
        sock.close()
    metrics = compile_metrics(
        kind, spec, cfg, seed, records, horizons, inbox.generated, len(edge.cache),
        success, diagnostic,
    )
    return RunResult(metrics=metrics, records=records, horizons=horizons)
