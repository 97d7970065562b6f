"""Loopback sampling service backed by the local simulated annealer.

Speaks the same protocol as :mod:`.remote` so the client can be exercised
end to end. ``params.seed`` and ``params.sweeps`` steer the annealer; any
other parameter is accepted and ignored.
"""

from __future__ import annotations

import socket
import threading
import time

import uvicorn
from fastapi import FastAPI
from pydantic import BaseModel, Field

from ..qubo import Qubo, bitstring
from .annealing import DEFAULT_SWEEPS, simulated_annealing_solve


class SampleRequest(BaseModel):
    linear: list[float]
    quadratic: list[tuple[int, int, float]] = Field(default_factory=list)
    offset: float = 0.0
    num_reads: int = Field(1000, ge=1)
    params: dict = Field(default_factory=dict)


class SampleOut(BaseModel):
    bits: str
    energy: float
    occurrences: int


class TimingOut(BaseModel):
    programming_us: float
    anneal_us_per_read: float
    readout_us_per_read: float


class SampleResponse(BaseModel):
    samples: list[SampleOut]
    timing: TimingOut


def create_app() -> FastAPI:
    app = FastAPI(title="qubo sampler")

    @app.post("/sample", response_model=SampleResponse)
    def sample(req: SampleRequest) -> SampleResponse:
        q = Qubo(req.linear, {(i, j): v for i, j, v in req.quadratic}, req.offset)
        ss = simulated_annealing_solve(q, reads=req.num_reads,
                                       sweeps=int(req.params.get("sweeps", DEFAULT_SWEEPS)),
                                       seed=int(req.params.get("seed", 0)))
        t = ss.timing
        return SampleResponse(
            samples=[SampleOut(bits=bitstring(b), energy=e, occurrences=c)
                     for b, e, c in ss.records()],
            timing=TimingOut(programming_us=t.programming_us,
                             anneal_us_per_read=t.anneal_us_per_read,
                             readout_us_per_read=t.readout_us_per_read))

    @app.get("/health")
    def health():
        return {"status": "ok"}

    return app


class LoopbackServer:
    """Run the service on an ephemeral localhost port in a daemon thread."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self.host, self.port = self._sock.getsockname()
        config = uvicorn.Config(create_app(), log_level="warning", lifespan="off")
        self._server = uvicorn.Server(config)
        self._thread = threading.Thread(target=self._server.run,
                                        kwargs={"sockets": [self._sock]}, daemon=True)

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> "LoopbackServer":
        self._thread.start()
        deadline = time.monotonic() + 10.0
        while not self._server.started:
            if time.monotonic() > deadline or not self._thread.is_alive():
                raise RuntimeError("loopback sampler failed to start")
            time.sleep(0.01)
        return self

    def stop(self):
        self._server.should_exit = True
        self._thread.join(timeout=5.0)
        self._sock.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
