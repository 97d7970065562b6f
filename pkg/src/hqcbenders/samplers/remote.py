"""HTTP client for a remote annealer speaking a small JSON protocol.

Request (POST ``/sample``)::

    {"linear": [...], "quadratic": [[i, j, v], ...], "offset": f,
     "num_reads": n, "params": {...}}

Response::

    {"samples": [{"bits": "0101", "energy": f, "occurrences": n}, ...],
     "timing": {"programming_us": f, "anneal_us_per_read": f,
                "readout_us_per_read": f}}

Hyperparameters in ``params`` are forwarded untouched. Returned energies
are recomputed locally; mismatches are corrected and counted.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import httpx
import numpy as np

from ..errors import ProtocolError, TransportError
from ..qubo import Qubo, SampleSet, Timing, energies, parse_bitstring

log = logging.getLogger(__name__)

ENV_ENDPOINT = "BENDERS_SAMPLER_URL"
DEFAULT_CHAIN_STRENGTH_FACTOR = 1.5


@dataclass
class EndpointConfig:
    url: Optional[str] = None
    num_reads: int = 1000
    params: dict = field(default_factory=dict)
    timeout_s: float = 60.0
    attempts: int = 3
    backoff_s: float = 0.2

    def resolved_url(self) -> str:
        url = self.url or os.environ.get(ENV_ENDPOINT)
        if not url:
            raise TransportError(f"no sampler endpoint configured (set {ENV_ENDPOINT})")
        return url.rstrip("/")


def qubo_payload(q: Qubo, num_reads: int, params: dict) -> dict:
    params = dict(params)
    params.setdefault("chain_strength_factor", DEFAULT_CHAIN_STRENGTH_FACTOR)
    return {
        "linear": q.linear.tolist(),
        "quadratic": [[i, j, v] for (i, j), v in sorted(q.quadratic.items())],
        "offset": q.offset,
        "num_reads": int(num_reads),
        "params": params,
    }


def parse_response(q: Qubo, body) -> SampleSet:
    try:
        rows = body["samples"]
        tm = body.get("timing", {})
        bits = np.array([parse_bitstring(r["bits"]) for r in rows], dtype=np.uint8)
        claimed = np.array([float(r["energy"]) for r in rows])
        occ = np.array([int(r.get("occurrences", 1)) for r in rows], dtype=np.int64)
        timing = Timing(float(tm.get("programming_us", 0.0)),
                        float(tm.get("anneal_us_per_read", 0.0)),
                        float(tm.get("readout_us_per_read", 0.0)),
                        int(occ.sum()))
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed sampler response: {exc}") from exc
    if not rows:
        raise ProtocolError("sampler returned no samples")
    if bits.ndim != 2 or bits.shape[1] != q.size:
        raise ProtocolError("sample width does not match the QUBO size")
    local = energies(q, bits)
    bad = int(np.sum(np.abs(local - claimed) > 1e-9 * max(1.0, np.abs(local).max())))
    if bad:
        log.warning("sampler energies disagreed with local evaluation on %d samples", bad)
    return SampleSet(bits, local, occ, timing, {"method": "remote", "energy_mismatches": bad})


def remote_sample(q: Qubo, endpoint: EndpointConfig,
                  client: Optional[httpx.Client] = None) -> SampleSet:
    url = endpoint.resolved_url() + "/sample"
    payload = qubo_payload(q, endpoint.num_reads, endpoint.params)
    own = client is None
    client = client or httpx.Client(timeout=endpoint.timeout_s)
    try:
        last = None
        for attempt in range(endpoint.attempts):
            try:
                resp = client.post(url, json=payload)
            except httpx.HTTPError as exc:
                last = exc
            else:
                if resp.status_code >= 500:
                    last = RuntimeError(f"HTTP {resp.status_code}")
                elif resp.status_code >= 400:
                    raise ProtocolError(f"sampler rejected request: HTTP {resp.status_code}")
                else:
                    try:
                        body = resp.json()
                    except ValueError as exc:
                        raise ProtocolError("sampler response is not JSON") from exc
                    return parse_response(q, body)
            if attempt + 1 < endpoint.attempts:
                time.sleep(endpoint.backoff_s * 2 ** attempt)
        raise TransportError(f"sampler unreachable after {endpoint.attempts} attempts: {last}")
    finally:
        if own:
            client.close()
