"""Black-box SUT abstraction.

The tester only ever talks to a :class:`SutPort`: ``reset()`` plus a
synchronous ``send(label, params) -> (label, params)`` exchange.

:class:`SimulatedSut` runs an EFSM in-process, resolving non-determinism
among enabled rival transitions with a seeded policy.  It may be built from
a different (for instance mutated) model than the tester's, which is how
nonconformance is exercised.  :class:`ExternalProcessSut` and :class:`TcpSut`
speak a newline-delimited JSON protocol to out-of-process SUTs:

    request   {"label": "<input>", "params": {"<var>": <int>}}
    response  {"label": "<output>", "params": {"<var>": <int>}}
    reset     {"reset": true}   acknowledged by   {"ok": true}
"""

from __future__ import annotations

import json
import logging
import random
import socket
import subprocess
import sys
from typing import IO, Mapping, Protocol

from .efsm import EfsmModel, EfsmState, ILABEL, Transition

log = logging.getLogger(__name__)

NO_RESPONSE = "NO_RESPONSE"

Message = tuple[str, dict[str, int]]


class UnknownLabelError(Exception):
    pass


class SutPort(Protocol):
    def reset(self) -> None: ...

    def send(self, label: str, params: Mapping[str, int]) -> Message: ...


class SimulatedSut:
    """In-process SUT driven by an EFSM with seeded rival resolution.

    Policies: ``uniform`` picks uniformly at random among enabled
    transitions, ``first`` always takes the smallest transition id, and
    ``hostile`` always takes the largest -- the tester's deterministic
    tie-breaks prefer small ids, so ``hostile`` systematically resolves
    non-determinism against the tester's intent.
    """

    def __init__(self, model: EfsmModel, seed: int = 0, policy: str = "uniform"):
        if policy not in ("uniform", "first", "hostile"):
            raise ValueError(f"unknown policy {policy!r}")
        self.model = model
        self.seed = seed
        self.policy = policy
        self.rng = random.Random(seed)
        self.state = model.initial_state()

    def reset(self) -> None:
        self.rng = random.Random(self.seed)
        self.state = self.model.initial_state()

    def send(self, label: str, params: Mapping[str, int]) -> Message:
        m = self.model
        if label not in m.input_labels:
            raise UnknownLabelError(label)
        inp = {ILABEL: m.label_index(label), **params}
        enabled = m.enabled(self.state, inp)
        if not enabled:
            return NO_RESPONSE, {}
        if len(enabled) == 1 or self.policy == "first":
            chosen = enabled[0]
        elif self.policy == "hostile":
            chosen = enabled[-1]
        else:
            chosen = enabled[self.rng.randrange(len(enabled))]
        out = m.output_message(chosen, self.state, inp)
        self.state = m.apply_transition(self.state, chosen, inp)
        return out


def conforms(
    m: EfsmModel,
    s: EfsmState,
    inp: Mapping[str, int],
    observed: Message,
) -> Transition | None:
    """The unique enabled transition matching the observed output, if any.

    Output observability guarantees at most one candidate among rivals; a
    None result is a conformance failure.
    """
    label, params = observed
    for t in m.enabled(s, inp):
        if t.output_label != label:
            continue
        expected = m.output_message(t, s, inp)[1]
        if all(params.get(k) == v for k, v in expected.items()):
            return t
    return None


# ---------------------------------------------------------------------------
# External SUTs: line protocol over a byte stream
# ---------------------------------------------------------------------------

class _LineChannel:
    def __init__(self, rfile: IO[bytes], wfile: IO[bytes]):
        self.rfile = rfile
        self.wfile = wfile

    def exchange(self, doc: dict) -> dict:
        self.wfile.write(json.dumps(doc).encode() + b"\n")
        self.wfile.flush()
        line = self.rfile.readline()
        if not line:
            raise ConnectionError("SUT closed the connection")
        return json.loads(line)


class ExternalProcessSut:
    """Adapter for a child process speaking the line protocol on stdio."""

    def __init__(self, cmd: list[str] | str):
        if isinstance(cmd, str):
            import shlex
            cmd = shlex.split(cmd)
        self.proc = subprocess.Popen(
            cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        self.chan = _LineChannel(self.proc.stdout, self.proc.stdin)

    def reset(self) -> None:
        ack = self.chan.exchange({"reset": True})
        if not ack.get("ok"):
            raise ConnectionError(f"reset not acknowledged: {ack}")

    def send(self, label: str, params: Mapping[str, int]) -> Message:
        resp = self.chan.exchange({"label": label, "params": dict(params)})
        return resp["label"], {k: int(v) for k, v in resp.get("params", {}).items()}

    def close(self) -> None:
        if self.proc.stdin:
            self.proc.stdin.close()
        self.proc.terminate()
        self.proc.wait(timeout=5)


class TcpSut:
    """Adapter for a SUT reachable over a TCP socket."""

    def __init__(self, host: str, port: int):
        self.sock = socket.create_connection((host, port))
        rfile = self.sock.makefile("rb")
        wfile = self.sock.makefile("wb")
        self.chan = _LineChannel(rfile, wfile)

    def reset(self) -> None:
        ack = self.chan.exchange({"reset": True})
        if not ack.get("ok"):
            raise ConnectionError(f"reset not acknowledged: {ack}")

    def send(self, label: str, params: Mapping[str, int]) -> Message:
        resp = self.chan.exchange({"label": label, "params": dict(params)})
        return resp["label"], {k: int(v) for k, v in resp.get("params", {}).items()}

    def close(self) -> None:
        self.sock.close()


def serve_stdio(
    model: EfsmModel,
    seed: int = 0,
    policy: str = "uniform",
    rfile: IO[bytes] | None = None,
    wfile: IO[bytes] | None = None,
) -> None:
    """Serve a simulated SUT on the line protocol until EOF.

    Used by the ``xrpt serve-sut`` CLI command, which makes any bundled or
    generated model usable as an external SUT for the tester.
    """
    rfile = rfile if rfile is not None else sys.stdin.buffer
    wfile = wfile if wfile is not None else sys.stdout.buffer
    sut = SimulatedSut(model, seed=seed, policy=policy)
    for line in iter(rfile.readline, b""):
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        if req.get("reset"):
            sut.reset()
            resp: dict = {"ok": True}
        else:
            label, params = sut.send(req["label"], req.get("params", {}))
            resp = {"label": label, "params": params}
        wfile.write(json.dumps(resp).encode() + b"\n")
        wfile.flush()
