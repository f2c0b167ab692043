"""Client/server wire protocol: length-framed JSON messages over TCP.

Framing is a 4-byte big-endian length followed by UTF-8 JSON.  Every message
carries {version, kind, run_id, payload} and is schema-checked on both sides:
no client-private field (accept bits, output indices, plants, trapdoors) may
ever cross the wire.

The server session logic is transport-independent: in-process runs and socket
runs execute the same handler with the same derived seeds, which makes
loopback transcripts bit-identical to local ones.
"""

from __future__ import annotations

import json
import os
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import protocol4 as p4, protocol8 as p8, serde
from .params import ParamSet
from .seeds import derive_seed
from .sim import QubitDescription

WIRE_VERSION = 1
MAX_FRAME = 1 << 20
ENDPOINT_ENV = "QFACTORY_ENDPOINT"

KIND_SCHEMAS = {
    "key": {"key", "variant", "hardcore_tag"},
    "image": {"y"},
    "meas": {"b"},
    "merge": {"s1", "s2"},
    "test_plan": {"indices", "measurements"},
    "test_results": {"results"},
}

# field names that must never appear anywhere in a wire message
PRIVATE_FIELDS = {
    "a",
    "accept",
    "accepted",
    "abort",
    "B",
    "B1",
    "B2",
    "B1p",
    "B2p",
    "L",
    "d0",
    "trapdoor",
    "z0",
    "gadget",
    "family",
}


class WireError(Exception):
    pass


@dataclass(frozen=True)
class WireMessage:
    kind: str
    run_id: int
    payload: dict
    version: int = WIRE_VERSION

    def to_obj(self) -> dict:
        return {
            "version": self.version,
            "kind": self.kind,
            "run_id": self.run_id,
            "payload": self.payload,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "WireMessage":
        try:
            msg = cls(
                kind=obj["kind"],
                run_id=int(obj["run_id"]),
                payload=obj["payload"],
                version=int(obj["version"]),
            )
        except (KeyError, TypeError) as exc:
            raise WireError(f"malformed message: {exc}") from exc
        validate_message(msg)
        return msg


def _scan_private(node: Any, path: str):
    if isinstance(node, dict):
        for key, val in node.items():
            if key in PRIVATE_FIELDS:
                raise WireError(f"private field {key!r} at {path}")
            _scan_private(val, f"{path}.{key}")
    elif isinstance(node, (list, tuple)):
        for i, val in enumerate(node):
            _scan_private(val, f"{path}[{i}]")


def validate_message(msg: WireMessage):
    if msg.version != WIRE_VERSION:
        raise WireError(f"unsupported version {msg.version}")
    if msg.kind not in KIND_SCHEMAS:
        raise WireError(f"unknown kind {msg.kind!r}")
    extra = set(msg.payload) - KIND_SCHEMAS[msg.kind]
    if extra:
        raise WireError(f"unexpected payload fields {sorted(extra)}")
    _scan_private(msg.payload, msg.kind)


# ---------------------------------------------------------------------------
# framing


def write_frame(sock: socket.socket, msg: WireMessage):
    validate_message(msg)
    blob = json.dumps(msg.to_obj(), sort_keys=True).encode("utf-8")
    if len(blob) > MAX_FRAME:
        raise WireError("frame too large")
    sock.sendall(struct.pack(">I", len(blob)) + blob)


def _read_exact(sock: socket.socket, size: int) -> bytes:
    buf = b""
    while len(buf) < size:
        chunk = sock.recv(size - len(buf))
        if not chunk:
            raise WireError("connection closed mid-frame")
        buf += chunk
    return buf


def read_frame(sock: socket.socket) -> WireMessage:
    header = _read_exact(sock, 4)
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise WireError("oversized frame rejected")
    blob = _read_exact(sock, length)
    try:
        obj = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError("undecodable frame") from exc
    return WireMessage.from_obj(obj)


# ---------------------------------------------------------------------------
# server session (shared by local and socket transports)


@dataclass
class ServerSession:
    """Honest server state machine; one instance per logical session."""

    master_seed: int
    backend: str = "two_branch"
    held: dict = field(default_factory=dict)  # (run_id, variant) -> QubitDescription

    def handle(self, msg: WireMessage) -> list[WireMessage]:
        validate_message(msg)
        if msg.kind == "key":
            pk = serde.key_from_obj(msg.payload["key"])
            key_msg = p4.KeyMessage(pk=pk, variant=msg.payload["variant"])
            seed = derive_seed(self.master_seed, "run", msg.run_id, msg.payload["variant"])
            reply = p4.server_honest(key_msg, self.backend, seed)
            if reply.held is not None:
                self.held[(msg.run_id, msg.payload["variant"])] = reply.held
            return [
                WireMessage("image", msg.run_id, {"y": [str(int(v)) for v in reply.y]}),
                WireMessage("meas", msg.run_id, {"b": "".join(str(v) for v in reply.b)}),
            ]
        if msg.kind == "merge":
            in1 = self.held.get((msg.run_id, p4.PLAIN))
            in2 = self.held.get((msg.run_id, p4.ROTATED))
            if in1 is None or in2 is None:
                raise WireError("merge requested before both runs completed")
            rng = np.random.default_rng(derive_seed(self.master_seed, "run", msg.run_id, "merge"))
            res = p8.merge_gadget(in1, in2, rng)
            self.held[(msg.run_id, "merged")] = res.out
            return [WireMessage("merge", msg.run_id, {"s1": res.s1, "s2": res.s2})]
        if msg.kind == "test_plan":
            results = {}
            rng = np.random.default_rng(derive_seed(self.master_seed, "tests"))
            for key, m_idx in zip(msg.payload["indices"], msg.payload["measurements"]):
                held = self.held.get((int(key), "merged"))
                if held is None:
                    raise WireError(f"no merged state for run {key}")
                target = QubitDescription.eight(int(m_idx))
                p_plus = float(abs(np.vdot(target.vec, held.vec)) ** 2)
                results[str(key)] = int(rng.random() < p_plus)
            return [WireMessage("test_results", msg.run_id, {"results": results})]
        raise WireError(f"server cannot handle kind {msg.kind!r}")


# ---------------------------------------------------------------------------
# channels


class LocalChannel:
    """In-process transport: the session handler invoked directly."""

    def __init__(self, session: ServerSession):
        self.session = session
        self._queue: list[WireMessage] = []

    def send(self, msg: WireMessage):
        self._queue.extend(self.session.handle(msg))

    def recv(self) -> WireMessage:
        if not self._queue:
            raise WireError("no pending reply")
        return self._queue.pop(0)

    def close(self):
        pass


class SocketChannel:
    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)

    def send(self, msg: WireMessage):
        write_frame(self.sock, msg)

    def recv(self) -> WireMessage:
        return read_frame(self.sock)

    def close(self):
        self.sock.close()


# ---------------------------------------------------------------------------
# client engines (transport-independent)


def run4_over_channel(
    chan, params: ParamSet, master_seed: int, run_id: int, variant: str = p4.PLAIN
) -> p4.Protocol4Result:
    client, key_msg = p4.client_init(
        params, variant, derive_seed(master_seed, "run", run_id, variant, "client")
    )
    chan.send(
        WireMessage(
            "key",
            run_id,
            {
                "key": serde.key_to_obj(client.pk),
                "variant": variant,
                "hardcore_tag": key_msg.hardcore_tag,
            },
        )
    )
    image = chan.recv()
    meas = chan.recv()
    if image.kind != "image" or meas.kind != "meas":
        raise WireError("unexpected reply sequence")
    y = [int(v) for v in image.payload["y"]]
    b = tuple(int(ch) for ch in meas.payload["b"])
    out = p4.finalize(client, y, b)
    transcript = p4.Transcript4(y=tuple(y), b=b, variant=variant)
    return p4.Protocol4Result(out=out, transcript=transcript, held=None, client=client)


def run8_over_channel(chan, params: ParamSet, master_seed: int, run_id: int):
    r1 = run4_over_channel(chan, params, master_seed, run_id, p4.PLAIN)
    r2 = run4_over_channel(chan, params, master_seed, run_id, p4.ROTATED)
    chan.send(WireMessage("merge", run_id, {}))
    merged = chan.recv()
    if merged.kind != "merge":
        raise WireError("expected merge outcomes")
    s1, s2 = int(merged.payload["s1"]), int(merged.payload["s2"])
    usable = r2.out.family in (p4.PAULI_X, p4.PAULI_Y) and r1.out.accepted != p4.NO_PREIMAGE
    index = None
    if usable:
        index = p8.compute_L(r1.out.B1, r1.out.B2, r2.out.B1, r2.out.B2, s1, s2)
    return p8.Protocol8Result(
        index=index, usable=usable, run1=r1, run2=r2, s1=s1, s2=s2, held=None
    )


def local_session(master_seed: int, backend: str = "two_branch") -> LocalChannel:
    return LocalChannel(ServerSession(master_seed=master_seed, backend=backend))


# ---------------------------------------------------------------------------
# TCP server


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        session = ServerSession(
            master_seed=self.server.master_seed, backend=self.server.backend
        )
        self.request.settimeout(self.server.timeout)
        try:
            while True:
                try:
                    msg = read_frame(self.request)
                except WireError:
                    return
                try:
                    replies = session.handle(msg)
                except WireError:
                    return
                for reply in replies:
                    write_frame(self.request, reply)
        except (ConnectionError, socket.timeout):
            return


class ProtocolServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, master_seed: int, backend: str = "two_branch", timeout: float = 30.0):
        super().__init__(address, _Handler)
        self.master_seed = master_seed
        self.backend = backend
        self.timeout = timeout


def serve(host: str, port: int, master_seed: int, backend: str = "two_branch") -> ProtocolServer:
    """Start the server in a background thread; returns the server object."""
    server = ProtocolServer((host, port), master_seed=master_seed, backend=backend)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def endpoint_from_env(default: str = "127.0.0.1:7801") -> tuple[str, int]:
    raw = os.environ.get(ENDPOINT_ENV, default)
    host, _, port = raw.rpartition(":")
    return host or "127.0.0.1", int(port)
