"""HTTP read-write Linked Data interface over the live dataset.

Graph Store Protocol with direct addressing: the request path names the
graph. Reads serve the latest snapshot without locking; writes go through
the runtime so they serialize against ticks and land in the operation log.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .engine import RunParams, SimulationRuntime, parse_xsd_datetime
from .ns import DEFAULT_GRAPH, defrag
from .rdf import IRI, BlankNode, Literal, skolemize, Dataset
from .rdfio import ParseError, parse_document, serialize_triples
from .sparql import literal_value

log = logging.getLogger(__name__)

TURTLE = "text/turtle"
NTRIPLES = "application/n-triples"
PARSE_FORMATS = {TURTLE: "turtle", NTRIPLES: "n-triples"}


@dataclass(frozen=True)
class ResourcePolicy:
    """Which graphs agents may read and write.

    Everything is readable except the internal default graph; only the
    listed graphs (actuatable properties) accept writes. Graph creation and
    deletion are disabled unless explicitly switched on.
    """

    writable: frozenset[str] = field(default_factory=frozenset)
    allow_create: bool = False
    allow_delete: bool = False

    def readable(self, graph: str) -> bool:
        return graph != DEFAULT_GRAPH

    def is_writable(self, graph: str) -> bool:
        return graph in self.writable


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "ldsim/0.1"

    # Set per server instance via the class factory below.
    runtime: SimulationRuntime = None  # type: ignore[assignment]
    policy: ResourcePolicy = None  # type: ignore[assignment]
    base: str = ""

    def log_message(self, *args) -> None:  # pragma: no cover - silence stdlib
        pass

    # -- helpers ------------------------------------------------------------

    def _target(self) -> str:
        return self.base + self.path.lstrip("/")

    def _agent(self) -> str:
        return self.headers.get("X-Agent", "")

    def _reply(self, status: int, body: bytes = b"",
               content_type: str = "text/plain") -> None:
        self.send_response(status)
        if body:
            self.send_header("Content-Type", f"{content_type}; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body:
            self.wfile.write(body)

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", 0))
        return self.rfile.read(length) if length else b""

    def _parse_payload(self, target: str) -> frozenset | None:
        content_type = (self.headers.get("Content-Type") or TURTLE).split(";")[0].strip()
        if content_type not in PARSE_FORMATS:
            self._reply(415, f"unsupported media type {content_type}\n".encode())
            return None
        body = self._read_body()
        try:
            parsed = parse_document(body.decode("utf-8"), PARSE_FORMATS[content_type],
                                    base=target, default_graph=target)
        except (ParseError, UnicodeDecodeError) as exc:
            self._reply(400, f"unparsable payload: {exc}\n".encode())
            return None
        triples = set()
        for s, p, o, _g in parsed.quads():
            if isinstance(s, BlankNode):
                self._reply(400, b"blank node subjects not allowed in payloads\n")
                return None
            if defrag(s.value) != defrag(target):
                self._reply(
                    400, f"payload subject {s.value} outside target resource\n".encode())
                return None
            triples.add((s, p, o))
        if any(isinstance(o, BlankNode) for _, _, o in triples):
            ds = skolemize(Dataset({target: frozenset(triples)}), self.base,
                           f"put-{abs(hash(body)) % 10 ** 8}")
            triples = set(ds.graph(target))
        return frozenset(triples)

    # -- methods ------------------------------------------------------------

    def do_GET(self) -> None:
        target = self._target()
        snapshot = self.runtime.dataset
        triples = snapshot.graph(target)
        if not triples or not self.policy.readable(target):
            # 404 for the default graph too, so its existence never leaks.
            self.runtime.record_failure("GET", target, 404, self._agent())
            self._reply(404, b"no such resource\n")
            return
        accept = self.headers.get("Accept", "")
        if NTRIPLES in accept:
            body = serialize_triples(triples, "n-triples").encode()
            content_type = NTRIPLES
        else:
            body = serialize_triples(triples, "turtle").encode()
            content_type = TURTLE
        self.runtime.record_read(target, 200, len(body), self._agent())
        self._reply(200, body, content_type)

    def do_PUT(self) -> None:
        target = self._target()
        if target == self.base + "sim":
            self._sim_put()
            return
        if not self.policy.is_writable(target):
            self.runtime.record_failure("PUT", target, 403, self._agent())
            self._reply(403, b"resource not writable\n")
            return
        triples = self._parse_payload(target)
        if triples is None:
            return
        existed = self.runtime.dataset.has_graph(target)
        status = 204 if existed else 201
        self.runtime.apply_agent_write("PUT", target, triples, self._agent(), status)
        self._reply(status)

    def do_POST(self) -> None:
        target = self._target()
        if not (self.policy.allow_create and self.policy.is_writable(target)):
            self.runtime.record_failure("POST", target, 405, self._agent())
            self._reply(405, b"POST disabled by policy\n")
            return
        triples = self._parse_payload(target)
        if triples is None:
            return
        existed = self.runtime.dataset.has_graph(target)
        status = 204 if existed else 201
        self.runtime.apply_agent_write("POST", target, triples, self._agent(), status)
        self._reply(status)

    def do_DELETE(self) -> None:
        target = self._target()
        if not (self.policy.allow_delete and self.policy.is_writable(target)):
            self.runtime.record_failure("DELETE", target, 405, self._agent())
            self._reply(405, b"DELETE disabled by policy\n")
            return
        if not self.runtime.dataset.has_graph(target):
            self.runtime.record_failure("DELETE", target, 404, self._agent())
            self._reply(404, b"no such resource\n")
            return
        self.runtime.apply_agent_write("DELETE", target, None, self._agent(), 204)
        self._reply(204)

    # -- run control -----------------------------------------------------------

    def _sim_put(self) -> None:
        if self.runtime.started:
            self._reply(409, b"run already in progress\n")
            return
        target = self.base + "sim"
        content_type = (self.headers.get("Content-Type") or TURTLE).split(";")[0].strip()
        body = self._read_body()
        try:
            parsed = parse_document(body.decode("utf-8"),
                                    PARSE_FORMATS.get(content_type, "turtle"),
                                    base=self.base, default_graph=target)
        except (ParseError, UnicodeDecodeError) as exc:
            self._reply(400, f"unparsable payload: {exc}\n".encode())
            return
        vocab = self.base + "vocab/sim#"
        values: dict[str, object] = {}
        for _s, p, o, _g in parsed.quads():
            if p.value.startswith(vocab) and isinstance(o, Literal):
                values[p.value[len(vocab):]] = literal_value(o)
        try:
            params = RunParams(
                initial_time=parse_xsd_datetime(str(values["initialTime"]))
                if isinstance(values["initialTime"], str)
                else values["initialTime"],
                timeslot_ms=int(values["timeslotDuration"]),
                iterations=int(values["iterations"]),
                step_seconds=int(values.get("simulatedStep", 60)),
            )
        except KeyError as exc:
            self._reply(400, f"missing parameter sim:{exc.args[0]}\n".encode())
            return
        try:
            self.runtime.start(params)
        except RuntimeError:
            self._reply(409, b"run already in progress\n")
            return
        self._reply(200, b"run started\n")


class LinkedDataServer:
    """Socket lifecycle wrapper; bind first so the base IRI is known before
    the dataset is rebased onto it."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        handler = type("BoundHandler", (_Handler,), {})
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._httpd.daemon_threads = True
        self._handler = handler
        self._thread: threading.Thread | None = None
        host_out, port_out = self._httpd.server_address[:2]
        self.base = f"http://{host_out}:{port_out}/"

    def attach(self, runtime: SimulationRuntime, policy: ResourcePolicy) -> None:
        self._handler.runtime = runtime
        self._handler.policy = policy
        self._handler.base = self.base

    def start(self) -> None:
        if self._handler.runtime is None:
            raise RuntimeError("attach a runtime before starting")
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        kwargs={"poll_interval": 0.05},
                                        daemon=True, name="ld-server")
        self._thread.start()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(2)


def default_policy(dynamic: dict) -> ResourcePolicy:
    writable = frozenset(res.graph for res in dynamic.values() if res.writable)
    return ResourcePolicy(writable=writable)
