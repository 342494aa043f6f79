"""Live bridge: page snapshots out, user events in.

Wire format (documented bit-exactly in docs/wire_format.md):
  GET  /snapshot        -> {"revision": N, "tree": [node...]}
  POST /event           <- {"target": nodeId | "env", "event": NAME,
                            "payload": LITERAL}  (trace-file grammar)
  GET  /events          -> server-sent events, one {"revision": N} per push
  GET  /, /app.js       -> the bundled frontend

All injections funnel through one ordered queue consumed by a single
stepper thread; injections are applied only between steps, and each is
followed by a run to quiescence. Snapshots are immutable JSON strings; the
revision counter increments exactly when the erased page changes. Events
posted against a stale revision are still accepted: discarding stale
messages is the version mechanism's job, not the transport's.
"""

from __future__ import annotations

import json
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from pathlib import Path

from . import syntax as S
from .check import check_program
from .harness import Driver, literal_to_value, value_to_literal
from .page import PageAppend, PageEmpty, PageTag, PageText, erase
from .parser import Program
from .pretty import pretty_type
from .registry import BY_HANDLER
from .runtime import Configuration, InjectionError, inject_dom_event, inject_env_event
from .page import Event


# ---------------------------------------------------------------------------
# Snapshot serialization
# ---------------------------------------------------------------------------


def _attr_info(attrs_value: S.Term) -> tuple:
    """(plain attributes, advertised handlers) from an attribute value.

    Handler bodies are never serialized; a handler contributes only its
    event name and payload type.
    """
    plain: list = []
    hs: list = []

    def walk(v: S.Term) -> None:
        cls = type(v)
        if cls is S.Append:
            walk(v.left)
            walk(v.right)
        elif cls is S.AttrTerm:
            sig = BY_HANDLER.get(v.key)
            if sig is not None:
                hs.append({"eventName": sig.event, "payloadType": pretty_type(sig.payload)})
            else:
                text = v.body.value if type(v.body) is S.Str else str(v.body)
                plain.append({"key": v.key, "value": text})

    walk(attrs_value)
    return plain, hs


def _tree(page) -> list:
    cls = type(page)
    if cls is PageTag:
        plain, hs = _attr_info(page.attrs)
        return [{
            "nodeId": page.node_id,
            "kind": "tag",
            "tagName": page.tag,
            "attributes": plain,
            "handlers": hs,
            "children": _tree(page.kids),
        }]
    if cls is PageText:
        text = page.text.value if type(page.text) is S.Str else str(page.text)
        return [{"kind": "text", "text": text}]
    if cls is PageEmpty:
        return []
    if cls is PageAppend:
        return _tree(page.left) + _tree(page.right)
    raise TypeError(page)


def serialize_page(config: Configuration, revision: int) -> str:
    """Deterministic snapshot JSON (sorted keys, canonical separators)."""
    doc = {"revision": revision, "tree": _tree(config.page)}
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# The service
# ---------------------------------------------------------------------------


class BridgeServer:
    def __init__(self, prog: Program, host: str = "127.0.0.1", port: int = 0):
        check_program(prog)
        self.driver = Driver(prog)
        self.driver.settle()
        self.revision = 0
        self._erased = erase(self.driver.config.page)
        self.snapshot = serialize_page(self.driver.config, self.revision)
        self._inbox: queue.Queue = queue.Queue()
        self._clients: list = []
        self._clients_lock = threading.Lock()
        self._snapshot_lock = threading.Lock()
        self._stop = threading.Event()
        handler = _make_handler(self)
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self.port = self.httpd.server_address[1]
        self._threads: list = []

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        stepper = threading.Thread(target=self._stepper_loop, name="mvu-stepper", daemon=True)
        http = threading.Thread(target=self.httpd.serve_forever, name="mvu-http", daemon=True)
        stepper.start()
        http.start()
        self._threads = [stepper, http]

    def stop(self) -> None:
        self._stop.set()
        self._inbox.put(None)
        self.httpd.shutdown()
        self.httpd.server_close()

    def serve_forever(self) -> None:
        self.start()
        try:
            self._stop.wait()
        except KeyboardInterrupt:
            self.stop()

    # -- stepper ---------------------------------------------------------------

    def _stepper_loop(self) -> None:
        while not self._stop.is_set():
            item = self._inbox.get()
            if item is None:
                return
            record, reply = item
            try:
                self._apply(record)
                reply["ok"] = True
                reply["revision"] = self.revision
            except (InjectionError, Exception) as e:  # noqa: BLE001 - reported to the client
                reply["ok"] = False
                reply["error"] = str(e)
            finally:
                reply["done"].set()

    def _apply(self, record: dict) -> None:
        target = record.get("target")
        event_name = record.get("event")
        payload = literal_to_value(record.get("payload"))
        event = Event(event_name, payload)
        if target == "env":
            self.driver.config = inject_env_event(self.driver.config, event)
        else:
            if not isinstance(target, int):
                raise InjectionError(f"bad target {target!r}")
            self.driver.config = inject_dom_event(self.driver.config, target, event)
        # every intermediate page change is its own pushed revision
        self.driver.settle(on_step=lambda config, result: self._publish(config))
        self._publish(self.driver.config)

    def _publish(self, config: Configuration) -> None:
        erased = erase(config.page)
        with self._snapshot_lock:
            if erased == self._erased:
                return
            self.revision += 1
            self._erased = erased
            self.snapshot = serialize_page(config, self.revision)
            snapshot = self.snapshot
        self._broadcast(snapshot)

    # -- pub/sub -----------------------------------------------------------------

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._clients_lock:
            self._clients.append(q)
        with self._snapshot_lock:
            q.put(self.snapshot)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._clients_lock:
            if q in self._clients:
                self._clients.remove(q)

    def _broadcast(self, snapshot: str) -> None:
        """Each pushed frame carries one revision's full snapshot, so no
        intermediate state can be skipped by a slow reader."""
        with self._clients_lock:
            clients = list(self._clients)
        for q in clients:
            q.put(snapshot)

    # -- used by the handler -------------------------------------------------------

    def submit(self, record: dict, timeout: float = 30.0) -> dict:
        reply: dict = {"done": threading.Event()}
        self._inbox.put((record, reply))
        if not reply["done"].wait(timeout):
            return {"ok": False, "error": "stepper timeout"}
        reply.pop("done")
        return reply


def _static_file(name: str) -> bytes | None:
    path = Path(resources.files("mvu") / "static" / name)
    if path.exists():
        return path.read_bytes()
    return None


def _make_handler(bridge: BridgeServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args) -> None:  # quiet
            pass

        def _send(self, code: int, body: bytes, ctype: str) -> None:
            self.send_response(code)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self) -> None:
            if self.path == "/snapshot":
                with bridge._snapshot_lock:
                    body = bridge.snapshot.encode()
                self._send(200, body, "application/json")
                return
            if self.path == "/events":
                self.send_response(200)
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Cache-Control", "no-cache")
                self.end_headers()
                q = bridge.subscribe()
                try:
                    while not bridge._stop.is_set():
                        try:
                            snapshot = q.get(timeout=1.0)
                        except queue.Empty:
                            continue
                        frame = f"data: {snapshot}\n\n"
                        self.wfile.write(frame.encode())
                        self.wfile.flush()
                except (BrokenPipeError, ConnectionResetError):
                    pass
                finally:
                    bridge.unsubscribe(q)
                return
            name = {"/": "index.html", "/index.html": "index.html", "/app.js": "app.js",
                    "/client.js": "client.js", "/protocol.js": "protocol.js"}.get(self.path)
            if name:
                body = _static_file(name)
                if body is not None:
                    ctype = "text/html" if name.endswith("html") else "text/javascript"
                    self._send(200, body, ctype)
                    return
            self._send(404, b"not found", "text/plain")

        def do_POST(self) -> None:
            if self.path != "/event":
                self._send(404, b"not found", "text/plain")
                return
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length)
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as e:
                self._send(400, json.dumps({"ok": False, "error": str(e)}).encode(),
                           "application/json")
                return
            reply = bridge.submit(record)
            code = 200 if reply.get("ok") else 400
            self._send(code, json.dumps(reply, sort_keys=True).encode(), "application/json")

    return Handler


def serve(prog: Program, host: str, port: int) -> None:
    bridge = BridgeServer(prog, host, port)
    print(f"serving on http://{host}:{bridge.port}  (snapshot, event, events)")
    bridge.serve_forever()


__all__ = ["BridgeServer", "serialize_page", "serve", "value_to_literal"]
