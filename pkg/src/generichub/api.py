"""HTTP surface of the hub: the six client-facing calls (watch, poll, image,
email, upload, stream append) plus the enumeration, rule, telemetry, and
simulator admin routes.

Long-poll is served by blocking the connection's thread in the kernel, which
is why the server is a plain threading HTTP server rather than an async
framework: one thread per connection, no event-loop bridging, and platform
stop wakes every blocked poll promptly.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import re
import secrets
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, unquote, urlsplit

from .config import HubConfig
from .adapters import Attachment, validate_address
from .errors import (
    ConfigInvalidError,
    HubError,
    InvalidArgumentError,
    InvalidDescriptorError,
    InvalidRangeError,
    IoFailureError,
    NotStartedError,
    PlatformStoppedError,
    SinkFailureError,
    StoreFailureError,
    WrongKindError,
)
from .model import (
    ActionDescriptor,
    BlobRef,
    DeviceKind,
    encode_blob_ref,
    encode_descriptor,
    encode_record,
)
from .rules import RuleTrigger, decode_rule_action, encode_fire_entry, encode_rule
from .runtime import HubRuntime
from .telemetry import encode_aggregate

logger = logging.getLogger(__name__)

_STATUS_BY_CODE = {
    "unauthorized": 401,
    "not-found": 404,
    "too-many-subscriptions": 429,
    "internal-error": 500,
}


def status_for_code(code: str) -> int:
    """Error mapping: precondition 400, unknown-* 404, duplicate/already-* 409,
    sink/store/driver failures 502, platform-stopped/not-started 503."""
    if code in _STATUS_BY_CODE:
        return _STATUS_BY_CODE[code]
    if code.startswith("unknown-"):
        return 404
    if code.startswith(("already-", "duplicate-")):
        return 409
    if code.endswith("-failure"):
        return 502
    if code in ("platform-stopped", "not-started"):
        return 503
    return 400


@dataclass
class Response:
    status: int = 200
    payload: object = None
    raw: Optional[bytes] = None
    content_type: str = "application/json"


def _q_str(query: dict, name: str) -> Optional[str]:
    values = query.get(name)
    return values[0] if values else None


def _q_int(query: dict, name: str, default: int) -> int:
    raw = _q_str(query, name)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise InvalidArgumentError(f"query parameter {name} must be an integer") from None


def _body_str(body: dict, key: str, required: bool = True, default: str = "") -> str:
    value = body.get(key, None)
    if value is None:
        if required:
            raise InvalidArgumentError(f"body field {key!r} is required")
        return default
    if not isinstance(value, str):
        raise InvalidArgumentError(f"body field {key!r} must be a string")
    return value


class HubApi:
    """Route table + handlers; the request handler below stays transport-only."""

    def __init__(self, runtime: HubRuntime):
        self.runtime = runtime
        self.token = runtime.config.auth_token
        self.ui_root = Path(runtime.config.ui_root).resolve() if runtime.config.ui_root else None
        self._routes = [
            ("GET", re.compile(r"^/healthz$"), self.healthz),
            ("POST", re.compile(r"^/watch$"), self.watch),
            ("GET", re.compile(r"^/events$"), self.events),
            ("GET", re.compile(r"^/devices$"), self.devices),
            ("GET", re.compile(r"^/devices/([^/]+)/capabilities$"), self.capabilities),
            ("POST", re.compile(r"^/devices/([^/]+)/image$"), self.image),
            ("GET", re.compile(r"^/blobs/([^/]+)$"), self.blob),
            ("POST", re.compile(r"^/email$"), self.email),
            ("POST", re.compile(r"^/upload$"), self.upload),
            ("POST", re.compile(r"^/streams/([^/]+)$"), self.stream_append),
            ("GET", re.compile(r"^/streams/([^/]+)$"), self.stream_read),
            ("POST", re.compile(r"^/rules$"), self.rule_create),
            ("GET", re.compile(r"^/rules$"), self.rule_list),
            ("DELETE", re.compile(r"^/rules/([^/]+)$"), self.rule_delete),
            ("PATCH", re.compile(r"^/rules/([^/]+)$"), self.rule_patch),
            ("GET", re.compile(r"^/rules/([^/]+)/log$"), self.rule_log),
            ("GET", re.compile(r"^/telemetry/([^/]+)/monthly$"), self.telemetry_monthly),
            ("POST", re.compile(r"^/sim/register$"), self.sim_register),
            ("POST", re.compile(r"^/sim/door$"), self.sim_door),
            ("POST", re.compile(r"^/sim/sample$"), self.sim_sample),
            ("POST", re.compile(r"^/sim/disconnect$"), self.sim_disconnect),
            ("GET", re.compile(r"^/ui(/.*)?$"), self.ui_asset),
        ]

    def match(self, method: str, path: str):
        for route_method, pattern, handler in self._routes:
            if route_method != method:
                continue
            found = pattern.match(path)
            if found:
                return handler, found
        return None

    @staticmethod
    def requires_auth(path: str) -> bool:
        return not (path == "/healthz" or path == "/ui" or path.startswith("/ui/"))

    def _require_started(self):
        hub = self.runtime.hub
        if hub.stopped:
            raise PlatformStoppedError("platform stopped")
        if not hub.started:
            raise NotStartedError("platform not started")

    # --- handlers ---

    def healthz(self, match, query, body):
        return Response(payload={"status": "ok", "started": self.runtime.hub.started})

    def watch(self, match, query, body):
        self._require_started()
        device_id = body.get("deviceId")
        event_name = body.get("eventName")
        if device_id is not None and not isinstance(device_id, str):
            raise InvalidArgumentError("deviceId must be a string")
        if event_name is not None and not isinstance(event_name, str):
            raise InvalidArgumentError("eventName must be a string")
        sub = self.runtime.hub.watch(device_id, event_name)
        return Response(payload={"subscriptionId": sub.id})

    def events(self, match, query, body):
        sub_id = _q_str(query, "sub")
        if not sub_id:
            raise InvalidArgumentError("query parameter sub is required")
        timeout_ms = _q_int(query, "timeoutMs", 30_000)
        max_batch = _q_int(query, "max", 100)
        result = self.runtime.hub.get_new_event(sub_id, timeout_ms, max_batch)
        return Response(payload={
            "events": [encode_record(r) for r in result.events],
            "overflowed": result.overflowed,
        })

    def devices(self, match, query, body):
        return Response(payload=[encode_descriptor(d) for d in self.runtime.hub.list_devices()])

    def capabilities(self, match, query, body):
        descriptor = self.runtime.hub.get_device(unquote(match.group(1)))
        return Response(payload={
            "events": sorted(descriptor.eventNames),
            "actions": sorted(descriptor.actionNames),
        })

    def image(self, match, query, body):
        device_id = unquote(match.group(1))
        descriptor = self.runtime.hub.get_device(device_id)
        if descriptor.kind is not DeviceKind.CAMERA:
            raise WrongKindError(f"device {device_id!r} is a {descriptor.kind.value}, not a camera")
        result = self.runtime.hub.invoke_action(ActionDescriptor(device_id, "takePicture", {}))
        ref = result.get("image")
        if not isinstance(ref, BlobRef):
            raise SinkFailureError("driver returned no image")
        return Response(payload=encode_blob_ref(ref))

    def blob(self, match, query, body):
        data, mime = self.runtime.images.get(unquote(match.group(1)))
        return Response(raw=data, content_type=mime)

    def email(self, match, query, body):
        to = _body_str(body, "to")
        subject = _body_str(body, "subject")
        text = _body_str(body, "body", required=False)
        image_id = _body_str(body, "imageId")
        validate_address(to)
        data, mime = self.runtime.images.get(image_id)
        try:
            message_id = self.runtime.mail_sink.send(to, subject, text, Attachment(mime, data))
        except IoFailureError as exc:
            raise SinkFailureError(str(exc)) from exc
        return Response(payload={"messageId": message_id})

    def upload(self, match, query, body):
        image_id = _body_str(body, "imageId")
        container = _body_str(body, "container")
        name = _body_str(body, "name")
        data, mime = self.runtime.images.get(image_id)
        try:
            url = self.runtime.blob_store.put(container, name, mime, data)
        except IoFailureError as exc:
            raise StoreFailureError(str(exc)) from exc
        return Response(payload={"url": url})

    def stream_append(self, match, query, body):
        name = unquote(match.group(1))
        text = _body_str(body, "text")
        try:
            offset = self.runtime.stream_store.append(name, text)
        except IoFailureError as exc:
            raise StoreFailureError(str(exc)) from exc
        return Response(payload={"offset": offset})

    def stream_read(self, match, query, body):
        name = unquote(match.group(1))
        from_offset = _q_int(query, "from", 0)
        if from_offset < 0:
            raise InvalidArgumentError("from must be >= 0")
        lines = self.runtime.stream_store.read(name, from_offset)
        text = "\n".join(lines) + ("\n" if lines else "")
        return Response(raw=text.encode("utf-8"), content_type="text/plain; charset=utf-8")

    def rule_create(self, match, query, body):
        trigger_obj = body.get("trigger")
        if not isinstance(trigger_obj, dict):
            raise InvalidArgumentError("body field 'trigger' must be an object")
        trigger = RuleTrigger(
            _body_str(trigger_obj, "deviceId"), _body_str(trigger_obj, "eventName"),
        )
        actions_obj = body.get("actions")
        if not isinstance(actions_obj, list):
            raise InvalidArgumentError("body field 'actions' must be a list")
        actions = [decode_rule_action(a) for a in actions_obj]
        enabled = body.get("enabled", True)
        if not isinstance(enabled, bool):
            raise InvalidArgumentError("body field 'enabled' must be a boolean")
        rule = self.runtime.rules.create_rule(trigger, actions, enabled)
        return Response(status=201, payload=encode_rule(rule))

    def rule_list(self, match, query, body):
        return Response(payload=[encode_rule(r) for r in self.runtime.rules.list_rules()])

    def rule_delete(self, match, query, body):
        self.runtime.rules.delete_rule(unquote(match.group(1)))
        return Response(payload={"deleted": True})

    def rule_patch(self, match, query, body):
        enabled = body.get("enabled")
        if not isinstance(enabled, bool):
            raise InvalidArgumentError("body field 'enabled' must be a boolean")
        rule = self.runtime.rules.set_enabled(unquote(match.group(1)), enabled)
        return Response(payload=encode_rule(rule))

    def rule_log(self, match, query, body):
        limit = _q_int(query, "limit", 100)
        entries = self.runtime.rules.fire_log(unquote(match.group(1)), limit)
        return Response(payload=[encode_fire_entry(e) for e in entries])

    def telemetry_monthly(self, match, query, body):
        metric = unquote(match.group(1))
        from_ym = _q_str(query, "from")
        to_ym = _q_str(query, "to")
        if not from_ym or not to_ym:
            raise InvalidRangeError("query parameters from and to are required (YYYY-MM)")
        if _q_str(query, "format") == "csv":
            csv = self.runtime.telemetry.export_csv(metric, from_ym, to_ym)
            return Response(raw=csv.encode("utf-8"), content_type="text/csv; charset=utf-8")
        aggregates = self.runtime.telemetry.monthly_averages(metric, from_ym, to_ym)
        return Response(payload=[encode_aggregate(a) for a in aggregates])

    # --- simulator admin ---

    def sim_register(self, match, query, body):
        kind_raw = _body_str(body, "kind")
        try:
            kind = DeviceKind(kind_raw)
        except ValueError:
            raise InvalidDescriptorError(f"unknown kind {kind_raw!r}") from None
        descriptor = self.runtime.sim.add_device(
            _body_str(body, "id"), kind,
            _body_str(body, "name", required=False),
            _body_str(body, "location", required=False),
        )
        return Response(status=201, payload=encode_descriptor(descriptor))

    def sim_door(self, match, query, body):
        opened = body.get("open")
        if not isinstance(opened, bool):
            raise InvalidArgumentError("body field 'open' must be a boolean")
        record = self.runtime.sim.set_door(_body_str(body, "deviceId"), opened)
        return Response(payload={"event": encode_record(record) if record else None})

    def sim_sample(self, match, query, body):
        value = body.get("value")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InvalidArgumentError("body field 'value' must be a number")
        record = self.runtime.sim.emit_sample(_body_str(body, "deviceId"), float(value))
        return Response(payload={"event": encode_record(record)})

    def sim_disconnect(self, match, query, body):
        self.runtime.sim.disconnect(_body_str(body, "deviceId"))
        return Response(payload={"disconnected": True})

    # --- static console assets ---

    def ui_asset(self, match, query, body):
        if self.ui_root is None:
            return Response(status=404, payload={"error": "not-found", "message": "no ui_root configured"})
        rel = match.group(1) or "/"
        if rel.endswith("/"):
            rel += "index.html"
        target = (self.ui_root / rel.lstrip("/")).resolve()
        if not target.is_relative_to(self.ui_root) or not target.is_file():
            return Response(status=404, payload={"error": "not-found"})
        mime = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        return Response(raw=target.read_bytes(), content_type=mime)


class _RequestHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "generichub/0.1"

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_DELETE(self):
        self._dispatch("DELETE")

    def do_PATCH(self):
        self._dispatch("PATCH")

    def log_message(self, fmt, *args):
        logger.debug("%s %s", self.address_string(), fmt % args)

    def _dispatch(self, method: str):
        api: HubApi = self.server.api  # type: ignore[attr-defined]
        try:
            parts = urlsplit(self.path)
            path = parts.path
            query = parse_qs(parts.query)
            route = api.match(method, path)
            if route is None:
                self._send_json(404, {"error": "not-found", "message": f"no route {method} {path}"})
                return
            if api.requires_auth(path) and not self._authorized(api.token):
                self._send_json(401, {"error": "unauthorized", "message": "missing or wrong bearer token"})
                return
            handler, found = route
            response = handler(found, query, self._read_body(method))
            self._send(response)
        except HubError as exc:
            self._send_json(status_for_code(exc.code), {"error": exc.code, "message": str(exc)})
        except Exception:
            logger.exception("unhandled error serving %s %s", method, self.path)
            self._send_json(500, {"error": "internal-error", "message": "unhandled server error"})

    def _authorized(self, token: str) -> bool:
        header = self.headers.get("Authorization", "")
        return secrets.compare_digest(header, f"Bearer {token}")

    def _read_body(self, method: str) -> dict:
        if method not in ("POST", "PATCH"):
            return {}
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw)
        except ValueError:
            raise InvalidArgumentError("request body is not valid JSON") from None
        if not isinstance(body, dict):
            raise InvalidArgumentError("request body must be a JSON object")
        return body

    def _send(self, response: Response):
        if response.raw is not None:
            self._send_bytes(response.status, response.raw, response.content_type)
        else:
            self._send_json(response.status, response.payload)

    def _send_json(self, status: int, payload):
        self._send_bytes(status, json.dumps(payload).encode("utf-8"), "application/json")

    def _send_bytes(self, status: int, data: bytes, content_type: str):
        try:
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
        except (BrokenPipeError, ConnectionResetError):
            logger.debug("client went away mid-response")


class HubServer:
    """Owns the listening socket; the runtime's lifecycle stays separate so
    tests can stop/restart the platform underneath a live server."""

    def __init__(self, runtime: HubRuntime, host: str | None = None, port: int | None = None):
        if not runtime.config.auth_token:
            raise ConfigInvalidError("auth_token must be set to serve the API")
        self.runtime = runtime
        bind_host = host if host is not None else runtime.config.listen_host
        bind_port = port if port is not None else runtime.config.listen_port
        self._httpd = ThreadingHTTPServer((bind_host, bind_port), _RequestHandler)
        self._httpd.daemon_threads = True
        self._httpd.api = HubApi(runtime)  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def host(self) -> str:
        return self._httpd.server_address[0]

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        name="hub-http", daemon=True)
        self._thread.start()
        logger.info("listening on %s", self.url)

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(5.0)
