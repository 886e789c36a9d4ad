"""If-Then rule engine: persisted rules that run an ordered action list when
a matching event occurs.

A rule's trigger is (device, eventName); its actions generalize the single
"B does Act" binding to a pipeline, which is exactly what the door-alert
composite needs (capture -> email -> upload -> append alert text). Rules are
evaluated by a single consumer draining a wildcard subscription, so logs are
deterministic and a deleted rule can never fire after the delete returns.
"""

from __future__ import annotations

import json
import logging
import re
import string
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Union

from .adapters import Attachment, BlobStore, DataStreamStore, MailSink, check_path_component, validate_address
from .blobs import ImageStore
from .errors import (
    BadTemplateError,
    DuplicateRuleError,
    HubError,
    InvalidArgumentError,
    PlatformStoppedError,
    SinkFailureError,
    UnknownActionError,
    UnknownEventNameError,
    UnknownRuleError,
    UnknownSubscriptionError,
    WrongKindError,
)
from .kernel import Hub
from .model import (
    LIFECYCLE_EVENT_NAMES,
    PLATFORM_DEVICE_ID,
    ActionDescriptor,
    BlobRef,
    DeviceKind,
    EventRecord,
    PayloadValue,
    decode_payload,
    encode_payload,
    payload_keys_for,
)

logger = logging.getLogger(__name__)

MAX_ACTIONS_PER_RULE = 8
MAX_CHAIN_DEPTH = 8
FIRE_LOG_LIMIT = 1000

_FIELD_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


# --- templates ---------------------------------------------------------------
#
# Templates may reference {device}, {event}, {timestamp}, the trigger event's
# payload keys, and any image binding introduced earlier in the action list
# (a binding renders as its blob id, which is how alert lines carry a link to
# their picture).

def template_fields(template: str) -> list[str]:
    if not isinstance(template, str):
        raise BadTemplateError("template must be a string")
    try:
        parsed = list(string.Formatter().parse(template))
    except ValueError as exc:
        raise BadTemplateError(f"unparsable template {template!r}: {exc}") from exc
    fields = []
    for _literal, name, spec, conversion in parsed:
        if name is None:
            continue
        if conversion or spec:
            raise BadTemplateError(f"template {template!r}: format specs are not supported")
        if not _FIELD_RE.match(name):
            raise BadTemplateError(f"template {template!r}: bad placeholder {{{name}}}")
        fields.append(name)
    return fields


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, BlobRef):
        return value.id
    return str(value)


def render_template(template: str, context: Mapping[str, object]) -> str:
    out = []
    for literal, name, _spec, _conversion in string.Formatter().parse(template):
        out.append(literal)
        if name is not None:
            if name not in context:
                raise BadTemplateError(f"template {template!r}: no value for {{{name}}}")
            out.append(_format_value(context[name]))
    return "".join(out)


# --- rule types ----------------------------------------------------------------

@dataclass(frozen=True)
class RuleTrigger:
    deviceId: str
    eventName: str


@dataclass(frozen=True)
class DeviceAction:
    deviceId: str
    actionName: str
    params: Mapping[str, PayloadValue] = field(default_factory=dict)


@dataclass(frozen=True)
class CaptureImage:
    cameraId: str
    bindAs: str


@dataclass(frozen=True)
class SendEmail:
    to: str
    subject: str
    bodyTemplate: str
    attach: Optional[str] = None


@dataclass(frozen=True)
class UploadPicture:
    container: str
    nameTemplate: str
    source: str


@dataclass(frozen=True)
class AppendStream:
    streamName: str
    textTemplate: str


RuleAction = Union[DeviceAction, CaptureImage, SendEmail, UploadPicture, AppendStream]


@dataclass
class Rule:
    ruleId: str
    trigger: RuleTrigger
    actions: tuple[RuleAction, ...]
    enabled: bool
    createdAtUtcMs: int
    fireCount: int = 0


@dataclass(frozen=True)
class ActionOutcome:
    status: str  # "ok" | "error"
    code: Optional[str] = None


@dataclass(frozen=True)
class FireLogEntry:
    ruleId: str
    deviceId: str
    seq: int
    perActionOutcome: tuple[ActionOutcome, ...]
    startedUtcMs: int
    durationMs: int


def alerts_pipeline(camera_id: str, to: str, container: str, stream_name: str) -> list[RuleAction]:
    """The door-alert composite: capture, e-mail, upload, append alert text."""
    return [
        CaptureImage(camera_id, bindAs="img"),
        SendEmail(to, "Door alert", "door opened at {timestamp}", attach="img"),
        UploadPicture(container, "alert-{timestamp}.png", source="img"),
        AppendStream(stream_name, "door opened at {timestamp} img:{img}"),
    ]


# --- JSON encoding -------------------------------------------------------------

def encode_rule_action(action: RuleAction) -> dict:
    if isinstance(action, DeviceAction):
        return {
            "type": "deviceAction",
            "deviceId": action.deviceId,
            "actionName": action.actionName,
            "params": encode_payload(action.params),
        }
    if isinstance(action, CaptureImage):
        return {"type": "captureImage", "cameraId": action.cameraId, "bindAs": action.bindAs}
    if isinstance(action, SendEmail):
        out = {
            "type": "sendEmail",
            "to": action.to,
            "subject": action.subject,
            "bodyTemplate": action.bodyTemplate,
        }
        if action.attach is not None:
            out["attach"] = action.attach
        return out
    if isinstance(action, UploadPicture):
        return {
            "type": "uploadPicture",
            "container": action.container,
            "nameTemplate": action.nameTemplate,
            "source": action.source,
        }
    if isinstance(action, AppendStream):
        return {"type": "appendStream", "streamName": action.streamName, "textTemplate": action.textTemplate}
    raise InvalidArgumentError(f"unknown rule action {action!r}")


def decode_rule_action(obj) -> RuleAction:
    if not isinstance(obj, dict) or "type" not in obj:
        raise InvalidArgumentError(f"malformed rule action: {obj!r}")
    kind = obj["type"]
    try:
        if kind == "deviceAction":
            return DeviceAction(obj["deviceId"], obj["actionName"], decode_payload(obj.get("params", {})))
        if kind == "captureImage":
            return CaptureImage(obj["cameraId"], obj["bindAs"])
        if kind == "sendEmail":
            return SendEmail(obj["to"], obj["subject"], obj["bodyTemplate"], obj.get("attach"))
        if kind == "uploadPicture":
            return UploadPicture(obj["container"], obj["nameTemplate"], obj["source"])
        if kind == "appendStream":
            return AppendStream(obj["streamName"], obj["textTemplate"])
    except KeyError as exc:
        raise InvalidArgumentError(f"rule action {kind!r} missing field {exc}") from exc
    raise InvalidArgumentError(f"unknown rule action type {kind!r}")


def encode_rule(rule: Rule, include_fire_count: bool = True) -> dict:
    out = {
        "ruleId": rule.ruleId,
        "trigger": {"deviceId": rule.trigger.deviceId, "eventName": rule.trigger.eventName},
        "actions": [encode_rule_action(a) for a in rule.actions],
        "enabled": rule.enabled,
        "createdAtUtcMs": rule.createdAtUtcMs,
    }
    if include_fire_count:
        out["fireCount"] = rule.fireCount
    return out


def decode_rule(obj) -> Rule:
    try:
        trigger = RuleTrigger(obj["trigger"]["deviceId"], obj["trigger"]["eventName"])
        actions = tuple(decode_rule_action(a) for a in obj["actions"])
        return Rule(
            ruleId=obj["ruleId"],
            trigger=trigger,
            actions=actions,
            enabled=bool(obj.get("enabled", True)),
            createdAtUtcMs=int(obj.get("createdAtUtcMs", 0)),
            fireCount=0,
        )
    except (KeyError, TypeError) as exc:
        raise InvalidArgumentError(f"malformed rule: {exc}") from exc


def encode_fire_entry(entry: FireLogEntry) -> dict:
    return {
        "ruleId": entry.ruleId,
        "triggering": {"deviceId": entry.deviceId, "seq": entry.seq},
        "perActionOutcome": [
            {"status": o.status} if o.code is None else {"status": o.status, "code": o.code}
            for o in entry.perActionOutcome
        ],
        "startedUtcMs": entry.startedUtcMs,
        "durationMs": entry.durationMs,
    }


def _rule_fingerprint(trigger: RuleTrigger, actions) -> str:
    body = {
        "trigger": {"deviceId": trigger.deviceId, "eventName": trigger.eventName},
        "actions": [encode_rule_action(a) for a in actions],
    }
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


# --- engine ----------------------------------------------------------------------

class RuleEngine:
    def __init__(
        self,
        hub: Hub,
        images: ImageStore,
        mail_sink: MailSink,
        blob_store: BlobStore,
        stream_store: DataStreamStore,
        rules_path=None,
        max_chain_depth: int = MAX_CHAIN_DEPTH,
        fire_log_limit: int = FIRE_LOG_LIMIT,
    ):
        self._hub = hub
        self._images = images
        self._mail = mail_sink
        self._blobs = blob_store
        self._streams = stream_store
        self._rules_path = Path(rules_path) if rules_path else None
        self._max_chain_depth = max_chain_depth
        self._fire_log_limit = fire_log_limit

        self._lock = threading.RLock()
        self._rules: dict[str, Rule] = {}
        self._fire_logs: dict[str, deque[FireLogEntry]] = {}
        self._sub = None
        self._thread: threading.Thread | None = None
        if self._rules_path and self._rules_path.exists():
            self._load()

    # --- pump ---

    def attach(self) -> None:
        """Subscribe to the hub (wildcard). Call before the platform starts so
        lifecycle triggers can fire from the very first event."""
        self._sub = self._hub.watch()

    def start(self) -> None:
        if self._sub is None:
            self.attach()
        self._thread = threading.Thread(target=self._pump, name="rule-engine", daemon=True)
        self._thread.start()

    def join(self, timeout: float = 5.0) -> None:
        if self._thread is not None:
            self._thread.join(timeout)

    def _pump(self) -> None:
        while True:
            try:
                result = self._hub.get_new_event(self._sub.id, timeout_ms=1000, max_batch=100)
            except (PlatformStoppedError, UnknownSubscriptionError):
                return
            for record in result.events:
                try:
                    self.evaluate(record)
                except Exception:
                    logger.exception("rule evaluation crashed for %s/%s", record.deviceId, record.seq)

    # --- rule management ---

    def create_rule(self, trigger: RuleTrigger, actions, enabled: bool = True) -> Rule:
        actions = tuple(actions)
        self._validate(trigger, actions)
        fingerprint = _rule_fingerprint(trigger, actions)
        with self._lock:
            for existing in self._rules.values():
                if _rule_fingerprint(existing.trigger, existing.actions) == fingerprint:
                    raise DuplicateRuleError(f"identical rule {existing.ruleId} already exists")
            rule = Rule(
                ruleId="r" + uuid.uuid4().hex[:12],
                trigger=trigger,
                actions=actions,
                enabled=enabled,
                createdAtUtcMs=self._hub.clock.now_ms(),
            )
            self._rules[rule.ruleId] = rule
            self._fire_logs[rule.ruleId] = deque(maxlen=self._fire_log_limit)
            self._persist()
        logger.info("rule %s created: %s.%s -> %d action(s)",
                    rule.ruleId, trigger.deviceId, trigger.eventName, len(actions))
        return rule

    def delete_rule(self, rule_id: str) -> None:
        with self._lock:
            if rule_id not in self._rules:
                raise UnknownRuleError(f"no rule {rule_id!r}")
            del self._rules[rule_id]
            self._fire_logs.pop(rule_id, None)
            self._persist()

    def set_enabled(self, rule_id: str, enabled: bool) -> Rule:
        with self._lock:
            rule = self._rules.get(rule_id)
            if rule is None:
                raise UnknownRuleError(f"no rule {rule_id!r}")
            rule.enabled = bool(enabled)
            self._persist()
            return rule

    def get_rule(self, rule_id: str) -> Rule:
        with self._lock:
            rule = self._rules.get(rule_id)
            if rule is None:
                raise UnknownRuleError(f"no rule {rule_id!r}")
            return rule

    def list_rules(self) -> list[Rule]:
        with self._lock:
            return sorted(self._rules.values(), key=lambda r: (r.createdAtUtcMs, r.ruleId))

    def fire_log(self, rule_id: str, limit: int = 100) -> list[FireLogEntry]:
        """Most recent entries, oldest first."""
        with self._lock:
            if rule_id not in self._rules:
                raise UnknownRuleError(f"no rule {rule_id!r}")
            entries = list(self._fire_logs.get(rule_id, ()))
        return entries[-max(limit, 0):]

    # --- evaluation ---

    def evaluate(self, record: EventRecord) -> list[FireLogEntry]:
        """Fire every enabled rule whose trigger matches, exactly once each.

        An action fault aborts only the remaining actions of its own rule.
        """
        if record.chainDepth >= self._max_chain_depth:
            logger.warning(
                "chain-depth-exceeded: %s/%s at depth %d not evaluated",
                record.deviceId, record.seq, record.chainDepth,
            )
            return []
        entries = []
        with self._lock:
            matching = [
                rule for rule in self._rules.values()
                if rule.enabled
                and rule.trigger.deviceId == record.deviceId
                and rule.trigger.eventName == record.eventName
            ]
            for rule in matching:
                rule.fireCount += 1
                entry = self._fire(rule, record)
                self._fire_logs[rule.ruleId].append(entry)
                entries.append(entry)
        return entries

    def _fire(self, rule: Rule, record: EventRecord) -> FireLogEntry:
        started = self._hub.clock.now_ms()
        t0 = time.monotonic()
        context: dict[str, object] = {
            "device": record.deviceId,
            "event": record.eventName,
            "timestamp": record.timestampUtcMs,
        }
        context.update(record.payload)
        bindings: dict[str, BlobRef] = {}
        outcomes: list[ActionOutcome] = []
        for action in rule.actions:
            try:
                self._run_action(action, record, context, bindings)
                outcomes.append(ActionOutcome("ok"))
            except HubError as exc:
                logger.warning("rule %s: action %s failed: %s", rule.ruleId, type(action).__name__, exc)
                outcomes.append(ActionOutcome("error", exc.code))
                break
            except Exception:
                logger.exception("rule %s: action %s crashed", rule.ruleId, type(action).__name__)
                outcomes.append(ActionOutcome("error", "action-failure"))
                break
        duration = int((time.monotonic() - t0) * 1000)
        return FireLogEntry(rule.ruleId, record.deviceId, record.seq, tuple(outcomes), started, duration)

    def _run_action(self, action, record, context, bindings) -> None:
        if isinstance(action, DeviceAction):
            self._hub.invoke_action(
                ActionDescriptor(action.deviceId, action.actionName, action.params),
                chain_depth=record.chainDepth + 1,
            )
        elif isinstance(action, CaptureImage):
            result = self._hub.invoke_action(
                ActionDescriptor(action.cameraId, "takePicture", {}),
                chain_depth=record.chainDepth + 1,
            )
            ref = result["image"]
            bindings[action.bindAs] = ref
            context[action.bindAs] = ref
        elif isinstance(action, SendEmail):
            attachment = None
            if action.attach is not None:
                ref = bindings[action.attach]
                data, mime = self._images.get(ref.id)
                attachment = Attachment(mime, data)
            body = render_template(action.bodyTemplate, context)
            try:
                self._mail.send(action.to, action.subject, body, attachment)
            except HubError:
                raise
            except Exception as exc:
                raise SinkFailureError(f"mail sink failed: {exc}") from exc
        elif isinstance(action, UploadPicture):
            ref = bindings[action.source]
            data, mime = self._images.get(ref.id)
            name = check_path_component(render_template(action.nameTemplate, context), "name")
            self._blobs.put(action.container, name, mime, data)
        elif isinstance(action, AppendStream):
            self._streams.append(action.streamName, render_template(action.textTemplate, context))
        else:
            raise InvalidArgumentError(f"unknown rule action {action!r}")

    # --- validation ---

    def _validate(self, trigger: RuleTrigger, actions) -> set[str]:
        if not 1 <= len(actions) <= MAX_ACTIONS_PER_RULE:
            raise InvalidArgumentError(f"rules carry 1..{MAX_ACTIONS_PER_RULE} actions")
        if trigger.deviceId == PLATFORM_DEVICE_ID:
            if trigger.eventName not in LIFECYCLE_EVENT_NAMES:
                raise UnknownEventNameError(f"no lifecycle event {trigger.eventName!r}")
            allowed = {"device", "event", "timestamp"} | payload_keys_for(None, trigger.eventName)
        else:
            descriptor = self._hub.get_device(trigger.deviceId)
            if trigger.eventName not in descriptor.eventNames:
                raise UnknownEventNameError(
                    f"device {trigger.deviceId!r} has no event {trigger.eventName!r}"
                )
            allowed = {"device", "event", "timestamp"} | payload_keys_for(descriptor.kind, trigger.eventName)

        def check_template(template):
            for name in template_fields(template):
                if name not in allowed:
                    raise BadTemplateError(f"template {template!r}: unknown placeholder {{{name}}}")

        bound: set[str] = set()
        for action in actions:
            if isinstance(action, DeviceAction):
                descriptor = self._hub.get_device(action.deviceId)
                if action.actionName not in descriptor.actionNames:
                    raise UnknownActionError(
                        f"device {action.deviceId!r} has no action {action.actionName!r}"
                    )
            elif isinstance(action, CaptureImage):
                descriptor = self._hub.get_device(action.cameraId)
                if descriptor.kind is not DeviceKind.CAMERA:
                    raise WrongKindError(f"device {action.cameraId!r} is not a camera")
                if not _FIELD_RE.match(action.bindAs or ""):
                    raise BadTemplateError(f"bad binding name {action.bindAs!r}")
                bound.add(action.bindAs)
                allowed.add(action.bindAs)
            elif isinstance(action, SendEmail):
                validate_address(action.to)
                check_template(action.bodyTemplate)
                if action.attach is not None and action.attach not in bound:
                    raise BadTemplateError(f"attach binding {action.attach!r} is not bound earlier")
            elif isinstance(action, UploadPicture):
                check_path_component(action.container, "container")
                check_template(action.nameTemplate)
                if action.source not in bound:
                    raise BadTemplateError(f"source binding {action.source!r} is not bound earlier")
            elif isinstance(action, AppendStream):
                check_path_component(action.streamName, "stream")
                check_template(action.textTemplate)
            else:
                raise InvalidArgumentError(f"unknown rule action {action!r}")
        return allowed

    # --- persistence ---

    def _persist(self) -> None:
        if not self._rules_path:
            return
        rules = sorted(self._rules.values(), key=lambda r: (r.createdAtUtcMs, r.ruleId))
        data = json.dumps([encode_rule(r, include_fire_count=False) for r in rules], indent=2)
        self._rules_path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self._rules_path.with_suffix(".tmp")
        tmp.write_text(data, encoding="utf-8")
        tmp.replace(self._rules_path)

    def _load(self) -> None:
        raw = json.loads(self._rules_path.read_text(encoding="utf-8"))
        for obj in raw:
            rule = decode_rule(obj)
            self._rules[rule.ruleId] = rule
            self._fire_logs[rule.ruleId] = deque(maxlen=self._fire_log_limit)
        logger.info("loaded %d rules from %s", len(self._rules), self._rules_path)
