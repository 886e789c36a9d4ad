"""Shared vocabulary of devices, events, actions and payload values.

These are plain immutable values plus their JSON wire encoding. The
capability table below is the single normative source for which events a
device kind emits and which actions it accepts; every validation in the hub
derives from it.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Union

from .errors import InvalidArgumentError, NonFiniteValueError

DEVICE_ID_RE = re.compile(r"^[A-Za-z0-9._-]{1,64}$")

#: Pseudo-device carrying platform lifecycle events. Deliberately outside the
#: DEVICE_ID_RE charset so it can never collide with a registered device.
PLATFORM_DEVICE_ID = "@platform"

PLATFORM_STARTED = "platformStarted"
PLATFORM_STOPPED = "platformStopped"
DEVICE_REGISTERED = "deviceRegistered"
DEVICE_DISCONNECTED = "deviceDisconnected"

LIFECYCLE_EVENT_NAMES = frozenset(
    {PLATFORM_STARTED, PLATFORM_STOPPED, DEVICE_REGISTERED, DEVICE_DISCONNECTED}
)


class DeviceKind(str, Enum):
    DOOR_SENSOR = "door-sensor"
    CAMERA = "camera"
    TEMPERATURE_SENSOR = "temperature-sensor"
    HUMIDITY_SENSOR = "humidity-sensor"


#: kind -> (event names, action names). Sensors expose no actions; the camera
#: emits no events of its own.
CAPABILITIES: dict[DeviceKind, tuple[frozenset[str], frozenset[str]]] = {
    DeviceKind.DOOR_SENSOR: (frozenset({"doorOpened", "doorClosed"}), frozenset()),
    DeviceKind.CAMERA: (frozenset(), frozenset({"takePicture"})),
    DeviceKind.TEMPERATURE_SENSOR: (frozenset({"sample"}), frozenset()),
    DeviceKind.HUMIDITY_SENSOR: (frozenset({"sample"}), frozenset()),
}

#: Payload key carried by a sensor's "sample" event, per kind.
SAMPLE_VALUE_KEY = {
    DeviceKind.TEMPERATURE_SENSOR: "celsius",
    DeviceKind.HUMIDITY_SENSOR: "percentRH",
}

_LIFECYCLE_PAYLOAD_KEYS = {
    PLATFORM_STARTED: frozenset(),
    PLATFORM_STOPPED: frozenset(),
    DEVICE_REGISTERED: frozenset({"deviceId"}),
    DEVICE_DISCONNECTED: frozenset({"deviceId"}),
}


def payload_keys_for(kind: DeviceKind | None, event_name: str) -> frozenset[str]:
    """Payload keys an event of this name may carry (kind=None for lifecycle)."""
    if kind is None:
        return _LIFECYCLE_PAYLOAD_KEYS.get(event_name, frozenset())
    if event_name == "sample" and kind in SAMPLE_VALUE_KEY:
        return frozenset({SAMPLE_VALUE_KEY[kind]})
    return frozenset()


@dataclass(frozen=True)
class BlobRef:
    """Handle to stored bytes; the sha256 lets any holder verify content."""

    id: str
    mime: str
    sizeBytes: int
    sha256: str


#: Values that may cross the API boundary inside event payloads and action
#: params. Numbers are finite doubles; bools are distinct from numbers.
PayloadValue = Union[str, float, bool, BlobRef]


@dataclass(frozen=True)
class DeviceDescriptor:
    id: str
    kind: DeviceKind
    name: str = ""
    location: str = ""
    connected: bool = True
    eventNames: frozenset[str] = frozenset()
    actionNames: frozenset[str] = frozenset()


def descriptor_for(
    device_id: str,
    kind: DeviceKind,
    name: str = "",
    location: str = "",
    connected: bool = True,
) -> DeviceDescriptor:
    """Build a descriptor whose capability sets match the table for `kind`."""
    events, actions = CAPABILITIES[kind]
    return DeviceDescriptor(device_id, kind, name, location, connected, events, actions)


@dataclass(frozen=True)
class EventRecord:
    deviceId: str
    seq: int
    eventName: str
    payload: Mapping[str, PayloadValue]
    timestampUtcMs: int
    #: Hub-internal causal depth used for rule-chain loop protection; never
    #: serialized and excluded from equality.
    chainDepth: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ActionDescriptor:
    deviceId: str
    actionName: str
    params: Mapping[str, PayloadValue] = field(default_factory=dict)


def validate_descriptor(d: DeviceDescriptor) -> list[str]:
    """Return every invariant violation; empty list means the descriptor is ok."""
    violations = []
    if not d.id:
        violations.append("empty id")
    elif not DEVICE_ID_RE.match(d.id):
        violations.append(f"id {d.id!r} not matching [A-Za-z0-9._-]{{1,64}}")
    kind = d.kind
    if not isinstance(kind, DeviceKind):
        try:
            kind = DeviceKind(kind)
        except ValueError:
            violations.append(f"unknown kind {d.kind!r}")
            return violations
    events, actions = CAPABILITIES[kind]
    for extra in sorted(frozenset(d.eventNames) - events):
        violations.append(f"unknown event {extra!r} for kind {kind.value}")
    for missing in sorted(events - frozenset(d.eventNames)):
        violations.append(f"missing event {missing!r} for kind {kind.value}")
    for extra in sorted(frozenset(d.actionNames) - actions):
        violations.append(f"unknown action {extra!r} for kind {kind.value}")
    for missing in sorted(actions - frozenset(d.actionNames)):
        violations.append(f"missing action {missing!r} for kind {kind.value}")
    return violations


def normalize_payload(payload: Mapping[str, PayloadValue] | None) -> dict[str, PayloadValue]:
    """Validate a payload mapping; ints become floats, non-finite numbers fail."""
    out: dict[str, PayloadValue] = {}
    for key, value in (payload or {}).items():
        if not isinstance(key, str) or not key:
            raise InvalidArgumentError(f"payload key {key!r} must be a non-empty string")
        if isinstance(value, bool):
            out[key] = value
        elif isinstance(value, (int, float)):
            value = float(value)
            if not math.isfinite(value):
                raise NonFiniteValueError(f"payload {key!r} is not finite")
            out[key] = value
        elif isinstance(value, (str, BlobRef)):
            out[key] = value
        else:
            raise InvalidArgumentError(
                f"payload {key!r} has unsupported type {type(value).__name__}"
            )
    return out


# --- JSON wire encoding -----------------------------------------------------
#
# PayloadValue goes on the wire as {"t": tag, "v": value}; every other type
# uses its field names verbatim. Set-valued fields are sorted lists in JSON.

def encode_blob_ref(ref: BlobRef) -> dict:
    return {"id": ref.id, "mime": ref.mime, "sizeBytes": ref.sizeBytes, "sha256": ref.sha256}


def decode_blob_ref(obj) -> BlobRef:
    try:
        ref = BlobRef(
            id=obj["id"],
            mime=obj["mime"],
            sizeBytes=int(obj["sizeBytes"]),
            sha256=obj["sha256"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"malformed blob ref: {exc}") from exc
    if not isinstance(ref.id, str) or not ref.id:
        raise InvalidArgumentError("blob ref id must be a non-empty string")
    return ref


def encode_payload_value(value: PayloadValue) -> dict:
    if isinstance(value, bool):
        return {"t": "flag", "v": value}
    if isinstance(value, (int, float)):
        value = float(value)
        if not math.isfinite(value):
            raise NonFiniteValueError("number payload is not finite")
        return {"t": "number", "v": value}
    if isinstance(value, str):
        return {"t": "text", "v": value}
    if isinstance(value, BlobRef):
        return {"t": "blobRef", "v": encode_blob_ref(value)}
    raise InvalidArgumentError(f"unsupported payload value type {type(value).__name__}")


def decode_payload_value(obj) -> PayloadValue:
    if not isinstance(obj, dict) or "t" not in obj or "v" not in obj:
        raise InvalidArgumentError(f"malformed payload value: {obj!r}")
    tag, value = obj["t"], obj["v"]
    if tag == "text":
        if not isinstance(value, str):
            raise InvalidArgumentError("text payload must be a string")
        return value
    if tag == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InvalidArgumentError("number payload must be numeric")
        value = float(value)
        if not math.isfinite(value):
            raise NonFiniteValueError("number payload is not finite")
        return value
    if tag == "flag":
        if not isinstance(value, bool):
            raise InvalidArgumentError("flag payload must be a boolean")
        return value
    if tag == "blobRef":
        return decode_blob_ref(value)
    raise InvalidArgumentError(f"unknown payload tag {tag!r}")


def encode_payload(payload: Mapping[str, PayloadValue]) -> dict:
    return {key: encode_payload_value(value) for key, value in payload.items()}


def decode_payload(obj) -> dict[str, PayloadValue]:
    if not isinstance(obj, dict):
        raise InvalidArgumentError("payload must be an object")
    return {key: decode_payload_value(value) for key, value in obj.items()}


def encode_descriptor(d: DeviceDescriptor) -> dict:
    return {
        "id": d.id,
        "kind": d.kind.value,
        "name": d.name,
        "location": d.location,
        "connected": d.connected,
        "eventNames": sorted(d.eventNames),
        "actionNames": sorted(d.actionNames),
    }


def decode_descriptor(obj) -> DeviceDescriptor:
    try:
        return DeviceDescriptor(
            id=obj["id"],
            kind=DeviceKind(obj["kind"]),
            name=obj.get("name", ""),
            location=obj.get("location", ""),
            connected=bool(obj.get("connected", True)),
            eventNames=frozenset(obj.get("eventNames", ())),
            actionNames=frozenset(obj.get("actionNames", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"malformed descriptor: {exc}") from exc


def encode_record(record: EventRecord) -> dict:
    return {
        "deviceId": record.deviceId,
        "seq": record.seq,
        "eventName": record.eventName,
        "payload": encode_payload(record.payload),
        "timestampUtcMs": record.timestampUtcMs,
    }


def decode_record(obj) -> EventRecord:
    try:
        return EventRecord(
            deviceId=obj["deviceId"],
            seq=int(obj["seq"]),
            eventName=obj["eventName"],
            payload=decode_payload(obj["payload"]),
            timestampUtcMs=int(obj["timestampUtcMs"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"malformed event record: {exc}") from exc


def encode_action(action: ActionDescriptor) -> dict:
    return {
        "deviceId": action.deviceId,
        "actionName": action.actionName,
        "params": encode_payload(action.params),
    }


def decode_action(obj) -> ActionDescriptor:
    try:
        return ActionDescriptor(
            deviceId=obj["deviceId"],
            actionName=obj["actionName"],
            params=decode_payload(obj.get("params", {})),
        )
    except (KeyError, TypeError) as exc:
        raise InvalidArgumentError(f"malformed action: {exc}") from exc
