import json
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from generichub.errors import InvalidArgumentError, NonFiniteValueError
from generichub.model import (
    CAPABILITIES,
    ActionDescriptor,
    BlobRef,
    DeviceKind,
    EventRecord,
    decode_action,
    decode_descriptor,
    decode_payload_value,
    decode_record,
    descriptor_for,
    encode_action,
    encode_descriptor,
    encode_payload_value,
    encode_record,
    normalize_payload,
    validate_descriptor,
)

# --- capability table -----------------------------------------------------------

def test_capability_table_matches_contract():
    assert CAPABILITIES[DeviceKind.DOOR_SENSOR] == (frozenset({"doorOpened", "doorClosed"}), frozenset())
    assert CAPABILITIES[DeviceKind.CAMERA] == (frozenset(), frozenset({"takePicture"}))
    assert CAPABILITIES[DeviceKind.TEMPERATURE_SENSOR][0] == frozenset({"sample"})
    assert CAPABILITIES[DeviceKind.HUMIDITY_SENSOR][0] == frozenset({"sample"})


def test_validate_descriptor_ok_door_sensor():
    d = descriptor_for("door1", DeviceKind.DOOR_SENSOR)
    assert validate_descriptor(d) == []


def test_validate_descriptor_unknown_action():
    bad = replace(descriptor_for("cam1", DeviceKind.CAMERA),
                  actionNames=frozenset({"takePicture", "selfDestruct"}))
    assert any("unknown action" in v for v in validate_descriptor(bad))


def test_validate_descriptor_empty_id():
    bad = replace(descriptor_for("door1", DeviceKind.DOOR_SENSOR), id="")
    assert any("empty id" in v for v in validate_descriptor(bad))


def test_validate_descriptor_bad_charset_and_missing_events():
    bad = replace(descriptor_for("door 1!", DeviceKind.DOOR_SENSOR),
                  eventNames=frozenset({"doorOpened"}))
    violations = validate_descriptor(bad)
    assert any("not matching" in v for v in violations)
    assert any("missing event" in v for v in violations)


def test_reserved_platform_id_is_rejected_for_devices():
    d = descriptor_for("@platform", DeviceKind.DOOR_SENSOR)
    assert validate_descriptor(d)


# --- payload values --------------------------------------------------------------

def test_normalize_payload_converts_ints_and_rejects_nan():
    out = normalize_payload({"celsius": 21})
    assert out == {"celsius": 21.0} and isinstance(out["celsius"], float)
    with pytest.raises(NonFiniteValueError):
        normalize_payload({"celsius": float("nan")})
    with pytest.raises(NonFiniteValueError):
        normalize_payload({"celsius": float("inf")})
    with pytest.raises(InvalidArgumentError):
        normalize_payload({"bad": object()})
    with pytest.raises(InvalidArgumentError):
        normalize_payload({"": 1.0})


def test_payload_value_tags():
    assert encode_payload_value("hi") == {"t": "text", "v": "hi"}
    assert encode_payload_value(21.5) == {"t": "number", "v": 21.5}
    assert encode_payload_value(True) == {"t": "flag", "v": True}
    ref = BlobRef("b1", "image/png", 3, "ab" * 32)
    assert encode_payload_value(ref)["t"] == "blobRef"
    assert decode_payload_value(encode_payload_value(ref)) == ref


def test_decode_payload_value_rejects_garbage():
    with pytest.raises(InvalidArgumentError):
        decode_payload_value({"t": "mystery", "v": 1})
    with pytest.raises(InvalidArgumentError):
        decode_payload_value("bare")
    with pytest.raises(InvalidArgumentError):
        decode_payload_value({"t": "flag", "v": 1})
    with pytest.raises(NonFiniteValueError):
        decode_payload_value({"t": "number", "v": float("inf")})


# --- round trips ------------------------------------------------------------------

_device_ids = st.from_regex(r"[A-Za-z0-9._-]{1,64}", fullmatch=True)
_names = st.text(min_size=0, max_size=20)
_blob_refs = st.builds(
    BlobRef,
    id=st.from_regex(r"[0-9a-f]{32}", fullmatch=True),
    mime=st.sampled_from(["image/png", "image/jpeg"]),
    sizeBytes=st.integers(0, 2**32),
    sha256=st.from_regex(r"[0-9a-f]{64}", fullmatch=True),
)
_values = st.one_of(
    st.text(max_size=30),
    st.floats(allow_nan=False, allow_infinity=False),
    st.booleans(),
    _blob_refs,
)
_payloads = st.dictionaries(st.text(min_size=1, max_size=10), _values, max_size=4)

_descriptors = st.builds(
    lambda device_id, kind, name, location, connected: descriptor_for(
        device_id, kind, name, location, connected),
    _device_ids, st.sampled_from(list(DeviceKind)), _names, _names, st.booleans(),
)

_records = st.builds(
    EventRecord,
    deviceId=_device_ids,
    seq=st.integers(1, 2**63 - 1),
    eventName=st.sampled_from(["doorOpened", "doorClosed", "sample", "platformStarted"]),
    payload=_payloads,
    timestampUtcMs=st.integers(-2**62, 2**62),
)

_actions = st.builds(
    ActionDescriptor,
    deviceId=_device_ids,
    actionName=st.sampled_from(["takePicture"]),
    params=_payloads,
)


def _through_json(obj):
    return json.loads(json.dumps(obj))


@given(_descriptors)
def test_descriptor_round_trip(d):
    assert decode_descriptor(_through_json(encode_descriptor(d))) == d


@given(_records)
def test_record_round_trip(record):
    assert decode_record(_through_json(encode_record(record))) == record


@given(_actions)
def test_action_round_trip(action):
    assert decode_action(_through_json(encode_action(action))) == action


@given(_records)
def test_encode_decode_encode_is_stable(record):
    encoded = encode_record(record)
    assert encode_record(decode_record(encoded)) == encoded


def test_chain_depth_not_serialized_and_not_compared():
    a = EventRecord("d", 1, "doorOpened", {}, 0, chainDepth=3)
    b = EventRecord("d", 1, "doorOpened", {}, 0, chainDepth=0)
    assert a == b
    assert "chainDepth" not in encode_record(a)
