"""Deterministic simulated devices: door sensor, camera, temperature and
humidity sensors.

They stand in for real hardware everywhere — tests, the CLI admin endpoints,
and scenario scripts. Camera frames are synthesized from (seed, invocation
count, timestamp text) so the repo ships no binary fixtures and identical
runs produce identical bytes.
"""

from __future__ import annotations

import io
import logging
import math
import random
import threading
from dataclasses import dataclass, field
from typing import Optional, Union

from PIL import Image, ImageDraw

from .blobs import ImageStore
from .clock import Clock
from .errors import (
    DeviceDisconnectedError,
    HubError,
    InvalidScenarioError,
    NonFiniteValueError,
    WrongKindError,
)
from .kernel import Hub
from .model import (
    SAMPLE_VALUE_KEY,
    ActionDescriptor,
    BlobRef,
    DeviceKind,
    EventRecord,
    descriptor_for,
)

logger = logging.getLogger(__name__)

CAMERA_SIZE = (160, 120)


def render_camera_png(seed: int, count: int, timestamp_text: str) -> bytes:
    """Synthesize one 160x120 PNG frame; same inputs, same bytes."""
    rng = random.Random(f"{seed}:{count}:{timestamp_text}")
    img = Image.frombytes("RGB", CAMERA_SIZE, rng.randbytes(CAMERA_SIZE[0] * CAMERA_SIZE[1] * 3))
    draw = ImageDraw.Draw(img)
    draw.rectangle([0, 0, CAMERA_SIZE[0] - 1, 13], fill=(0, 0, 0))
    draw.text((2, 2), f"#{count} @ {timestamp_text}", fill=(255, 255, 255))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


# --- scenarios ---------------------------------------------------------------

@dataclass(frozen=True)
class SetDoor:
    deviceId: str
    open: bool


@dataclass(frozen=True)
class EmitSample:
    deviceId: str
    value: float


@dataclass(frozen=True)
class Tick:
    pass


SimCommand = Union[SetDoor, EmitSample, Tick]


@dataclass(frozen=True)
class SimStep:
    offset_ms: int
    command: SimCommand


@dataclass(frozen=True)
class SimScenario:
    steps: tuple[SimStep, ...]
    seed: int = 0

    def validate(self) -> None:
        last = 0
        for step in self.steps:
            if step.offset_ms < last:
                raise InvalidScenarioError("step offsets must be non-decreasing")
            last = step.offset_ms


def scenario_from_json(obj) -> SimScenario:
    """Parse {"seed": N, "steps": [{"offsetMs": N, "command": {...}}, ...]}."""
    if not isinstance(obj, dict):
        raise InvalidScenarioError("scenario must be a JSON object")
    seed = obj.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise InvalidScenarioError("seed must be a non-negative integer")
    steps = []
    for i, raw in enumerate(obj.get("steps", [])):
        try:
            offset = raw["offsetMs"]
            command = raw["command"]
            kind = command["type"]
        except (KeyError, TypeError) as exc:
            raise InvalidScenarioError(f"step {i}: {exc}") from exc
        if not isinstance(offset, int) or isinstance(offset, bool) or offset < 0:
            raise InvalidScenarioError(f"step {i}: offsetMs must be a non-negative integer")
        if kind == "setDoor":
            if not isinstance(command.get("open"), bool):
                raise InvalidScenarioError(f"step {i}: setDoor needs boolean 'open'")
            parsed: SimCommand = SetDoor(command.get("deviceId", ""), command["open"])
        elif kind == "emitSample":
            value = command.get("value")
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise InvalidScenarioError(f"step {i}: emitSample needs numeric 'value'")
            parsed = EmitSample(command.get("deviceId", ""), float(value))
        elif kind == "tick":
            parsed = Tick()
        else:
            raise InvalidScenarioError(f"step {i}: unknown command type {kind!r}")
        steps.append(SimStep(offset, parsed))
    scenario = SimScenario(tuple(steps), seed)
    scenario.validate()
    return scenario


class ScenarioRunError(HubError):
    """A per-command fault aborted the run; already-published records attach."""

    def __init__(self, cause: HubError, partial: list[EventRecord]):
        super().__init__(f"scenario aborted: {cause}")
        self.code = cause.code
        self.cause_error = cause
        self.partial = partial


# --- simulator ---------------------------------------------------------------

class SimManager:
    """Owns per-device simulator state (door positions, camera counters) and
    drives the kernel on behalf of the virtual hardware."""

    def __init__(self, hub: Hub, images: ImageStore, seed: int = 0):
        self._hub = hub
        self._images = images
        self._seed = seed
        self._door_open: dict[str, bool] = {}
        self._camera_count: dict[str, int] = {}
        self._lock = threading.Lock()

    def reseed(self, seed: int) -> None:
        with self._lock:
            self._seed = seed
            self._camera_count.clear()

    def add_device(self, device_id: str, kind: DeviceKind | str,
                   name: str = "", location: str = ""):
        """Create (or reconnect) a simulated device and register it."""
        kind = DeviceKind(kind)
        descriptor = descriptor_for(device_id, kind, name, location)
        handler = self._camera_handler(device_id) if kind is DeviceKind.CAMERA else None
        self._hub.register_device(descriptor, handler)
        with self._lock:
            if kind is DeviceKind.DOOR_SENSOR:
                self._door_open.setdefault(device_id, False)
        return self._hub.get_device(device_id)

    def disconnect(self, device_id: str) -> None:
        self._hub.disconnect_device(device_id)

    def set_door(self, device_id: str, open: bool) -> Optional[EventRecord]:
        """Publish doorOpened/doorClosed; re-asserting the current state is a no-op."""
        descriptor = self._hub.get_device(device_id)
        if descriptor.kind is not DeviceKind.DOOR_SENSOR:
            raise WrongKindError(f"device {device_id!r} is a {descriptor.kind.value}, not a door-sensor")
        if not descriptor.connected:
            raise DeviceDisconnectedError(f"device {device_id!r} is disconnected")
        with self._lock:
            if self._door_open.get(device_id, False) == open:
                return None
            self._door_open[device_id] = open
            return self._hub.publish(device_id, "doorOpened" if open else "doorClosed", {})

    def emit_sample(self, device_id: str, value: float) -> EventRecord:
        descriptor = self._hub.get_device(device_id)
        if descriptor.kind not in SAMPLE_VALUE_KEY:
            raise WrongKindError(
                f"device {device_id!r} is a {descriptor.kind.value}, not a temperature/humidity sensor"
            )
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise NonFiniteValueError(f"sample value {value!r} is not a finite number")
        key = SAMPLE_VALUE_KEY[descriptor.kind]
        return self._hub.publish(device_id, "sample", {key: float(value)})

    def take_picture(self, device_id: str) -> BlobRef:
        result = self._hub.invoke_action(ActionDescriptor(device_id, "takePicture", {}))
        return result["image"]

    def _camera_handler(self, device_id: str):
        def handler(action: ActionDescriptor):
            with self._lock:
                self._camera_count[device_id] = count = self._camera_count.get(device_id, 0) + 1
                seed = self._seed
            png = render_camera_png(seed, count, str(self._hub.clock.now_ms()))
            ref = self._images.put(png, "image/png")
            return {"image": ref}

        return handler

    def run_scenario(self, scenario: SimScenario, clock: Clock | None = None) -> list[EventRecord]:
        """Execute steps in offset order against the given clock; returns all
        published records in publish order. A command fault aborts the run
        with the partial results attached."""
        scenario.validate()
        clock = clock or self._hub.clock
        self.reseed(scenario.seed)
        published: list[EventRecord] = []
        elapsed = 0
        for step in scenario.steps:
            clock.sleep_ms(step.offset_ms - elapsed)
            elapsed = step.offset_ms
            try:
                record = self._execute(step.command)
            except HubError as exc:
                raise ScenarioRunError(exc, published) from exc
            if record is not None:
                published.append(record)
        return published

    def _execute(self, command: SimCommand) -> Optional[EventRecord]:
        if isinstance(command, SetDoor):
            return self.set_door(command.deviceId, command.open)
        if isinstance(command, EmitSample):
            return self.emit_sample(command.deviceId, command.value)
        return None
