"""Platform kernel: device registry, lifecycle management, and the event bus.

All five platform event kinds — start, stop, device registered, device
disconnected, device-specific — travel as ordinary EventRecords; the first
four ride on the reserved "@platform" pseudo-device so one subscription
mechanism serves everything.

Delivery contract: per-device FIFO, at-most-once per subscription, bounded
queues with drop-oldest and a sticky overflow flag. Cross-device ordering is
not part of the contract.
"""

from __future__ import annotations

import json
import logging
import secrets
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeoutError
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Optional

from .clock import Clock, RealClock
from .errors import (
    AlreadyDisconnectedError,
    AlreadyStartedError,
    DeviceDisconnectedError,
    DriverFailureError,
    DuplicateIdError,
    HubError,
    InvalidArgumentError,
    InvalidDescriptorError,
    NotStartedError,
    PlatformStoppedError,
    TooManySubscriptionsError,
    UnknownActionError,
    UnknownDeviceError,
    UnknownEventNameError,
    UnknownSubscriptionError,
)
from .model import (
    DEVICE_DISCONNECTED,
    DEVICE_REGISTERED,
    PLATFORM_DEVICE_ID,
    PLATFORM_STARTED,
    PLATFORM_STOPPED,
    ActionDescriptor,
    DeviceDescriptor,
    EventRecord,
    PayloadValue,
    decode_descriptor,
    encode_descriptor,
    normalize_payload,
    validate_descriptor,
)

logger = logging.getLogger(__name__)

MAX_POLL_TIMEOUT_MS = 30_000
MAX_POLL_BATCH = 100
DEFAULT_QUEUE_CAPACITY = 1024
MAX_SUBSCRIPTIONS = 256
SUBSCRIPTION_IDLE_MS = 10 * 60 * 1000
ACTION_TIMEOUT_MS = 5_000

#: Driver action handler: receives the descriptor, returns the result payload.
ActionHandler = Callable[[ActionDescriptor], Mapping[str, PayloadValue]]


@dataclass
class PollResult:
    events: list[EventRecord]
    overflowed: bool


class Subscription:
    """Filtered, bounded FIFO of records, drained by long-polls.

    offer() is only called while the hub lock is held, which is what makes
    per-device FIFO hold across subscriptions.
    """

    def __init__(self, sub_id: str, device_id: Optional[str], event_name: Optional[str],
                 capacity: int, now_ms: int):
        self.id = sub_id
        self.device_id = device_id
        self.event_name = event_name
        self.capacity = capacity
        self.created_at_ms = now_ms
        self.last_poll_ms = now_ms
        self.overflowed = False
        self.dropped = 0
        self.closed = False
        self._items: deque[EventRecord] = deque()
        self._cond = threading.Condition()
        self._poll_lock = threading.Lock()

    def matches(self, record: EventRecord) -> bool:
        if self.device_id is not None and record.deviceId != self.device_id:
            return False
        if self.event_name is not None and record.eventName != self.event_name:
            return False
        return True

    def offer(self, record: EventRecord) -> None:
        with self._cond:
            if len(self._items) >= self.capacity:
                self._items.popleft()
                self.dropped += 1
                self.overflowed = True
            self._items.append(record)
            self._cond.notify_all()

    def wake(self) -> None:
        with self._cond:
            self._cond.notify_all()


class Hub:
    """One hub instance == one platform run (started once, stopped once)."""

    def __init__(
        self,
        clock: Clock | None = None,
        queue_capacity: int = DEFAULT_QUEUE_CAPACITY,
        max_subscriptions: int = MAX_SUBSCRIPTIONS,
        registry_path=None,
        action_timeout_ms: int = ACTION_TIMEOUT_MS,
        subscription_idle_ms: int = SUBSCRIPTION_IDLE_MS,
    ):
        self.clock = clock or RealClock()
        self._queue_capacity = queue_capacity
        self._max_subscriptions = max_subscriptions
        self._registry_path = Path(registry_path) if registry_path else None
        self._action_timeout_ms = action_timeout_ms
        self._subscription_idle_ms = subscription_idle_ms

        self._lock = threading.RLock()
        self._devices: dict[str, DeviceDescriptor] = {}
        self._seq: dict[str, int] = {}
        self._handlers: dict[str, ActionHandler] = {}
        self._subs: dict[str, Subscription] = {}
        self._state = "new"  # new -> started -> stopped
        self._action_pool = ThreadPoolExecutor(max_workers=8, thread_name_prefix="hub-action")
        self._publish_depth = threading.local()

    # --- lifecycle ---

    def start(self) -> None:
        with self._lock:
            if self._state == "started":
                raise AlreadyStartedError("platform already started")
            if self._state == "stopped":
                raise PlatformStoppedError("platform was stopped; build a new hub to restart")
            if self._registry_path and self._registry_path.exists():
                self._restore_registry()
            self._state = "started"
            self._publish_platform(PLATFORM_STARTED, {})

    def stop(self) -> None:
        with self._lock:
            self._require_started()
            self._publish_platform(PLATFORM_STOPPED, {})
            self._state = "stopped"
            if self._registry_path:
                self._snapshot_registry()
            for sub in self._subs.values():
                sub.wake()
        self._action_pool.shutdown(wait=False)

    @property
    def started(self) -> bool:
        return self._state == "started"

    @property
    def stopped(self) -> bool:
        return self._state == "stopped"

    def _require_started(self):
        if self._state == "new":
            raise NotStartedError("platform not started")
        if self._state == "stopped":
            raise PlatformStoppedError("platform stopped")

    # --- registry ---

    def register_device(self, descriptor: DeviceDescriptor, handler: ActionHandler | None = None) -> None:
        with self._lock:
            self._require_started()
            violations = validate_descriptor(descriptor)
            if violations:
                raise InvalidDescriptorError("; ".join(violations))
            existing = self._devices.get(descriptor.id)
            if existing is not None and existing.connected:
                raise DuplicateIdError(f"device {descriptor.id!r} already connected")
            self._devices[descriptor.id] = replace(descriptor, connected=True)
            if handler is not None:
                self._handlers[descriptor.id] = handler
            self._publish_platform(DEVICE_REGISTERED, {"deviceId": descriptor.id})
            logger.info("device registered: %s (%s)", descriptor.id, descriptor.kind.value)

    def disconnect_device(self, device_id: str) -> None:
        with self._lock:
            self._require_started()
            existing = self._devices.get(device_id)
            if existing is None:
                raise UnknownDeviceError(f"no device {device_id!r}")
            if not existing.connected:
                raise AlreadyDisconnectedError(f"device {device_id!r} already disconnected")
            self._devices[device_id] = replace(existing, connected=False)
            self._publish_platform(DEVICE_DISCONNECTED, {"deviceId": device_id})
            logger.info("device disconnected: %s", device_id)

    def get_device(self, device_id: str) -> DeviceDescriptor:
        with self._lock:
            descriptor = self._devices.get(device_id)
            if descriptor is None:
                raise UnknownDeviceError(f"no device {device_id!r}")
            return descriptor

    def list_devices(self) -> list[DeviceDescriptor]:
        with self._lock:
            self._require_started()
            return sorted(self._devices.values(), key=lambda d: d.id)

    # --- publishing ---

    def publish(self, device_id: str, event_name: str,
                payload: Mapping[str, PayloadValue] | None = None) -> EventRecord:
        payload = normalize_payload(payload)
        with self._lock:
            self._require_started()
            descriptor = self._devices.get(device_id)
            if descriptor is None:
                raise UnknownDeviceError(f"no device {device_id!r}")
            if not descriptor.connected:
                raise DeviceDisconnectedError(f"device {device_id!r} is disconnected")
            if event_name not in descriptor.eventNames:
                raise UnknownEventNameError(
                    f"device {device_id!r} ({descriptor.kind.value}) has no event {event_name!r}"
                )
            return self._fan_out(device_id, event_name, payload)

    def _publish_platform(self, event_name: str, payload: Mapping[str, PayloadValue]) -> EventRecord:
        return self._fan_out(PLATFORM_DEVICE_ID, event_name, dict(payload))

    def _fan_out(self, device_id, event_name, payload) -> EventRecord:
        seq = self._seq.get(device_id, 0) + 1
        self._seq[device_id] = seq
        record = EventRecord(
            deviceId=device_id,
            seq=seq,
            eventName=event_name,
            payload=payload,
            timestampUtcMs=self.clock.now_ms(),
            chainDepth=getattr(self._publish_depth, "value", 0),
        )
        for sub in self._subs.values():
            if sub.matches(record):
                sub.offer(record)
        return record

    # --- actions ---

    def invoke_action(self, action: ActionDescriptor, chain_depth: int = 0) -> dict[str, PayloadValue]:
        normalize_payload(action.params)
        with self._lock:
            self._require_started()
            descriptor = self._devices.get(action.deviceId)
            if descriptor is None:
                raise UnknownDeviceError(f"no device {action.deviceId!r}")
            if not descriptor.connected:
                raise DeviceDisconnectedError(f"device {action.deviceId!r} is disconnected")
            if action.actionName not in descriptor.actionNames:
                raise UnknownActionError(
                    f"device {action.deviceId!r} ({descriptor.kind.value}) has no action {action.actionName!r}"
                )
            handler = self._handlers.get(action.deviceId)
        if handler is None:
            raise DriverFailureError(f"no driver bound for {action.deviceId!r}")
        future = self._action_pool.submit(self._run_action, handler, action, chain_depth)
        try:
            result = future.result(timeout=self._action_timeout_ms / 1000.0)
        except FutureTimeoutError:
            raise DriverFailureError(
                f"driver for {action.deviceId!r} exceeded {self._action_timeout_ms} ms"
            ) from None
        except HubError:
            raise
        except Exception as exc:
            raise DriverFailureError(f"driver for {action.deviceId!r} failed: {exc}") from exc
        return normalize_payload(result)

    def _run_action(self, handler, action, chain_depth):
        # Publishes made while a driver handles an action inherit the causal
        # depth, which is what lets the rule engine cap trigger chains.
        self._publish_depth.value = chain_depth
        try:
            return handler(action)
        finally:
            self._publish_depth.value = 0

    # --- subscriptions ---

    def watch(self, device_id: Optional[str] = None, event_name: Optional[str] = None) -> Subscription:
        """Create a subscription. Allowed before start so that internal
        consumers (and lifecycle tests) can observe platformStarted."""
        with self._lock:
            if self._state == "stopped":
                raise PlatformStoppedError("platform stopped")
            now = self.clock.now_ms()
            self._sweep_idle(now)
            if device_id is not None and device_id != PLATFORM_DEVICE_ID:
                if device_id not in self._devices:
                    raise UnknownDeviceError(f"no device {device_id!r}")
            if len(self._subs) >= self._max_subscriptions:
                raise TooManySubscriptionsError(f"subscription cap {self._max_subscriptions} reached")
            sub = Subscription(secrets.token_hex(16), device_id, event_name,
                               self._queue_capacity, now)
            self._subs[sub.id] = sub
            return sub

    def unwatch(self, sub_id: str) -> None:
        with self._lock:
            sub = self._subs.pop(sub_id, None)
        if sub is not None:
            sub.closed = True
            sub.wake()

    def get_new_event(self, sub_id: str, timeout_ms: int = MAX_POLL_TIMEOUT_MS,
                      max_batch: int = MAX_POLL_BATCH) -> PollResult:
        """Long-poll: immediate if queued, else block until arrival/timeout.

        Returned records leave the queue (at-most-once); concurrent polls on
        one subscription serialize. After platform stop the remaining queue
        drains normally, then the terminal platform-stopped fault is raised.
        """
        if not 0 <= timeout_ms <= MAX_POLL_TIMEOUT_MS:
            raise InvalidArgumentError(f"timeoutMs must be in 0..{MAX_POLL_TIMEOUT_MS}")
        if not 1 <= max_batch <= MAX_POLL_BATCH:
            raise InvalidArgumentError(f"maxBatch must be in 1..{MAX_POLL_BATCH}")
        with self._lock:
            now = self.clock.now_ms()
            self._sweep_idle(now)
            sub = self._subs.get(sub_id)
            if sub is None or sub.closed:
                raise UnknownSubscriptionError(f"no subscription {sub_id!r}")
            sub.last_poll_ms = now
        with sub._poll_lock:
            deadline = time.monotonic() + timeout_ms / 1000.0
            with sub._cond:
                while True:
                    if sub.closed:
                        raise UnknownSubscriptionError(f"subscription {sub_id!r} expired")
                    if sub._items:
                        batch = []
                        while sub._items and len(batch) < max_batch:
                            batch.append(sub._items.popleft())
                        overflowed, sub.overflowed = sub.overflowed, False
                        return PollResult(batch, overflowed)
                    if self._state == "stopped":
                        raise PlatformStoppedError("platform stopped")
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        overflowed, sub.overflowed = sub.overflowed, False
                        return PollResult([], overflowed)
                    sub._cond.wait(remaining)

    def subscription_count(self) -> int:
        with self._lock:
            return len(self._subs)

    def _sweep_idle(self, now_ms: int) -> None:
        expired = [
            sub for sub in self._subs.values()
            if now_ms - sub.last_poll_ms > self._subscription_idle_ms
        ]
        for sub in expired:
            logger.info("expiring idle subscription %s", sub.id)
            del self._subs[sub.id]
            sub.closed = True
            sub.wake()

    # --- registry persistence ---

    def _snapshot_registry(self) -> None:
        snapshot = {
            "devices": [encode_descriptor(d) for d in sorted(self._devices.values(), key=lambda d: d.id)],
            "perDeviceSeq": dict(sorted(self._seq.items())),
        }
        self._registry_path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self._registry_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(snapshot, indent=2), encoding="utf-8")
        tmp.replace(self._registry_path)

    def _restore_registry(self) -> None:
        snapshot = json.loads(self._registry_path.read_text(encoding="utf-8"))
        for obj in snapshot.get("devices", []):
            descriptor = decode_descriptor(obj)
            # Known but not attached until a driver re-registers it.
            self._devices[descriptor.id] = replace(descriptor, connected=False)
        for device_id, seq in snapshot.get("perDeviceSeq", {}).items():
            self._seq[device_id] = int(seq)
        logger.info("restored %d devices from %s", len(self._devices), self._registry_path)
