"""Fault vocabulary shared by the kernel, adapters, rule engine and HTTP layer.

Every fault carries a stable ``code`` string; the HTTP layer maps codes to
statuses, the CLI prints them, and tests assert on them.
"""

from __future__ import annotations


class HubError(Exception):
    """Base class for all hub faults."""

    code = "internal-error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


class InvalidArgumentError(HubError):
    code = "invalid-argument"


class ConfigInvalidError(HubError):
    code = "config-invalid"


# --- device registry / kernel ---

class UnknownDeviceError(HubError):
    code = "unknown-device"


class WrongKindError(HubError):
    code = "wrong-kind"


class DeviceDisconnectedError(HubError):
    code = "device-disconnected"


class DuplicateIdError(HubError):
    code = "duplicate-id"


class AlreadyDisconnectedError(HubError):
    code = "already-disconnected"


class InvalidDescriptorError(HubError):
    code = "invalid-descriptor"


class UnknownEventNameError(HubError):
    code = "unknown-event-name"


class UnknownActionError(HubError):
    code = "unknown-action"


class DriverFailureError(HubError):
    code = "driver-failure"


class NonFiniteValueError(HubError):
    code = "non-finite-value"


# --- platform lifecycle ---

class AlreadyStartedError(HubError):
    code = "already-started"


class NotStartedError(HubError):
    code = "not-started"


class PlatformStoppedError(HubError):
    code = "platform-stopped"


# --- subscriptions ---

class UnknownSubscriptionError(HubError):
    code = "unknown-subscription"


class TooManySubscriptionsError(HubError):
    code = "too-many-subscriptions"


# --- adapters / effects ---

class InvalidAddressError(HubError):
    code = "invalid-address"


class UnknownBlobError(HubError):
    code = "unknown-blob"


class SinkFailureError(HubError):
    code = "sink-failure"


class StoreFailureError(HubError):
    code = "store-failure"


class IoFailureError(HubError):
    code = "io-failure"


class AlreadyExistsError(HubError):
    code = "already-exists"


class PathEscapeError(HubError):
    code = "path-escape"


class InvalidNameError(HubError):
    code = "invalid-name"


class InvalidTextError(HubError):
    code = "invalid-text"


# --- rules ---

class UnknownRuleError(HubError):
    code = "unknown-rule"


class DuplicateRuleError(HubError):
    code = "duplicate-rule"


class BadTemplateError(HubError):
    code = "bad-template"


# --- telemetry ---

class InvalidRangeError(HubError):
    code = "invalid-range"


class UnknownMetricError(HubError):
    code = "unknown-metric"


# --- scenarios ---

class InvalidScenarioError(HubError):
    code = "invalid-scenario"
