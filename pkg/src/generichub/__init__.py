"""generichub: a simulated home-automation hub.

A device registry and event bus behind a small HTTP API (long-poll
subscriptions, camera snapshots, e-mail/upload/alert-stream effects), an
If-Then rule engine, monthly telemetry statistics, and a thin scripting
client that implements a complete door-alert monitor in six API calls.
"""

__version__ = "0.1.0"

from .clock import Clock, RealClock, VirtualClock
from .config import ClientConfig, HubConfig, load_client_config, load_hub_config
from .errors import HubError
from .kernel import Hub
from .model import DeviceDescriptor, DeviceKind, EventRecord, descriptor_for
from .runtime import HubRuntime, build_runtime

__all__ = [
    "Clock",
    "ClientConfig",
    "DeviceDescriptor",
    "DeviceKind",
    "EventRecord",
    "Hub",
    "HubConfig",
    "HubError",
    "HubRuntime",
    "RealClock",
    "VirtualClock",
    "build_runtime",
    "descriptor_for",
    "load_client_config",
    "load_hub_config",
]
