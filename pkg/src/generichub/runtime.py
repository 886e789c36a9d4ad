"""Wires one hub instance together: kernel, simulators, adapters, rule engine
and telemetry, all sharing a clock."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .adapters import (
    BlobStore,
    DataStreamStore,
    DirBlobStore,
    FilesystemMailSink,
    FileStreamStore,
    MailSink,
    MemoryBlobStore,
    MemoryMailSink,
    MemoryStreamStore,
)
from .blobs import ImageStore
from .clock import Clock, RealClock
from .config import HubConfig
from .kernel import Hub
from .rules import RuleEngine
from .sim import SimManager
from .telemetry import TelemetryEngine

logger = logging.getLogger(__name__)


@dataclass
class HubRuntime:
    config: HubConfig
    clock: Clock
    hub: Hub
    images: ImageStore
    mail_sink: MailSink
    blob_store: BlobStore
    stream_store: DataStreamStore
    rules: RuleEngine
    telemetry: TelemetryEngine
    sim: SimManager

    def start(self) -> None:
        """Start the platform and both internal consumers, then bring up the
        devices declared in config."""
        self.hub.start()
        self.rules.start()
        self.telemetry.start()
        for spec in self.config.devices:
            self.sim.add_device(spec.id, spec.kind, spec.name, spec.location)

    def stop(self) -> None:
        if self.hub.started:
            self.hub.stop()
        self.rules.join()
        self.telemetry.join()


def build_runtime(config: HubConfig | None = None, clock: Clock | None = None,
                  memory_backends: bool = False) -> HubRuntime:
    """Assemble an unstarted runtime. memory_backends swaps the filesystem
    adapters for their in-memory twins (same observable behavior)."""
    cfg = config or HubConfig()
    clock = clock or RealClock()
    hub = Hub(
        clock=clock,
        queue_capacity=cfg.queue_capacity,
        registry_path=cfg.registry_path or None,
    )
    images = ImageStore()
    if memory_backends:
        mail_sink: MailSink = MemoryMailSink()
        blob_store: BlobStore = MemoryBlobStore()
        stream_store: DataStreamStore = MemoryStreamStore(clock)
    else:
        mail_sink = FilesystemMailSink(cfg.outbox_dir, clock)
        blob_store = DirBlobStore(cfg.blob_root)
        stream_store = FileStreamStore(cfg.stream_root, clock)
    rules = RuleEngine(hub, images, mail_sink, blob_store, stream_store,
                       rules_path=cfg.rules_path or None)
    telemetry = TelemetryEngine(hub, stream_store)
    sim = SimManager(hub, images, seed=cfg.sim_seed)
    rules.attach()
    telemetry.attach()
    return HubRuntime(cfg, clock, hub, images, mail_sink, blob_store, stream_store,
                      rules, telemetry, sim)
