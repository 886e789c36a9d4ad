#!/usr/bin/env python3
"""Generate a year of simulated temperature/humidity samples on a virtual
clock and print the per-month aggregate CSV for both metrics.

Usage: seed_telemetry.py [samples-per-metric] [seed]
"""

import random
import sys
from datetime import datetime, timezone
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from generichub.adapters import MemoryStreamStore
from generichub.blobs import ImageStore
from generichub.clock import VirtualClock
from generichub.kernel import Hub
from generichub.model import DeviceKind
from generichub.sim import SimManager
from generichub.telemetry import TelemetryEngine


def main() -> int:
    count = int(sys.argv[1]) if len(sys.argv) > 1 else 5000
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0
    rng = random.Random(seed)

    base = int(datetime(2024, 1, 1, tzinfo=timezone.utc).timestamp() * 1000)
    span = int(datetime(2025, 1, 1, tzinfo=timezone.utc).timestamp() * 1000) - base
    clock = VirtualClock(base)
    hub = Hub(clock=clock)
    hub.start()
    sim = SimManager(hub, ImageStore(), seed=seed)
    sim.add_device("temp1", DeviceKind.TEMPERATURE_SENSOR, "living room")
    sim.add_device("hum1", DeviceKind.HUMIDITY_SENSOR, "living room")
    telemetry = TelemetryEngine(hub, MemoryStreamStore(clock))

    stamps = sorted(rng.randrange(span) for _ in range(count))
    for offset in stamps:
        clock.advance(base + offset - clock.now_ms())
        month = datetime.fromtimestamp(clock.now_ms() / 1000, tz=timezone.utc).month
        # seasonal-ish curves so the bar chart has a shape
        temperature = 12.0 - 10.0 * abs(month - 7) / 6.0 + rng.gauss(10.0, 3.0)
        humidity = 55.0 + 15.0 * abs(month - 7) / 6.0 + rng.gauss(0.0, 8.0)
        telemetry.ingest(sim.emit_sample("temp1", temperature))
        telemetry.ingest(sim.emit_sample("hum1", min(max(humidity, 0.0), 100.0)))

    for metric in ("temperature", "humidity"):
        sys.stdout.write(telemetry.export_csv(metric, "2024-01", "2024-12"))
        sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
