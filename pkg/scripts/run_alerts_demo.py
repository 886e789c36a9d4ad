#!/usr/bin/env python3
"""End-to-end demo of the door-alert flow on a throwaway hub.

Starts a hub with filesystem backends under a temp directory, installs the
alert pipeline rule, opens the simulated door, and prints where each artifact
landed (outbox message, uploaded picture, alert stream line).
"""

import sys
import tempfile
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from generichub.api import HubServer
from generichub.config import HubConfig
from generichub.model import DeviceKind
from generichub.rules import RuleTrigger, alerts_pipeline
from generichub.runtime import build_runtime


def main() -> int:
    workdir = Path(tempfile.mkdtemp(prefix="generichub-demo-"))
    config = HubConfig(
        auth_token="demo-token",
        outbox_dir=str(workdir / "outbox"),
        blob_root=str(workdir / "blobs"),
        stream_root=str(workdir / "streams"),
        rules_path=str(workdir / "rules.json"),
    )
    runtime = build_runtime(config)
    runtime.start()
    server = HubServer(runtime, port=0)
    server.start()
    print(f"hub up at {server.url} (token: demo-token), data in {workdir}")

    runtime.sim.add_device("door1", DeviceKind.DOOR_SENSOR, "front door", "hall")
    runtime.sim.add_device("cam1", DeviceKind.CAMERA, "door cam", "hall")
    rule = runtime.rules.create_rule(
        RuleTrigger("door1", "doorOpened"),
        alerts_pipeline("cam1", "caregiver@example.com", "alerts", "alerts"),
    )
    print(f"installed alert rule {rule.ruleId}")

    print("opening the door...")
    runtime.sim.set_door("door1", True)
    deadline = time.monotonic() + 5
    while time.monotonic() < deadline and not runtime.stream_store.read("alerts"):
        time.sleep(0.05)

    for eml in sorted((workdir / "outbox").glob("*.eml")):
        print(f"  outbox message: {eml}")
    for png in sorted((workdir / "blobs" / "alerts").glob("*.png")):
        print(f"  uploaded image: {png}")
    for line in runtime.stream_store.read("alerts"):
        print(f"  alert line:     {line}")

    log = runtime.rules.fire_log(rule.ruleId)
    print(f"rule fired {len(log)} time(s); outcomes: "
          f"{[o.status for o in log[0].perActionOutcome]}")

    runtime.stop()
    server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
