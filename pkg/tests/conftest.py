import time

import pytest
from hypothesis import settings

from generichub.api import HubServer
from generichub.client import HubClient
from generichub.config import ClientConfig, HubConfig
from generichub.runtime import build_runtime

settings.register_profile("ci", deadline=None)
settings.load_profile("ci")

TEST_TOKEN = "test-token"


def wait_until(predicate, timeout_s=5.0, interval_s=0.01, message="condition"):
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        if predicate():
            return
        time.sleep(interval_s)
    raise AssertionError(f"timed out waiting for {message}")


def make_config(tmp_path, **overrides) -> HubConfig:
    cfg = HubConfig(
        auth_token=TEST_TOKEN,
        outbox_dir=str(tmp_path / "outbox"),
        blob_root=str(tmp_path / "blobs"),
        stream_root=str(tmp_path / "streams"),
        rules_path=str(tmp_path / "rules.json"),
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


@pytest.fixture
def hub_config(tmp_path):
    return make_config(tmp_path)


@pytest.fixture
def runtime(hub_config):
    rt = build_runtime(hub_config)
    rt.start()
    yield rt
    rt.stop()


@pytest.fixture
def live_server(runtime):
    server = HubServer(runtime, port=0)
    server.start()
    yield server
    server.stop()


@pytest.fixture
def client(live_server):
    c = HubClient(ClientConfig(live_server.url, TEST_TOKEN, 10_000))
    yield c
    c.close()
