"""Hub and client configuration: TOML or JSON file plus environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .errors import ConfigInvalidError

ENV_PREFIX = "GENERICHUB_"
#: Client config file location, overridable per invocation with --config.
CLIENT_CONFIG_ENV = "GENERICHUB_CONFIG"


@dataclass(frozen=True)
class DeviceSpec:
    id: str
    kind: str
    name: str = ""
    location: str = ""


@dataclass
class HubConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8787
    auth_token: str = ""
    outbox_dir: str = "data/outbox"
    blob_root: str = "data/blobs"
    stream_root: str = "data/streams"
    queue_capacity: int = 1024
    rules_path: str = "data/rules.json"
    registry_path: str | None = None
    ui_root: str | None = None
    sim_seed: int = 0
    devices: list[DeviceSpec] = field(default_factory=list)


_FILE_KEYS = {
    "listen", "auth_token", "outbox_dir", "blob_root", "stream_root",
    "queue_capacity", "rules_path", "registry_path", "ui_root", "sim_seed", "devices",
}


def _parse_listen(value: str) -> tuple[str, int]:
    host, _, port = str(value).rpartition(":")
    if not host or not port.isdigit():
        raise ConfigInvalidError(f"listen must be host:port, got {value!r}")
    return host, int(port)


def _read_config_file(path: Path) -> dict:
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigInvalidError(f"config file not found: {path}") from None
    except (OSError, ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigInvalidError(f"cannot read config {path}: {exc}") from exc


def _require_int(value, key: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigInvalidError(f"{key} must be an integer >= {minimum}, got {value!r}")
    return value


def load_hub_config(path=None, env: dict | None = None) -> HubConfig:
    """Defaults, then the config file, then GENERICHUB_* environment overrides."""
    env = os.environ if env is None else env
    cfg = HubConfig()
    if path is not None:
        raw = _read_config_file(Path(path))
        unknown = set(raw) - _FILE_KEYS
        if unknown:
            raise ConfigInvalidError(f"unknown config keys: {sorted(unknown)}")
        if "listen" in raw:
            cfg.listen_host, cfg.listen_port = _parse_listen(raw["listen"])
        for key in ("auth_token", "outbox_dir", "blob_root", "stream_root",
                    "rules_path", "registry_path", "ui_root"):
            if key in raw:
                if raw[key] is not None and not isinstance(raw[key], str):
                    raise ConfigInvalidError(f"{key} must be a string")
                setattr(cfg, key, raw[key])
        if "queue_capacity" in raw:
            cfg.queue_capacity = _require_int(raw["queue_capacity"], "queue_capacity", minimum=1)
        if "sim_seed" in raw:
            cfg.sim_seed = _require_int(raw["sim_seed"], "sim_seed")
        for spec in raw.get("devices", []):
            try:
                cfg.devices.append(DeviceSpec(
                    id=spec["id"], kind=spec["kind"],
                    name=spec.get("name", ""), location=spec.get("location", ""),
                ))
            except (KeyError, TypeError) as exc:
                raise ConfigInvalidError(f"device entry needs id and kind: {spec!r}") from exc

    if env.get(ENV_PREFIX + "LISTEN"):
        cfg.listen_host, cfg.listen_port = _parse_listen(env[ENV_PREFIX + "LISTEN"])
    for key, attr in (
        ("AUTH_TOKEN", "auth_token"),
        ("OUTBOX_DIR", "outbox_dir"),
        ("BLOB_ROOT", "blob_root"),
        ("STREAM_ROOT", "stream_root"),
        ("RULES_PATH", "rules_path"),
        ("REGISTRY_PATH", "registry_path"),
        ("UI_ROOT", "ui_root"),
    ):
        if env.get(ENV_PREFIX + key):
            setattr(cfg, attr, env[ENV_PREFIX + key])
    if env.get(ENV_PREFIX + "QUEUE_CAPACITY"):
        try:
            cfg.queue_capacity = _require_int(int(env[ENV_PREFIX + "QUEUE_CAPACITY"]), "queue_capacity", 1)
        except ValueError:
            raise ConfigInvalidError("GENERICHUB_QUEUE_CAPACITY must be an integer") from None
    return cfg


@dataclass(frozen=True)
class ClientConfig:
    base_url: str = "http://127.0.0.1:8787"
    auth_token: str = ""
    default_timeout_ms: int = 30_000

    def validated(self) -> "ClientConfig":
        if not self.base_url.startswith(("http://", "https://")):
            raise ConfigInvalidError(f"base_url must be http(s), got {self.base_url!r}")
        if not self.auth_token:
            raise ConfigInvalidError("auth_token must be set")
        return self


def load_client_config(path=None, env: dict | None = None) -> ClientConfig:
    env = os.environ if env is None else env
    if path is None:
        path = env.get(CLIENT_CONFIG_ENV) or None
    cfg = ClientConfig()
    if path is not None:
        raw = _read_config_file(Path(path))
        unknown = set(raw) - {"base_url", "auth_token", "default_timeout_ms"}
        if unknown:
            raise ConfigInvalidError(f"unknown client config keys: {sorted(unknown)}")
        cfg = replace(
            cfg,
            base_url=raw.get("base_url", cfg.base_url),
            auth_token=raw.get("auth_token", cfg.auth_token),
            default_timeout_ms=_require_int(
                raw.get("default_timeout_ms", cfg.default_timeout_ms), "default_timeout_ms", 1,
            ),
        )
    return cfg
