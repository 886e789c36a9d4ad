"""Command-line entry point: `generichub serve` runs a hub; every other
subcommand is a client of a running hub's HTTP API.

Exit codes: 0 success, 1 usage or bad local input, 2 API error, 3 connection
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import requests

from .client import ApiError, HubClient, run_alerts_app
from .config import ClientConfig, load_client_config, load_hub_config
from .errors import HubError
from .sim import EmitSample, SetDoor, scenario_from_json

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _make_client(args) -> HubClient:
    cfg = load_client_config(args.config)
    base_url = args.url or cfg.base_url
    token = args.token or cfg.auth_token
    timeout = args.timeout_ms or cfg.default_timeout_ms
    return HubClient(ClientConfig(base_url, token, timeout))


def _print_table(rows: list[dict], columns: list[str]) -> None:
    widths = {c: len(c) for c in columns}
    rendered = [{c: str(row.get(c, "")) for c in columns} for row in rows]
    for row in rendered:
        for c in columns:
            widths[c] = max(widths[c], len(row[c]))
    print("  ".join(c.ljust(widths[c]) for c in columns))
    for row in rendered:
        print("  ".join(row[c].ljust(widths[c]) for c in columns))


def _emit(args, rows: list[dict], columns: list[str]) -> None:
    if getattr(args, "json", False):
        print(json.dumps(rows, indent=2))
    else:
        _print_table(rows, columns)


# --- subcommands ---------------------------------------------------------------

def cmd_serve(args) -> int:
    cfg = load_hub_config(args.config)
    if args.listen:
        from .config import _parse_listen
        cfg.listen_host, cfg.listen_port = _parse_listen(args.listen)
    if args.token:
        cfg.auth_token = args.token

    from .api import HubServer
    from .runtime import build_runtime

    runtime = build_runtime(cfg)
    server = HubServer(runtime)
    runtime.start()
    server.start()
    print(f"hub listening on {server.url}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        runtime.stop()
        server.stop()
    return 0


def cmd_devices(args) -> int:
    client = _make_client(args)
    rows = client.devices()
    _emit(args, rows, ["id", "kind", "name", "location", "connected"])
    return 0


def cmd_watch(args) -> int:
    client = _make_client(args)
    sub_id = client.watch_event(args.device, args.event)
    seen = 0
    while args.count is None or seen < args.count:
        try:
            batch = client.get_new_event(sub_id, timeout_ms=args.timeout_ms or 5000)
        except ApiError as exc:
            if exc.code == "platform-stopped":
                break
            raise
        for event in batch.events:
            if args.json:
                from .model import encode_record
                print(json.dumps(encode_record(event)))
            else:
                payload = {k: (v if not hasattr(v, "id") else v.id) for k, v in event.payload.items()}
                print(f"{event.timestampUtcMs}  {event.deviceId}#{event.seq}  {event.eventName}  {payload}")
            seen += 1
            if args.count is not None and seen >= args.count:
                break
    return 0


def _split_ref(ref: str, what: str) -> tuple[str, str]:
    device, dot, member = ref.rpartition(".")
    if not dot or not device or not member:
        raise HubError(f"{what} must look like DEVICE.{what.upper()}, got {ref!r}")
    return device, member


def cmd_rules_add(args) -> int:
    client = _make_client(args)
    if args.preset == "alerts":
        for flag in ("door", "camera", "to", "container", "stream"):
            if not getattr(args, flag):
                raise HubError(f"--preset alerts requires --{flag}")
        trigger = {"deviceId": args.door, "eventName": "doorOpened"}
        actions = [
            {"type": "captureImage", "cameraId": args.camera, "bindAs": "img"},
            {"type": "sendEmail", "to": args.to, "subject": "Door alert",
             "bodyTemplate": "door opened at {timestamp}", "attach": "img"},
            {"type": "uploadPicture", "container": args.container,
             "nameTemplate": "alert-{timestamp}.png", "source": "img"},
            {"type": "appendStream", "streamName": args.stream,
             "textTemplate": "door opened at {timestamp} img:{img}"},
        ]
    else:
        if not args.when or not args.do:
            raise HubError("either --preset alerts or both --when and --do are required")
        trigger_device, trigger_event = _split_ref(args.when, "event")
        action_device, action_name = _split_ref(args.do, "action")
        params = {}
        for pair in args.param or []:
            key, eq, value = pair.partition("=")
            if not eq:
                raise HubError(f"--param must be key=value, got {pair!r}")
            params[key] = {"t": "text", "v": value}
        trigger = {"deviceId": trigger_device, "eventName": trigger_event}
        actions = [{"type": "deviceAction", "deviceId": action_device,
                    "actionName": action_name, "params": params}]
    rule = client.create_rule(trigger, actions)
    print(rule["ruleId"])
    return 0


def cmd_rules_list(args) -> int:
    client = _make_client(args)
    rows = []
    for rule in client.rules():
        rows.append({
            "ruleId": rule["ruleId"],
            "trigger": f"{rule['trigger']['deviceId']}.{rule['trigger']['eventName']}",
            "actions": len(rule["actions"]),
            "enabled": rule["enabled"],
            "fireCount": rule["fireCount"],
        })
    if getattr(args, "json", False):
        print(json.dumps(client.rules(), indent=2))
    else:
        _print_table(rows, ["ruleId", "trigger", "actions", "enabled", "fireCount"])
    return 0


def cmd_rules_rm(args) -> int:
    client = _make_client(args)
    client.delete_rule(args.rule_id)
    print(f"deleted {args.rule_id}")
    return 0


def cmd_telemetry(args) -> int:
    client = _make_client(args)
    if args.csv:
        sys.stdout.write(client.telemetry_csv(args.metric, args.from_ym, args.to_ym))
        return 0
    rows = client.telemetry_monthly(args.metric, args.from_ym, args.to_ym)
    _emit(args, rows, ["yearMonth", "metric", "mean", "count", "min", "max"])
    return 0


def cmd_alerts_app(args) -> int:
    client = _make_client(args)
    handled = run_alerts_app(
        client,
        door_id=args.door,
        camera_id=args.camera,
        to_addr=args.to,
        container=args.container,
        stream_name=args.stream,
        poll_timeout_ms=args.poll_timeout_ms,
        max_events=args.max_events,
    )
    print(f"handled {handled} alert(s)")
    return 0


def cmd_sim(args) -> int:
    with open(args.scenario, encoding="utf-8") as fh:
        scenario = scenario_from_json(json.load(fh))
    client = _make_client(args)
    elapsed = 0
    for step in scenario.steps:
        delta_ms = step.offset_ms - elapsed
        elapsed = step.offset_ms
        if delta_ms > 0:
            time.sleep(delta_ms / 1000.0 / args.speed)
        if isinstance(step.command, SetDoor):
            client.sim_door(step.command.deviceId, step.command.open)
        elif isinstance(step.command, EmitSample):
            client.sim_sample(step.command.deviceId, step.command.value)
    return 0


# --- parser ---------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="generichub", description=__doc__)
    parser.set_defaults(func=None)
    sub = parser.add_subparsers(dest="command")

    def add_client_flags(p, with_json=False):
        p.add_argument("--url", help="hub base URL (overrides client config)")
        p.add_argument("--token", help="bearer token (overrides client config)")
        p.add_argument("--config", help="client config file (default: $GENERICHUB_CONFIG)")
        p.add_argument("--timeout-ms", type=int, dest="timeout_ms", help="default request timeout")
        if with_json:
            p.add_argument("--json", action="store_true", help="emit raw API JSON")

    p = sub.add_parser("serve", help="run a hub with the HTTP API")
    p.add_argument("--config", help="hub config file (.toml or .json)")
    p.add_argument("--listen", help="host:port to bind")
    p.add_argument("--token", help="auth token override")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("devices", help="list devices")
    add_client_flags(p, with_json=True)
    p.set_defaults(func=cmd_devices)

    p = sub.add_parser("watch", help="subscribe and print events")
    add_client_flags(p, with_json=True)
    p.add_argument("--device", help="filter by device id")
    p.add_argument("--event", help="filter by event name")
    p.add_argument("--count", type=int, help="exit after N events")
    p.set_defaults(func=cmd_watch)

    p = sub.add_parser("rules", help="manage rules")
    rules_sub = p.add_subparsers(dest="rules_command")
    pa = rules_sub.add_parser("add", help="create a rule")
    add_client_flags(pa)
    pa.add_argument("--when", help="trigger, DEVICE.EVENT")
    pa.add_argument("--do", help="action, DEVICE.ACTION")
    pa.add_argument("--param", action="append", help="action param key=value")
    pa.add_argument("--preset", choices=["alerts"], help="install a named pipeline")
    pa.add_argument("--door", help="alerts preset: door sensor id")
    pa.add_argument("--camera", help="alerts preset: camera id")
    pa.add_argument("--to", help="alerts preset: caregiver address")
    pa.add_argument("--container", help="alerts preset: upload container")
    pa.add_argument("--stream", help="alerts preset: alert stream name")
    pa.set_defaults(func=cmd_rules_add)
    pl = rules_sub.add_parser("list", help="list rules")
    add_client_flags(pl, with_json=True)
    pl.set_defaults(func=cmd_rules_list)
    pr = rules_sub.add_parser("rm", help="delete a rule")
    add_client_flags(pr)
    pr.add_argument("rule_id")
    pr.set_defaults(func=cmd_rules_rm)

    p = sub.add_parser("telemetry", help="monthly aggregates")
    add_client_flags(p, with_json=True)
    p.add_argument("metric", choices=["temperature", "humidity"])
    p.add_argument("--from", dest="from_ym", required=True, metavar="YYYY-MM")
    p.add_argument("--to", dest="to_ym", required=True, metavar="YYYY-MM")
    p.add_argument("--csv", action="store_true", help="emit CSV")
    p.set_defaults(func=cmd_telemetry)

    p = sub.add_parser("alerts-app", help="run the door-alert monitor loop")
    add_client_flags(p)
    p.add_argument("--door", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--to", required=True)
    p.add_argument("--container", default="alerts")
    p.add_argument("--stream", default="alerts")
    p.add_argument("--max-events", type=int, dest="max_events",
                   help="exit after handling N alerts (default: run until interrupted)")
    p.add_argument("--poll-timeout-ms", type=int, dest="poll_timeout_ms", default=5000)
    p.set_defaults(func=cmd_alerts_app)

    p = sub.add_parser("sim", help="replay a scenario file against a live hub")
    add_client_flags(p)
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--speed", type=float, default=1.0, help="time acceleration factor")
    p.set_defaults(func=cmd_sim)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.func is None:
        build_parser().print_help()
        return 1
    if getattr(args, "command", "") == "rules" and getattr(args, "rules_command", None) is None:
        print("usage: generichub rules {add,list,rm} ...", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except ApiError as exc:
        print(f"API error: {exc}", file=sys.stderr)
        return 2
    except requests.RequestException as exc:
        print(f"connection failure: {exc}", file=sys.stderr)
        return 3
    except (HubError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 0


if __name__ == "__main__":
    sys.exit(main())
