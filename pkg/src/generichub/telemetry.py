"""Continuous recording of temperature/humidity samples and per-month
aggregates for charting.

Samples land in one append-only stream per metric (a JSON object per line
behind the stream store's timestamp prefix); aggregates are recomputed from
the log on demand, which keeps a single source of truth at desk scale.
Month boundaries are UTC.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass
from datetime import datetime, timezone

from .adapters import DataStreamStore
from .errors import InvalidRangeError, PlatformStoppedError, UnknownMetricError, UnknownSubscriptionError
from .kernel import Hub
from .model import SAMPLE_VALUE_KEY, DeviceKind, EventRecord

logger = logging.getLogger(__name__)

#: metric -> (device kind, sample payload key)
METRICS = {
    "temperature": (DeviceKind.TEMPERATURE_SENSOR, "celsius"),
    "humidity": (DeviceKind.HUMIDITY_SENSOR, "percentRH"),
}

CSV_HEADER = "yearMonth,metric,mean,count,min,max"


@dataclass(frozen=True)
class TelemetrySample:
    deviceId: str
    metric: str
    value: float
    timestampUtcMs: int


@dataclass(frozen=True)
class MonthlyAggregate:
    yearMonth: str
    metric: str
    mean: float
    count: int
    min: float
    max: float


def _stream_name(metric: str) -> str:
    return f"telemetry-{metric}"


def _year_month(timestamp_ms: int) -> str:
    stamp = datetime.fromtimestamp(timestamp_ms / 1000.0, tz=timezone.utc)
    return f"{stamp.year:04d}-{stamp.month:02d}"


_YM_FORMAT = "%Y-%m"


def _check_year_month(value: str) -> str:
    try:
        parsed = datetime.strptime(value, _YM_FORMAT)
    except (TypeError, ValueError):
        raise InvalidRangeError(f"not a YYYY-MM month: {value!r}") from None
    del parsed
    return value


class TelemetryEngine:
    def __init__(self, hub: Hub, streams: DataStreamStore):
        self._hub = hub
        self._streams = streams
        self._sub = None
        self._thread: threading.Thread | None = None

    def attach(self) -> None:
        self._sub = self._hub.watch(event_name="sample")

    def start(self) -> None:
        if self._sub is None:
            self.attach()
        self._thread = threading.Thread(target=self._pump, name="telemetry", daemon=True)
        self._thread.start()

    def join(self, timeout: float = 5.0) -> None:
        if self._thread is not None:
            self._thread.join(timeout)

    def _pump(self) -> None:
        while True:
            try:
                result = self._hub.get_new_event(self._sub.id, timeout_ms=1000, max_batch=100)
            except (PlatformStoppedError, UnknownSubscriptionError):
                return
            for record in result.events:
                try:
                    self.ingest(record)
                except Exception:
                    logger.exception("telemetry ingest crashed for %s/%s", record.deviceId, record.seq)

    def ingest(self, record: EventRecord) -> TelemetrySample | None:
        """Convert a sample event into a logged TelemetrySample; anything else
        (or a malformed payload) yields None."""
        if record.eventName != "sample":
            return None
        try:
            kind = self._hub.get_device(record.deviceId).kind
        except Exception:
            logger.warning("malformed-payload: sample from unknown device %r dropped", record.deviceId)
            return None
        metric = next((m for m, (k, _key) in METRICS.items() if k is kind), None)
        if metric is None:
            logger.warning("malformed-payload: sample from non-sensor %r dropped", record.deviceId)
            return None
        key = SAMPLE_VALUE_KEY[kind]
        value = record.payload.get(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            logger.warning("malformed-payload: sample %s/%s has no finite %r", record.deviceId, record.seq, key)
            return None
        sample = TelemetrySample(record.deviceId, metric, float(value), record.timestampUtcMs)
        self._streams.append(_stream_name(metric), json.dumps({
            "deviceId": sample.deviceId,
            "metric": sample.metric,
            "value": sample.value,
            "timestampUtcMs": sample.timestampUtcMs,
        }, separators=(",", ":")))
        return sample

    def samples(self, metric: str) -> list[TelemetrySample]:
        """Replay the raw telemetry log for one metric."""
        if metric not in METRICS:
            raise UnknownMetricError(f"no metric {metric!r}")
        out = []
        for line in self._streams.read(_stream_name(metric)):
            _stamp, _tab, body = line.partition("\t")
            try:
                obj = json.loads(body)
                out.append(TelemetrySample(
                    obj["deviceId"], obj["metric"], float(obj["value"]), int(obj["timestampUtcMs"]),
                ))
            except (KeyError, TypeError, ValueError):
                logger.warning("skipping unreadable telemetry line: %r", line)
        return out

    def monthly_averages(self, metric: str, from_ym: str, to_ym: str) -> list[MonthlyAggregate]:
        """One aggregate per month with >=1 sample, chronological; empty
        months are omitted. Means use compensated summation."""
        if metric not in METRICS:
            raise UnknownMetricError(f"no metric {metric!r}")
        _check_year_month(from_ym)
        _check_year_month(to_ym)
        if from_ym > to_ym:
            raise InvalidRangeError(f"from {from_ym} is after to {to_ym}")
        buckets: dict[str, list[float]] = {}
        for sample in self.samples(metric):
            ym = _year_month(sample.timestampUtcMs)
            if from_ym <= ym <= to_ym:
                buckets.setdefault(ym, []).append(sample.value)
        out = []
        for ym in sorted(buckets):
            values = buckets[ym]
            out.append(MonthlyAggregate(
                yearMonth=ym,
                metric=metric,
                mean=math.fsum(values) / len(values),
                count=len(values),
                min=min(values),
                max=max(values),
            ))
        return out

    def export_csv(self, metric: str, from_ym: str, to_ym: str) -> str:
        lines = [CSV_HEADER]
        for agg in self.monthly_averages(metric, from_ym, to_ym):
            lines.append(
                f"{agg.yearMonth},{agg.metric},{agg.mean:.6f},{agg.count},{agg.min!r},{agg.max!r}"
            )
        return "\n".join(lines) + "\n"


def encode_aggregate(agg: MonthlyAggregate) -> dict:
    return {
        "yearMonth": agg.yearMonth,
        "metric": agg.metric,
        "mean": agg.mean,
        "count": agg.count,
        "min": agg.min,
        "max": agg.max,
    }
