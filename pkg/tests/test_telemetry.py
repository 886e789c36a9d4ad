import math
import random
from datetime import datetime, timezone
from types import SimpleNamespace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generichub.adapters import MemoryStreamStore
from generichub.clock import VirtualClock
from generichub.errors import InvalidRangeError, UnknownMetricError
from generichub.kernel import Hub
from generichub.model import DeviceKind, EventRecord
from generichub.sim import SimManager
from generichub.telemetry import CSV_HEADER, TelemetryEngine
from generichub.blobs import ImageStore


def ms_at(year, month, day=1, hour=0) -> int:
    return int(datetime(year, month, day, hour, tzinfo=timezone.utc).timestamp() * 1000)


@pytest.fixture
def env():
    clock = VirtualClock(ms_at(2024, 1))
    hub = Hub(clock=clock)
    hub.start()
    sim = SimManager(hub, ImageStore(), seed=0)
    sim.add_device("temp1", DeviceKind.TEMPERATURE_SENSOR)
    sim.add_device("hum1", DeviceKind.HUMIDITY_SENSOR)
    sim.add_device("door1", DeviceKind.DOOR_SENSOR)
    telemetry = TelemetryEngine(hub, MemoryStreamStore(clock))
    return SimpleNamespace(clock=clock, hub=hub, sim=sim, telemetry=telemetry)


def ingest_sample(env, device_id, value, at_ms=None):
    if at_ms is not None:
        env.clock.advance(max(at_ms - env.clock.now_ms(), 0))
    record = env.sim.emit_sample(device_id, value)
    return env.telemetry.ingest(record)


# --- ingest ------------------------------------------------------------------------

def test_ingest_maps_sample_events(env):
    sample = ingest_sample(env, "temp1", 21.5)
    assert sample.metric == "temperature" and sample.value == 21.5
    sample = ingest_sample(env, "hum1", 40.0)
    assert sample.metric == "humidity" and sample.value == 40.0
    assert [s.value for s in env.telemetry.samples("temperature")] == [21.5]


def test_ingest_ignores_non_sample_events(env):
    record = env.sim.set_door("door1", True)
    assert env.telemetry.ingest(record) is None
    assert env.telemetry.samples("temperature") == []


def test_ingest_drops_malformed_payload(env):
    bad = EventRecord("temp1", 9, "sample", {"celsius": "hot"}, env.clock.now_ms())
    assert env.telemetry.ingest(bad) is None
    missing_key = EventRecord("temp1", 10, "sample", {"percentRH": 1.0}, env.clock.now_ms())
    assert env.telemetry.ingest(missing_key) is None
    assert env.telemetry.samples("temperature") == []


# --- monthly aggregates ----------------------------------------------------------------

def test_monthly_average_hand_computed(env):
    ingest_sample(env, "temp1", 20.0, ms_at(2024, 1, 5))
    ingest_sample(env, "temp1", 22.0, ms_at(2024, 1, 20))
    aggregates = env.telemetry.monthly_averages("temperature", "2024-01", "2024-01")
    assert len(aggregates) == 1
    agg = aggregates[0]
    assert (agg.yearMonth, agg.metric) == ("2024-01", "temperature")
    assert agg.mean == pytest.approx(21.0, rel=1e-12)
    assert (agg.count, agg.min, agg.max) == (2, 20.0, 22.0)


def test_months_without_samples_omitted(env):
    ingest_sample(env, "temp1", 20.0, ms_at(2024, 1))
    ingest_sample(env, "temp1", 30.0, ms_at(2024, 3))
    aggregates = env.telemetry.monthly_averages("temperature", "2024-01", "2024-12")
    assert [a.yearMonth for a in aggregates] == ["2024-01", "2024-03"]


def test_empty_range_and_validation(env):
    assert env.telemetry.monthly_averages("temperature", "2030-01", "2030-12") == []
    with pytest.raises(InvalidRangeError):
        env.telemetry.monthly_averages("temperature", "2024-12", "2024-01")
    with pytest.raises(InvalidRangeError):
        env.telemetry.monthly_averages("temperature", "2024-13", "2024-12")
    with pytest.raises(InvalidRangeError):
        env.telemetry.monthly_averages("temperature", "whenever", "2024-12")
    with pytest.raises(UnknownMetricError):
        env.telemetry.monthly_averages("pressure", "2024-01", "2024-02")


def test_month_boundary_is_utc(env):
    last_of_jan = ms_at(2024, 1, 31, 23)
    first_of_feb = ms_at(2024, 2, 1, 0)
    ingest_sample(env, "temp1", 10.0, last_of_jan)
    ingest_sample(env, "temp1", 20.0, first_of_feb)
    aggregates = env.telemetry.monthly_averages("temperature", "2024-01", "2024-02")
    assert [(a.yearMonth, a.count) for a in aggregates] == [("2024-01", 1), ("2024-02", 1)]


def brute_force(samples, from_ym, to_ym):
    """Naive per-month mean/count/min/max straight off the sample list."""
    months = {}
    for value, ts in samples:
        stamp = datetime.fromtimestamp(ts / 1000.0, tz=timezone.utc)
        ym = f"{stamp.year:04d}-{stamp.month:02d}"
        if from_ym <= ym <= to_ym:
            months.setdefault(ym, []).append(value)
    out = {}
    for ym, values in months.items():
        total = 0.0
        for v in values:
            total += v
        out[ym] = (total / len(values), len(values), min(values), max(values))
    return out


def test_aggregates_match_brute_force_oracle(env):
    rng = random.Random(42)
    raw = []
    for _ in range(2000):
        month = rng.randint(1, 12)
        at = ms_at(2024, month, rng.randint(1, 28), rng.randint(0, 23))
        value = rng.uniform(-10.0, 40.0)
        raw.append((value, at))
    raw.sort(key=lambda pair: pair[1])  # virtual clock cannot go backwards
    for value, at in raw:
        ingest_sample(env, "temp1", value, at)
    expected = brute_force(raw, "2024-01", "2024-12")
    aggregates = env.telemetry.monthly_averages("temperature", "2024-01", "2024-12")
    assert {a.yearMonth for a in aggregates} == set(expected)
    for agg in aggregates:
        mean, count, lo, hi = expected[agg.yearMonth]
        assert agg.count == count
        assert agg.min == lo and agg.max == hi
        assert math.isclose(agg.mean, mean, rel_tol=1e-9)


@settings(max_examples=20)
@given(values=st.lists(st.floats(min_value=-100, max_value=100), min_size=1, max_size=50))
def test_single_month_mean_property(values):
    clock = VirtualClock(ms_at(2024, 6))
    hub = Hub(clock=clock)
    hub.start()
    sim = SimManager(hub, ImageStore(), seed=0)
    sim.add_device("t", DeviceKind.TEMPERATURE_SENSOR)
    telemetry = TelemetryEngine(hub, MemoryStreamStore(clock))
    for value in values:
        telemetry.ingest(sim.emit_sample("t", value))
    agg = telemetry.monthly_averages("temperature", "2024-06", "2024-06")[0]
    assert agg.count == len(values)
    assert agg.min == min(values) and agg.max == max(values)
    assert math.isclose(agg.mean, math.fsum(values) / len(values), rel_tol=1e-12)
    assert agg.min <= agg.mean <= agg.max or math.isclose(agg.min, agg.max)


# --- CSV --------------------------------------------------------------------------------

def test_csv_format(env):
    ingest_sample(env, "temp1", 20.0, ms_at(2024, 1, 5))
    ingest_sample(env, "temp1", 22.0, ms_at(2024, 1, 20))
    csv = env.telemetry.export_csv("temperature", "2024-01", "2024-01")
    lines = csv.strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert lines[1] == "2024-01,temperature,21.000000,2,20.0,22.0"


def test_csv_empty_is_header_only(env):
    csv = env.telemetry.export_csv("temperature", "2030-01", "2030-02")
    assert csv == CSV_HEADER + "\n"


def test_csv_parse_back_matches_api(env):
    rng = random.Random(1)
    for i in range(50):
        ingest_sample(env, "hum1", rng.uniform(20, 80), ms_at(2024, (i % 6) + 1, (i % 27) + 1))
    csv = env.telemetry.export_csv("humidity", "2024-01", "2024-06")
    aggregates = {a.yearMonth: a for a in env.telemetry.monthly_averages("humidity", "2024-01", "2024-06")}
    rows = csv.strip().split("\n")[1:]
    assert len(rows) == len(aggregates)
    for row in rows:
        ym, metric, mean, count, lo, hi = row.split(",")
        agg = aggregates[ym]
        assert metric == "humidity"
        assert float(mean) == pytest.approx(agg.mean, abs=5e-7)
        assert int(count) == agg.count
        assert float(lo) == agg.min and float(hi) == agg.max
