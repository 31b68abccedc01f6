"""Backend ingest: frame-log parsing, idempotent storage, queries, pipeline.

Lines that fail to parse or decode are never dropped silently; they land in
a dead-letter list with the failure reason. Accepted lines plus dead
letters always add up to the lines ingested (a duplicate counts as
accepted and leaves the store unchanged).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field as dc_field

from . import codec
from .analytics import (
    ActivityRecord,
    CorrelationResult,
    TimeSeries,
    activity_csv,
    correlation_csv,
    cross_correlate,
    grazing_time,
    interval_distances,
    peak_lag,
)
from .fusion import GrazingLabel, classify_grazing


@dataclass(frozen=True)
class StoredFrame:
    receive_time: int
    device_id: int
    sequence: int
    frame: codec.TelemetryFrame
    rssi_dbm: float
    snr_db: float

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.device_id, self.sequence, self.receive_time)


@dataclass(frozen=True)
class DeadLetter:
    line_no: int
    line: str
    reason: str


def parse_log_line(line: str) -> StoredFrame:
    """Parse one `recv_unix_ts,device_id,rssi,snr,hex_payload` log line."""
    parts = line.strip().split(",")
    if len(parts) != 5:
        raise ValueError(f"expected 5 comma-separated fields, got {len(parts)}")
    try:
        recv = int(parts[0])
        device_id = int(parts[1])
        rssi = float(parts[2])
        snr = float(parts[3])
    except ValueError as exc:
        raise ValueError(f"malformed numeric field: {exc}") from exc
    try:
        payload = bytes.fromhex(parts[4])
    except ValueError as exc:
        raise ValueError(f"payload is not valid hex: {exc}") from exc
    frame = codec.decode_frame(payload)
    if frame.device_id != device_id:
        raise ValueError(
            f"device_id mismatch: line says {device_id}, payload says {frame.device_id}"
        )
    return StoredFrame(
        receive_time=recv,
        device_id=device_id,
        sequence=frame.sequence,
        frame=frame,
        rssi_dbm=rssi,
        snr_db=snr,
    )


class FrameStore:
    """In-memory frame store keyed by (device_id, sequence, receive_time).

    Writes are serialized by a lock; reads work on snapshots, so ingest and
    query may run concurrently. An optional append-only log file records
    every accepted line for replay after a restart.
    """

    def __init__(self, log_path=None):
        self._lock = threading.Lock()
        self._frames: dict[tuple[int, int, int], StoredFrame] = {}
        self.dead_letters: list[DeadLetter] = []
        self.ingested = 0
        self.accepted = 0
        self.duplicates = 0
        self._log_path = log_path
        if log_path is not None:
            self._replay_log()

    def _replay_log(self):
        try:
            with open(self._log_path) as f:
                for line in f:
                    if line.strip():
                        self.ingest_line(line, persist=False)
        except FileNotFoundError:
            pass

    def ingest_line(self, line: str, line_no: int = 0, persist: bool = True) -> str:
        """Returns 'stored', 'duplicate', or 'dead_letter'."""
        with self._lock:
            self.ingested += 1
            try:
                sf = parse_log_line(line)
            except ValueError as exc:
                self.dead_letters.append(
                    DeadLetter(line_no=line_no, line=line.strip(), reason=str(exc))
                )
                return "dead_letter"
            self.accepted += 1
            if sf.key in self._frames:
                self.duplicates += 1
                return "duplicate"
            self._frames[sf.key] = sf
            if persist and self._log_path is not None:
                with open(self._log_path, "a") as f:
                    f.write(line.strip() + "\n")
            return "stored"

    def ingest_lines(self, lines) -> dict[str, int]:
        counts = {"stored": 0, "duplicate": 0, "dead_letter": 0}
        for i, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            counts[self.ingest_line(line, line_no=i)] += 1
        return counts

    def __len__(self) -> int:
        return len(self._frames)

    def snapshot(self) -> list[StoredFrame]:
        with self._lock:
            return list(self._frames.values())

    def device_ids(self) -> list[int]:
        return sorted({sf.device_id for sf in self.snapshot()})

    def query_track(self, device_id: int, t0: float, t1: float) -> list[StoredFrame]:
        """Frames for one device with frame_timestamp in [t0, t1], time-ordered."""
        if t0 > t1:
            raise ValueError(f"t0 {t0} is after t1 {t1}")
        frames = [
            sf
            for sf in self.snapshot()
            if sf.device_id == device_id and t0 <= sf.frame.frame_timestamp <= t1
        ]
        frames.sort(key=lambda sf: (sf.frame.frame_timestamp, sf.sequence))
        return frames


@dataclass
class PipelineResult:
    store: FrameStore
    records: dict[int, list[ActivityRecord]]
    activity_csvs: dict[int, str]
    grazing_seconds: dict[int, float]
    correlations: list[CorrelationResult] = dc_field(default_factory=list)
    peaks: dict[str, CorrelationResult] = dc_field(default_factory=dict)
    correlation_note: str = ""

    @property
    def correlation_csv(self) -> str:
        return correlation_csv(self.correlations)


def build_activity_records(
    frames: list[StoredFrame], interval_s: int
) -> list[ActivityRecord]:
    """Per-frame analytics rows: hysteresis grazing label over the transmitted
    pitch plus interval/cumulative distances from the transmitted fixes."""
    frames = sorted(frames, key=lambda sf: (sf.frame.frame_timestamp, sf.sequence))
    fixes = [
        (sf.frame.fix_timestamp, codec.e7_to_degrees(sf.frame.latitude_e7),
         codec.e7_to_degrees(sf.frame.longitude_e7))
        for sf in frames
    ]
    buckets = interval_distances(fixes, interval_s)
    records = []
    state = None
    cumulative = 0.0
    seen_buckets: set[int] = set()
    for sf, (t, lat, lon) in zip(frames, fixes):
        pitch = float(sf.frame.head_pitch_deg)
        state = classify_grazing(state, pitch, float(t))
        bucket = int(t - (t % interval_s))
        if bucket in seen_buckets:
            distance = 0.0  # hop already charged to this interval
        else:
            distance = buckets.get(bucket, 0.0)
            seen_buckets.add(bucket)
        cumulative += distance
        records.append(
            ActivityRecord(
                device_id=sf.device_id,
                interval_start=bucket,
                head_pitch_deg=pitch,
                grazing=state.label is GrazingLabel.GRAZING,
                interval_distance_m=distance,
                cumulative_distance_m=cumulative,
                lat=lat,
                lon=lon,
            )
        )
    return records


def run_pipeline(
    lines,
    interval_s: int = 300,
    max_lag_s: int = 3600,
    store: FrameStore | None = None,
) -> PipelineResult:
    """Ingest a frame log and derive activity records and correlations.

    Cross-correlation of the movement and head-angle series is computed for
    the first two devices when the overlap allows it.
    """
    store = store or FrameStore()
    store.ingest_lines(lines)

    records: dict[int, list[ActivityRecord]] = {}
    csvs: dict[int, str] = {}
    grazing: dict[int, float] = {}
    for device_id in store.device_ids():
        frames = [sf for sf in store.snapshot() if sf.device_id == device_id]
        recs = build_activity_records(frames, interval_s)
        records[device_id] = recs
        csvs[device_id] = activity_csv(recs)
        grazing[device_id] = grazing_time(recs, interval_s)

    result = PipelineResult(
        store=store,
        records=records,
        activity_csvs=csvs,
        grazing_seconds=grazing,
    )

    devices = store.device_ids()
    if len(devices) >= 2:
        a_id, b_id = devices[0], devices[1]
        try:
            for name, getter in (
                ("movement", lambda r: r.interval_distance_m),
                ("head_angle", lambda r: r.head_pitch_deg),
            ):
                series_a = _to_series(records[a_id], getter, interval_s)
                series_b = _to_series(records[b_id], getter, interval_s)
                result.correlations.extend(
                    cross_correlate(series_a, series_b, max_lag_s, series_name=name)
                )
            for name in ("movement", "head_angle"):
                per_series = [r for r in result.correlations if r.series_name == name]
                if per_series:
                    result.peaks[name] = peak_lag(per_series)
        except ValueError as exc:
            result.correlation_note = f"correlation skipped: {exc}"
    return result


def _to_series(records, getter, interval_s: int) -> TimeSeries:
    times = [r.interval_start for r in records]
    values = [getter(r) for r in records]
    return TimeSeries.from_samples(times, values, float(interval_s))
