"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field


class SimulateRequest(BaseModel):
    """Full config dict (see README schema) plus convenience overrides."""

    config: dict[str, Any] = Field(default_factory=dict)
    seed: int | None = None
    duration_s: int | None = None
    animals: int | None = None


class SimulateResponse(BaseModel):
    frame_log: str
    truth_csv: str
    ledger_csv: str
    emitted: int
    delivered: int


class IngestRequest(BaseModel):
    lines: list[str]


class DeadLetterModel(BaseModel):
    line_no: int
    line: str
    reason: str


class IngestResponse(BaseModel):
    ingested: int
    stored: int
    duplicates: int
    dead_letters: list[DeadLetterModel]
    store_size: int


class TrackPoint(BaseModel):
    t: int
    lat: float
    lon: float
    head_pitch_deg: int
    heading_deg: float
    sequence: int


class TrackResponse(BaseModel):
    device_id: int
    points: list[TrackPoint]


class PipelineRequest(BaseModel):
    frame_log: str
    interval_s: int = 300
    max_lag_s: int = 3600


class PeakModel(BaseModel):
    series: str
    lag_s: float
    coefficient: float


class PipelineResponse(BaseModel):
    activity_csvs: dict[int, str]
    correlation_csv: str
    peaks: list[PeakModel]
    grazing_seconds: dict[int, float]
    ingested: int
    stored: int
    dead_letters: list[DeadLetterModel]
    correlation_note: str = ""


class EnergyReportRequest(BaseModel):
    battery_capacity_ah: float = 5.2
    battery_voltage_v: float = 3.7
    harvest_j_per_day: float = 184.9
    harvest_efficiency: float = 0.8
    harvest_area_scale: float = 1.0


class EnergyReportResponse(BaseModel):
    report_csv: str
    lifetime_text: str
    consumption_j_per_day: float
    lifetime_days_battery_only: float
    lifetime_days_with_harvest: float | None
    lifetime_gain_pct: float | None
    self_sustainability_area_factor: float


class AirtimeRequest(BaseModel):
    spreading_factor: int = 8
    bandwidth_hz: int = 125_000
    coding_rate_index: int = 1
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_on: bool = True
    low_data_rate_optimize: bool | None = None  # None = auto per SF/BW
    mac_overhead_bytes: int = 13
    payload_len_bytes: int = 31
    duty_cycle: float = 0.01


class AirtimeResponse(BaseModel):
    airtime_s: float
    min_period_s: float
