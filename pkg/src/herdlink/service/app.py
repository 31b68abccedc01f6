"""HTTP facade over the core package.

Stateful routes (/ingest, /devices, /track, /deadletters) share one frame
store per app instance, optionally backed by an append-only log file for
restart recovery. Compute routes (/simulate, /pipeline, /energy/report,
/airtime) are stateless and pure.
"""

from __future__ import annotations

import math

from fastapi import FastAPI, HTTPException

from .. import codec, energy
from ..config import ConfigError, config_from_dict
from ..ingest import FrameStore, run_pipeline
from ..sim.runner import run_simulation
from . import models


def create_app(store: FrameStore | None = None) -> FastAPI:
    app = FastAPI(title="herdlink", version="0.1.0")
    app.state.store = store if store is not None else FrameStore()

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/simulate", response_model=models.SimulateResponse)
    def simulate(req: models.SimulateRequest):
        data = dict(req.config)
        sim_section = dict(data.get("simulation") or {})
        for key in ("seed", "duration_s", "animals"):
            value = getattr(req, key)
            if value is not None:
                sim_section[key] = value
        if sim_section:
            data["simulation"] = sim_section
        try:
            cfg = config_from_dict(data)
            result = run_simulation(cfg)
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return models.SimulateResponse(
            frame_log=result.frame_log(),
            truth_csv=result.truth_csv(),
            ledger_csv=result.ledger_csv(),
            emitted=result.emitted_count,
            delivered=result.delivered_count,
        )

    @app.post("/ingest", response_model=models.IngestResponse)
    def ingest(req: models.IngestRequest):
        store: FrameStore = app.state.store
        store.ingest_lines(req.lines)
        return models.IngestResponse(
            ingested=store.ingested,
            stored=store.accepted,
            duplicates=store.duplicates,
            dead_letters=[
                models.DeadLetterModel(line_no=d.line_no, line=d.line, reason=d.reason)
                for d in store.dead_letters
            ],
            store_size=len(store),
        )

    @app.get("/devices")
    def devices():
        return {"devices": app.state.store.device_ids()}

    @app.get("/track/{device_id}", response_model=models.TrackResponse)
    def track(device_id: int, t0: float = 0.0, t1: float = 2**32 - 1):
        store: FrameStore = app.state.store
        try:
            frames = store.query_track(device_id, t0, t1)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        points = [
            models.TrackPoint(
                t=sf.frame.frame_timestamp,
                lat=codec.e7_to_degrees(sf.frame.latitude_e7),
                lon=codec.e7_to_degrees(sf.frame.longitude_e7),
                head_pitch_deg=sf.frame.head_pitch_deg,
                heading_deg=codec.q8_to_heading(sf.frame.heading_q8),
                sequence=sf.sequence,
            )
            for sf in frames
        ]
        return models.TrackResponse(device_id=device_id, points=points)

    @app.get("/deadletters")
    def deadletters():
        store: FrameStore = app.state.store
        return {
            "dead_letters": [
                {"line_no": d.line_no, "line": d.line, "reason": d.reason}
                for d in store.dead_letters
            ]
        }

    @app.post("/pipeline", response_model=models.PipelineResponse)
    def pipeline(req: models.PipelineRequest):
        if req.interval_s <= 0 or req.max_lag_s <= 0:
            raise HTTPException(status_code=400, detail="intervals must be positive")
        result = run_pipeline(
            req.frame_log.splitlines(),
            interval_s=req.interval_s,
            max_lag_s=req.max_lag_s,
        )
        return models.PipelineResponse(
            activity_csvs=result.activity_csvs,
            correlation_csv=result.correlation_csv,
            peaks=[
                models.PeakModel(series=name, lag_s=p.lag_s, coefficient=p.coefficient)
                for name, p in sorted(result.peaks.items())
            ],
            grazing_seconds=result.grazing_seconds,
            ingested=result.store.ingested,
            stored=result.store.accepted,
            dead_letters=[
                models.DeadLetterModel(line_no=d.line_no, line=d.line, reason=d.reason)
                for d in result.store.dead_letters
            ],
            correlation_note=result.correlation_note,
        )

    @app.post("/energy/report", response_model=models.EnergyReportResponse)
    def energy_report(req: models.EnergyReportRequest):
        try:
            battery = energy.BatteryModel(
                capacity_ah=req.battery_capacity_ah,
                nominal_voltage_v=req.battery_voltage_v,
            )
            harvest = energy.HarvestModel(
                daily_income_j=req.harvest_j_per_day,
                conversion_efficiency=req.harvest_efficiency,
                area_scale=req.harvest_area_scale,
            )
            consumption = energy.daily_consumption(energy.default_budgets())
            battery_only = energy.battery_lifetime_days(battery, consumption)
            with_harvest = energy.battery_lifetime_days(battery, consumption, harvest)
            factor = energy.self_sustainability_area_factor(
                consumption,
                energy.HarvestModel(
                    daily_income_j=req.harvest_j_per_day, conversion_efficiency=1.0
                ),
            )
        except energy.EnergyError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        unbounded = math.isinf(with_harvest)
        return models.EnergyReportResponse(
            report_csv=energy.energy_report_csv(),
            lifetime_text=energy.lifetime_report_text(battery, consumption, harvest),
            consumption_j_per_day=consumption,
            lifetime_days_battery_only=battery_only,
            lifetime_days_with_harvest=None if unbounded else with_harvest,
            lifetime_gain_pct=None
            if unbounded
            else 100.0 * (with_harvest / battery_only - 1.0),
            self_sustainability_area_factor=factor,
        )

    @app.post("/airtime", response_model=models.AirtimeResponse)
    def airtime(req: models.AirtimeRequest):
        try:
            params = codec.LoraParams.for_sf(
                req.spreading_factor,
                req.bandwidth_hz,
                coding_rate_index=req.coding_rate_index,
                preamble_symbols=req.preamble_symbols,
                explicit_header=req.explicit_header,
                crc_on=req.crc_on,
                mac_overhead_bytes=req.mac_overhead_bytes,
                **(
                    {}
                    if req.low_data_rate_optimize is None
                    else {"low_data_rate_optimize": req.low_data_rate_optimize}
                ),
            )
            toa = codec.time_on_air(params, req.payload_len_bytes)
            min_period = codec.duty_cycle_min_period(
                params, req.payload_len_bytes, req.duty_cycle
            )
        except codec.CodecError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return models.AirtimeResponse(airtime_s=toa, min_period_s=min_period)

    return app


app = create_app()
