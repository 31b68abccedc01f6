"""Command-line client for the herdlink service.

Every subcommand talks to the HTTP API: by default against an in-process
instance of the app (no network), or against a running server when
--server is given. Exit codes: 0 success, 2 configuration error, 3
dead-letter threshold exceeded.
"""

from __future__ import annotations

import asyncio
import sys
from pathlib import Path

import click
import httpx
import yaml

EXIT_CONFIG_ERROR = 2
EXIT_DEAD_LETTERS = 3


class ConfigCliError(click.ClickException):
    exit_code = EXIT_CONFIG_ERROR


class ServiceClient:
    """Thin JSON-over-HTTP client; in-process ASGI unless a server URL is set."""

    def __init__(self, server: str | None = None):
        self.server = server

    def post(self, path: str, payload: dict) -> dict:
        if self.server:
            try:
                resp = httpx.post(
                    self.server.rstrip("/") + path, json=payload, timeout=600.0
                )
            except httpx.HTTPError as exc:
                raise click.ClickException(f"cannot reach {self.server}: {exc}")
        else:
            resp = asyncio.run(self._post_inprocess(path, payload))
        if resp.status_code in (400, 422):
            raise ConfigCliError(f"config error: {_detail(resp)}")
        resp.raise_for_status()
        return resp.json()

    async def _post_inprocess(self, path: str, payload: dict) -> httpx.Response:
        from .service.app import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://herdlink", timeout=600.0
        ) as client:
            return await client.post(path, json=payload)


def _detail(resp: httpx.Response) -> str:
    try:
        return str(resp.json().get("detail", resp.text))
    except Exception:
        return resp.text


def _load_config_dict(config_path: str | None) -> dict:
    if config_path is None:
        return {}
    try:
        with open(config_path) as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as exc:
        click.echo(f"error: cannot load config {config_path}: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    if data is None:
        return {}
    if not isinstance(data, dict):
        click.echo(f"error: config {config_path} must be a YAML mapping", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    return data


def _write(out_dir: Path, name: str, content: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(content)
    return path


def _run_simulate(client: ServiceClient, config: dict, seed, duration, animals) -> dict:
    payload = {"config": config}
    if seed is not None:
        payload["seed"] = seed
    if duration is not None:
        payload["duration_s"] = duration
    if animals is not None:
        payload["animals"] = animals
    return client.post("/simulate", payload)


def _write_pipeline_outputs(out_dir: Path, result: dict) -> None:
    for device_id, csv_text in sorted(result["activity_csvs"].items(), key=lambda kv: int(kv[0])):
        _write(out_dir, f"activity_{device_id}.csv", csv_text)
    _write(out_dir, "correlation.csv", result["correlation_csv"])
    summary = []
    for device_id, seconds in sorted(result["grazing_seconds"].items(), key=lambda kv: int(kv[0])):
        summary.append(f"grazing_time_s[device {device_id}] = {seconds:.0f} ({seconds / 3600.0:.2f} h)")
    for peak in result["peaks"]:
        summary.append(
            f"correlation_peak[{peak['series']}] = {peak['coefficient']:.4f} "
            f"at lag {peak['lag_s']:.0f} s"
        )
    if result.get("correlation_note"):
        summary.append(result["correlation_note"])
    summary.append(f"ingested = {result['ingested']}")
    summary.append(f"stored = {result['stored']}")
    summary.append(f"dead_letters = {len(result['dead_letters'])}")
    _write(out_dir, "summary.txt", "\n".join(summary) + "\n")
    if result["dead_letters"]:
        lines = ["line_no,reason,line"]
        lines += [
            f"{d['line_no']},{d['reason']},{d['line']}" for d in result["dead_letters"]
        ]
        _write(out_dir, "dead_letters.csv", "\n".join(lines) + "\n")


def _check_dead_letters(result: dict, maximum: int) -> None:
    count = len(result["dead_letters"])
    if count > maximum:
        click.echo(f"error: {count} dead-lettered lines exceed the limit of {maximum}", err=True)
        sys.exit(EXIT_DEAD_LETTERS)


@click.group()
@click.option("--server", default=None, envvar="HERDLINK_SERVER",
              help="Base URL of a running service; default runs in-process.")
@click.pass_context
def main(ctx, server):
    """Cattle-telemetry toolkit: simulate, ingest, analyze, report."""
    ctx.obj = ServiceClient(server)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML run configuration (see README).")
@click.option("--seed", type=int, default=None, help="Override the master seed.")
@click.option("--duration", "duration_s", type=int, default=None, help="Simulated seconds.")
@click.option("--animals", type=int, default=None, help="Herd size.")
@click.option("--out-dir", type=click.Path(), default="out", show_default=True)
@click.pass_obj
def simulate(client, config_path, seed, duration_s, animals, out_dir):
    """Run the herd simulation and write frames.log, truth.csv, ledger.csv."""
    config = _load_config_dict(config_path)
    result = _run_simulate(client, config, seed, duration_s, animals)
    out = Path(out_dir)
    _write(out, "frames.log", result["frame_log"])
    _write(out, "truth.csv", result["truth_csv"])
    _write(out, "ledger.csv", result["ledger_csv"])
    click.echo(
        f"emitted {result['emitted']} frames, delivered {result['delivered']}; "
        f"outputs in {out}"
    )


@main.command()
@click.argument("frame_log", type=click.Path(exists=True))
@click.option("--max-dead-letters", type=int, default=0, show_default=True)
@click.pass_obj
def ingest(client, frame_log, max_dead_letters):
    """Validate and store a frame log through the service.

    Against a remote --server the frames persist in its store; in-process
    this reports counts and dead letters only.
    """
    lines = Path(frame_log).read_text().splitlines()
    result = client.post("/ingest", {"lines": lines})
    click.echo(
        f"ingested {result['ingested']} lines: {result['store_size']} unique frames, "
        f"{result['duplicates']} duplicates, {len(result['dead_letters'])} dead-lettered"
    )
    for d in result["dead_letters"]:
        click.echo(f"  dead letter line {d['line_no']}: {d['reason']}", err=True)
    _check_dead_letters(result, max_dead_letters)


@main.command()
@click.argument("frame_log", type=click.Path(exists=True))
@click.option("--interval", "interval_s", type=int, default=300, show_default=True,
              help="Analytics interval in seconds.")
@click.option("--max-lag", "max_lag_s", type=int, default=3600, show_default=True,
              help="Cross-correlation lag window in seconds.")
@click.option("--max-dead-letters", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(), default="out", show_default=True)
@click.pass_obj
def analyze(client, frame_log, interval_s, max_lag_s, max_dead_letters, out_dir):
    """Decode a frame log and write activity and correlation CSVs."""
    result = client.post(
        "/pipeline",
        {
            "frame_log": Path(frame_log).read_text(),
            "interval_s": interval_s,
            "max_lag_s": max_lag_s,
        },
    )
    _write_pipeline_outputs(Path(out_dir), result)
    click.echo(f"analytics written to {out_dir}")
    _check_dead_letters(result, max_dead_letters)


@main.command()
@click.option("--capacity-ah", type=float, default=5.2, show_default=True)
@click.option("--voltage", type=float, default=3.7, show_default=True)
@click.option("--harvest", "harvest_j_per_day", type=float, default=184.9, show_default=True)
@click.option("--efficiency", type=float, default=0.8, show_default=True)
@click.option("--area-scale", type=float, default=1.0, show_default=True)
@click.option("--out-dir", type=click.Path(), default=None,
              help="Also write energy_report.csv and lifetime.txt here.")
@click.pass_obj
def energy(client, capacity_ah, voltage, harvest_j_per_day, efficiency, area_scale, out_dir):
    """Print the per-subsystem budget and lifetime prediction."""
    result = client.post(
        "/energy/report",
        {
            "battery_capacity_ah": capacity_ah,
            "battery_voltage_v": voltage,
            "harvest_j_per_day": harvest_j_per_day,
            "harvest_efficiency": efficiency,
            "harvest_area_scale": area_scale,
        },
    )
    click.echo(result["report_csv"], nl=False)
    click.echo(result["lifetime_text"], nl=False)
    if out_dir is not None:
        out = Path(out_dir)
        _write(out, "energy_report.csv", result["report_csv"])
        _write(out, "lifetime.txt", result["lifetime_text"])


@main.command()
@click.option("--sf", "spreading_factor", type=int, default=8, show_default=True)
@click.option("--bw", "bandwidth_hz", type=int, default=125_000, show_default=True)
@click.option("--cr", "coding_rate_index", type=int, default=1, show_default=True,
              help="Coding rate index 1..4 for 4/5..4/8.")
@click.option("--payload", "payload_len_bytes", type=int, default=31, show_default=True)
@click.option("--mac-overhead", "mac_overhead_bytes", type=int, default=13, show_default=True)
@click.option("--duty-cycle", type=float, default=0.01, show_default=True)
@click.pass_obj
def airtime(client, spreading_factor, bandwidth_hz, coding_rate_index,
            payload_len_bytes, mac_overhead_bytes, duty_cycle):
    """Time-on-air and duty-cycle minimum period for one frame."""
    result = client.post(
        "/airtime",
        {
            "spreading_factor": spreading_factor,
            "bandwidth_hz": bandwidth_hz,
            "coding_rate_index": coding_rate_index,
            "payload_len_bytes": payload_len_bytes,
            "mac_overhead_bytes": mac_overhead_bytes,
            "duty_cycle": duty_cycle,
        },
    )
    click.echo(f"time_on_air_s = {result['airtime_s']:.6f}")
    click.echo(f"duty_cycle_min_period_s = {result['min_period_s']:.2f}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--duration", "duration_s", type=int, default=None)
@click.option("--animals", type=int, default=None)
@click.option("--max-dead-letters", type=int, default=None,
              help="Overrides analytics.dead_letter_max from the config (default 0).")
@click.option("--out-dir", type=click.Path(), default="out", show_default=True)
@click.pass_obj
def e2e(client, config_path, seed, duration_s, animals, max_dead_letters, out_dir):
    """Simulate, ingest, and analyze in one run.

    Without --config this uses the activity profile (5-minute measurement
    and transmit cadence) so the analytics have full resolution.
    """
    config = _load_config_dict(config_path)
    if config_path is None:
        config = {"schedule": {"measurement_period_s": 300, "transmit_period_s": 300}}
    sim = _run_simulate(client, config, seed, duration_s, animals)
    out = Path(out_dir)
    _write(out, "frames.log", sim["frame_log"])
    _write(out, "truth.csv", sim["truth_csv"])
    _write(out, "ledger.csv", sim["ledger_csv"])

    analytics_cfg = config.get("analytics") or {}
    if max_dead_letters is None:
        max_dead_letters = analytics_cfg.get("dead_letter_max", 0)
    result = client.post(
        "/pipeline",
        {
            "frame_log": sim["frame_log"],
            "interval_s": analytics_cfg.get("interval_s", 300),
            "max_lag_s": analytics_cfg.get("max_lag_s", 3600),
        },
    )
    _write_pipeline_outputs(out, result)

    energy_cfg = config.get("energy") or {}
    report = client.post(
        "/energy/report",
        {
            "battery_capacity_ah": energy_cfg.get("battery_capacity_ah", 5.2),
            "battery_voltage_v": energy_cfg.get("battery_voltage_v", 3.7),
            "harvest_j_per_day": energy_cfg.get("harvest_j_per_day", 184.9),
            "harvest_efficiency": energy_cfg.get("harvest_efficiency", 0.8),
            "harvest_area_scale": energy_cfg.get("harvest_area_scale", 1.0),
        },
    )
    _write(out, "energy_report.csv", report["report_csv"])
    _write(out, "lifetime.txt", report["lifetime_text"])
    click.echo(
        f"e2e complete: {sim['emitted']} frames emitted, {sim['delivered']} delivered, "
        f"outputs in {out}"
    )
    _check_dead_letters(result, max_dead_letters)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--store-log", type=click.Path(), default=None,
              help="Append-only file persisting accepted frames across restarts.")
def serve(host, port, store_log):
    """Run the HTTP service."""
    import uvicorn

    from .ingest import FrameStore
    from .service.app import create_app

    uvicorn.run(create_app(FrameStore(log_path=store_log)), host=host, port=port)


if __name__ == "__main__":
    main()
