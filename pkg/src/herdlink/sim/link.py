"""LoRa uplink model: independent Bernoulli loss plus gateway metadata.

No propagation physics; RSSI/SNR are placeholder values a gateway in the
vicinity of the pasture would plausibly report.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .firmware import EmittedFrame


class LinkError(ValueError):
    """Invalid link parameterization."""


@dataclass(frozen=True)
class DeliveredFrame:
    recv_unix_ts: int
    device_id: int
    rssi_dbm: int
    snr_db: float
    payload: bytes


def link_deliver(
    emitted: list[EmittedFrame],
    loss_probability: float,
    rng: np.random.Generator,
    epoch_start: int,
) -> list[DeliveredFrame]:
    """Drop each frame independently with the given probability.

    Metadata draws happen for every frame, delivered or not, so a frame's
    gateway metadata does not depend on earlier frames' fates.
    """
    if not 0.0 <= loss_probability < 1.0:
        raise LinkError(f"loss_probability must be in [0, 1), got {loss_probability}")
    delivered = []
    for ef in emitted:
        drop = rng.random() < loss_probability
        rssi = int(round(rng.uniform(-105.0, -85.0)))
        snr = round(float(rng.uniform(2.0, 10.0)), 1)
        if drop:
            continue
        delivered.append(
            DeliveredFrame(
                recv_unix_ts=epoch_start + int(ef.tx_time_s + ef.airtime_s),
                device_id=ef.frame.device_id,
                rssi_dbm=rssi,
                snr_db=snr,
                payload=ef.payload,
            )
        )
    return delivered


def format_log_line(d: DeliveredFrame) -> str:
    return f"{d.recv_unix_ts},{d.device_id},{d.rssi_dbm},{d.snr_db:.1f},{d.payload.hex()}"
