"""31-byte telemetry frame codec and LoRa airtime arithmetic.

Wire layout (little-endian, 31 bytes total):

    offset  field
    0       version (u8, currently 0x01)
    1-2     device_id (u16)
    3-4     sequence (u16, wrapping frame counter)
    5-8     frame_timestamp (u32, unix seconds at transmission)
    9-12    latitude_e7 (s32, degrees * 1e7)
    13-16   longitude_e7 (s32, degrees * 1e7)
    17-20   fix_timestamp (u32, unix seconds of the GNSS fix)
    21-22   fix_accuracy_dm (u16, decimeters)
    23      heading_q8 (u8, degrees * 256/360)
    24      head_pitch_deg (s8, whole degrees, clamped to [-90, 90])
    25-26   movement_avg_dm (u16, decimeters, saturating)
    27      battery_mv_div20 (u8, millivolts / 20)
    28-29   temperature_dC (s16, 0.1 degC)
    30      status_flags (u8, bit0 gnss_valid, bit1 harvesting_active,
            bit2 low_battery, bits 3-7 reserved zero)

All functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

FRAME_LEN = 31
PROTOCOL_VERSION = 1

FLAG_GNSS_VALID = 0x01
FLAG_HARVESTING_ACTIVE = 0x02
FLAG_LOW_BATTERY = 0x04
RESERVED_FLAG_MASK = 0xF8

LAT_E7_LIMIT = 90 * 10**7
LON_E7_LIMIT = 180 * 10**7

VALID_BANDWIDTHS_HZ = (125_000, 250_000, 500_000)

_FRAME_STRUCT = struct.Struct("<BHHIiiIHBbHBhB")
assert _FRAME_STRUCT.size == FRAME_LEN


class CodecError(ValueError):
    """Base class for frame and airtime errors."""


class FrameLengthError(CodecError):
    """Payload is not exactly 31 bytes."""


class FrameFieldError(CodecError):
    """A frame field is out of its declared range (message names the field)."""


class FrameFormatError(CodecError):
    """Payload violates the wire format (reserved bits, unknown version)."""


class LoraParamError(CodecError):
    """LoRa parameter set is invalid."""


@dataclass(frozen=True)
class TelemetryFrame:
    """Decoded logical content of one 31-byte LoRa payload."""

    device_id: int
    sequence: int
    frame_timestamp: int
    latitude_e7: int
    longitude_e7: int
    fix_timestamp: int
    fix_accuracy_dm: int
    heading_q8: int
    head_pitch_deg: int
    movement_avg_dm: int
    battery_mv_div20: int
    temperature_dC: int
    status_flags: int
    version: int = PROTOCOL_VERSION


def _check_range(name: str, value: int, lo: int, hi: int) -> None:
    if not isinstance(value, int):
        raise FrameFieldError(f"{name} must be an integer, got {type(value).__name__}")
    if not lo <= value <= hi:
        raise FrameFieldError(f"{name} out of range: {value} not in [{lo}, {hi}]")


def validate_frame(frame: TelemetryFrame) -> None:
    """Raise FrameFieldError/FrameFormatError if any field is out of range."""
    if frame.version != PROTOCOL_VERSION:
        raise FrameFormatError(f"unsupported protocol version {frame.version}")
    _check_range("device_id", frame.device_id, 0, 0xFFFF)
    _check_range("sequence", frame.sequence, 0, 0xFFFF)
    _check_range("frame_timestamp", frame.frame_timestamp, 0, 0xFFFFFFFF)
    _check_range("latitude_e7", frame.latitude_e7, -LAT_E7_LIMIT, LAT_E7_LIMIT)
    _check_range("longitude_e7", frame.longitude_e7, -LON_E7_LIMIT, LON_E7_LIMIT)
    _check_range("fix_timestamp", frame.fix_timestamp, 0, 0xFFFFFFFF)
    _check_range("fix_accuracy_dm", frame.fix_accuracy_dm, 0, 0xFFFF)
    _check_range("heading_q8", frame.heading_q8, 0, 0xFF)
    _check_range("head_pitch_deg", frame.head_pitch_deg, -90, 90)
    _check_range("movement_avg_dm", frame.movement_avg_dm, 0, 0xFFFF)
    _check_range("battery_mv_div20", frame.battery_mv_div20, 0, 0xFF)
    _check_range("temperature_dC", frame.temperature_dC, -0x8000, 0x7FFF)
    _check_range("status_flags", frame.status_flags, 0, 0xFF)
    if frame.status_flags & RESERVED_FLAG_MASK:
        raise FrameFieldError(
            f"status_flags reserved bits must be zero, got 0x{frame.status_flags:02x}"
        )


def encode_frame(frame: TelemetryFrame) -> bytes:
    """Serialize a frame to its 31-byte wire representation."""
    validate_frame(frame)
    return _FRAME_STRUCT.pack(
        frame.version,
        frame.device_id,
        frame.sequence,
        frame.frame_timestamp,
        frame.latitude_e7,
        frame.longitude_e7,
        frame.fix_timestamp,
        frame.fix_accuracy_dm,
        frame.heading_q8,
        frame.head_pitch_deg,
        frame.movement_avg_dm,
        frame.battery_mv_div20,
        frame.temperature_dC,
        frame.status_flags,
    )


def decode_frame(payload: bytes) -> TelemetryFrame:
    """Parse a 31-byte payload, rejecting malformed or out-of-range input."""
    if len(payload) != FRAME_LEN:
        raise FrameLengthError(f"payload must be {FRAME_LEN} bytes, got {len(payload)}")
    (
        version,
        device_id,
        sequence,
        frame_timestamp,
        latitude_e7,
        longitude_e7,
        fix_timestamp,
        fix_accuracy_dm,
        heading_q8,
        head_pitch_deg,
        movement_avg_dm,
        battery_mv_div20,
        temperature_dC,
        status_flags,
    ) = _FRAME_STRUCT.unpack(payload)
    if version != PROTOCOL_VERSION:
        raise FrameFormatError(f"unsupported protocol version {version}")
    if status_flags & RESERVED_FLAG_MASK:
        raise FrameFormatError(
            f"reserved status flag bits set: 0x{status_flags:02x}"
        )
    frame = TelemetryFrame(
        device_id=device_id,
        sequence=sequence,
        frame_timestamp=frame_timestamp,
        latitude_e7=latitude_e7,
        longitude_e7=longitude_e7,
        fix_timestamp=fix_timestamp,
        fix_accuracy_dm=fix_accuracy_dm,
        heading_q8=heading_q8,
        head_pitch_deg=head_pitch_deg,
        movement_avg_dm=movement_avg_dm,
        battery_mv_div20=battery_mv_div20,
        temperature_dC=temperature_dC,
        status_flags=status_flags,
        version=version,
    )
    validate_frame(frame)
    return frame


# Fixed-point conversions between engineering units and wire fields.

def degrees_to_e7(deg: float) -> int:
    return round(deg * 1e7)


def e7_to_degrees(e7: int) -> float:
    return e7 / 1e7


def heading_to_q8(heading_deg: float) -> int:
    """Quantize a heading to 1 byte at 360/256 degrees per LSB (wraps)."""
    return round((heading_deg % 360.0) * 256.0 / 360.0) % 256


def q8_to_heading(q8: int) -> float:
    return q8 * 360.0 / 256.0


def pitch_to_wire(pitch_deg: float) -> int:
    """Round to whole degrees and clamp to the signed [-90, 90] wire range."""
    return max(-90, min(90, round(pitch_deg)))


def movement_to_dm(movement_m: float) -> int:
    """Convert meters to decimeters, saturating at the u16 limit (6553.5 m)."""
    if movement_m < 0:
        raise FrameFieldError(f"movement_avg_dm cannot encode negative value {movement_m}")
    return min(0xFFFF, round(movement_m * 10.0))


def battery_to_wire(voltage_v: float) -> int:
    return max(0, min(0xFF, round(voltage_v * 1000.0 / 20.0)))


def temperature_to_wire(temp_c: float) -> int:
    return max(-0x8000, min(0x7FFF, round(temp_c * 10.0)))


@dataclass(frozen=True)
class LoraParams:
    """Radio settings entering the time-on-air computation.

    coding_rate_index follows the usual 1..4 convention for rates 4/5..4/8.
    mac_overhead_bytes defaults to the 13-byte LoRaWAN uplink header; the
    reference airtime figure for a 31-byte application payload at SF8 is
    only reached with that overhead included.
    """

    spreading_factor: int = 8
    bandwidth_hz: int = 125_000
    coding_rate_index: int = 1
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_on: bool = True
    low_data_rate_optimize: bool = False
    mac_overhead_bytes: int = 13

    @classmethod
    def for_sf(cls, spreading_factor: int, bandwidth_hz: int = 125_000, **kwargs) -> "LoraParams":
        """Build params with low-data-rate optimize auto-enabled for SF11/12 at 125 kHz."""
        ldro = kwargs.pop(
            "low_data_rate_optimize",
            spreading_factor >= 11 and bandwidth_hz == 125_000,
        )
        return cls(
            spreading_factor=spreading_factor,
            bandwidth_hz=bandwidth_hz,
            low_data_rate_optimize=ldro,
            **kwargs,
        )


def _validate_params(params: LoraParams) -> None:
    if not 7 <= params.spreading_factor <= 12:
        raise LoraParamError(f"spreading_factor must be in [7, 12], got {params.spreading_factor}")
    if params.bandwidth_hz not in VALID_BANDWIDTHS_HZ:
        raise LoraParamError(f"bandwidth_hz must be one of {VALID_BANDWIDTHS_HZ}, got {params.bandwidth_hz}")
    if not 1 <= params.coding_rate_index <= 4:
        raise LoraParamError(f"coding_rate_index must be in [1, 4], got {params.coding_rate_index}")
    if params.preamble_symbols < 6:
        raise LoraParamError(f"preamble_symbols must be >= 6, got {params.preamble_symbols}")
    if params.mac_overhead_bytes < 0:
        raise LoraParamError(f"mac_overhead_bytes must be >= 0, got {params.mac_overhead_bytes}")


def time_on_air(params: LoraParams, payload_len_bytes: int) -> float:
    """LoRa frame duration in seconds for an application payload of the given size.

    Standard Semtech formula: symbol time Ts = 2^SF/BW; the MAC overhead is
    added to the payload before computing the payload symbol count
    8 + max(ceil((8*PL - 4*SF + 28 + 16*CRC - 20*IH) / (4*(SF - 2*DE))) * (CR + 4), 0);
    total time is (preamble + 4.25 + payload symbols) * Ts.
    """
    _validate_params(params)
    if payload_len_bytes < 1:
        raise LoraParamError(f"payload_len_bytes must be >= 1, got {payload_len_bytes}")
    sf = params.spreading_factor
    crc = 1 if params.crc_on else 0
    ih = 0 if params.explicit_header else 1
    de = 1 if params.low_data_rate_optimize else 0
    pl = payload_len_bytes + params.mac_overhead_bytes
    t_symbol = float(2**sf) / params.bandwidth_hz
    numerator = 8 * pl - 4 * sf + 28 + 16 * crc - 20 * ih
    payload_symbols = 8 + max(
        math.ceil(numerator / (4 * (sf - 2 * de))) * (params.coding_rate_index + 4), 0
    )
    return (params.preamble_symbols + 4.25 + payload_symbols) * t_symbol


def duty_cycle_min_period(params: LoraParams, payload_len_bytes: int, duty_cycle: float) -> float:
    """Minimum transmit period (s) that keeps the given duty-cycle fraction."""
    if not 0.0 < duty_cycle <= 1.0:
        raise LoraParamError(f"duty_cycle must be in (0, 1], got {duty_cycle}")
    return time_on_air(params, payload_len_bytes) / duty_cycle
