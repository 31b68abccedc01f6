import math

import numpy as np
import pytest

from herdlink import codec, fusion
from herdlink.config import ConfigError, SimConfig, config_from_dict, load_config
from herdlink.energy import EnergyLedger
from herdlink.sim import (
    ConfigurationError,
    FirmwareSchedule,
    Mode,
    Pasture,
    TrajectorySensorSource,
    default_behavior_params,
    default_pasture,
    follow_behavior,
    link_deliver,
    run_firmware,
    run_simulation,
    sample_gnss,
    simulate_trajectory,
)
from herdlink.sim.behavior import BehaviorError, initial_state, step_behavior
from herdlink.sim.behavior import _moving_average  # noqa: private, checked directly
from herdlink.sim.firmware import EmittedFrame
from herdlink.sim.gnss import sigma_from_cep
from herdlink.sim.link import LinkError
from herdlink.sim.pasture import PastureError


@pytest.fixture(scope="module")
def pasture():
    return default_pasture()


@pytest.fixture(scope="module")
def params():
    return default_behavior_params()


class TestPasture:
    def test_default_area_and_extent(self, pasture):
        assert pasture.area_m2 == pytest.approx(20_280, rel=0.01)
        assert pasture.max_extent_m == pytest.approx(275.0, abs=0.5)

    def test_latlon_en_round_trip(self, pasture):
        p = np.array([120.0, 40.0])
        lat, lon = pasture.to_latlon(p)
        np.testing.assert_allclose(pasture.to_en(lat, lon), p, atol=1e-6)

    def test_containment(self, pasture):
        assert pasture.contains(pasture.centroid_en)
        assert not pasture.contains((-5.0, 10.0))
        assert not pasture.contains((10.0, 1e6))

    def test_rejects_degenerate_polygons(self):
        with pytest.raises(PastureError):
            Pasture.from_latlon([(46.5, 9.8), (46.6, 9.8)])
        bowtie = [(46.5, 9.8), (46.6, 9.9), (46.6, 9.8), (46.5, 9.9)]
        with pytest.raises(PastureError):
            Pasture.from_latlon(bowtie)


class TestBehavior:
    def test_zero_speed_means_no_movement(self, pasture, params):
        rng = np.random.default_rng(0)
        state = initial_state(pasture, params, rng)
        state.speed_mps = 0.0
        state.dwell_left_s = 1e9  # stay in the bout
        start = state.pos_en.copy()
        for _ in range(100):
            step_behavior(state, 1.0, rng, pasture, params)
        np.testing.assert_array_equal(state.pos_en, start)

    def test_grazing_pitch_below_enter_threshold_mostly(self, pasture, params):
        rng = np.random.default_rng(1)
        traj = simulate_trajectory(pasture, params, 6 * 3600, rng)
        grazing = traj.pitch_deg[traj.mode_idx == 1]
        assert len(grazing) > 100
        # P(N(-30, 5) < -20) = 0.977; bout-change transients eat a little
        assert np.mean(grazing < -20.0) >= 0.9

    def test_twelve_hours_stays_inside_boundary(self, pasture, params):
        rng = np.random.default_rng(2)
        traj = simulate_trajectory(pasture, params, 12 * 3600, rng)
        for e, n in zip(traj.e, traj.n):
            assert pasture.contains((e, n))

    def test_default_mix_is_grazing_heavy(self, pasture, params):
        rng = np.random.default_rng(3)
        traj = simulate_trajectory(pasture, params, 24 * 3600, rng)
        grazing_frac = float(np.mean(traj.mode_idx == 1))
        assert 0.4 <= grazing_frac <= 0.75

    def test_bad_dt_rejected(self, pasture, params):
        rng = np.random.default_rng(0)
        state = initial_state(pasture, params, rng)
        with pytest.raises(BehaviorError):
            step_behavior(state, 0.0, rng, pasture, params)


class TestFollow:
    def test_zero_lag_zero_jitter_identical_modes(self, pasture, params):
        rng = np.random.default_rng(4)
        leader = simulate_trajectory(pasture, params, 3600, rng)
        follower = follow_behavior(leader, 0.0, 0.0, np.random.default_rng(5), pasture, params)
        np.testing.assert_array_equal(follower.mode_idx, leader.mode_idx)

    def test_zero_jitter_is_exact_shift_of_smoothed_path(self, pasture, params):
        rng = np.random.default_rng(6)
        leader = simulate_trajectory(pasture, params, 3600, rng)
        lag = 600.0
        follower = follow_behavior(leader, lag, 0.0, np.random.default_rng(7), pasture, params)
        smooth_e = _moving_average(leader.e, 60.0, leader.dt_s)
        shift = int(lag / leader.dt_s)
        np.testing.assert_allclose(follower.e[shift:], smooth_e[: len(smooth_e) - shift], atol=1e-9)

    def test_lag_exceeding_span_rejected(self, pasture, params):
        rng = np.random.default_rng(8)
        leader = simulate_trajectory(pasture, params, 600, rng)
        with pytest.raises(BehaviorError):
            follow_behavior(leader, 601.0, 0.0, rng, pasture, params)

    def test_follower_stays_inside(self, pasture, params):
        rng = np.random.default_rng(9)
        leader = simulate_trajectory(pasture, params, 3600, rng)
        follower = follow_behavior(leader, 300.0, 6.0, np.random.default_rng(10), pasture, params)
        for e, n in zip(follower.e, follower.n):
            assert pasture.contains((e, n))


class TestGnss:
    def test_zero_cep_returns_exact_position(self, pasture):
        fix = sample_gnss(pasture, (50.0, 20.0), 0.0, np.random.default_rng(0), cep_m=0.0)
        np.testing.assert_allclose(pasture.to_en(fix.lat, fix.lon), (50.0, 20.0), atol=1e-9)

    def test_median_error_matches_cep(self, pasture):
        rng = np.random.default_rng(11)
        true = np.array([100.0, 30.0])
        errors = []
        for _ in range(10_000):
            fix = sample_gnss(pasture, true, 0.0, rng)
            errors.append(np.linalg.norm(pasture.to_en(fix.lat, fix.lon) - true))
        assert np.median(errors) == pytest.approx(2.5, rel=0.1)

    def test_seeded_noise_is_deterministic(self, pasture):
        a = [sample_gnss(pasture, (10.0, 10.0), t, np.random.default_rng(42)) for t in range(3)]
        b = [sample_gnss(pasture, (10.0, 10.0), t, np.random.default_rng(42)) for t in range(3)]
        assert a == b

    def test_cep_to_sigma(self):
        assert sigma_from_cep(2.5) == pytest.approx(2.5 / 1.1774, abs=1e-4)


class TestSensorSource:
    def make_source(self, pasture, params, duration=600, seed=12):
        traj = simulate_trajectory(pasture, params, duration, np.random.default_rng(seed))
        return TrajectorySensorSource(
            traj, pasture, params, np.random.default_rng(seed + 1)
        )

    def test_block_shapes_and_rates(self, pasture, params):
        src = self.make_source(pasture, params)
        block = src.block(0, 300)
        assert block.accel.shape == (300 * 60, 3)
        assert block.mag.shape == (300 * 20, 3)
        assert block.t_accel[0] == 0.0
        assert block.t_accel[-1] == pytest.approx(300 - 1 / 60.0)

    def test_gyro_stays_below_quality_gate(self, pasture, params):
        src = self.make_source(pasture, params)
        block = src.block(0, 600)
        assert np.linalg.norm(block.gyro, axis=1).max() < fusion.GYRO_GATE_DPS

    def test_movement_metric_separates_modes(self, pasture, params):
        src = self.make_source(pasture, params)
        block = src.block(0, 300)
        dev = np.abs(np.linalg.norm(block.accel, axis=1) - 1.0)
        # resting vibration amplitude 0.02 g -> mean |A sin| = 2A/pi = 0.013
        resting_level = 2 * params.modes[Mode.RESTING].vib_amp_g / math.pi
        walking_level = 2 * params.modes[Mode.WALKING].vib_amp_g / math.pi
        assert dev.mean() < (resting_level + walking_level) / 2

    def test_fused_pitch_tracks_truth(self, pasture, params):
        src = self.make_source(pasture, params, duration=300)
        block = src.block(0, 300)
        _, gravity = fusion.iir_lowpass_block(None, block.accel, 1 / 60.0, 0.1)
        truth = src.trajectory.pitch_deg[300]
        assert fusion.pitch_from_gravity(gravity) == pytest.approx(truth, abs=3.0)

    def test_fused_heading_tracks_truth(self, pasture, params):
        src = self.make_source(pasture, params, duration=300)
        block = src.block(0, 300)
        _, gravity = fusion.iir_lowpass_block(None, block.accel, 1 / 60.0, 0.1)
        heading = fusion.heading_from_mag(gravity, block.mag[-1])
        # the last mag sample (t = 299.95) is synthesized from the truth
        # heading at the nearest whole second
        truth = src.trajectory.heading_deg[300]
        err = abs(heading - truth) % 360
        assert min(err, 360 - err) < 5.0


class FrozenSource:
    """Replays pre-generated blocks so two consumers see identical samples."""

    def __init__(self, source, slots):
        self.pasture = source.pasture
        self.field = source.field
        self.duration_s = source.duration_s
        self._traj = source.trajectory
        self._blocks = {(t0, t1): source.block(t0, t1) for t0, t1 in slots}

    def block(self, t0, t1):
        return self._blocks[(t0, t1)]

    def position_en(self, t_s):
        i = self._traj.index_at(t_s)
        return np.array([self._traj.e[i], self._traj.n[i]])


class TestFirmware:
    def test_one_hour_emits_four_frames(self, pasture, params):
        traj = simulate_trajectory(pasture, params, 3600, np.random.default_rng(13))
        src = TrajectorySensorSource(traj, pasture, params, np.random.default_rng(14))
        frames = run_firmware(
            src, FirmwareSchedule(), 1, codec.LoraParams(), EnergyLedger(),
            epoch_start=0, gnss_rng=np.random.default_rng(15),
        )
        assert len(frames) == 4
        assert [f.tx_time_s for f in frames] == [900.0, 1800.0, 2700.0, 3600.0]

    def test_empty_stream_is_configuration_error(self, pasture, params):
        traj = simulate_trajectory(pasture, params, 60, np.random.default_rng(16))
        src = TrajectorySensorSource(traj, pasture, params, np.random.default_rng(17))
        with pytest.raises(ConfigurationError):
            run_firmware(
                src, FirmwareSchedule(), 1, codec.LoraParams(), EnergyLedger(),
                epoch_start=0, gnss_rng=np.random.default_rng(18),
            )

    def test_duty_cycle_violation_is_configuration_error(self, pasture, params):
        traj = simulate_trajectory(pasture, params, 3600, np.random.default_rng(19))
        src = TrajectorySensorSource(traj, pasture, params, np.random.default_rng(20))
        schedule = FirmwareSchedule(
            measurement_period_s=10, transmit_period_s=10, gnss_fix_duration_s=5.0
        )
        with pytest.raises(ConfigurationError, match="duty cycle"):
            run_firmware(
                src, schedule, 1, codec.LoraParams.for_sf(12), EnergyLedger(),
                epoch_start=0, gnss_rng=np.random.default_rng(21),
            )

    def test_schedule_periods_must_nest(self):
        with pytest.raises(ConfigurationError):
            FirmwareSchedule(measurement_period_s=300, transmit_period_s=700)

    def test_snapshot_matches_per_sample_fusion_ops(self, pasture, params):
        """Dual route: the firmware's vectorized fusion must agree with
        folding the per-sample operations over the identical stream."""
        traj = simulate_trajectory(pasture, params, 900, np.random.default_rng(22))
        base = TrajectorySensorSource(traj, pasture, params, np.random.default_rng(23))
        schedule = FirmwareSchedule()
        slots = [(k * 300, (k + 1) * 300) for k in range(3)]
        frozen = FrozenSource(base, slots)

        frames = run_firmware(
            frozen, schedule, 1, codec.LoraParams(), EnergyLedger(),
            epoch_start=0, gnss_rng=np.random.default_rng(24),
        )

        state = fusion.OrientationState()
        for t0, t1 in slots:
            block = frozen.block(t0, t1)
            for i in range(len(block.t_accel)):
                state = fusion.update_orientation(
                    state,
                    fusion.SensorSample(
                        t=block.t_accel[i] + 1 / 60.0,
                        accel=block.accel[i],
                        gyro=block.gyro[i],
                        mag=(0, 0, 0),
                    ),
                )
            state = fusion.update_heading(
                state,
                fusion.SensorSample(
                    t=t1 + 1.0, accel=(0, 0, 1), gyro=(0, 0, 0), mag=block.mag[-1]
                ),
            )
        assert frames[-1].frame.head_pitch_deg == codec.pitch_to_wire(state.pitch_deg)
        assert frames[-1].frame.heading_q8 == codec.heading_to_q8(state.heading_deg)

    def test_energy_accrual_per_frame(self, pasture, params):
        traj = simulate_trajectory(pasture, params, 3600, np.random.default_rng(25))
        src = TrajectorySensorSource(traj, pasture, params, np.random.default_rng(26))
        ledger = EnergyLedger()
        run_firmware(
            src, FirmwareSchedule(), 1, codec.LoraParams(), ledger,
            epoch_start=0, gnss_rng=np.random.default_rng(27),
        )
        assert ledger.active_s["gnss"] == pytest.approx(4 * 25.0)
        assert ledger.active_s["mcu"] == pytest.approx(12 * 2.5 + 4 * 10.0)
        assert ledger.active_s["accelerometer"] == pytest.approx(3600.0)
        assert ledger.energy_j["lorawan"] == pytest.approx(4 * 0.164352 * 0.12, rel=1e-9)


def fake_emitted(n):
    frame = codec.TelemetryFrame(
        device_id=1, sequence=0, frame_timestamp=0, latitude_e7=0, longitude_e7=0,
        fix_timestamp=0, fix_accuracy_dm=0, heading_q8=0, head_pitch_deg=0,
        movement_avg_dm=0, battery_mv_div20=0, temperature_dC=0, status_flags=0,
    )
    payload = codec.encode_frame(frame)
    return [
        EmittedFrame(tx_time_s=float(i), airtime_s=0.1, frame=frame, payload=payload, fix=None)
        for i in range(n)
    ]


class TestLink:
    def test_no_loss_delivers_all_in_order(self):
        out = link_deliver(fake_emitted(50), 0.0, np.random.default_rng(0), epoch_start=0)
        assert len(out) == 50
        assert [d.recv_unix_ts for d in out] == sorted(d.recv_unix_ts for d in out)

    def test_total_loss_rejected(self):
        with pytest.raises(LinkError):
            link_deliver(fake_emitted(1), 1.0, np.random.default_rng(0), epoch_start=0)

    def test_ten_percent_loss_within_binomial_bounds(self):
        out = link_deliver(fake_emitted(10_000), 0.1, np.random.default_rng(1), epoch_start=0)
        dropped = 10_000 - len(out)
        assert abs(dropped - 1000) <= 100  # 3 sigma of Binomial(10000, 0.1) is 90

    def test_deterministic_under_seed(self):
        a = link_deliver(fake_emitted(100), 0.3, np.random.default_rng(7), epoch_start=0)
        b = link_deliver(fake_emitted(100), 0.3, np.random.default_rng(7), epoch_start=0)
        assert a == b


@pytest.fixture(scope="module")
def short_cfg():
    return config_from_dict({"simulation": {"seed": 42, "duration_s": 3600, "animals": 2}})


class TestRunner:
    def test_bit_identical_outputs_for_same_seed(self, short_cfg):
        r1 = run_simulation(short_cfg)
        r2 = run_simulation(short_cfg)
        assert r1.frame_log() == r2.frame_log()
        assert r1.truth_csv() == r2.truth_csv()
        assert r1.ledger_csv() == r2.ledger_csv()

    def test_different_seed_changes_outputs(self, short_cfg):
        other = config_from_dict({"simulation": {"seed": 43, "duration_s": 3600, "animals": 2}})
        assert run_simulation(short_cfg).frame_log() != run_simulation(other).frame_log()

    def test_frame_count_matches_schedule(self, short_cfg):
        result = run_simulation(short_cfg)
        per_device = 3600 // short_cfg.schedule.transmit_period_s
        assert result.emitted_count == per_device * 2
        assert result.delivered_count == result.emitted_count  # loss 0

    def test_frame_log_lines_parse(self, short_cfg):
        from herdlink.ingest import parse_log_line

        result = run_simulation(short_cfg)
        for line in result.frame_log().splitlines():
            sf = parse_log_line(line)
            assert sf.device_id in (1, 2)

    def test_truth_csv_shape(self, short_cfg):
        result = run_simulation(short_cfg)
        lines = result.truth_csv().strip().splitlines()
        assert lines[0] == "t,device_id,lat,lon,mode,pitch_deg"
        # 3600 s / 5 s stride + endpoint, per animal
        assert len(lines) == 1 + 2 * (3600 // 5 + 1)


class TestConfig:
    def test_defaults_load(self):
        cfg = config_from_dict({})
        assert cfg.seed == 42
        assert cfg.schedule.transmit_period_s == 900
        assert cfg.lora.spreading_factor == 8
        assert cfg.harvest.conversion_efficiency == 0.8

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"simulation": {"sede": 1}})
        with pytest.raises(ConfigError):
            config_from_dict({"nonsense": {}})

    def test_bad_values_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"simulation": {"duration_s": -1}})
        with pytest.raises(ConfigError):
            config_from_dict({"schedule": {"transmit_period_s": 700}})
        with pytest.raises(ConfigError):
            config_from_dict({"behavior": {"grazing": {"pitch_mean_deg": -15}}})

    def test_follow_null_disables(self):
        cfg = config_from_dict({"follow": None})
        assert cfg.follow_lag_s is None

    def test_yaml_file_round_trip(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(
            "simulation:\n  seed: 7\n  duration_s: 1800\n  animals: 1\n"
            "schedule:\n  measurement_period_s: 300\n  transmit_period_s: 300\n"
            "lora:\n  spreading_factor: 7\n"
        )
        cfg = load_config(path)
        assert cfg.seed == 7
        assert cfg.lora.spreading_factor == 7
        assert cfg.schedule.transmit_period_s == 300

    def test_missing_file_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml")

    def test_custom_pasture_vertices(self):
        cfg = config_from_dict(
            {"pasture": {"vertices": [[46.5, 9.8], [46.502, 9.8], [46.502, 9.803], [46.5, 9.803]]}}
        )
        assert cfg.pasture.area_m2 > 10_000
