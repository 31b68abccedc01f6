import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from herdlink import fusion
from herdlink.fusion import (
    CalibrationCoverageError,
    FusionError,
    GrazingLabel,
    GrazingState,
    OrientationState,
    SensorSample,
    calibrate_mag_offset,
    classify_grazing,
    heading_from_mag,
    iir_lowpass_block,
    iir_lowpass_step,
    movement_average,
    pitch_from_gravity,
    update_heading,
    update_orientation,
)

RATE = 60.0
DT = 1.0 / RATE
CORNER = 0.1


def run_filter(xs, y0=None, dt=DT, corner=CORNER):
    y = y0
    out = []
    for x in xs:
        y = iir_lowpass_step(y, x, dt, corner)
        out.append(y)
    return np.asarray(out)


def sample(t, accel=(0, 0, 1), gyro=(0, 0, 0), mag=(1, 0, 0)):
    return SensorSample(t=t, accel=accel, gyro=gyro, mag=mag)


def feed_orientation(samples, corner=CORNER):
    state = OrientationState()
    for s in samples:
        state = update_orientation(state, s, corner)
    return state


def rotation_about_y(deg):
    """Rotation matrix turning the level up-vector toward +x, matching the
    device pitch convention (30 deg -> accel (sin30, 0, cos30))."""
    r = math.radians(deg)
    return np.array(
        [
            [math.cos(r), 0.0, math.sin(r)],
            [0.0, 1.0, 0.0],
            [-math.sin(r), 0.0, math.cos(r)],
        ]
    )


class TestLowPass:
    def test_dc_convergence_within_five_time_constants(self):
        # time constant RC = 1/(2*pi*0.1) = 1.59 s; 5 RC at 60 Hz = 478 samples
        n = int(5 * 1.0 / (2 * math.pi * CORNER) / DT) + 1
        out = run_filter(np.full(n, 3.5), y0=0.0)
        assert abs(out[-1] - 3.5) < 0.01 * 3.5

    def test_dc_gain_exact_within_a_tenth_percent(self):
        out = run_filter(np.ones(20_000), y0=0.0)
        assert abs(out[-1] - 1.0) < 1e-3

    def test_corner_frequency_attenuates_to_sqrt_half(self):
        # single-pole magnitude at the corner is 1/sqrt(2)
        t = np.arange(0, 120, DT)
        out = run_filter(np.sin(2 * math.pi * CORNER * t), y0=0.0)
        steady = out[len(out) // 2 :]
        assert np.max(np.abs(steady)) == pytest.approx(1 / math.sqrt(2), rel=0.02)

    def test_ten_times_corner_rolls_off(self):
        # 1/sqrt(1 + 10^2) = 0.0995
        t = np.arange(0, 60, DT)
        out = run_filter(np.sin(2 * math.pi * 10 * CORNER * t), y0=0.0)
        assert np.max(np.abs(out[len(out) // 2 :])) <= 0.12

    def test_rejects_nonfinite_input_keeping_state(self):
        y = 1.25
        with pytest.raises(FusionError):
            iir_lowpass_step(y, float("nan"), DT, CORNER)
        assert y == 1.25

    def test_rejects_bad_dt_and_corner(self):
        with pytest.raises(FusionError):
            iir_lowpass_step(0.0, 1.0, 0.0, CORNER)
        with pytest.raises(FusionError):
            iir_lowpass_step(0.0, 1.0, DT, 0.0)
        with pytest.raises(FusionError):
            iir_lowpass_step(0.0, 1.0, DT, 31.0)  # above Nyquist at 60 Hz

    @given(
        st.lists(st.floats(min_value=-2.0, max_value=2.0), min_size=1, max_size=200),
        st.floats(min_value=-2.0, max_value=2.0),
    )
    @settings(max_examples=100)
    def test_bibo_stability_output_within_input_bounds(self, xs, y0):
        out = run_filter(xs, y0=y0)
        lo = min(min(xs), y0)
        hi = max(max(xs), y0)
        assert np.all(out >= lo - 1e-12)
        assert np.all(out <= hi + 1e-12)

    def test_block_equals_per_sample_steps(self):
        rng = np.random.default_rng(3)
        xs = rng.normal(0, 1, (500, 3))
        ys_block, last = iir_lowpass_block(None, xs, DT, CORNER)
        ys_step = run_filter(xs)
        np.testing.assert_allclose(ys_block, ys_step, atol=1e-12)
        np.testing.assert_allclose(last, ys_step[-1], atol=1e-12)
        # and when continuing from a prior state
        ys2_block, _ = iir_lowpass_block(ys_step[-1], xs, DT, CORNER)
        ys2_step = run_filter(xs, y0=ys_step[-1])
        np.testing.assert_allclose(ys2_block, ys2_step, atol=1e-12)


class TestOrientation:
    def test_level_device_pitch_zero(self):
        state = feed_orientation([sample(i * DT + DT) for i in range(120)])
        assert state.pitch_deg == pytest.approx(0.0, abs=1e-9)

    def test_nose_straight_down_is_minus_ninety(self):
        state = feed_orientation(
            [sample(i * DT + DT, accel=(1, 0, 0)) for i in range(120)]
        )
        assert state.pitch_deg == pytest.approx(-90.0, abs=1e-6)

    def test_thirty_degree_rotation_recovers_minus_thirty(self):
        accel = rotation_about_y(30.0) @ np.array([0.0, 0.0, 1.0])
        samples = [sample(i * DT + DT, accel=accel) for i in range(int(20 / DT))]
        state = feed_orientation(samples)
        assert state.pitch_deg == pytest.approx(-30.0, abs=1.0)

    def test_pitch_invariant_under_accel_scaling(self):
        g = np.array([0.4, 0.1, 0.9])
        assert pitch_from_gravity(g) == pytest.approx(pitch_from_gravity(5.0 * g))

    def test_gyro_gate_skips_gravity_update(self):
        state = feed_orientation([sample(DT)])
        gated = update_orientation(state, sample(2 * DT, accel=(1, 0, 0), gyro=(300, 0, 0)))
        np.testing.assert_array_equal(gated.gravity_est, state.gravity_est)
        assert gated.pitch_deg == state.pitch_deg

    def test_timestamps_must_increase(self):
        state = feed_orientation([sample(1.0)])
        with pytest.raises(FusionError):
            update_orientation(state, sample(1.0))


class TestHeading:
    def test_level_mag_along_x_is_north(self):
        state = feed_orientation([sample(DT)])
        state = update_heading(state, sample(2 * DT, mag=(1, 0, 0)))
        assert state.heading_deg == pytest.approx(0.0, abs=1e-9)
        assert not state.heading_held

    def test_level_mag_along_y_is_east(self):
        state = feed_orientation([sample(DT)])
        state = update_heading(state, sample(2 * DT, mag=(0, 1, 0)))
        assert state.heading_deg == pytest.approx(90.0, abs=1e-9)

    def test_pitched_device_recovers_known_heading(self):
        # field synthesized by rotating a reference vector for heading 137
        # at 30 deg head-down pitch, with a dipping vertical component
        heading, pitch = 137.0, -30.0
        psi = math.radians(heading)
        b_h, b_v = math.cos(math.radians(60)), -math.sin(math.radians(60))
        field_level = np.array([b_h * math.cos(psi), b_h * math.sin(psi), b_v])
        mag = rotation_about_y(-pitch) @ field_level
        gravity = rotation_about_y(-pitch) @ np.array([0.0, 0.0, 1.0])
        got = heading_from_mag(gravity, mag)
        assert got == pytest.approx(heading, abs=2.0)

    def test_vertical_field_holds_previous_heading(self):
        state = feed_orientation([sample(DT)])
        state = update_heading(state, sample(2 * DT, mag=(1, 0, 0)))
        state = update_heading(state, sample(3 * DT, mag=(0, 0, 50)))
        assert state.heading_held
        assert state.heading_deg == pytest.approx(0.0, abs=1e-9)

    def test_requires_initialized_orientation(self):
        with pytest.raises(FusionError):
            update_heading(OrientationState(), sample(DT))

    def test_offset_is_removed(self):
        offset = np.array([12.0, -3.0, 4.0])
        state = OrientationState(gravity_est=np.array([0.0, 0.0, 1.0]), mag_offset_est=offset)
        state = update_heading(state, sample(DT, mag=np.array([0.0, 1.0, 0.0]) + offset))
        assert state.heading_deg == pytest.approx(90.0, abs=1e-9)


def circle_samples(center, radius=20.0, n=36, arc_deg=360.0):
    out = []
    for i in range(n):
        theta = math.radians(arc_deg * i / n)
        mag = (
            center[0] + radius * math.cos(theta),
            center[1] + radius * math.sin(theta),
            center[2],
        )
        out.append(sample(t=float(i + 1), mag=mag))
    return out


class TestMagCalibration:
    def test_recovers_known_offset(self):
        center = (30.0, -12.0, 5.0)
        offset = calibrate_mag_offset(circle_samples(center))
        np.testing.assert_allclose(offset, center, rtol=0.01, atol=1e-9)

    def test_zero_centered_circle_gives_zero(self):
        offset = calibrate_mag_offset(circle_samples((0.0, 0.0, 0.0)))
        np.testing.assert_allclose(offset, np.zeros(3), atol=1e-9)

    def test_identical_samples_fail_coverage(self):
        with pytest.raises(CalibrationCoverageError):
            calibrate_mag_offset([sample(t=float(i + 1), mag=(5, 5, 5)) for i in range(10)])

    def test_partial_arc_fails_coverage(self):
        with pytest.raises(CalibrationCoverageError):
            calibrate_mag_offset(circle_samples((0, 0, 0), arc_deg=120.0))

    def test_heading_invariant_under_offset_shift_and_recalibration(self):
        # shifting every sample by the current offset estimate and
        # re-calibrating must not change the recovered heading
        shift = np.array([7.0, -2.0, 1.0])
        base = circle_samples((0.0, 0.0, 0.0))
        shifted = [
            sample(s.t, mag=s.mag + shift) for s in base
        ]
        off0 = calibrate_mag_offset(base)
        off1 = calibrate_mag_offset(shifted)
        gravity = np.array([0.0, 0.0, 1.0])
        for s0, s1 in zip(base, shifted):
            h0 = heading_from_mag(gravity, s0.mag - off0)
            h1 = heading_from_mag(gravity, s1.mag - off1)
            assert h1 == pytest.approx(h0, abs=1e-6)


class TestMovementAverage:
    def test_still_device_is_zero(self):
        samples = [sample(i * DT + DT) for i in range(60)]
        assert movement_average(samples, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_alternating_magnitudes(self):
        samples = []
        for i in range(100):
            mag = 0.8 if i % 2 == 0 else 1.2
            samples.append(sample(i * DT + DT, accel=(0, 0, mag)))
        assert movement_average(samples, 10.0) == pytest.approx(0.2, abs=1e-12)

    def test_walking_sinusoid_mean_abs(self):
        # mean |A sin| = 2A/pi = 0.1910 for A = 0.3
        t = np.arange(0, 10, DT)
        samples = [
            sample(ti + DT, accel=(0, 0, 1.0 + 0.3 * math.sin(2 * math.pi * 2.0 * ti)))
            for ti in t
        ]
        assert movement_average(samples, 10.0) == pytest.approx(2 * 0.3 / math.pi, rel=0.05)

    def test_empty_window_is_error(self):
        with pytest.raises(FusionError):
            movement_average([], 1.0)


class TestGrazingClassifier:
    @pytest.mark.parametrize("label", [GrazingLabel.GRAZING, GrazingLabel.NOT_GRAZING])
    def test_below_enter_threshold_is_grazing(self, label):
        state = GrazingState(label=label, since=0.0)
        assert classify_grazing(state, -25.0, 1.0).label is GrazingLabel.GRAZING

    @pytest.mark.parametrize("label", [GrazingLabel.GRAZING, GrazingLabel.NOT_GRAZING])
    def test_above_exit_threshold_is_not_grazing(self, label):
        state = GrazingState(label=label, since=0.0)
        assert classify_grazing(state, -5.0, 1.0).label is GrazingLabel.NOT_GRAZING

    def test_dead_band_holds_previous_label(self):
        grazing = GrazingState(label=GrazingLabel.GRAZING, since=0.0)
        resting = GrazingState(label=GrazingLabel.NOT_GRAZING, since=0.0)
        assert classify_grazing(grazing, -15.0, 1.0).label is GrazingLabel.GRAZING
        assert classify_grazing(resting, -15.0, 1.0).label is GrazingLabel.NOT_GRAZING

    def test_since_updates_only_on_change(self):
        state = GrazingState(label=GrazingLabel.NOT_GRAZING, since=0.0)
        changed = classify_grazing(state, -25.0, 7.0)
        assert changed.since == 7.0
        held = classify_grazing(changed, -15.0, 9.0)
        assert held.since == 7.0

    def test_pitch_out_of_range_rejected(self):
        with pytest.raises(FusionError):
            classify_grazing(None, -95.0, 0.0)

    @given(st.lists(st.floats(min_value=-90, max_value=90), min_size=1, max_size=200))
    @settings(max_examples=100)
    def test_transitions_only_at_threshold_crossings(self, pitches):
        state = GrazingState.initial(pitches[0], 0.0)
        prev = state.label
        for i, p in enumerate(pitches):
            state = classify_grazing(state, p, float(i))
            if state.label is not prev:
                if state.label is GrazingLabel.GRAZING:
                    assert p < fusion.GRAZING_ENTER_DEG
                else:
                    assert p > fusion.GRAZING_EXIT_DEG
            else:
                # no change inside the band or on the same side
                if prev is GrazingLabel.GRAZING:
                    assert p <= fusion.GRAZING_EXIT_DEG
                else:
                    assert p >= fusion.GRAZING_ENTER_DEG
            prev = state.label

    @given(
        st.sampled_from([GrazingLabel.GRAZING, GrazingLabel.NOT_GRAZING]),
        st.floats(min_value=-90, max_value=90),
    )
    def test_depends_only_on_previous_label_and_pitch(self, label, pitch):
        a = GrazingState(label=label, since=0.0)
        b = GrazingState(label=label, since=123.0)
        assert classify_grazing(a, pitch, 1.0).label is classify_grazing(b, pitch, 1.0).label


class TestSensorCsv:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        samples = [
            SensorSample(t=i * 0.05, accel=rng.normal(0, 1, 3), gyro=rng.normal(0, 1, 3),
                         mag=rng.normal(0, 10, 3))
            for i in range(20)
        ]
        path = tmp_path / "stream.csv"
        fusion.write_sensor_csv(path, samples)
        back = fusion.read_sensor_csv(path)
        assert len(back) == len(samples)
        for a, b in zip(samples, back):
            assert b.t == pytest.approx(a.t, abs=1e-6)
            np.testing.assert_allclose(b.accel, a.accel, atol=1e-6)
            np.testing.assert_allclose(b.mag, a.mag, atol=1e-6)

    def test_replay_stream_drives_orientation(self, tmp_path):
        accel = rotation_about_y(45.0) @ np.array([0.0, 0.0, 1.0])
        samples = [sample(i * DT + DT, accel=accel) for i in range(int(20 / DT))]
        path = tmp_path / "stream.csv"
        fusion.write_sensor_csv(path, samples)
        state = feed_orientation(fusion.read_sensor_csv(path))
        assert state.pitch_deg == pytest.approx(-45.0, abs=1.0)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,x\n1,2\n")
        with pytest.raises(FusionError):
            fusion.read_sensor_csv(path)
