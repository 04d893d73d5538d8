import math

import numpy as np
import pytest

from erpspeller.core import dsp
from erpspeller.core.analysis import erp_averages
from erpspeller.core.errors import ValidationError
from erpspeller.core.paradigm import FlashEvent, StimulusSchedule
from erpspeller.core.synth import (P300_GAIN, ContinuousRecording, ErpComponent, SubjectProfile, pink_noise,
                                   subject_rng, synthesize_recording, target_snr)

PZ = 10


def single_flash(flash_code, target=0, onset=256, n_samples=768, is_target=True):
    groups = flash_code.groups_of(target)
    group = groups[0] if is_target else next(g for g in range(12) if g not in groups)
    event = FlashEvent(onset, group, 0, 0, is_target)
    return StimulusSchedule((event,), (target,), n_samples)


class TestSynthesizeRecording:
    def test_noiseless_target_flash_is_the_template(self, flash_code):
        profile = SubjectProfile(nontarget_gain=0.0, noise_rms_uv=0.0, alpha_base_uv=0.0,
                                 amplitude_jitter=0.0, erp_decline_rate=0.0)
        recording = synthesize_recording(profile, single_flash(flash_code), flash_code)

        t_ms = np.arange(256) * 1000.0 / 256
        template = sum(c.channel_gain["Pz"] * c.waveform(t_ms) for c in profile.erp_components)
        expected = np.zeros(768)
        expected[256:512] = template
        np.testing.assert_allclose(recording.channel("Pz"), expected, atol=1e-12)

    def test_default_profile_varies_the_template(self, flash_code):
        exact = SubjectProfile(nontarget_gain=0.0, noise_rms_uv=0.0, alpha_base_uv=0.0,
                               amplitude_jitter=0.0, erp_decline_rate=0.0)
        varied = SubjectProfile(nontarget_gain=0.0, noise_rms_uv=0.0, alpha_base_uv=0.0)
        assert (varied.amplitude_jitter, varied.erp_decline_rate) == (0.5, 0.2)
        schedule = single_flash(flash_code)
        a = synthesize_recording(exact, schedule, flash_code).channel("Pz")
        b = synthesize_recording(varied, schedule, flash_code).channel("Pz")
        assert not np.allclose(a, b, rtol=1e-6, atol=0.0)
        np.testing.assert_allclose(b[:256], 0.0, atol=1e-12)

    def test_background_rms(self, flash_code):
        profile = SubjectProfile(erp_components=(), alpha_base_uv=0.0, noise_rms_uv=5.0, seed=3)
        schedule = single_flash(flash_code, n_samples=60 * 256)
        recording = synthesize_recording(profile, schedule, flash_code)
        rms = np.sqrt(np.mean(recording.data ** 2, axis=1))
        np.testing.assert_allclose(rms, 5.0, rtol=0.05)

    def test_alpha_drift_raises_late_alpha_power(self, flash_code, schedule_for):
        profile = SubjectProfile(erp_components=(), alpha_drift_rate=0.5, seed=5)
        schedule = schedule_for(list(range(42)), n_trials=2)
        recording = synthesize_recording(profile, schedule, flash_code)
        pz = recording.channel("Pz")
        half = len(pz) // 2
        assert dsp.band_power(pz[half:]) > dsp.band_power(pz[:half])

    def test_deterministic(self, flash_code, schedule_for):
        profile = SubjectProfile(seed=9)
        schedule = schedule_for([3, 4], n_trials=3)
        a = synthesize_recording(profile, schedule, flash_code, stream=(1, 2))
        b = synthesize_recording(profile, schedule, flash_code, stream=(1, 2))
        np.testing.assert_array_equal(a.data, b.data)

    def test_streams_are_independent(self, flash_code, schedule_for):
        profile = SubjectProfile(seed=9)
        schedule = schedule_for([3])
        a = synthesize_recording(profile, schedule, flash_code, stream=(1,))
        b = synthesize_recording(profile, schedule, flash_code, stream=(2,))
        assert not np.allclose(a.data, b.data)

    def test_linear_in_amplitude(self, flash_code, schedule_for):
        profile = SubjectProfile(noise_rms_uv=0.0, alpha_base_uv=0.0, seed=4)
        schedule = schedule_for([8, 30], n_trials=2)
        once = synthesize_recording(profile, schedule, flash_code)
        twice = synthesize_recording(profile.scaled(2.0), schedule, flash_code)
        np.testing.assert_allclose(twice.data, 2.0 * once.data, rtol=1e-12, atol=1e-12)

    def test_difference_wave_peaks_at_p300(self, flash_code, schedule_for):
        profile = SubjectProfile(noise_rms_uv=0.0, alpha_base_uv=0.0, amplitude_jitter=0.0,
                                 erp_decline_rate=0.0, seed=2)
        schedule = schedule_for(list(range(0, 42, 6)), n_trials=4)
        recording = synthesize_recording(profile, schedule, flash_code)
        epochs = [dsp.baseline_correct(e) for e in dsp.extract_epochs(recording.data, recording.events)]
        averages = erp_averages(epochs)
        p300 = profile.component("P300")
        peak_ms = averages.time_ms[np.argmax(averages.difference[PZ])]
        assert abs(peak_ms - p300.latency_ms) <= p300.width_ms / 2

    def test_erps_fade_out_at_the_horizon(self, flash_code):
        profile = SubjectProfile(noise_rms_uv=0.0, alpha_base_uv=0.0, amplitude_jitter=0.0, erp_decline_rate=1.0)
        recording = synthesize_recording(profile, single_flash(flash_code), flash_code,
                                         clock_offset_s=100.0, horizon_s=100.0)
        np.testing.assert_array_equal(recording.data, 0.0)

    def test_overrun_is_rejected(self, flash_code):
        with pytest.raises(ValidationError, match="overruns"):
            synthesize_recording(SubjectProfile(), single_flash(flash_code, onset=600, n_samples=700), flash_code)

    def test_empty_schedule_is_rejected(self, flash_code):
        with pytest.raises(ValidationError):
            synthesize_recording(SubjectProfile(), StimulusSchedule((), (), 1000), flash_code)

    def test_unordered_onsets_are_rejected(self, flash_code):
        events = (FlashEvent(600, 0, 0, 0, True), FlashEvent(300, 1, 0, 0, True))
        with pytest.raises(ValidationError, match="increasing"):
            synthesize_recording(SubjectProfile(), StimulusSchedule(events, (0,), 2000), flash_code)

    def test_inconsistent_target_flag_is_rejected(self, flash_code):
        event = FlashEvent(300, 5, 0, 0, True)  # item 0 flashes with groups 0 and 1
        with pytest.raises(ValidationError, match="target flag"):
            synthesize_recording(SubjectProfile(), StimulusSchedule((event,), (0,), 1000), flash_code)


class TestSubjectProfile:
    def test_wrong_polarity(self):
        with pytest.raises(ValidationError, match="polarity"):
            ErpComponent("P300", 350.0, 150.0, -6.0, dict(P300_GAIN))

    def test_zero_width(self):
        with pytest.raises(ValidationError, match="width"):
            ErpComponent("N200", 200.0, 0.0, -3.0, {})

    def test_unknown_channel(self):
        with pytest.raises(ValidationError, match="unknown channels"):
            ErpComponent("N400", 450.0, 120.0, -3.0, {"T7": 0.5})

    @pytest.mark.parametrize("field, value", [("nontarget_gain", 1.0), ("noise_rms_uv", -1.0), ("seed", -1)])
    def test_invalid_scalars(self, field, value):
        with pytest.raises(ValidationError):
            SubjectProfile(**{field: value})

    def test_scaled_keeps_everything_else(self):
        profile = SubjectProfile(seed=4)
        scaled = profile.scaled(0.5)
        assert scaled.component("P300").amplitude_uv == 3.0
        assert scaled.noise_rms_uv == profile.noise_rms_uv
        assert scaled.seed == 4

    def test_round_trip(self):
        profile = SubjectProfile(seed=12, alpha_drift_rate=0.5)
        assert SubjectProfile.from_dict(profile.to_dict()) == profile


class TestTargetSnr:
    def test_unit_ratio(self):
        profile = SubjectProfile(erp_components=(ErpComponent("P300", 350.0, 150.0, 5.0, dict(P300_GAIN)),),
                                 noise_rms_uv=5.0)
        assert target_snr(profile) == pytest.approx(1.0)

    def test_no_p300(self):
        assert target_snr(SubjectProfile().scaled(0.0)) == 0.0

    def test_silent_background(self):
        assert target_snr(SubjectProfile(noise_rms_uv=0.0)) == math.inf

    def test_default_profile(self):
        assert 0.5 <= target_snr(SubjectProfile()) <= 1.5


def test_pink_noise_rms_is_exact():
    noise = pink_noise(subject_rng(1), 16, 5000, 3.0)
    np.testing.assert_allclose(np.sqrt(np.mean(noise ** 2, axis=1)), 3.0)
    np.testing.assert_allclose(noise.mean(axis=1), 0.0, atol=1e-9)


def test_recording_needs_sixteen_channels():
    with pytest.raises(ValidationError, match="16 channel rows"):
        ContinuousRecording(np.zeros((15, 100)), (), ())
