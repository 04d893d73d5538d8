import json
import os

import numpy as np
import pytest

from erpspeller.core import blda, dsp
from erpspeller.core.container import (EEG_FILE, EVENTS_FILE, META_FILE, TARGETS_FILE, SessionContainer,
                                       load_model, load_session, save_model, save_session)
from erpspeller.core.errors import ContainerError
from erpspeller.core.synth import SubjectProfile, synthesize_recording


@pytest.fixture
def container(flash_code, schedule_for):
    profile = SubjectProfile(seed=2)
    schedule = schedule_for([3, 7], n_trials=2)
    recording = dsp.acquire(synthesize_recording(profile, schedule, flash_code))
    return SessionContainer(recording, "LS_P", 2, {"viewing_distance_cm": 80.0}, {"soa_ms": 200},
                            profile.to_dict())


@pytest.fixture
def saved(tmp_path, container):
    path = str(tmp_path / "session")
    save_session(path, container)
    return path


def rewrite_meta(path, **changes):
    meta_path = os.path.join(path, META_FILE)
    with open(meta_path, encoding="utf-8") as f:
        meta = json.load(f)
    meta.update(changes)
    with open(meta_path, "w", encoding="utf-8") as f:
        json.dump(meta, f)


def error_code(path):
    with pytest.raises(ContainerError) as info:
        load_session(path)
    return info.value.code


class TestSessionContainer:
    def test_round_trip_is_exact(self, saved, container):
        loaded = load_session(saved)
        np.testing.assert_array_equal(loaded.recording.data, container.recording.data)
        assert loaded.recording.events == container.recording.events
        assert loaded.recording.block_targets == (3, 7)
        assert (loaded.paradigm_id, loaded.seed) == ("LS_P", 2)
        assert SubjectProfile.from_dict(loaded.profile) == SubjectProfile.from_dict(container.profile)

    def test_payload_layout(self, saved, container):
        size = os.path.getsize(os.path.join(saved, EEG_FILE))
        assert size == 4 * 16 * container.recording.n_samples
        with open(os.path.join(saved, EEG_FILE), "rb") as f:
            first_sample = np.frombuffer(f.read(64), dtype="<f4")
        np.testing.assert_array_equal(first_sample, container.recording.data[:, 0])

    def test_csv_headers(self, saved):
        with open(os.path.join(saved, EVENTS_FILE), encoding="utf-8") as f:
            assert f.readline().strip() == "sample_index,group_id,block_index,trial_index,is_target"
        with open(os.path.join(saved, TARGETS_FILE), encoding="utf-8") as f:
            assert f.read() == "block_index,target_item\n0,3\n1,7\n"

    def test_truncated_payload(self, saved):
        eeg_path = os.path.join(saved, EEG_FILE)
        with open(eeg_path, "rb") as f:
            payload = f.read()
        with open(eeg_path, "wb") as f:
            f.write(payload[:-1])
        assert error_code(saved) == "payload_size_mismatch"

    def test_fifteen_channels(self, saved, container):
        rewrite_meta(saved, channels=list(container.recording.channels)[:15])
        assert error_code(saved) == "montage_mismatch"

    def test_future_version(self, saved):
        rewrite_meta(saved, format_version=2)
        assert error_code(saved) == "version_mismatch"

    def test_missing_meta_key(self, saved):
        meta_path = os.path.join(saved, META_FILE)
        with open(meta_path, encoding="utf-8") as f:
            meta = json.load(f)
        del meta["n_samples"]
        with open(meta_path, "w", encoding="utf-8") as f:
            json.dump(meta, f)
        assert error_code(saved) == "meta_malformed"

    def test_wrong_events_header(self, saved):
        with open(os.path.join(saved, EVENTS_FILE), "w", encoding="utf-8") as f:
            f.write("onset,group,block,trial,target\n1,0,0,0,1\n")
        assert error_code(saved) == "csv_schema"

    def test_event_outside_recording(self, saved, container):
        with open(os.path.join(saved, EVENTS_FILE), "a", encoding="utf-8") as f:
            f.write(f"{container.recording.n_samples + 5},0,1,1,0\n")
        assert error_code(saved) == "csv_schema"

    def test_missing_file(self, saved):
        os.remove(os.path.join(saved, TARGETS_FILE))
        assert error_code(saved) == "missing_file"

    def test_error_message_carries_the_code(self, saved):
        rewrite_meta(saved, format_version=9)
        with pytest.raises(ContainerError, match=r"\[version_mismatch\]"):
            load_session(saved)


class TestModelFile:
    @pytest.fixture
    def model(self):
        rng = np.random.default_rng(0)
        y = np.where(np.arange(60) % 6 == 0, 1.0, -1.0)
        X = np.hstack([rng.standard_normal((60, 8)) + y[:, None], np.ones((60, 1))])
        return blda.train(X, y)

    def test_round_trip(self, tmp_path, model):
        path = str(tmp_path / "nested" / "model.json")
        save_model(path, model)
        loaded = load_model(path)
        np.testing.assert_array_equal(loaded.weights, model.weights)
        assert (loaded.alpha, loaded.beta, loaded.n_iterations) == (model.alpha, model.beta, model.n_iterations)
        assert tuple(loaded.evidence_trace) == tuple(model.evidence_trace)
        assert loaded.metadata == model.metadata

    def test_missing(self, tmp_path):
        with pytest.raises(ContainerError) as info:
            load_model(str(tmp_path / "absent.json"))
        assert info.value.code == "missing_file"

    def test_not_a_model(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("[1, 2, 3]", encoding="utf-8")
        with pytest.raises(ContainerError) as info:
            load_model(str(path))
        assert info.value.code == "meta_malformed"
