import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from erpspeller.core import config
from erpspeller.core.errors import ValidationError
from erpspeller.core.paradigm import (DisplayGeometry, ParadigmManager, block_span, build_layout,
                                      calibrated_geometry, flash_onset, layout_to_dict, load_labels,
                                      schedule_block, schedule_trial, visual_angle)


class TestParadigmManager:
    def test_discovers_both_displays(self):
        manager = ParadigmManager()
        manager.load_paradigms()
        assert manager.get_paradigm_ids() == ["LS_P", "MS_P"]

    def test_unknown_paradigm_is_rejected(self):
        with pytest.raises(ValidationError, match="unknown paradigm"):
            ParadigmManager().get_paradigm("XX_P")


def test_labels_are_unique():
    labels = load_labels()
    assert len(labels) == 42
    assert labels[0] == "A"
    assert len(set(labels)) == 42


class TestVisualAngle:
    def test_centre_is_foveal(self):
        assert visual_angle((0.0, 0.0), 80.0) == 0.0

    def test_matrix_speller_maximum(self):
        assert visual_angle((13.50, 0.0), 80.0) == pytest.approx(9.58, abs=0.01)

    def test_forty_five_degrees(self):
        assert visual_angle((0.0, 80.0), 80.0) == pytest.approx(45.0)

    def test_non_positive_distance(self):
        with pytest.raises(ValidationError):
            visual_angle((1.0, 1.0), 0.0)

    @given(st.floats(0, 100), st.floats(0, 100))
    def test_monotone_in_radius(self, r1, r2):
        lo, hi = sorted((r1, r2))
        assert visual_angle((lo, 0.0)) <= visual_angle((0.0, hi))


class TestLayout:
    def test_matrix_grid(self):
        layout = build_layout("MS_P")
        assert len(layout.items) == 42
        assert {item.grid_row for item in layout.items} == set(range(6))
        assert {item.grid_col for item in layout.items} == set(range(7))
        assert layout.feedback_region == "LEFT_SIDE"

    def test_matrix_centre_item_sits_half_a_pitch_off(self):
        layout = build_layout("MS_P")
        centre = next(item for item in layout.items if item.grid_row == 2 and item.grid_col == 3)
        assert centre.position_cm[0] == pytest.approx(0.0)
        assert centre.position_cm[1] == pytest.approx(layout.geometry.cell_pitch_y_cm / 2)

    @pytest.mark.parametrize("paradigm_id", ["MS_P", "LS_P"])
    def test_calibrated_angle_range(self, paradigm_id):
        lo, hi = build_layout(paradigm_id).angle_range()
        expected_lo, expected_hi = config.ANGLE_RANGE_DEG[paradigm_id]
        assert lo == pytest.approx(expected_lo, abs=0.05)
        assert hi == pytest.approx(expected_hi, abs=0.05)

    @pytest.mark.parametrize("paradigm_id, pitch_x, pitch_y", [
        ("MS_P", 3.749, 2.988),
        ("LS_P", 3.286, 4.132),
    ])
    def test_calibrated_pitches(self, paradigm_id, pitch_x, pitch_y):
        geometry = calibrated_geometry(paradigm_id)
        assert geometry.cell_pitch_x_cm == pytest.approx(pitch_x, abs=0.01)
        assert geometry.cell_pitch_y_cm == pytest.approx(pitch_y, abs=0.01)

    def test_large_angle_speller_leaves_feedback_band_empty(self):
        layout = build_layout("LS_P")
        assert len(layout.items) == 42
        assert not {item.grid_row for item in layout.items} & {3, 4}
        assert layout.feedback_region == "CENTER"
        assert min(layout.visual_angles) > min(build_layout("MS_P").visual_angles)

    def test_angles_follow_positions(self):
        layout = build_layout("LS_P")
        for item in layout.items:
            assert item.visual_angle_deg == pytest.approx(visual_angle(item.position_cm, 80.0))

    def test_deterministic(self):
        assert build_layout("MS_P") == build_layout("MS_P")

    @pytest.mark.parametrize("field", ["width_cm", "viewing_distance_cm", "cell_pitch_x_cm"])
    def test_invalid_geometry(self, field):
        with pytest.raises(ValidationError, match=field):
            DisplayGeometry(**{field: -1.0})

    def test_geometry_round_trip(self):
        geometry = calibrated_geometry("MS_P")
        assert DisplayGeometry.from_dict(geometry.to_dict()) == geometry

    def test_export(self, flash_code):
        document = layout_to_dict(build_layout("MS_P"), flash_code)
        assert document["n_groups"] == 12
        assert len(document["items"]) == 42
        assert document["items"][0]["groups"] == [0, 1]


class TestFlashCode:
    def test_balanced_groups(self, flash_code):
        assert flash_code.n_items == 42
        assert [len(m) for m in flash_code.group_members] == [7] * 12

    def test_first_item(self, flash_code):
        assert flash_code.groups_of(0) == (0, 1)

    def test_pairs_are_distinct(self, flash_code):
        assert len(set(flash_code.item_to_pair)) == 42
        assert all(a != b for a, b in flash_code.item_to_pair)

    def test_items_share_at_most_one_group(self, flash_code):
        for i, j in itertools.combinations(range(42), 2):
            assert len(set(flash_code.groups_of(i)) & set(flash_code.groups_of(j))) <= 1

    def test_members_match_pairs(self, flash_code):
        for item in range(42):
            for group in range(12):
                assert (item in flash_code.group_members[group]) == (group in flash_code.groups_of(item))

    def test_membership_matrix(self, flash_code):
        assert flash_code.membership.shape == (42, 12)
        np.testing.assert_array_equal(flash_code.membership.sum(axis=1), 2)
        assert not flash_code.membership.flags.writeable

    @given(st.integers(0, 41))
    def test_item_for_pair_inverts(self, flash_code, item):
        a, b = flash_code.groups_of(item)
        assert flash_code.item_for_pair(b, a) == item


class TestScheduling:
    def test_trial_is_a_permutation(self, flash_code):
        assert sorted(schedule_trial(flash_code, 3)) == list(range(12))

    def test_trial_is_deterministic_per_seed(self, flash_code):
        np.testing.assert_array_equal(schedule_trial(flash_code, 42), schedule_trial(flash_code, 42))

    def test_first_slot_is_uniform(self, flash_code):
        counts = np.zeros(12)
        for seed in range(10_000):
            counts[schedule_trial(flash_code, seed)[0]] += 1
        np.testing.assert_allclose(counts / 10_000, 1 / 12, atol=0.01)

    def test_onsets(self):
        assert flash_onset(0) == 0
        assert flash_onset(1) == 51
        assert flash_onset(2) == 102
        assert flash_onset(5) == 256
        assert block_span(16) == 9830
        gaps = np.diff([flash_onset(k) for k in range(192)])
        assert set(gaps) <= {51, 52}

    def test_block_events(self, flash_code):
        events = schedule_block(flash_code, 17, 3, np.random.default_rng(0), block_index=4, start_sample=1000)
        assert len(events) == 36
        assert events[0].onset_sample == 1000
        for trial in range(3):
            trial_events = [e for e in events if e.trial_index == trial]
            assert sorted(e.group_id for e in trial_events) == list(range(12))
            assert sum(e.is_target for e in trial_events) == 2
        assert all(e.block_index == 4 for e in events)
        assert np.all(np.diff([e.onset_sample for e in events]) > 0)
        # trial k occupies its own 2.4 s span
        assert max(e.onset_sample for e in events if e.trial_index == 0) < events[12].onset_sample

    def test_schedule_capacity(self, schedule_for):
        schedule = schedule_for([0, 5], n_trials=2, cue_s=4.0, tail_s=1.0)
        cue = 4 * 256
        assert schedule.events[0].onset_sample == cue
        assert schedule.block_events(1)[0].onset_sample == 2 * cue + block_span(2)
        assert schedule.n_samples == 2 * (cue + block_span(2)) + 256
        assert schedule.block_targets == (0, 5)

    def test_schedule_rejects_unknown_target(self, schedule_for):
        with pytest.raises(ValidationError):
            schedule_for([42])
