import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsdm.windows import SampleWindow, make_windows


def test_window_count_and_ordering(small_dataset, small_normalizer):
    h, horizon = 12, 1
    windows = make_windows(small_dataset, small_normalizer, h, horizon)
    m = small_dataset.users[0].num_hours
    assert len(windows) == len(small_dataset) * (m - h - horizon + 1)
    keys = [(w.user_id, w.target_time) for w in windows]
    assert keys == sorted(keys)
    assert {w.user_id for w in windows} == {u.user_id for u in small_dataset}


def test_window_contents_match_slices(small_dataset, small_normalizer):
    h, horizon = 6, 3
    windows = make_windows(small_dataset, small_normalizer, h, horizon)
    u = small_dataset.users[1]
    normalized = small_normalizer.apply(u.traffic.values)
    w = next(w for w in windows if w.user_id == u.user_id and w.target_time == 10)
    np.testing.assert_array_equal(w.history, normalized[4:10])
    np.testing.assert_array_equal(w.target, normalized[10:13])
    np.testing.assert_array_equal(w.poi_at_target, u.poi.counts[10].astype(np.float64))
    np.testing.assert_array_equal(w.tile_at_target, u.tiles.tiles[10])


def test_first_and_last_target_time(small_dataset, small_normalizer):
    h, horizon = 8, 2
    m = small_dataset.users[0].num_hours
    windows = [w for w in make_windows(small_dataset, small_normalizer, h, horizon)
               if w.user_id == small_dataset.users[0].user_id]
    assert windows[0].target_time == h
    assert windows[-1].target_time == m - horizon


def test_rejects_bad_lengths(small_dataset, small_normalizer):
    with pytest.raises(ValueError, match=">= 1"):
        make_windows(small_dataset, small_normalizer, 0, 1)
    with pytest.raises(ValueError, match=">= 1"):
        make_windows(small_dataset, small_normalizer, 12, 0)
    m = small_dataset.users[0].num_hours
    with pytest.raises(ValueError, match="exceeds every user's series length"):
        make_windows(small_dataset, small_normalizer, m, 1)


def test_sample_window_validates_spans():
    with pytest.raises(ValueError, match="at least one hour"):
        SampleWindow(user_id="u", history=np.zeros((0, 10)), target=np.zeros((1, 10)),
                     poi_at_target=np.zeros(17), tile_at_target=np.zeros((8, 8, 3)),
                     target_time=0)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=1, max_value=40), st.integers(min_value=1, max_value=8))
def test_window_count_property(small_dataset, small_normalizer, history_len, horizon):
    windows = make_windows(small_dataset, small_normalizer, history_len, horizon)
    m = small_dataset.users[0].num_hours
    assert len(windows) == len(small_dataset) * (m - history_len - horizon + 1)
