import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freespan.dasio import DasRecord, TrialMetadata
from freespan.preprocess import (
    Scaler,
    apply_scaler,
    band_limit,
    build_feature_matrix,
    fit_scaler,
    frame_geometry,
    select_segment,
    stft_frames,
    taper,
)
from oracles import naive_dft_magnitudes


def meta(tid="t", L=6.0, duration=1.0):
    return TrialMetadata(tid, "S1", L, 0.15, 1.25, 1, duration)


def test_segment_of_12m_at_08m_spacing_has_15_channels():
    rec = DasRecord(np.zeros((4, 40), dtype=np.float32), fs=1.0, channel_spacing=0.8)
    seg = select_segment(rec, 8.0, 12.0)
    assert seg.n_channels == 15
    assert seg.first_channel_position == pytest.approx(8.0)
    np.testing.assert_array_equal(seg.samples, rec.samples[:, 10:25])


def test_empty_segment_rejected():
    rec = DasRecord(np.zeros((4, 10), dtype=np.float32))
    with pytest.raises(ValueError, match="segment outside record"):
        select_segment(rec, 2.0, 0.0)
    with pytest.raises(ValueError, match="segment outside record"):
        select_segment(rec, 100.0, 5.0)


def test_full_extent_selection_is_identity():
    rec = DasRecord(np.ones((4, 10), dtype=np.float32), channel_spacing=0.8)
    assert select_segment(rec, 0.0, 8.0) is rec


def test_frame_count_for_two_minute_record():
    assert frame_geometry(240000, 2000.0, 50.0, 5.0) == (100000, 10000, 15)
    rec = DasRecord(np.zeros((2400, 1), dtype=np.float32), fs=20.0)
    assert stft_frames(rec, 50.0, 5.0).n_frames == 15


def test_record_shorter_than_window():
    rec = DasRecord(np.zeros((99, 1), dtype=np.float32), fs=2.0)
    with pytest.raises(ValueError, match="record too short"):
        stft_frames(rec, 50.0, 5.0)


def test_all_zero_record_gives_zero_magnitudes():
    rec = DasRecord(np.zeros((400, 3), dtype=np.float32), fs=4.0)
    spec = stft_frames(rec, 50.0, 5.0)
    assert spec.magnitudes.shape == (11, 101, 3)
    assert not spec.magnitudes.any()


def test_sinusoid_peaks_at_bin_50_and_matches_direct_dft():
    fs, win_s = 2000.0, 50.0
    t = np.arange(int(fs * win_s)) / fs
    x = np.sin(2 * np.pi * 1.0 * t + 0.3)
    rec = DasRecord(x.astype(np.float32)[:, None], fs=fs)
    spec = stft_frames(rec, win_s, win_s, window_fn="rect", max_freq_hz=2.0)
    assert spec.bin_width_hz == pytest.approx(0.02)
    mags = spec.magnitudes[0, :, 0]
    assert int(np.argmax(mags)) == 50
    bins = list(range(40, 61))
    oracle = naive_dft_magnitudes(rec.samples[:, 0].astype(float), bins)
    np.testing.assert_allclose(mags[bins], oracle, rtol=1e-9, atol=1e-9 * oracle.max())


@settings(max_examples=10, deadline=None)
@given(
    n=st.integers(16, 1024),
    seed=st.integers(0, 2**32 - 1),
    taper_name=st.sampled_from(["hann", "rect"]),
)
def test_stft_matches_naive_framed_dft(n, seed, taper_name):
    rng = np.random.default_rng(seed)
    fs = 10.0
    rec = DasRecord(rng.standard_normal((n, 2)).astype(np.float32), fs=fs)
    win = int(rng.integers(4, min(n, 128) + 1))
    hop = int(rng.integers(1, win + 1))
    spec = stft_frames(rec, win / fs, hop / fs, window_fn=taper_name)
    w = taper(taper_name, win)
    for i in range(spec.n_frames):
        for c in range(2):
            seg = rec.samples[i * hop : i * hop + win, c].astype(float) * w
            oracle = naive_dft_magnitudes(seg, range(win // 2 + 1))
            np.testing.assert_allclose(spec.magnitudes[i, :, c], oracle, rtol=1e-9, atol=1e-9 * max(oracle.max(), 1e-300))


def test_parseval_rectangular(rng):
    win = 256
    rec = DasRecord(rng.standard_normal((1024, 3)).astype(np.float32), fs=1.0)
    spec = stft_frames(rec, win, 128, window_fn="rect")
    for i in range(spec.n_frames):
        seg = rec.samples[i * 128 : i * 128 + win].astype(float)
        m2 = spec.magnitudes[i] ** 2
        # one-sided: interior bins stand for two conjugate bins
        total = m2[0] + 2 * m2[1:-1].sum(axis=0) + m2[-1]
        np.testing.assert_allclose(total, win * np.sum(seg**2, axis=0), rtol=1e-6)


def test_shift_by_one_hop_realigns_frames(rng):
    hop = 16
    x = rng.standard_normal((400, 2)).astype(np.float32)
    a = stft_frames(DasRecord(x, fs=1.0), 64, hop)
    b = stft_frames(DasRecord(x[hop:], fs=1.0), 64, hop)
    np.testing.assert_allclose(b.magnitudes[: a.n_frames - 1], a.magnitudes[1:], rtol=1e-9, atol=1e-12)


def test_band_limit_keeps_199_bins_below_4hz():
    rec = DasRecord(np.zeros((6000, 1), dtype=np.float32), fs=120.0)
    spec = stft_frames(rec, 50.0, 50.0)
    limited = band_limit(spec, 4.0)
    assert limited.n_bins == 199
    np.testing.assert_array_equal(limited.bin_indices, np.arange(1, 200))
    # the memory-saving cut in stft_frames agrees with band_limit
    assert band_limit(stft_frames(rec, 50.0, 50.0, max_freq_hz=4.0), 4.0).n_bins == 199


def test_band_limit_beyond_nyquist_only_drops_dc():
    rec = DasRecord(np.zeros((64, 1), dtype=np.float32), fs=8.0)
    spec = stft_frames(rec, 4.0, 4.0)
    limited = band_limit(spec, 1e6)
    np.testing.assert_array_equal(limited.bin_indices, np.arange(1, spec.n_bins))


def test_band_limit_empty():
    rec = DasRecord(np.zeros((6000, 1), dtype=np.float32), fs=120.0)
    with pytest.raises(ValueError, match="empty band"):
        band_limit(stft_frames(rec, 50.0, 50.0), 0.01)


def _spec(n_frames=15, n_channels=15, fs=20.0, seed=0):
    rng = np.random.default_rng(seed)
    n = int(50 * fs + (n_frames - 1) * 5 * fs)
    rec = DasRecord(rng.standard_normal((n, n_channels)).astype(np.float32), fs=fs, channel_spacing=0.8, first_channel_position=8.0)
    return band_limit(stft_frames(rec, 50.0, 5.0, max_freq_hz=4.0), 4.0)


def test_feature_dimension_15_channels_by_199_bins():
    fm = build_feature_matrix([(_spec(n_frames=2), meta())])
    assert fm.X.shape == (2, 2985)
    assert len(set(fm.feature_layout)) == 2985
    assert len(set(fm.column_names)) == 2985


def test_single_frame_single_channel_row_is_the_magnitudes(rng):
    rec = DasRecord(rng.standard_normal((32, 1)).astype(np.float32), fs=1.0)
    spec = stft_frames(rec, 32, 32)
    fm = build_feature_matrix([(spec, meta())])
    np.testing.assert_array_equal(fm.X[0], spec.magnitudes[0, :, 0])


def test_two_trials_concatenate_in_order():
    fm = build_feature_matrix([(_spec(seed=1, n_channels=2), meta("a", 4.0)), (_spec(seed=2, n_channels=2), meta("b", 8.0))])
    assert fm.X.shape[0] == 30
    assert fm.window_ids == [("a", i) for i in range(15)] + [("b", i) for i in range(15)]
    np.testing.assert_array_equal(fm.y, [4.0] * 15 + [8.0] * 15)


def test_layout_is_channel_major_and_stable():
    s = _spec(n_frames=1, n_channels=3)
    fm1 = build_feature_matrix([(s, meta())])
    fm2 = build_feature_matrix([(_spec(n_frames=1, n_channels=3), meta())])
    assert fm1.feature_layout == fm2.feature_layout
    assert fm1.feature_layout[0] == (8.0, pytest.approx(0.02))
    assert fm1.feature_layout[199][0] == pytest.approx(8.8)
    np.testing.assert_array_equal(fm1.X[0, 199:398], s.magnitudes[0, :, 1])


def test_mismatched_layouts_rejected():
    with pytest.raises(ValueError, match="incompatible spectrograms"):
        build_feature_matrix([(_spec(n_channels=2), meta("a")), (_spec(n_channels=3), meta("b"))])


def test_feature_csv_header():
    s = _spec(n_frames=1, n_channels=1)
    text = build_feature_matrix([(s, meta())]).to_csv()
    header = text.splitlines()[0].split(",")
    assert header[0] == "L8_F0.02" and header[-1] == "y"


def test_scaler_on_standardized_data_is_identity(rng):
    X = rng.standard_normal((50, 4))
    X = (X - X.mean(axis=0)) / X.std(axis=0)
    s = fit_scaler(X)
    np.testing.assert_allclose(s.means, 0, atol=1e-12)
    np.testing.assert_allclose(s.stds, 1, atol=1e-12)
    np.testing.assert_allclose(apply_scaler(s, X), X, atol=1e-12)


def test_constant_column_maps_to_zeros():
    X = np.column_stack([np.full(5, 0.1), np.arange(5.0)])
    s = fit_scaler(X)
    assert s.stds[0] == 1e-12
    assert not apply_scaler(s, X)[:, 0].any()


def test_scaler_hand_example():
    s = fit_scaler(np.array([[1.0], [3.0]]))
    assert s.means[0] == 2.0 and s.stds[0] == 1.0
    np.testing.assert_array_equal(apply_scaler(s, np.array([[1.0], [3.0]]))[:, 0], [-1.0, 1.0])


def test_scaler_errors():
    with pytest.raises(ValueError, match="insufficient data"):
        fit_scaler(np.ones((1, 3)))
    with pytest.raises(ValueError, match="dimension mismatch"):
        apply_scaler(Scaler(np.zeros(2), np.ones(2)), np.ones((3, 3)))
    assert Scaler.from_dict(fit_scaler(np.eye(3)).to_dict()).means.tolist() == pytest.approx([1 / 3] * 3)
