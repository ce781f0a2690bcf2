import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from wingbeat import features, species
from wingbeat.dataset import AudioClip
from wingbeat.errors import ClipTooShort, ConfigError, FilterbankError

CFG8 = features.feature_config(8)
AEG = species.label("Aedes_aegypti")


def clip(x, rate=8000, sid="c"):
    return AudioClip(np.asarray(x, dtype=np.float64), rate, AEG, sid)


def tone(freq, n, rate=8000):
    return np.sin(2 * np.pi * freq * np.arange(n) / rate)


def test_grid():
    assert features.feature_config(8).input_shape == (60, 40, 1)
    assert features.feature_config(10).window_size == 512
    assert features.feature_config(11).window_size == 2048
    assert {features.feature_config(i).window_size for i in range(1, 10)} == {1024}
    with pytest.raises(ConfigError):
        features.feature_config(12)


def test_one_khz_lands_in_bin_128():
    p = features.stft_power(clip(tone(1000, 8000)), CFG8)
    assert p.shape == (513, features.n_stft_frames(8000, CFG8))
    assert (p.argmax(axis=0) == 128).all()


def test_stft_against_direct_dft(rng):
    x = rng.standard_normal(1024 + 256)
    p = features.stft_power(clip(x), CFG8)
    n = np.arange(1024)
    w = 0.5 - 0.5 * np.cos(2 * np.pi * n / 1024)
    for t in range(2):
        frame = x[t * 256 : t * 256 + 1024] * w
        k = np.arange(513)[:, None]
        ref = np.abs(np.exp(-2j * np.pi * k * n / 1024) @ frame) ** 2
        np.testing.assert_allclose(p[:, t], ref, rtol=1e-9, atol=1e-9)


def test_zero_clip_single_frame():
    p = features.stft_power(clip(np.zeros(1024)), CFG8)
    assert p.shape == (513, 1)
    assert not p.any()


def test_short_clip_and_rate_mismatch():
    with pytest.raises(ClipTooShort):
        features.stft_power(clip(np.zeros(1000)), CFG8)
    with pytest.raises(ConfigError):
        features.stft_power(clip(np.zeros(2048), rate=16000), CFG8)


@given(n=st.integers(1024, 20000), cfg_id=st.sampled_from(features.CONFIG_IDS))
def test_frame_count_formula(n, cfg_id):
    cfg = features.feature_config(cfg_id)
    # count window placements one hop at a time
    count, start = 0, 0
    while start + cfg.window_size <= n:
        count, start = count + 1, start + cfg.hop_length
    assert features.n_stft_frames(n, cfg) == count


def test_filterbank_shape_and_normalisation():
    fb = features.build_mel_filterbank(CFG8)
    assert fb.weights.shape == (60, 513)
    assert (fb.weights >= 0).all()
    np.testing.assert_allclose(fb.weights.sum(axis=1) * 8000 / 1024, 1.0)


@pytest.mark.parametrize("cfg_id", features.CONFIG_IDS)
def test_filterbank_covers_between_centres(cfg_id):
    cfg = features.feature_config(cfg_id)
    fb = features.build_mel_filterbank(cfg)
    freqs = np.arange(cfg.n_bins) * cfg.sample_rate / cfg.window_size
    inside = (freqs > fb.band_centers_hz[0]) & (freqs < fb.band_centers_hz[-1])
    assert (fb.weights[:, inside].sum(axis=0) > 0).all()


def test_two_band_centres_against_scalar_mel():
    import math

    cfg = features.FeatureConfig(n_bands=2, window_size=512, hop_length=256)
    fb = features.build_mel_filterbank(cfg)
    top = 2595 * math.log10(1 + 4000 / 700)
    expect = [700 * (10 ** (top * k / 3 / 2595) - 1) for k in (1, 2)]
    np.testing.assert_allclose(fb.band_centers_hz, expect, rtol=1e-12)


def test_filterbank_too_many_bands():
    with pytest.raises(FilterbankError):
        features.build_mel_filterbank(features.FeatureConfig(n_bands=300, window_size=512, hop_length=256))
    # fine mel spacing at low frequency leaves bands with no FFT bin
    with pytest.raises(FilterbankError, match="fall between"):
        features.build_mel_filterbank(features.FeatureConfig(n_bands=200, window_size=512, hop_length=256))


@pytest.mark.parametrize("db,unit", [(-80.0, 0.0), (0.0, 1.0), (-40.0, 0.5)])
def test_db_endpoints(db, unit):
    assert features.db_to_unit(db) == unit


def test_mel_peak_near_one_khz():
    fb = features.build_mel_filterbank(CFG8)
    spec = features.mel_db_normalize(features.stft_power(clip(tone(1000, 8000)), CFG8), fb)
    band = spec.argmax(axis=0)
    spacing = np.diff(fb.band_centers_hz)
    for b in band:
        assert abs(fb.band_centers_hz[b] - 1000) <= spacing[min(b, len(spacing) - 1)]


def test_silence_maps_to_zero():
    fb = features.build_mel_filterbank(CFG8)
    assert not features.mel_db_normalize(np.zeros((513, 3)), fb).any()


@settings(max_examples=50, deadline=None)
@given(
    power=hnp.arrays(np.float64, (513, 4), elements=st.floats(0, 1e6, allow_subnormal=False)),
)
def test_normalised_values_in_unit_interval_and_monotone(power):
    fb = features.build_mel_filterbank(CFG8)
    out = features.mel_db_normalize(power, fb)
    assert out.min() >= 0 and out.max() <= 1
    mel = (fb.weights @ power).ravel()
    o = out.ravel()
    order = np.argsort(mel, kind="stable")
    pos = mel[order] > 0
    assert (np.diff(o[order][pos]) >= -1e-12).all()


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-6, 1.0))
def test_patches_bounded_for_noise(seed, scale):
    x = scale * np.random.default_rng(seed).standard_normal(1024 + 45 * 256)
    for p in features.extract_features([clip(x)], CFG8):
        assert p.values.dtype == np.float32
        assert 0 <= p.values.min() and p.values.max() <= 1


@pytest.mark.parametrize("T,starts", [(79, [0, 20]), (40, [0]), (100, [0, 20, 40, 60]), (39, [])])
def test_patch_starts(T, starts):
    assert features.patch_starts(T, CFG8) == starts
    patches = features.patchify(np.zeros((60, T)), CFG8, AEG, "s")
    assert [p.patch_index for p in patches] == list(range(len(starts)))


def test_exact_length_gives_one_patch():
    patches = features.extract_features([clip(tone(500, 1024 + 39 * 256))], CFG8)
    assert len(patches) == 1
    assert patches[0].values.shape == (60, 40)


def test_extract_empty_and_purity(rng):
    assert features.extract_features([], CFG8) == []
    x = rng.standard_normal(16000)
    a = features.extract_features([clip(x, sid="a")], CFG8)
    b = features.extract_features([clip(x, sid="b")], CFG8)
    assert len(a) == len(b) > 0
    for pa, pb in zip(a, b):
        np.testing.assert_array_equal(pa.values, pb.values)
        assert (pa.source_id, pb.source_id) == ("a", "b")


def test_short_clip_skipped_with_warning():
    warns = []
    out = features.extract_features([clip(np.zeros(100))], CFG8, warnings=warns)
    assert out == [] and len(warns) == 1


def test_stack_patches(rng):
    patches = features.extract_features([clip(rng.standard_normal(16000))], CFG8)
    x, y = features.stack_patches(patches)
    assert x.shape == (len(patches), 60, 40, 1) and x.dtype == np.float32
    assert (y == AEG.index).all()


def test_patch_cache_round_trip(tmp_path, rng):
    patches = features.extract_features([clip(rng.standard_normal(16000), sid="x.wav")], CFG8)
    path = tmp_path / "p.wbp"
    features.save_patch_cache(path, patches, CFG8, "m.csv")
    back, cfg = features.load_patch_cache(path)
    assert cfg == CFG8
    assert len(back) == len(patches)
    for a, b in zip(patches, back):
        np.testing.assert_array_equal(a.values, b.values)
        assert (a.label, a.source_id, a.patch_index) == (b.label, b.source_id, b.patch_index)


def test_patch_cache_rejects_garbage(tmp_path):
    (tmp_path / "g").write_bytes(b"nope")
    with pytest.raises(ValueError):
        features.load_patch_cache(tmp_path / "g")
