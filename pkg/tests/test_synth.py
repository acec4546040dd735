import numpy as np
import pytest

from smallclip.data import dataset_to_manifest_text
from smallclip.errors import ConfigError
from smallclip.synth import SynthConfig, generate_synthetic


def nearest_centroid_predict(ds):
    """Oracle: classify each clip by the centroid nearest its mean frame feature."""
    centroids = ds.meta["feature_centroids"]
    preds = {}
    for clip in ds.clips:
        mean_feat = clip.features.mean(axis=0)
        dist = np.linalg.norm(centroids - mean_feat, axis=1)
        preds[clip.id] = int(np.argmin(dist))
    return preds


def oracle_accuracy(ds):
    preds = nearest_centroid_predict(ds)
    labeled = ds.labeled()
    return np.mean([preds[c.id] == c.label for c in labeled])


def test_determinism_byte_identical():
    cfg = SynthConfig(train_per_class=3, val_per_class=2, d_feature=6, d_audio=8,
                      frames_min=2, frames_max=5, margin=5.0, noise=0.1)
    a = dataset_to_manifest_text(generate_synthetic(cfg, seed=1))
    b = dataset_to_manifest_text(generate_synthetic(cfg, seed=1))
    assert a == b
    c = dataset_to_manifest_text(generate_synthetic(cfg, seed=2))
    assert a != c


def test_structure_and_invariants():
    cfg = SynthConfig(train_per_class=2, val_per_class=1, test_per_class=1,
                      d_feature=5, d_audio=6, frames_min=1, frames_max=4)
    ds = generate_synthetic(cfg, seed=3)
    assert len(ds.clips) == 7 * 4
    assert ds.dims == (5, 7, 6)
    for clip in ds.clips:
        assert clip.n_frames >= 1
        assert clip.label is not None
        assert np.all(np.isfinite(clip.features))
        np.testing.assert_allclose(clip.scores.sum(axis=1), 1.0, atol=1e-9)
    for split, expect in (("train", 2), ("val", 1), ("test", 1)):
        np.testing.assert_array_equal(ds.distribution(split).counts, [expect] * 7)


def test_margin_zero_centroids_coincide():
    cfg = SynthConfig(train_per_class=2, d_feature=5, margin=0.0, val_per_class=0)
    ds = generate_synthetic(cfg, seed=1)
    np.testing.assert_array_equal(ds.meta["feature_centroids"],
                                  np.zeros_like(ds.meta["feature_centroids"]))


def test_nearest_centroid_oracle_on_separated_data():
    # Margin 10 vs noise 0.1: the oracle must be essentially perfect.
    cfg = SynthConfig(train_per_class=20, val_per_class=10, d_feature=32,
                      d_audio=48, margin=10.0, noise=0.1)
    ds = generate_synthetic(cfg, seed=1)
    assert oracle_accuracy(ds) >= 0.99


def test_centroid_seed_shares_geometry():
    cfg_a = SynthConfig(train_per_class=2, val_per_class=0, d_feature=6)
    cfg_b = SynthConfig(train_per_class=4, val_per_class=0, d_feature=6,
                        centroid_seed=7)
    a = generate_synthetic(cfg_a, seed=7)
    b = generate_synthetic(cfg_b, seed=8)
    np.testing.assert_array_equal(a.meta["feature_centroids"],
                                  b.meta["feature_centroids"])
    assert not np.array_equal(a.clips[0].features, b.clips[0].features)


def test_config_errors():
    with pytest.raises(ConfigError):
        generate_synthetic(SynthConfig(n_classes=1), seed=0)
    with pytest.raises(ConfigError):
        generate_synthetic(SynthConfig(train_per_class=-1), seed=0)
    with pytest.raises(ConfigError):
        generate_synthetic(SynthConfig(d_feature=0), seed=0)
    with pytest.raises(ConfigError):
        generate_synthetic(SynthConfig(frames_min=5, frames_max=2), seed=0)
