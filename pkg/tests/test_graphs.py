import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tiny_temporal_sample, toy_segment
from firngraph.errors import DegenerateChannel, InsufficientLayers
from firngraph.graphs import (
    EARTH_RADIUS_KM,
    MIN_DISTANCE_KM,
    apply_normalization,
    build_adjacency,
    build_static_sample,
    build_temporal_sample,
    fit_normalization,
    haversine_distance,
    load_graphs,
    pairwise_haversine,
    save_graphs,
    static_view,
)

# analytic haversine anchors, R = 6371 km
QUARTER_CIRCLE_KM = 10007.543  # R * pi / 2
ONE_DEGREE_KM = 111.195  # R * pi / 180


def test_haversine_anchors():
    assert haversine_distance((10.0, 20.0), (10.0, 20.0)) == 0.0
    assert haversine_distance((0.0, 0.0), (0.0, 90.0)) == pytest.approx(
        QUARTER_CIRCLE_KM, abs=1e-3
    )
    assert haversine_distance((0.0, 0.0), (90.0, 0.0)) == pytest.approx(
        QUARTER_CIRCLE_KM, abs=1e-3
    )
    assert haversine_distance((0.0, 0.0), (0.0, 1.0)) == pytest.approx(
        ONE_DEGREE_KM, abs=1e-3
    )
    assert EARTH_RADIUS_KM == 6371.0


def test_haversine_symmetry_and_antipode():
    a, b = (12.3, -45.6), (-33.2, 101.9)
    assert haversine_distance(a, b) == haversine_distance(b, a)
    half = EARTH_RADIUS_KM * np.pi
    assert haversine_distance((0.0, 0.0), (0.0, 180.0)) == pytest.approx(half, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-89.0, 89.0),
    st.floats(-179.0, 179.0),
    st.floats(-89.0, 89.0),
    st.floats(-179.0, 179.0),
)
def test_haversine_metric_properties(lat1, lon1, lat2, lon2):
    d = haversine_distance((lat1, lon1), (lat2, lon2))
    assert 0.0 <= d <= EARTH_RADIUS_KM * np.pi + 1e-9
    assert d == haversine_distance((lat2, lon2), (lat1, lon1))


def test_pairwise_matches_scalar_and_is_bitwise_symmetric(rng):
    lats = rng.uniform(60.0, 80.0, 6)
    lons = rng.uniform(-60.0, -30.0, 6)
    d = pairwise_haversine(lats, lons)
    assert np.array_equal(d, d.T)  # exact, not approx
    for i in range(6):
        for j in range(6):
            assert d[i, j] == pytest.approx(
                haversine_distance((lats[i], lons[i]), (lats[j], lons[j])), abs=1e-9
            )


def test_adjacency_properties(rng):
    lats = 70.0 + rng.uniform(0, 0.05, 8)
    lons = -45.0 + rng.uniform(0, 0.05, 8)
    a = build_adjacency(lats, lons)
    assert np.array_equal(a, a.T)
    assert np.all(np.diag(a) == 0.0)
    off = a[~np.eye(8, dtype=bool)]
    assert np.all(off > 0.0)


def test_adjacency_clamps_tiny_distances():
    lats = np.array([70.0, 70.0])
    lons = np.array([-45.0, -45.0])  # coincident points
    a = build_adjacency(lats, lons)
    assert a[0, 1] == 1.0 / MIN_DISTANCE_KM


def test_adjacency_distance_monotone():
    # three collinear points: the farther pair gets the smaller weight
    lats = np.array([70.0, 70.0, 70.0])
    lons = np.array([-45.0, -44.9, -44.7])
    a = build_adjacency(lats, lons)
    assert a[0, 1] > a[0, 2]
    assert a[1, 2] > a[0, 2]


def test_temporal_sample_layout():
    rec = toy_segment(n_layers=18).to_thickness_record()
    sample = build_temporal_sample(rec)
    assert sample.features.shape == (10, rec.n_columns, 3)
    assert sample.targets.shape == (rec.n_columns, 5)
    # graph 0 is the oldest feature year = thickness row 14; graph 9 row 5
    assert np.array_equal(sample.features[0, :, 2], rec.thickness[14])
    assert np.array_equal(sample.features[9, :, 2], rec.thickness[5])
    # target column 0 the oldest target year = row 4; column 4 row 0
    assert np.array_equal(sample.targets[:, 0], rec.thickness[4])
    assert np.array_equal(sample.targets[:, 4], rec.thickness[0])
    # lat/lon channels repeat identically across graphs
    assert np.array_equal(sample.features[:, :, 0], np.tile(rec.latitudes, (10, 1)))
    # layers deeper than the ten features are dropped: an 18-layer and a
    # 16-layer record with identical shallow rows give identical samples
    shallow = toy_segment(n_layers=16).to_thickness_record()
    shallow.thickness = rec.thickness[:15]
    assert np.array_equal(
        build_temporal_sample(shallow).features, sample.features
    )


def test_temporal_sample_requires_16_layers():
    rec = toy_segment(n_layers=15).to_thickness_record()
    with pytest.raises(InsufficientLayers):
        build_temporal_sample(rec)
    build_temporal_sample(toy_segment(n_layers=16).to_thickness_record())


def test_static_sample_matches_temporal():
    rec = toy_segment(n_layers=16).to_thickness_record()
    temporal = build_temporal_sample(rec)
    static = build_static_sample(rec)
    assert static.features.shape == (rec.n_columns, 12)
    assert np.array_equal(static.features[:, 0], rec.latitudes)
    assert np.array_equal(static.features[:, 2:], temporal.features[:, :, 2].T)
    assert np.array_equal(static.adjacency, temporal.adjacency)
    assert np.array_equal(static.targets, temporal.targets)
    view = static_view(temporal)
    assert np.array_equal(view.features, static.features)


def test_fit_normalization_frozen_example():
    # thickness channel values {1, 2, 3} pooled: mean 2, population std sqrt(2/3)
    sample = tiny_temporal_sample(np.random.default_rng(0), n=3, steps=1)
    sample.features[0, :, 2] = [1.0, 2.0, 3.0]
    stats = fit_normalization([sample])
    assert stats.feature_mean[2] == pytest.approx(2.0)
    assert stats.feature_std[2] == pytest.approx(np.sqrt(2.0 / 3.0))
    normalized = apply_normalization(sample, stats)
    assert normalized.features[0, :, 2] == pytest.approx(
        [-1.224744871391589, 0.0, 1.224744871391589]
    )


def test_fit_normalization_rejects_constant_channel(rng):
    sample = tiny_temporal_sample(rng)
    sample.features[:, :, 1] = 7.0
    with pytest.raises(DegenerateChannel):
        fit_normalization([sample])


def test_weight_minmax_and_clamping(rng):
    train = tiny_temporal_sample(rng)
    stats = fit_normalization([train])
    normalized = apply_normalization(train, stats)
    off = normalized.adjacency[~np.eye(4, dtype=bool)]
    assert off.min() == 0.0 and off.max() == 1.0
    assert np.all(np.diag(normalized.adjacency) == 0.0)
    # a test sample with weights outside the train range clamps into [0, 1]
    test = tiny_temporal_sample(np.random.default_rng(1))
    test.adjacency = test.adjacency * 100.0
    clamped = apply_normalization(test, stats)
    assert clamped.adjacency.max() <= 1.0
    assert clamped.adjacency.min() >= 0.0


def test_degenerate_weight_range_maps_to_one(rng):
    sample = tiny_temporal_sample(rng)
    stats = fit_normalization([sample])
    stats = dataclasses.replace(stats, weight_min=2.0, weight_max=2.0)
    out = apply_normalization(sample, stats)
    off = out.adjacency[~np.eye(4, dtype=bool)]
    assert np.all(off == 1.0)


def test_targets_never_normalized(rng):
    sample = tiny_temporal_sample(rng)
    sample.targets = sample.targets * 40.0 + 100.0
    stats = fit_normalization([sample])
    out = apply_normalization(sample, stats)
    assert np.array_equal(out.targets, sample.targets)


def test_static_normalization_reuses_thickness_stats(rng):
    temporal = tiny_temporal_sample(rng, steps=10)
    stats = fit_normalization([temporal])
    a = static_view(apply_normalization(temporal, stats))
    b = apply_normalization(static_view(temporal), stats)
    assert np.allclose(a.features, b.features, atol=1e-12)


def test_graphs_file_roundtrip(tmp_path, rng):
    samples = [tiny_temporal_sample(rng, n=5, steps=10) for _ in range(3)]
    stats = fit_normalization(samples)
    normalized = [apply_normalization(s, stats) for s in samples]
    path = tmp_path / "graphs.bin"
    save_graphs(normalized, stats, path)
    loaded, loaded_stats = load_graphs(path)
    assert len(loaded) == 3
    assert loaded_stats.weight_min == stats.weight_min
    assert np.allclose(loaded_stats.feature_mean, stats.feature_mean)
    for a, b in zip(normalized, loaded):
        assert a.segment_id == b.segment_id
        # float32 on disk
        assert np.allclose(a.features, b.features, atol=1e-5)
        assert np.allclose(a.adjacency, b.adjacency, atol=1e-6)
        assert np.allclose(a.targets, b.targets, atol=1e-4)
