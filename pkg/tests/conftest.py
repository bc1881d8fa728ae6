import numpy as np
import pytest

from firngraph.graphs import StaticGraphSample, TemporalGraphSample, build_adjacency
from firngraph.ingest import SegmentRecord


def tiny_temporal_sample(rng, n=4, steps=3, channels=3, targets=5):
    """Random small sample with a valid geographic adjacency."""
    lats = 70.0 + rng.uniform(0.0, 0.01, n)
    lons = -45.0 + rng.uniform(0.0, 0.01, n)
    return TemporalGraphSample(
        segment_id="tiny",
        features=rng.standard_normal((steps, n, channels)),
        adjacency=build_adjacency(lats, lons),
        targets=rng.standard_normal((n, targets)),
    )


def tiny_static_sample(rng, n=4, channels=12, targets=5):
    lats = 70.0 + rng.uniform(0.0, 0.01, n)
    lons = -45.0 + rng.uniform(0.0, 0.01, n)
    return StaticGraphSample(
        segment_id="tiny",
        features=rng.standard_normal((n, channels)),
        adjacency=build_adjacency(lats, lons),
        targets=rng.standard_normal((n, targets)),
    )


def toy_segment(segment_id="seg", n_layers=16, n_cols=8, surface_year=2012, seed=0):
    """Hand-built segment record with strictly increasing integer tops."""
    rng = np.random.default_rng(seed)
    thickness = rng.integers(2, 9, size=(n_layers - 1, n_cols))
    tops = np.zeros((n_layers, n_cols), dtype=np.int32)
    tops[0] = 50
    tops[1:] = 50 + np.cumsum(thickness, axis=0)
    lats = 70.0 + 1e-4 * np.arange(n_cols)
    lons = -45.0 + 1e-4 * np.arange(n_cols)
    return SegmentRecord(
        segment_id=segment_id,
        latitudes=lats,
        longitudes=lons,
        layer_tops=tops,
        surface_year=surface_year,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
