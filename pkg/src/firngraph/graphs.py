"""Conversion of thickness records into normalized temporal graph samples.

Each usable record becomes ten 256-node graphs (one per feature year, oldest
first) sharing a dense adjacency whose edge weights are the reciprocal of the
great-circle distance between column coordinates. Node features are z-scored
with statistics pooled over the training split; edge weights are min-max
normalized into [0, 1]. Targets stay in raw pixels.

Graphs file format (little-endian):

    magic         4 bytes  b"FGG1"
    count         uint32
    n_steps       uint16
    n_nodes       uint16
    n_features    uint16   per-node feature channels (3)
    n_targets     uint16   target years (5)
    fitted_len    uint16 + UTF-8 bytes, NormalizationStats.fitted_on
    feature_mean  n_features float64
    feature_std   n_features float64
    weight_min    float64
    weight_max    float64
    then per sample:
      id_len      uint16 + UTF-8 bytes
      features    n_steps * n_nodes * n_features float32, C order
      adjacency   n_nodes * n_nodes float32, row-major
      targets     n_nodes * n_targets float32
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateChannel, InsufficientLayers
from .ingest import ThicknessRecord, _atomic_write_bytes

EARTH_RADIUS_KM = 6371.0  # mean Earth radius
MIN_DISTANCE_KM = 1e-3
GRAPHS_MAGIC = b"FGG1"

N_FEATURE_YEARS = 10
N_TARGET_YEARS = 5


@dataclass
class TemporalGraphSample:
    """Ten per-year node-feature matrices, one shared adjacency, 5-year targets.

    features[t] holds (lat, lon, thickness of the t-th-oldest feature year);
    targets columns are the five target years, oldest first.
    """

    segment_id: str
    features: np.ndarray  # [10, N, 3] float64
    adjacency: np.ndarray  # [N, N] float64, symmetric, zero diagonal
    targets: np.ndarray  # [N, 5] float64 pixels


@dataclass
class StaticGraphSample:
    """Single-graph variant: (lat, lon, ten thickness years) per node."""

    segment_id: str
    features: np.ndarray  # [N, 12] float64
    adjacency: np.ndarray
    targets: np.ndarray


@dataclass
class NormalizationStats:
    """Z-score feature statistics and min-max edge-weight bounds."""

    feature_mean: np.ndarray  # [3]
    feature_std: np.ndarray  # [3]
    weight_min: float
    weight_max: float
    fitted_on: str = ""


def haversine_distance(p: tuple[float, float], q: tuple[float, float]) -> float:
    """Great-circle distance in kilometers between (lat, lon) points in degrees."""
    lat_p, lon_p = math_radians(p[0]), math_radians(p[1])
    lat_q, lon_q = math_radians(q[0]), math_radians(q[1])
    h = _hav(abs(lat_q - lat_p)) + np.cos(lat_p) * np.cos(lat_q) * _hav(
        abs(lon_q - lon_p)
    )
    return float(2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0))))


def math_radians(deg):
    return np.deg2rad(np.asarray(deg, dtype=np.float64))


def _hav(theta):
    return np.sin(theta / 2.0) ** 2


def pairwise_haversine(lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    """Dense [N, N] great-circle distance matrix, bitwise symmetric.

    Built from |Δlat|, |Δlon| and the commutative cos product so that entries
    (i, j) and (j, i) evaluate identically in floating point.
    """
    phi = math_radians(lats)
    lam = math_radians(lons)
    dphi = np.abs(phi[:, None] - phi[None, :])
    dlam = np.abs(lam[:, None] - lam[None, :])
    cos_phi = np.cos(phi)
    h = _hav(dphi) + (cos_phi[:, None] * cos_phi[None, :]) * _hav(dlam)
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def build_adjacency(lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    """Fully connected inverse-distance weights, distance clamped at 1 m."""
    d = pairwise_haversine(lats, lons)
    a = 1.0 / np.maximum(d, MIN_DISTANCE_KM)
    np.fill_diagonal(a, 0.0)
    return a


def build_temporal_sample(record: ThicknessRecord) -> TemporalGraphSample:
    """Convert a usable record into the ten-graph model input.

    Feature graph t carries the (10 - t)-th-deepest of the ten feature layers,
    so the sequence runs oldest to newest; targets are the five shallowest
    non-surface layers in year-ascending column order. Layers deeper than the
    ten features are dropped.
    """
    _require_layers(record)
    lats = np.asarray(record.latitudes, dtype=np.float64)
    lons = np.asarray(record.longitudes, dtype=np.float64)
    n = lats.size
    features = np.empty((N_FEATURE_YEARS, n, 3), dtype=np.float64)
    for t in range(N_FEATURE_YEARS):
        # thickness row 0 is the youngest layer; feature graph 0 the oldest
        row = N_TARGET_YEARS + N_FEATURE_YEARS - 1 - t
        features[t, :, 0] = lats
        features[t, :, 1] = lons
        features[t, :, 2] = record.thickness[row]
    targets = record.thickness[N_TARGET_YEARS - 1 :: -1].T.astype(np.float64)
    return TemporalGraphSample(
        segment_id=record.segment_id,
        features=features,
        adjacency=build_adjacency(lats, lons),
        targets=targets,
    )


def build_static_sample(record: ThicknessRecord) -> StaticGraphSample:
    """Single-graph variant with 12 features: lat, lon, years oldest to newest."""
    _require_layers(record)
    temporal = build_temporal_sample(record)
    n = temporal.features.shape[1]
    features = np.empty((n, 2 + N_FEATURE_YEARS), dtype=np.float64)
    features[:, 0] = temporal.features[0, :, 0]
    features[:, 1] = temporal.features[0, :, 1]
    features[:, 2:] = temporal.features[:, :, 2].T
    return StaticGraphSample(
        segment_id=record.segment_id,
        features=features,
        adjacency=temporal.adjacency,
        targets=temporal.targets,
    )


def static_view(sample: TemporalGraphSample) -> StaticGraphSample:
    """Reshape a temporal sample (raw or normalized) into its static variant."""
    n = sample.features.shape[1]
    features = np.empty((n, 2 + N_FEATURE_YEARS), dtype=np.float64)
    features[:, :2] = sample.features[0, :, :2]
    features[:, 2:] = sample.features[:, :, 2].T
    return StaticGraphSample(
        segment_id=sample.segment_id,
        features=features,
        adjacency=sample.adjacency,
        targets=sample.targets,
    )


def _require_layers(record: ThicknessRecord):
    needed = 1 + N_TARGET_YEARS + N_FEATURE_YEARS
    if record.n_layers < needed:
        raise InsufficientLayers(
            f"{record.segment_id}: {record.n_layers} layers, need {needed}"
        )


def fit_normalization(
    train_samples: list[TemporalGraphSample], fitted_on: str = ""
) -> NormalizationStats:
    """Pool per-channel feature stats and edge-weight bounds over a split.

    Mean and population standard deviation are pooled over all nodes of all
    ten graphs of every sample; weight bounds over all off-diagonal adjacency
    entries.
    """
    if not train_samples:
        raise ValueError("cannot fit normalization on an empty sample set")
    stacked = np.concatenate([s.features.reshape(-1, 3) for s in train_samples])
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)  # population
    if np.any(std == 0.0):
        ch = int(np.flatnonzero(std == 0.0)[0])
        raise DegenerateChannel(f"feature channel {ch} has zero variance")
    w_min = np.inf
    w_max = -np.inf
    for s in train_samples:
        off = _offdiag(s.adjacency)
        w_min = min(w_min, float(off.min()))
        w_max = max(w_max, float(off.max()))
    return NormalizationStats(
        feature_mean=mean,
        feature_std=std,
        weight_min=w_min,
        weight_max=w_max,
        fitted_on=fitted_on,
    )


def apply_normalization(sample, stats: NormalizationStats):
    """Z-score features, min-max edge weights into [0, 1]; targets untouched.

    Works for both temporal and static samples; static thickness columns all
    share the temporal thickness channel's statistics. Out-of-range test-time
    weights are clamped; a degenerate weight range maps every edge to 1.
    """
    if isinstance(sample, StaticGraphSample):
        mean = np.concatenate(
            [stats.feature_mean[:2], np.full(N_FEATURE_YEARS, stats.feature_mean[2])]
        )
        std = np.concatenate(
            [stats.feature_std[:2], np.full(N_FEATURE_YEARS, stats.feature_std[2])]
        )
    else:
        mean, std = stats.feature_mean, stats.feature_std
    features = (sample.features - mean) / std
    span = stats.weight_max - stats.weight_min
    if span == 0.0:
        adj = np.ones_like(sample.adjacency)
    else:
        adj = np.clip((sample.adjacency - stats.weight_min) / span, 0.0, 1.0)
    np.fill_diagonal(adj, 0.0)
    return replace(sample, features=features, adjacency=adj)


def _offdiag(a: np.ndarray) -> np.ndarray:
    mask = ~np.eye(a.shape[0], dtype=bool)
    return a[mask]


# ---------------------------------------------------------------------------
# graphs file I/O


def save_graphs(
    samples: list[TemporalGraphSample],
    stats: NormalizationStats,
    path: str | os.PathLike,
):
    if not samples:
        raise ValueError("refusing to write an empty graphs file")
    n_steps, n_nodes, n_feat = samples[0].features.shape
    n_targets = samples[0].targets.shape[1]
    buf = bytearray()
    buf += GRAPHS_MAGIC
    buf += struct.pack("<IHHHH", len(samples), n_steps, n_nodes, n_feat, n_targets)
    fitted = stats.fitted_on.encode("utf-8")
    buf += struct.pack("<H", len(fitted)) + fitted
    buf += np.asarray(stats.feature_mean, dtype="<f8").tobytes()
    buf += np.asarray(stats.feature_std, dtype="<f8").tobytes()
    buf += struct.pack("<dd", stats.weight_min, stats.weight_max)
    for s in samples:
        ident = s.segment_id.encode("utf-8")
        buf += struct.pack("<H", len(ident)) + ident
        buf += np.ascontiguousarray(s.features, dtype="<f4").tobytes()
        buf += np.ascontiguousarray(s.adjacency, dtype="<f4").tobytes()
        buf += np.ascontiguousarray(s.targets, dtype="<f4").tobytes()
    _atomic_write_bytes(path, bytes(buf))


def load_graphs(
    path: str | os.PathLike,
) -> tuple[list[TemporalGraphSample], NormalizationStats]:
    data = Path(path).read_bytes()
    if data[:4] != GRAPHS_MAGIC:
        raise ValueError(f"{path}: not a firngraph graphs file")
    count, n_steps, n_nodes, n_feat, n_targets = struct.unpack_from("<IHHHH", data, 4)
    off = 4 + 12
    (fitted_len,) = struct.unpack_from("<H", data, off)
    off += 2
    fitted = data[off : off + fitted_len].decode("utf-8")
    off += fitted_len
    mean = np.frombuffer(data, dtype="<f8", count=n_feat, offset=off).copy()
    off += 8 * n_feat
    std = np.frombuffer(data, dtype="<f8", count=n_feat, offset=off).copy()
    off += 8 * n_feat
    w_min, w_max = struct.unpack_from("<dd", data, off)
    off += 16
    stats = NormalizationStats(mean, std, w_min, w_max, fitted_on=fitted)
    samples = []
    for _ in range(count):
        (id_len,) = struct.unpack_from("<H", data, off)
        off += 2
        ident = data[off : off + id_len].decode("utf-8")
        off += id_len

        def take(shape):
            nonlocal off
            n = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<f4", count=n, offset=off)
            off += 4 * n
            return arr.reshape(shape).astype(np.float64)

        features = take((n_steps, n_nodes, n_feat))
        adjacency = take((n_nodes, n_nodes))
        targets = take((n_nodes, n_targets))
        samples.append(TemporalGraphSample(ident, features, adjacency, targets))
    return samples, stats
