"""Ingestion of labeled radar echogram segments into thickness records.

A segment is one radar image: 256 along-track columns, each geolocated, with
the pixel rows of every tracked firn-layer top. Layer tops come either from a
binary label mask (white run tops) or from an already-parsed dataset file.
Thicknesses are consecutive differences of layer tops, in pixels (one pixel is
roughly 4 cm of ice).

Dataset file format (all integers little-endian):

    magic   4 bytes   b"FGD1"
    count   uint32    number of records
    then per record:
      id_len        uint16
      segment_id    id_len bytes, UTF-8
      n_layers      uint16   L, number of layer-top rows
      n_columns     uint16   C, normally 256
      surface_year  int16    calendar year of the surface layer
      latitudes     C float64, degrees
      longitudes    C float64, degrees
      layer_tops    L*C int32, row-major, row 0 = surface layer top

Row 0 of layer_tops is the flat surface sheet; thickness row t (bounded by
tops rows t and t+1) is the annual layer of year surface_year - 1 - t, so a
2012 flight puts 2011 in row 0 and older years in deeper rows.
"""

from __future__ import annotations

import logging
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ColumnCountMismatch, EmptyColumn, NonMonotonicTops

log = logging.getLogger(__name__)

DATASET_MAGIC = b"FGD1"
DEFAULT_MIN_LAYERS = 16
DEFAULT_SURFACE_YEAR = 2012


@dataclass
class SegmentRecord:
    """One radar image's geolocated per-column layer-top rows."""

    segment_id: str
    latitudes: np.ndarray  # [C] degrees
    longitudes: np.ndarray  # [C] degrees
    layer_tops: np.ndarray  # [L, C] int pixel rows, row 0 = surface
    surface_year: int = DEFAULT_SURFACE_YEAR

    def validate(self):
        lats = np.asarray(self.latitudes, dtype=np.float64)
        lons = np.asarray(self.longitudes, dtype=np.float64)
        tops = np.asarray(self.layer_tops)
        if tops.ndim != 2:
            raise ValueError(f"layer_tops must be 2-D, got shape {tops.shape}")
        if lats.shape != lons.shape or lats.ndim != 1 or lats.size != tops.shape[1]:
            raise ValueError(
                f"coordinate arrays {lats.shape}/{lons.shape} do not match "
                f"{tops.shape[1]} columns"
            )
        if np.any(lats < -90.0) or np.any(lats > 90.0):
            raise ValueError(f"{self.segment_id}: latitude outside [-90, 90]")
        if np.any(lons < -180.0) or np.any(lons > 180.0):
            raise ValueError(f"{self.segment_id}: longitude outside [-180, 180]")
        if np.any(np.diff(tops, axis=0) <= 0):
            raise NonMonotonicTops(
                f"{self.segment_id}: layer tops not strictly increasing"
            )

    @property
    def n_layers(self) -> int:
        return self.layer_tops.shape[0]

    def to_thickness_record(self) -> "ThicknessRecord":
        thickness = compute_thicknesses(self.layer_tops)
        years = self.surface_year - 1 - np.arange(thickness.shape[0], dtype=np.int64)
        return ThicknessRecord(
            segment_id=self.segment_id,
            latitudes=np.asarray(self.latitudes, dtype=np.float64),
            longitudes=np.asarray(self.longitudes, dtype=np.float64),
            thickness=thickness,
            year_labels=years,
        )


@dataclass
class ThicknessRecord:
    """Per-column annual layer thicknesses derived from one segment.

    Row t of `thickness` is the layer bounded above by layer-top row t;
    `year_labels[t]` is its calendar year, youngest first (row 0 sits just
    below the surface sheet).
    """

    segment_id: str
    latitudes: np.ndarray
    longitudes: np.ndarray
    thickness: np.ndarray  # [L-1, C] pixels, all > 0
    year_labels: np.ndarray  # [L-1] calendar years, descending

    @property
    def n_layers(self) -> int:
        """Number of layer tops (thickness rows + 1)."""
        return self.thickness.shape[0] + 1

    @property
    def n_columns(self) -> int:
        return self.thickness.shape[1]


@dataclass
class SplitPlan:
    """Train/test membership for one trial of the 4:1 split protocol."""

    trial_index: int
    train_ids: list[str]
    test_ids: list[str]
    seed: int


def extract_layer_tops(mask: np.ndarray) -> np.ndarray:
    """Return the [L, C] row indices of the first white pixel of every run.

    Every column must carry the same number of white runs; a run wider than
    one pixel contributes its topmost row.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    white = mask != 0
    if not white.any(axis=0).all():
        bad = int(np.flatnonzero(~white.any(axis=0))[0])
        raise EmptyColumn(f"column {bad} contains no white pixel")
    # A run top is a white pixel with a black (or no) pixel above it.
    above = np.zeros_like(white)
    above[1:] = white[:-1]
    run_tops = white & ~above
    counts = run_tops.sum(axis=0)
    if not np.all(counts == counts[0]):
        raise ColumnCountMismatch(
            f"columns disagree on layer count: min {counts.min()}, "
            f"max {counts.max()}"
        )
    n_layers = int(counts[0])
    cols, rows = np.nonzero(run_tops.T)  # grouped by column, rows ascending
    del cols
    return rows.reshape(mask.shape[1], n_layers).T.astype(np.int32)


def compute_thicknesses(layer_tops: np.ndarray) -> np.ndarray:
    """Consecutive differences of layer tops; strictly positive by contract."""
    tops = np.asarray(layer_tops)
    thickness = np.diff(tops.astype(np.int64), axis=0)
    if np.any(thickness <= 0):
        t, c = np.argwhere(thickness <= 0)[0]
        raise NonMonotonicTops(
            f"non-increasing tops at layer {t}->{t + 1}, column {c}"
        )
    return thickness.astype(np.int32)


def filter_usable(
    records: list[ThicknessRecord], min_layers: int = DEFAULT_MIN_LAYERS
) -> list[ThicknessRecord]:
    """Keep records with at least `min_layers` layer tops, order preserved."""
    return [r for r in records if r.n_layers >= min_layers]


def make_splits(
    records: list[ThicknessRecord],
    n_trials: int = 5,
    train_fraction: float = 0.8,
    seed: int = 0,
) -> list[SplitPlan]:
    """Cut `n_trials` independent uniform permutations at floor(frac * N)."""
    ids = [r.segment_id for r in records]
    n = len(ids)
    if n < 2:
        raise ValueError(f"need at least 2 records to split, got {n}")
    n_train = math.floor(train_fraction * n)
    plans = []
    for trial in range(n_trials):
        rng = np.random.default_rng((seed, trial))
        perm = rng.permutation(n)
        train = [ids[i] for i in perm[:n_train]]
        test = [ids[i] for i in perm[n_train:]]
        plans.append(
            SplitPlan(trial_index=trial, train_ids=train, test_ids=test, seed=seed)
        )
    return plans


# ---------------------------------------------------------------------------
# dataset file I/O


def save_dataset(records: list[SegmentRecord], path: str | os.PathLike):
    """Write segment records in the documented binary dataset format."""
    buf = bytearray()
    buf += DATASET_MAGIC
    buf += struct.pack("<I", len(records))
    for rec in records:
        rec.validate()
        ident = rec.segment_id.encode("utf-8")
        tops = np.ascontiguousarray(rec.layer_tops, dtype="<i4")
        n_layers, n_cols = tops.shape
        buf += struct.pack("<H", len(ident))
        buf += ident
        buf += struct.pack("<HHh", n_layers, n_cols, rec.surface_year)
        buf += np.ascontiguousarray(rec.latitudes, dtype="<f8").tobytes()
        buf += np.ascontiguousarray(rec.longitudes, dtype="<f8").tobytes()
        buf += tops.tobytes()
    _atomic_write_bytes(path, bytes(buf))


def load_dataset(path: str | os.PathLike) -> list[SegmentRecord]:
    data = Path(path).read_bytes()
    if data[:4] != DATASET_MAGIC:
        raise ValueError(f"{path}: not a firngraph dataset file")
    (count,) = struct.unpack_from("<I", data, 4)
    off = 8
    records = []
    for _ in range(count):
        (id_len,) = struct.unpack_from("<H", data, off)
        off += 2
        ident = data[off : off + id_len].decode("utf-8")
        off += id_len
        n_layers, n_cols, surface_year = struct.unpack_from("<HHh", data, off)
        off += 6
        lats = np.frombuffer(data, dtype="<f8", count=n_cols, offset=off).copy()
        off += 8 * n_cols
        lons = np.frombuffer(data, dtype="<f8", count=n_cols, offset=off).copy()
        off += 8 * n_cols
        tops = (
            np.frombuffer(data, dtype="<i4", count=n_layers * n_cols, offset=off)
            .reshape(n_layers, n_cols)
            .copy()
        )
        off += 4 * n_layers * n_cols
        records.append(
            SegmentRecord(
                segment_id=ident,
                latitudes=lats,
                longitudes=lons,
                layer_tops=tops,
                surface_year=surface_year,
            )
        )
    return records


def load_thickness_records(path: str | os.PathLike) -> list[ThicknessRecord]:
    return [r.to_thickness_record() for r in load_dataset(path)]


# ---------------------------------------------------------------------------
# mask + geolocation ingestion (CLI source format)


def load_mask(path: str | os.PathLike) -> np.ndarray:
    """Load a binary label mask from a .npy array or an image file."""
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    from PIL import Image

    return np.asarray(Image.open(path).convert("L"))


def load_geolocation(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    """Read a per-segment text table of (lat, lon) rows."""
    table = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if table.shape[1] != 2:
        raise ValueError(f"{path}: expected 2 columns (lat lon), got {table.shape[1]}")
    return table[:, 0], table[:, 1]


def ingest_directories(
    masks_dir: str | os.PathLike,
    geo_dir: str | os.PathLike,
    surface_year: int = DEFAULT_SURFACE_YEAR,
) -> list[SegmentRecord]:
    """Pair mask and geolocation files by stem and parse each segment.

    Segments whose tops violate monotonicity are rejected with a logged
    diagnostic rather than repaired.
    """
    masks_dir, geo_dir = Path(masks_dir), Path(geo_dir)
    records = []
    mask_paths = sorted(
        p for p in masks_dir.iterdir() if p.suffix in (".npy", ".png", ".bmp", ".tif")
    )
    if not mask_paths:
        raise ValueError(f"{masks_dir}: no mask files found")
    for mask_path in mask_paths:
        geo_path = geo_dir / (mask_path.stem + ".txt")
        if not geo_path.exists():
            raise ValueError(f"missing geolocation table {geo_path}")
        lats, lons = load_geolocation(geo_path)
        try:
            tops = extract_layer_tops(load_mask(mask_path))
            rec = SegmentRecord(
                segment_id=mask_path.stem,
                latitudes=lats,
                longitudes=lons,
                layer_tops=tops,
                surface_year=surface_year,
            )
            rec.validate()
        except (ColumnCountMismatch, EmptyColumn, NonMonotonicTops, ValueError) as exc:
            log.warning("rejecting segment %s: %s", mask_path.stem, exc)
            continue
        records.append(rec)
    return records


def _atomic_write_bytes(path: str | os.PathLike, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
