"""Synthetic geolocated layer-thickness corpora and naive oracle baselines.

Each synthetic segment is a 256-column flight line over a Greenland-like
bounding box. Per-column layer thickness decomposes additively into

    base + smooth spatial field + AR(1) temporal component + i.i.d. noise

where the spatial field is a low-frequency sinusoidal mixture over latitude
and longitude shared by the whole corpus, and the temporal component evolves
across the annual layers as u_t = rho * u_{t-1} + sqrt(1 - rho^2) * e_t with
spatially smooth innovations e_t (so the marginal std stays `ar_std` for any
rho, and rho = 1 freezes the field). Thicknesses are rounded to integer
pixels and the segment is resampled from a fresh substream if any layer
comes out nonpositive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import TemporalGraphSample
from .ingest import SegmentRecord, ThicknessRecord

N_COLUMNS = 256
_FIELD_COMPONENTS = 6
_INNOVATION_COMPONENTS = 4
_SURFACE_TOP_ROW = 80
_FIELD_STREAM = 0xF1E7D
_MAX_RESAMPLES = 100


@dataclass
class SynthParams:
    """Controls for the synthetic corpus generator."""

    n_segments: int = 100
    layers: int = 16
    base_thickness: float = 40.0  # px
    spatial_amp: float = 8.0  # px, std of the static spatial field
    spatial_scale: float = 0.5  # degrees, shortest field wavelength ~ half this
    temporal_ar: float = 0.8  # rho
    ar_std: float = 6.0  # px, marginal std of the AR(1) component
    noise_std: float = 2.0  # px
    flight_step: float = 2e-4  # degrees between consecutive columns
    seed: int = 0
    surface_year: int = 2012

    def adjacent_column_bound(self) -> float:
        """Generous bound on |thickness[c+1] - thickness[c]| in pixels.

        Sum of the Lipschitz bounds of the smooth components over one column
        step, a 12-sigma allowance for the two independent noise draws, and
        one pixel of rounding.
        """
        field_slope = (
            self.spatial_amp
            * np.sqrt(2.0 / _FIELD_COMPONENTS)
            * _FIELD_COMPONENTS
            * 2.0
            * np.pi
            / (0.8 * self.spatial_scale)
        )
        innov_slope = (
            self.ar_std
            * np.sqrt(2.0 / _INNOVATION_COMPONENTS)
            * _INNOVATION_COMPONENTS
            * 2.0
            * np.pi
            / (0.5 * self.spatial_scale)
        )
        rho = self.temporal_ar
        if rho >= 1.0:
            ar_gain = 1.0
        else:
            ar_gain = max(1.0, np.sqrt(1.0 - rho**2) / (1.0 - rho))
        smooth = (field_slope + innov_slope * ar_gain) * self.flight_step
        return float(smooth + 12.0 * self.noise_std + 1.0)


def _field_mixture(rng, n_components, scale_range):
    """Random sinusoidal mixture spec: (wave vectors, phases)."""
    angles = rng.uniform(0.0, 2.0 * np.pi, n_components)
    wavelengths = rng.uniform(*scale_range, n_components)
    phases = rng.uniform(0.0, 2.0 * np.pi, n_components)
    kvecs = (
        2.0
        * np.pi
        / wavelengths[:, None]
        * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    )
    return kvecs, phases


def _spatial_field(params: SynthParams, lats, lons) -> np.ndarray:
    """Corpus-global smooth field, std ~ spatial_amp, evaluated per column."""
    rng = np.random.default_rng((params.seed, _FIELD_STREAM))
    kvecs, phases = _field_mixture(
        rng,
        _FIELD_COMPONENTS,
        (0.8 * params.spatial_scale, 2.5 * params.spatial_scale),
    )
    amp = params.spatial_amp * np.sqrt(2.0 / _FIELD_COMPONENTS)
    phase = kvecs[:, 0, None] * lats[None, :] + kvecs[:, 1, None] * lons[None, :]
    return amp * np.sin(phase + phases[:, None]).sum(axis=0)


def _smooth_innovation(rng, params: SynthParams, along_track) -> np.ndarray:
    """One year's spatially smooth innovation field, std ~ ar_std."""
    kvecs, phases = _field_mixture(
        rng,
        _INNOVATION_COMPONENTS,
        (0.5 * params.spatial_scale, 2.0 * params.spatial_scale),
    )
    amp = params.ar_std * np.sqrt(2.0 / _INNOVATION_COMPONENTS)
    wavenumber = np.linalg.norm(kvecs, axis=1)
    phase = wavenumber[:, None] * along_track[None, :]
    return amp * np.sin(phase + phases[:, None]).sum(axis=0)


def generate_segment_record(params: SynthParams, segment_index: int) -> SegmentRecord:
    """Deterministic synthetic segment with integer layer tops."""
    n_thick = params.layers - 1
    for attempt in range(_MAX_RESAMPLES):
        rng = np.random.default_rng((params.seed, segment_index, attempt))
        lat0 = rng.uniform(66.0, 74.0)
        lon0 = rng.uniform(-50.0, -36.0)
        heading = rng.uniform(0.0, 2.0 * np.pi)
        steps = np.arange(N_COLUMNS, dtype=np.float64) * params.flight_step
        lats = lat0 + steps * np.cos(heading)
        lons = lon0 + steps * np.sin(heading)
        along_track = steps

        field = _spatial_field(params, lats, lons)
        rho = min(params.temporal_ar, 1.0)
        innov_scale = np.sqrt(max(0.0, 1.0 - rho * rho))
        # chain runs oldest (deepest thickness row) to newest (row 0)
        u = _smooth_innovation(rng, params, along_track)
        chain = [u]
        for _ in range(1, n_thick):
            eps = _smooth_innovation(rng, params, along_track)
            u = rho * u + innov_scale * eps
            chain.append(u)
        thickness = np.empty((n_thick, N_COLUMNS))
        for row in range(n_thick):
            thickness[row] = (
                params.base_thickness
                + field
                + chain[n_thick - 1 - row]
                + params.noise_std * rng.standard_normal(N_COLUMNS)
            )
        thickness_px = np.rint(thickness).astype(np.int64)
        if np.all(thickness_px > 0):
            tops = np.empty((params.layers, N_COLUMNS), dtype=np.int32)
            tops[0] = _SURFACE_TOP_ROW
            np.cumsum(thickness_px, axis=0, out=thickness_px)
            tops[1:] = _SURFACE_TOP_ROW + thickness_px
            return SegmentRecord(
                segment_id=f"synth-{segment_index:05d}",
                latitudes=lats,
                longitudes=lons,
                layer_tops=tops,
                surface_year=params.surface_year,
            )
    raise RuntimeError(
        f"segment {segment_index}: no positive-thickness draw in "
        f"{_MAX_RESAMPLES} attempts; raise base_thickness"
    )


def generate_segment(params: SynthParams, segment_index: int) -> ThicknessRecord:
    return generate_segment_record(params, segment_index).to_thickness_record()


def generate_corpus(params: SynthParams) -> list[SegmentRecord]:
    return [generate_segment_record(params, i) for i in range(params.n_segments)]


def persistence_baseline(sample: TemporalGraphSample) -> np.ndarray:
    """Predict every target year as the node's mean feature-layer thickness.

    Must be fed an unnormalized sample (raw pixel thickness channel).
    """
    mean_thickness = sample.features[:, :, 2].mean(axis=0)
    return np.tile(mean_thickness[:, None], (1, sample.targets.shape[1]))
