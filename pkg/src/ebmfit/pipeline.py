"""Anomaly-series loading, baseline synchronization, and panel assembly.

Anomaly series from different providers are reported against different
reference periods. A series is moved to a common baseline by subtracting a
constant offset: for GMST-like series the offset is the series' own mean
over 1986-2005 minus the warming of that window relative to the target
(pre-industrial) baseline. Ocean series are re-baselined by explicit,
user-supplied offsets; their residual gap against the pre-industrial
baseline is absorbed by the estimated pair constants.

File formats:

- series file: delimited text with header ``year,value``, one row per year,
  empty value field marking a missing year, UTF-8, '.' decimal separator;
- manifest: JSON document ``{"series": [...]}``, where each entry carries
  ``path``, ``label``, ``kind``, optional ``pair_id`` and ``depth``, and a
  ``sync`` object in exactly one of three modes::

      {"mode": "pre_industrial", "mean_1986_2005": 0.42, "delta_preind": 0.65}
      {"mode": "offset", "offset": -0.23}
      {"mode": "none"}
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .ssm.types import CANONICAL_KIND_ORDER, ObservationPanel, SERIES_KINDS, SeriesMeta


@dataclass
class AnomalySeries:
    """One year-indexed anomaly series."""

    label: str
    kind: str
    years: np.ndarray
    values: np.ndarray
    baseline: str = "unspecified"
    depth_range: tuple[float, float] | None = None
    pair_id: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in SERIES_KINDS:
            raise ValueError(f"unknown series kind {self.kind!r}")
        self.years = np.asarray(self.years, dtype=int).ravel()
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.years.shape != self.values.shape:
            raise ValueError("years and values must have equal length")
        if self.years.size and np.any(np.diff(self.years) <= 0):
            raise ValueError(f"series {self.label!r}: years must be strictly increasing")


@dataclass
class SyncSpec:
    """How to move one series to the common baseline (exactly one mode)."""

    mode: str
    mean_1986_2005: float | None = None
    delta_preind: float | None = None
    offset: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("pre_industrial", "offset", "none"):
            raise ValueError(f"unknown sync mode {self.mode!r}")
        if self.mode == "pre_industrial" and (
            self.mean_1986_2005 is None or self.delta_preind is None
        ):
            raise ValueError("pre_industrial sync needs mean_1986_2005 and delta_preind")
        if self.mode == "offset" and self.offset is None:
            raise ValueError("offset sync needs an explicit offset")

    def resolve_offset(self) -> float | None:
        """The additive offset to subtract, or None for already-synchronized."""
        if self.mode == "none":
            return None
        if self.mode == "offset":
            return float(self.offset)
        return compute_offset(self.mean_1986_2005, self.delta_preind)


@dataclass
class AssembledData:
    """Panel plus the exogenous and derived forcing series."""

    panel: ObservationPanel
    natural_forcing: AnomalySeries
    anthropogenic: AnomalySeries
    offsets: dict[str, float | None] = field(default_factory=dict)


def compute_offset(mean_1986_2005: float, delta_preind: float) -> float:
    """Pre-industrial mean of a series under its own baseline.

    The series' 1986-2005 average minus the warming of 1986-2005 relative to
    the pre-industrial window; subtracting this constant re-expresses the
    series against the pre-industrial baseline.
    """
    return mean_1986_2005 - delta_preind


def synchronize(series: AnomalySeries, offset: float) -> AnomalySeries:
    """Shift a series onto a new baseline by subtracting ``offset``."""
    if not np.isfinite(offset):
        raise ValueError("offset must be finite")
    return replace(
        series,
        values=series.values - offset,
        baseline="synchronized",
    )


def split_forcing(total: AnomalySeries, natural: AnomalySeries) -> AnomalySeries:
    """Anthropogenic forcing: total minus natural on the overlapping years."""
    common, ti, ni = np.intersect1d(total.years, natural.years, return_indices=True)
    if common.size == 0:
        raise ValueError("total and natural forcing have no overlapping years")
    return AnomalySeries(
        label="anthropogenic",
        kind="forcing_anthropogenic",
        years=common,
        values=total.values[ti] - natural.values[ni],
        baseline=total.baseline,
    )


def _align(series: AnomalySeries, sample_years: np.ndarray) -> np.ndarray:
    """Values over ``sample_years``, NaN where the series has no coverage."""
    out = np.full(sample_years.size, np.nan)
    common, si, yi = np.intersect1d(series.years, sample_years, return_indices=True)
    out[yi] = series.values[si]
    return out


def assemble_panel(
    manifest: list[tuple[AnomalySeries, SyncSpec]],
    sample_years: np.ndarray,
) -> AssembledData:
    """Synchronize, order, and align the series into an observation panel.

    Requires at least one GMST series, exactly one total-forcing and one
    natural-forcing series, and ocean series in temperature/OHC pairs linked
    by ``pair_id``. Rows follow the canonical ordering (GMSTs, ocean
    temperatures, OHCs, total forcing; by label within a kind). The natural
    forcing must cover every sample year and is returned separately as the
    exogenous input.
    """
    sample_years = np.asarray(sample_years, dtype=int).ravel()
    if sample_years.size < 2 or np.any(np.diff(sample_years) != 1):
        raise ValueError("sample years must be contiguous with at least two years")

    by_kind: dict[str, list[tuple[AnomalySeries, SyncSpec]]] = {}
    for series, sync in manifest:
        by_kind.setdefault(series.kind, []).append((series, sync))

    if len(by_kind.get("gmst", [])) < 1:
        raise ValueError("need at least one GMST series")
    if len(by_kind.get("forcing_total", [])) != 1:
        raise ValueError("need exactly one total-forcing series")
    if len(by_kind.get("forcing_natural", [])) != 1:
        raise ValueError("need exactly one natural-forcing series")
    temps = by_kind.get("ocean_temp", [])
    ohcs = by_kind.get("ohc", [])
    temp_pairs = [s.pair_id for s, _ in temps]
    ohc_pairs = [s.pair_id for s, _ in ohcs]
    if None in temp_pairs or None in ohc_pairs:
        raise ValueError("ocean series require pair_id")
    if sorted(temp_pairs) != sorted(ohc_pairs) or len(set(temp_pairs)) != len(temp_pairs):
        raise ValueError("ocean temperature and OHC series must pair one-to-one")

    offsets: dict[str, float | None] = {}
    synchronized: dict[str, list[AnomalySeries]] = {}
    for series, sync in manifest:
        offset = sync.resolve_offset()
        offsets[series.label] = offset
        out = series if offset is None else synchronize(series, offset)
        synchronized.setdefault(series.kind, []).append(out)

    natural = synchronized["forcing_natural"][0]
    covered = np.isin(sample_years, natural.years[np.isfinite(natural.values)])
    if not covered.all():
        missing = sample_years[~covered]
        raise ValueError(
            f"natural forcing does not cover sample years {missing.min()}..{missing.max()}"
        )
    natural = replace(natural, values=_align(natural, sample_years), years=sample_years.copy())

    rows: list[np.ndarray] = []
    meta: list[SeriesMeta] = []
    for kind in CANONICAL_KIND_ORDER:
        for series in sorted(synchronized.get(kind, []), key=lambda s: s.label):
            aligned = _align(series, sample_years)
            if np.all(np.isnan(aligned)):
                raise ValueError(f"series {series.label!r} has no overlap with the sample years")
            rows.append(aligned)
            meta.append(SeriesMeta(label=series.label, kind=kind, pair_id=series.pair_id))

    panel = ObservationPanel(
        years=sample_years.copy(), values=np.vstack(rows), series_meta=meta
    )
    total_row = panel.rows_of_kind("forcing_total")[0]
    total = AnomalySeries(
        label=panel.series_meta[total_row].label,
        kind="forcing_total",
        years=sample_years.copy(),
        values=panel.values[total_row].copy(),
        baseline="synchronized",
    )
    anthropogenic = split_forcing(total, natural)
    return AssembledData(
        panel=panel,
        natural_forcing=natural,
        anthropogenic=anthropogenic,
        offsets=offsets,
    )


def read_series(path, label: str, kind: str, **kwargs) -> AnomalySeries:
    """Load a ``year,value`` series file (empty value fields are missing)."""
    years: list[int] = []
    values: list[float] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:2]] != ["year", "value"]:
            raise ValueError(f"{path}: expected a 'year,value' header")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            years.append(int(row[0]))
            cell = row[1].strip() if len(row) > 1 else ""
            values.append(float(cell) if cell else np.nan)
    return AnomalySeries(label=label, kind=kind, years=np.array(years), values=np.array(values), **kwargs)


def write_series(path, series: AnomalySeries) -> None:
    """Write a series in the ``year,value`` format."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["year", "value"])
        for year, value in zip(series.years, series.values):
            writer.writerow([int(year), "" if np.isnan(value) else repr(float(value))])


def read_manifest(path) -> list[tuple[AnomalySeries, SyncSpec]]:
    """Load a manifest JSON file and every series it references.

    Relative series paths resolve against the manifest's directory.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        doc = json.load(handle)
    if not isinstance(doc, dict) or "series" not in doc:
        raise ValueError(f"{path}: manifest must be an object with a 'series' list")
    out: list[tuple[AnomalySeries, SyncSpec]] = []
    for entry in doc["series"]:
        for key in ("path", "label", "kind", "sync"):
            if key not in entry:
                raise ValueError(f"{path}: manifest entry missing {key!r} ({entry.get('label')})")
        series_path = Path(entry["path"])
        if not series_path.is_absolute():
            series_path = path.parent / series_path
        depth = tuple(entry["depth"]) if "depth" in entry else None
        series = read_series(
            series_path,
            label=entry["label"],
            kind=entry["kind"],
            pair_id=entry.get("pair_id"),
            depth_range=depth,
        )
        sync_doc = dict(entry["sync"])
        mode = sync_doc.pop("mode", None)
        try:
            sync = SyncSpec(mode=mode, **sync_doc)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}: bad sync spec for series {entry['label']!r}: {exc}") from exc
        out.append((series, sync))
    return out
