"""Voronoi cell assignment, sector grouping and activity-density tables.

Voronoi cells are never built as polygons: a point belongs to the cell of its
nearest tower, so membership is a nearest-neighbour query.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .config import StudyConfig
from .errors import EmptyPartition, InvalidConfig, OverlappingConfig, UnknownTower, UnmappedTower
from .ingest import SubscriberIndex, TowerMap, day_of, hour_of, to_us, US_PER_DAY

SECTOR_NAMES = ("Center", "North", "South", "East", "West")
_SECTOR_LOOKUP = {name.lower(): name for name in SECTOR_NAMES}


class VoronoiPartition:
    """Nearest-tower assignment over a fixed set of towers.

    Ties are resolved towards the lowest tower identifier.  Candidate
    distances are recomputed as ``dx*dx + dy*dy`` so the answer is exact for
    that arithmetic, independent of the tree's internal rounding.
    """

    _K = 4

    def __init__(self, towers: TowerMap):
        if len(towers) == 0:
            raise EmptyPartition("no towers to partition")
        self.towers = towers
        self._xy = np.column_stack([towers.xs, towers.ys])
        self._tree = cKDTree(self._xy)

    def __len__(self) -> int:
        return len(self.towers)

    def query(self, xs, ys) -> np.ndarray:
        """Positions (in ``towers``) of the nearest tower for each point."""
        px = np.atleast_1d(np.asarray(xs, dtype=float))
        py = np.atleast_1d(np.asarray(ys, dtype=float))
        n = len(self.towers)
        if n == 1:
            return np.zeros(px.shape, dtype=np.int64)
        k = min(self._K, n)
        kd, cand = self._tree.query(np.column_stack([px, py]), k=k)
        dx = self._xy[cand, 0] - px[:, None]
        dy = self._xy[cand, 1] - py[:, None]
        d2 = dx * dx + dy * dy
        best = d2.min(axis=1)
        # lowest position among exact minima (positions are id-ordered)
        tied = np.where(d2 == best[:, None], cand, n)
        out = tied.min(axis=1)
        # Rows whose k-th candidate is within rounding of the best may hide
        # further ties beyond the k returned: settle those by full scan.
        far = kd[:, -1] ** 2
        unsure = np.flatnonzero(far <= best * (1 + 1e-9) + 1e-300) if k < n else np.zeros(0, dtype=np.int64)
        for i in unsure.tolist():
            ex = self._xy[:, 0] - px[i]
            ey = self._xy[:, 1] - py[i]
            out[i] = int(np.argmin(ex * ex + ey * ey))
        return out.astype(np.int64)

    def nearest(self, x: float, y: float) -> str:
        return self.towers.ids[int(self.query([x], [y])[0])]


def nearest_tower(p: tuple[float, float], part: VoronoiPartition) -> str:
    return part.nearest(p[0], p[1])


# ----------------------------------------------------------------- sectors


@dataclass(frozen=True)
class Sector:
    sector_id: str
    tower_ids: frozenset[str]


def sector_name(raw: str) -> str:
    try:
        return _SECTOR_LOOKUP[raw.strip().lower()]
    except KeyError:
        raise InvalidConfig(f"unknown sector {raw!r}; expected one of {', '.join(SECTOR_NAMES)}") from None


def read_sector_config(path: str | Path) -> dict[str, str]:
    """Read ``tower_id,sector_name`` rows (optional header)."""
    mapping: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].startswith("#") or row[0].strip() == "tower_id":
                continue
            if len(row) != 2:
                raise InvalidConfig(f"{path}:{reader.line_num}: expected tower_id,sector_name")
            tid, name = row[0].strip(), sector_name(row[1])
            if tid in mapping and mapping[tid] != name:
                raise OverlappingConfig(f"tower {tid!r} assigned to both {mapping[tid]} and {name}")
            mapping[tid] = name
    return mapping


def geometric_sector(dx: float, dy: float) -> str:
    """Compass sector of an offset from the central rectangle's centroid.

    Boundaries follow the diagonals; each diagonal belongs to the sector
    reached by turning counter-clockwise onto it, i.e. East is (-45, 45],
    North (45, 135], West (135, 225], South (225, 315] degrees.
    """
    if dx > 0 and -dx < dy <= dx:
        return "East"
    if dy > 0 and -dy <= dx < dy:
        return "North"
    if dx < 0 and dx <= dy < -dx:
        return "West"
    return "South"


def build_sectors(
    towers: TowerMap,
    mapping: Mapping[str, str] | None = None,
    config: StudyConfig | None = None,
) -> list[Sector]:
    """Group towers into the five named sectors.

    With an explicit ``mapping`` every tower must be listed.  Otherwise towers
    inside ``config.center_rect`` (bounds inclusive) form Center and the rest
    are split by the direction of their offset from the rectangle's centroid.
    """
    config = config or StudyConfig()
    members: dict[str, set[str]] = {name: set() for name in SECTOR_NAMES}
    if mapping is not None:
        for tid in mapping:
            if tid not in towers.position:
                raise UnknownTower(f"sector config names unknown tower {tid!r}")
        for tid in towers.ids:
            if tid not in mapping:
                raise UnmappedTower(f"tower {tid!r} has no sector")
            members[sector_name(mapping[tid])].add(tid)
    else:
        x0, y0, x1, y1 = config.center_rect
        cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
        for t in towers.towers:
            if x0 <= t.x <= x1 and y0 <= t.y <= y1:
                members["Center"].add(t.tower_id)
            else:
                members[geometric_sector(t.x - cx, t.y - cy)].add(t.tower_id)
    return [Sector(name, frozenset(members[name])) for name in SECTOR_NAMES]


def write_sector_config(path: str | Path, sectors: Iterable[Sector]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("tower_id,sector_name\n")
        for s in sectors:
            for tid in sorted(s.tower_ids):
                fh.write(f"{tid},{s.sector_id}\n")


# ----------------------------------------------------------------- density


@dataclass
class DensityTable:
    """Record counts by (sector, hour of day) and (sector, calendar day).

    ``hour_ratio``/``day_ratio`` normalise each time bin across sectors and
    are NaN for empty bins.  ``hour_share``/``day_share`` normalise each
    sector across its time bins instead.
    """

    sectors: tuple[str, ...]
    days: tuple[date, ...]
    hour_counts: np.ndarray  # (n_sectors, 24)
    day_counts: np.ndarray   # (n_sectors, n_days)

    @staticmethod
    def _across_sectors(counts: np.ndarray) -> np.ndarray:
        total = counts.sum(axis=0, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(total > 0, counts / np.where(total > 0, total, 1), np.nan)

    @staticmethod
    def _across_bins(counts: np.ndarray) -> np.ndarray:
        total = counts.sum(axis=1, keepdims=True)
        return np.where(total > 0, counts / np.where(total > 0, total, 1), np.nan)

    @property
    def hour_ratio(self) -> np.ndarray:
        return self._across_sectors(self.hour_counts)

    @property
    def day_ratio(self) -> np.ndarray:
        return self._across_sectors(self.day_counts)

    @property
    def hour_share(self) -> np.ndarray:
        return self._across_bins(self.hour_counts)

    @property
    def day_share(self) -> np.ndarray:
        return self._across_bins(self.day_counts)

    @property
    def total(self) -> int:
        return int(self.hour_counts.sum())

    def rows(self) -> list[tuple[str, str, str, int, float, float]]:
        """Tidy rows ``(bin_type, bin_value, sector, count, ratio, sector_share)``."""
        out = []
        for bin_type, labels, counts, ratio, share in (
            ("hour", [f"{h:02d}" for h in range(24)], self.hour_counts, self.hour_ratio, self.hour_share),
            ("day", [d.isoformat() for d in self.days], self.day_counts, self.day_ratio, self.day_share),
        ):
            for j, label in enumerate(labels):
                for i, sector in enumerate(self.sectors):
                    out.append((bin_type, label, sector, int(counts[i, j]), float(ratio[i, j]), float(share[i, j])))
        return out


def density_table(
    index: SubscriberIndex,
    sectors: Sequence[Sector],
    part: VoronoiPartition | None = None,
    config: StudyConfig | None = None,
) -> DensityTable:
    """Count every record into its tower's sector by hour of day and by day."""
    config = config or StudyConfig()
    names = tuple(s.sector_id for s in sectors)
    owner: dict[str, int] = {}
    for i, s in enumerate(sectors):
        for tid in s.tower_ids:
            if tid in owner:
                raise OverlappingConfig(f"tower {tid!r} belongs to more than one sector")
            owner[tid] = i
    if part is not None:
        known = part.towers.position
        for tid in index.tower_ids:
            if tid not in known:
                raise UnknownTower(f"unknown tower {tid!r}")
    try:
        vocab_sector = np.array([owner[t] for t in index.tower_ids], dtype=np.int64)
    except KeyError as exc:
        raise UnmappedTower(f"tower {exc.args[0]!r} is in no sector") from None
    sec = vocab_sector[index.tower] if index.n_records else np.zeros(0, dtype=np.int64)
    n_sec = len(sectors)

    hours = hour_of(index.time_us)
    hour_counts = np.bincount(sec * 24 + hours, minlength=n_sec * 24).reshape(n_sec, 24)

    days = tuple(config.days)
    first = to_us(config.window_start) // US_PER_DAY
    day_idx = day_of(index.time_us) - first
    inside = (day_idx >= 0) & (day_idx < len(days))
    day_counts = np.bincount(sec[inside] * len(days) + day_idx[inside], minlength=n_sec * len(days))
    day_counts = day_counts.reshape(n_sec, len(days))
    return DensityTable(names, days, hour_counts, day_counts)
