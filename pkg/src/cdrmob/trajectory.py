"""Time-ordered position sequences for a single subscriber."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

import numpy as np

from .errors import EmptyTrajectory, InvalidConfig
from .ingest import SubscriberIndex, TowerMap, from_us


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Positions in meters with timestamps in microseconds since 1970."""

    subscriber_id: str
    time_us: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.time_us, dtype=np.int64)
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if not (t.shape == x.shape == y.shape and t.ndim == 1):
            raise InvalidConfig("time, x and y must be 1-d arrays of equal length")
        if t.size > 1 and np.any(np.diff(t) < 0):
            raise InvalidConfig("trajectory times must be non-decreasing")
        object.__setattr__(self, "time_us", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return int(self.x.size)

    @classmethod
    def from_points(cls, points: Sequence[tuple[float, float]], subscriber_id: str = "",
                    times: Sequence[int] | None = None) -> "Trajectory":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        t = np.arange(len(pts), dtype=np.int64) if times is None else np.asarray(times, dtype=np.int64)
        return cls(subscriber_id, t, pts[:, 0], pts[:, 1])

    @classmethod
    def from_index(cls, index: SubscriberIndex, towers: TowerMap, subscriber_id: str) -> "Trajectory":
        rows = index.rows(subscriber_id)
        codes = towers.codes(index.tower_ids)[index.tower[rows]]
        return cls(subscriber_id, index.time_us[rows].copy(), towers.xs[codes], towers.ys[codes])

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    @property
    def timestamps(self) -> list[datetime]:
        return [from_us(t) for t in self.time_us.tolist()]

    def prefix(self, n: int) -> "Trajectory":
        return Trajectory(self.subscriber_id, self.time_us[:n], self.x[:n], self.y[:n])

    def take(self, mask) -> "Trajectory":
        mask = np.asarray(mask)
        return Trajectory(self.subscriber_id, self.time_us[mask], self.x[mask], self.y[mask])

    def require(self, n: int = 1, exc=EmptyTrajectory) -> None:
        if len(self) < n:
            raise exc(f"trajectory {self.subscriber_id!r} has {len(self)} positions, needs {n}")
