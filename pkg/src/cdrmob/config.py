"""Plain-text ``key = value`` configuration files.

The same format is used for the study configuration (observation window,
day classes, excluded hours, sector geometry), the synthetic generator
configuration and the generator manifest.  Lines starting with ``#`` are
comments; list values are comma separated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Mapping

from .errors import InvalidConfig


def read_kv(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise InvalidConfig(f"{path}:{lineno}: expected 'key = value'")
            key = key.strip()
            if key in values:
                raise InvalidConfig(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value.strip()
    return values


def format_kv(values: Mapping[str, object], header: Iterable[str] = ()) -> str:
    lines = [f"# {h}" for h in header]
    for key, value in values.items():
        if isinstance(value, (list, tuple)):
            value = ", ".join(str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def write_kv(path: str | Path, values: Mapping[str, object], header: Iterable[str] = ()) -> None:
    Path(path).write_text(format_kv(values, header), encoding="utf-8")


def split_list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def parse_floats(value: str, n: int | None = None, key: str = "") -> tuple[float, ...]:
    try:
        out = tuple(float(v) for v in split_list(value))
    except ValueError as exc:
        raise InvalidConfig(f"{key}: {exc}") from None
    if n is not None and len(out) != n:
        raise InvalidConfig(f"{key}: expected {n} numbers, got {len(out)}")
    if not all(math.isfinite(v) for v in out):
        raise InvalidConfig(f"{key}: values must be finite")
    return out


def parse_datetime(value: str, key: str = "") -> datetime:
    try:
        dt = datetime.fromisoformat(value.strip())
    except ValueError:
        raise InvalidConfig(f"{key}: bad date-time {value!r}") from None
    if dt.tzinfo is not None:
        raise InvalidConfig(f"{key}: time zones are not supported ({value!r})")
    return dt


def parse_date(value: str, key: str = "") -> date:
    try:
        return date.fromisoformat(value.strip())
    except ValueError:
        raise InvalidConfig(f"{key}: bad date {value!r}") from None


# default observation window: 4-15 July 2008, 288 hours
DEFAULT_WINDOW = (datetime(2008, 7, 4), datetime(2008, 7, 16))
DEFAULT_OFF_DAYS = tuple(date(2008, 7, d) for d in (5, 6, 12, 13, 14))
DEFAULT_OUT_OF_EVENT_DAYS = (date(2008, 7, 4), date(2008, 7, 15))
DEFAULT_REGION = (0.0, 0.0, 30_000.0, 30_000.0)
DEFAULT_CENTER_RECT = (10_000.0, 10_000.0, 20_000.0, 20_000.0)


@dataclass(frozen=True)
class StudyConfig:
    """Observation window, calendar classes and region geometry.

    ``window_end`` is exclusive.  ``excluded_hours`` holds half-open
    ``[start, end)`` ranges whose records are dropped at ingest.  Rectangles
    are ``(min_x, min_y, max_x, max_y)`` in meters.
    """

    window_start: datetime = DEFAULT_WINDOW[0]
    window_end: datetime = DEFAULT_WINDOW[1]
    off_days: frozenset[date] = frozenset(DEFAULT_OFF_DAYS)
    out_of_event_days: frozenset[date] = frozenset(DEFAULT_OUT_OF_EVENT_DAYS)
    excluded_hours: tuple[tuple[datetime, datetime], ...] = ()
    region: tuple[float, float, float, float] = DEFAULT_REGION
    center_rect: tuple[float, float, float, float] = DEFAULT_CENTER_RECT
    extra: Mapping[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.window_start < self.window_end:
            raise InvalidConfig("window_start must precede window_end")
        for lo, hi in self.excluded_hours:
            if not lo < hi:
                raise InvalidConfig(f"excluded range {lo}/{hi} is empty")
        for name in ("region", "center_rect"):
            x0, y0, x1, y1 = getattr(self, name)
            if not (x0 < x1 and y0 < y1):
                raise InvalidConfig(f"{name} must satisfy min < max")

    @property
    def days(self) -> list[date]:
        """Calendar dates touched by the observation window, in order."""
        first = self.window_start.date()
        last_instant = self.window_end
        n = (last_instant.date() - first).days
        if last_instant.time() != datetime.min.time():
            n += 1
        return [date.fromordinal(first.toordinal() + i) for i in range(n)]

    @property
    def effective_hours(self) -> float:
        total = (self.window_end - self.window_start).total_seconds()
        for lo, hi in self.excluded_hours:
            lo, hi = max(lo, self.window_start), min(hi, self.window_end)
            if hi > lo:
                total -= (hi - lo).total_seconds()
        return total / 3600.0

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "StudyConfig":
        kw: dict[str, object] = {}
        known = {
            "window_start", "window_end", "off_days", "out_of_event_days",
            "excluded_hours", "region", "center_rect",
        }
        if "window_start" in values:
            kw["window_start"] = parse_datetime(values["window_start"], "window_start")
        if "window_end" in values:
            kw["window_end"] = parse_datetime(values["window_end"], "window_end")
        for key in ("off_days", "out_of_event_days"):
            if key in values:
                kw[key] = frozenset(parse_date(v, key) for v in split_list(values[key]))
        if "excluded_hours" in values:
            ranges = []
            for item in split_list(values["excluded_hours"]):
                lo, sep, hi = item.partition("/")
                if not sep:
                    raise InvalidConfig(f"excluded_hours: expected start/end, got {item!r}")
                ranges.append((parse_datetime(lo, "excluded_hours"), parse_datetime(hi, "excluded_hours")))
            kw["excluded_hours"] = tuple(ranges)
        for key in ("region", "center_rect"):
            if key in values:
                kw[key] = parse_floats(values[key], 4, key)
        kw["extra"] = {k: v for k, v in values.items() if k not in known}
        return cls(**kw)

    @classmethod
    def from_file(cls, path: str | Path) -> "StudyConfig":
        return cls.from_mapping(read_kv(path))

    def to_mapping(self) -> dict[str, object]:
        return {
            "window_start": self.window_start.isoformat(),
            "window_end": self.window_end.isoformat(),
            "off_days": sorted(d.isoformat() for d in self.off_days),
            "out_of_event_days": sorted(d.isoformat() for d in self.out_of_event_days),
            "excluded_hours": [f"{lo.isoformat()}/{hi.isoformat()}" for lo, hi in self.excluded_hours],
            "region": list(self.region),
            "center_rect": list(self.center_rect),
        }
