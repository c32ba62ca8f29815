"""CDR parsing, validation and the per-subscriber index.

CDR files are header-less CSV with five columns::

    subscriber_id,timestamp,tower_id,cell_id,activity

``timestamp`` is ISO-8601 without a time zone (minute resolution or finer).
Tower files are CSV ``tower_id,x_meters,y_meters,cell_count`` with an optional
header row.  Lines starting with ``#`` are comments in both formats, which
lets the index be persisted as a CDR file carrying a provenance header.

The index keeps records in columnar numpy arrays grouped by subscriber, so
the statistics further down the pipeline run vectorised.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from collections.abc import Mapping
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .config import StudyConfig
from .errors import (
    DateOutOfWindow,
    InvalidConfig,
    MalformedLine,
    ParseError,
    UnknownActivityCode,
    UnknownTower,
)

EPOCH = datetime(1970, 1, 1)
_ONE_US = timedelta(microseconds=1)
US_PER_MINUTE = 60_000_000
US_PER_HOUR = 60 * US_PER_MINUTE
US_PER_DAY = 24 * US_PER_HOUR


class ActivityType(enum.IntEnum):
    CALL_IN = 0
    CALL_OUT = 1
    SMS_IN = 2
    SMS_OUT = 3
    HANDOVER = 4
    ABNORMAL_HALT = 5
    NORMAL_END = 6

    @property
    def code(self) -> str:
        return self.name

    @classmethod
    def from_code(cls, code: str) -> "ActivityType":
        try:
            return cls[code]
        except KeyError:
            raise UnknownActivityCode(f"unknown activity code {code!r}") from None


ACTIVITY_CODES = tuple(a.code for a in ActivityType)
_ACTIVITY_LOOKUP = {a.code: int(a) for a in ActivityType}


def to_us(dt: datetime) -> int:
    """Microseconds since 1970-01-01 for a naive date-time."""
    return (dt - EPOCH) // _ONE_US


def from_us(us: int) -> datetime:
    return EPOCH + timedelta(microseconds=int(us))


def format_timestamps(time_us: np.ndarray) -> list[str]:
    """ISO-8601 strings; fractional seconds only where present."""
    time_us = np.asarray(time_us, dtype=np.int64)
    stamps = time_us.view("datetime64[us]")
    out = np.datetime_as_string(stamps, unit="s")
    frac = time_us % 1_000_000 != 0
    if frac.any():
        out = out.astype(object)
        out[frac] = np.datetime_as_string(stamps[frac], unit="us")
    return out.tolist()


class CdrRecord(NamedTuple):
    subscriber_id: str
    timestamp: datetime
    tower_id: str
    cell_id: str
    activity: ActivityType

    def to_line(self) -> str:
        ts = self.timestamp.isoformat()
        return f"{self.subscriber_id},{ts},{self.tower_id},{self.cell_id},{self.activity.code}"


# --------------------------------------------------------------------- towers


@dataclass(frozen=True)
class Tower:
    tower_id: str
    x: float
    y: float
    cell_count: int = 0


class TowerMap(Mapping):
    """Towers ordered by identifier, with coordinate arrays for vector lookups.

    Position ``i`` in :attr:`xs`/:attr:`ys` belongs to ``ids[i]``; because ids
    are sorted, a lower position always means a lower identifier.
    """

    def __init__(self, towers: Iterable[Tower]):
        towers = sorted(towers, key=lambda t: t.tower_id)
        seen: set[str] = set()
        for t in towers:
            if t.tower_id in seen:
                raise InvalidConfig(f"duplicate tower id {t.tower_id!r}")
            if not t.tower_id:
                raise InvalidConfig("empty tower id")
            if not (math.isfinite(t.x) and math.isfinite(t.y)):
                raise InvalidConfig(f"tower {t.tower_id!r} has non-finite coordinates")
            if t.cell_count < 0:
                raise InvalidConfig(f"tower {t.tower_id!r} has negative cell count")
            seen.add(t.tower_id)
        self.towers: tuple[Tower, ...] = tuple(towers)
        self.ids: list[str] = [t.tower_id for t in towers]
        self.position: dict[str, int] = {tid: i for i, tid in enumerate(self.ids)}
        self.xs = np.array([t.x for t in towers], dtype=float)
        self.ys = np.array([t.y for t in towers], dtype=float)

    def __getitem__(self, tower_id: str) -> Tower:
        try:
            return self.towers[self.position[tower_id]]
        except KeyError:
            raise UnknownTower(f"unknown tower {tower_id!r}") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self.ids)

    def __len__(self) -> int:
        return len(self.towers)

    def codes(self, tower_ids: Sequence[str]) -> np.ndarray:
        """Positions of ``tower_ids`` in this map; raises on unknown ids."""
        pos = self.position
        try:
            return np.array([pos[t] for t in tower_ids], dtype=np.int64)
        except KeyError as exc:
            raise UnknownTower(f"unknown tower {exc.args[0]!r}") from None

    def check_region(self, region: tuple[float, float, float, float]) -> None:
        x0, y0, x1, y1 = region
        bad = (self.xs < x0) | (self.xs > x1) | (self.ys < y0) | (self.ys > y1)
        if bad.any():
            tid = self.ids[int(np.flatnonzero(bad)[0])]
            raise InvalidConfig(f"tower {tid!r} lies outside the region {region}")


def read_towers(path: str | Path, region: tuple[float, float, float, float] | None = None) -> TowerMap:
    towers = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].startswith("#"):
                continue
            if row[0].strip() == "tower_id":
                continue
            if len(row) != 4:
                raise MalformedLine(f"expected 4 fields, got {len(row)}", path=str(path), lineno=reader.line_num)
            try:
                towers.append(Tower(row[0].strip(), float(row[1]), float(row[2]), int(row[3])))
            except ValueError as exc:
                raise MalformedLine(str(exc), path=str(path), lineno=reader.line_num) from None
    tmap = TowerMap(towers)
    if region is not None:
        tmap.check_region(region)
    return tmap


def write_towers(path: str | Path, towers: Iterable[Tower], header: Iterable[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for h in header:
            fh.write(f"# {h}\n")
        fh.write("tower_id,x_meters,y_meters,cell_count\n")
        for t in towers:
            fh.write(f"{t.tower_id},{t.x!r},{t.y!r},{t.cell_count}\n")


# ------------------------------------------------------------------- days


class DayKind(enum.Enum):
    WORK_DAY = "work"
    OFF_DAY = "off"


@dataclass(frozen=True)
class DayClass:
    kind: DayKind
    within_event: bool


def classify_day(day: date | datetime, config: StudyConfig | None = None) -> DayClass:
    config = config or StudyConfig()
    if isinstance(day, datetime):
        day = day.date()
    if day not in config.days:
        raise DateOutOfWindow(f"{day.isoformat()} is outside the observation window")
    kind = DayKind.OFF_DAY if day in config.off_days else DayKind.WORK_DAY
    return DayClass(kind, day not in config.out_of_event_days)


# ---------------------------------------------------------------- parsing


@dataclass
class IngestReport:
    lines: int = 0
    comments: int = 0
    records: int = 0
    malformed: int = 0
    unknown_activity: int = 0
    unknown_tower: int = 0
    out_of_window: int = 0
    excluded_hours: int = 0
    subscribers_kept: int = 0
    subscribers_dropped: int = 0
    records_dropped_single: int = 0
    first_error: str = ""

    @property
    def dropped(self) -> int:
        return (self.malformed + self.unknown_activity + self.unknown_tower + self.out_of_window
                + self.excluded_hours + self.records_dropped_single)

    def merge(self, other: "IngestReport") -> None:
        for f in fields(self):
            if f.name == "first_error":
                continue
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        if other.first_error and not self.first_error:
            self.first_error = other.first_error

    def as_dict(self) -> dict[str, object]:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["dropped"] = self.dropped
        return d


@dataclass
class _Context:
    tower_position: dict[str, int]
    window_us: tuple[int, int]
    excluded_us: tuple[tuple[int, int], ...]
    strict: bool
    path: str | None

    @classmethod
    def build(cls, towers: TowerMap, config: StudyConfig, strict: bool, path) -> "_Context":
        return cls(
            dict(towers.position),
            (to_us(config.window_start), to_us(config.window_end)),
            tuple((to_us(a), to_us(b)) for a, b in config.excluded_hours),
            strict,
            None if path is None else str(path),
        )


@dataclass
class _Columns:
    """Interned columns of accepted records, in input order."""

    sub_vocab: list[str] = field(default_factory=list)
    cell_vocab: list[str] = field(default_factory=list)
    sub: list[int] = field(default_factory=list)
    time_us: list[int] = field(default_factory=list)
    tower: list[int] = field(default_factory=list)
    cell: list[int] = field(default_factory=list)
    activity: list[int] = field(default_factory=list)
    report: IngestReport = field(default_factory=IngestReport)
    first_error_line: int | None = None


def _reject(cols: _Columns, ctx: _Context, exc: ParseError, counter: str) -> None:
    if ctx.strict:
        raise exc
    setattr(cols.report, counter, getattr(cols.report, counter) + 1)
    if cols.first_error_line is None:
        cols.first_error_line = exc.lineno
        cols.report.first_error = str(exc)


def _parse_rows(rows: Iterable[tuple[int, list[str]]], ctx: _Context) -> _Columns:
    """Validate rows and intern accepted records into columns.

    ``rows`` yields ``(line number, fields)``; the hot loop keeps everything in
    local variables because it runs once per CDR line.
    """
    cols = _Columns()
    report = cols.report
    sub_ids: dict[str, int] = {}
    cell_ids: dict[str, int] = {}
    towers = ctx.tower_position
    acts = _ACTIVITY_LOOKUP
    lo, hi = ctx.window_us
    excluded = ctx.excluded_us
    fromiso = datetime.fromisoformat
    path = ctx.path
    a_sub, a_time, a_tower = cols.sub.append, cols.time_us.append, cols.tower.append
    a_cell, a_act = cols.cell.append, cols.activity.append
    lines = 0
    comments = 0
    for lineno, row in rows:
        lines += 1
        if not row or (len(row) == 1 and not row[0].strip()):
            comments += 1
            continue
        if row[0].startswith("#"):
            comments += 1
            continue
        if len(row) != 5:
            _reject(cols, ctx, MalformedLine(f"expected 5 fields, got {len(row)}", path=path, lineno=lineno), "malformed")
            continue
        sid, ts, tid, cid, code = row
        if not sid:
            _reject(cols, ctx, MalformedLine("empty subscriber id", path=path, lineno=lineno), "malformed")
            continue
        try:
            dt = fromiso(ts)
        except ValueError:
            dt = None
        if dt is None or dt.tzinfo is not None:
            _reject(cols, ctx, MalformedLine(f"unparseable timestamp {ts!r}", path=path, lineno=lineno), "malformed")
            continue
        act = acts.get(code)
        if act is None:
            _reject(cols, ctx, UnknownActivityCode(f"unknown activity code {code!r}", path=path, lineno=lineno),
                    "unknown_activity")
            continue
        tcode = towers.get(tid)
        if tcode is None:
            _reject(cols, ctx, UnknownTower(f"unknown tower {tid!r}", path=path, lineno=lineno), "unknown_tower")
            continue
        t = (dt - EPOCH) // _ONE_US
        if t < lo or t >= hi:
            report.out_of_window += 1
            continue
        if excluded and any(a <= t < b for a, b in excluded):
            report.excluded_hours += 1
            continue
        s = sub_ids.get(sid)
        if s is None:
            s = sub_ids[sid] = len(sub_ids)
        c = cell_ids.get(cid)
        if c is None:
            c = cell_ids[cid] = len(cell_ids)
        a_sub(s)
        a_time(t)
        a_tower(tcode)
        a_cell(c)
        a_act(act)
    report.lines = lines
    report.comments = comments
    report.records = len(cols.sub)
    cols.sub_vocab = list(sub_ids)
    cols.cell_vocab = list(cell_ids)
    return cols


def _csv_rows(text_lines: Iterable[str], first_lineno: int) -> Iterator[tuple[int, list[str]]]:
    # csv.reader copes with quoted identifiers; our own writer never quotes.
    return enumerate(csv.reader(text_lines), start=first_lineno)


def parse_cdr_file(
    path: str | Path,
    towers: TowerMap,
    config: StudyConfig | None = None,
    *,
    strict: bool = False,
    report: IngestReport | None = None,
) -> Iterator[CdrRecord]:
    """Yield validated records in file order.

    In strict mode the first bad line raises (with its line number); in
    lenient mode bad lines are counted in ``report`` and skipped.  Records
    outside the observation window or inside excluded hours are always
    dropped and counted.
    """
    config = config or StudyConfig()
    ctx = _Context.build(towers, config, strict, path)
    report = report if report is not None else IngestReport()
    ids = towers.ids
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in _csv_rows(fh, 1):
            # one row at a time keeps this a true stream
            cols = _parse_rows([(lineno, row)], ctx)
            report.merge(cols.report)
            if cols.sub:
                yield CdrRecord(
                    cols.sub_vocab[0],
                    from_us(cols.time_us[0]),
                    ids[cols.tower[0]],
                    cols.cell_vocab[0],
                    ActivityType(cols.activity[0]),
                )


# ------------------------------------------------------------------- index


class SubscriberIndex(Mapping):
    """Time-sorted records per subscriber, stored column-wise.

    Records of subscriber ``subscribers[k]`` occupy rows
    ``offsets[k]:offsets[k + 1]``.  Subscribers are in lexical order; within a
    subscriber rows are sorted by time with ties kept in input order.
    """

    def __init__(self, subscribers, offsets, time_us, tower_ids, tower, cell_ids, cell, activity,
                 report: IngestReport | None = None):
        self.subscribers: list[str] = list(subscribers)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.time_us = np.asarray(time_us, dtype=np.int64)
        self.tower_ids: list[str] = list(tower_ids)
        self.tower = np.asarray(tower, dtype=np.int64)
        self.cell_ids: list[str] = list(cell_ids)
        self.cell = np.asarray(cell, dtype=np.int64)
        self.activity = np.asarray(activity, dtype=np.int8)
        self.report = report or IngestReport()
        self._pos = {s: i for i, s in enumerate(self.subscribers)}

    # Mapping protocol -------------------------------------------------
    def __getitem__(self, subscriber_id: str) -> list[CdrRecord]:
        k = self._pos[subscriber_id]
        lo, hi = self.offsets[k], self.offsets[k + 1]
        return [
            CdrRecord(subscriber_id, from_us(t), self.tower_ids[tw], self.cell_ids[c], ActivityType(a))
            for t, tw, c, a in zip(self.time_us[lo:hi].tolist(), self.tower[lo:hi].tolist(),
                                   self.cell[lo:hi].tolist(), self.activity[lo:hi].tolist())
        ]

    def __iter__(self) -> Iterator[str]:
        return iter(self.subscribers)

    def __len__(self) -> int:
        return len(self.subscribers)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SubscriberIndex):
            return NotImplemented
        return (
            self.subscribers == other.subscribers
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.time_us, other.time_us)
            and np.array_equal(self.activity, other.activity)
            and self.tower_labels().tolist() == other.tower_labels().tolist()
            and self.cell_labels().tolist() == other.cell_labels().tolist()
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"SubscriberIndex({len(self)} subscribers, {self.n_records} records)"

    # -------------------------------------------------------------------
    @property
    def n_records(self) -> int:
        return int(self.time_us.size)

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def owner(self) -> np.ndarray:
        """Subscriber position of every row."""
        return np.repeat(np.arange(len(self.subscribers)), self.counts)

    def tower_labels(self) -> np.ndarray:
        return np.asarray(self.tower_ids, dtype=object)[self.tower] if self.tower.size else np.array([], dtype=object)

    def cell_labels(self) -> np.ndarray:
        return np.asarray(self.cell_ids, dtype=object)[self.cell] if self.cell.size else np.array([], dtype=object)

    def positions(self, towers: TowerMap) -> tuple[np.ndarray, np.ndarray]:
        """Tower coordinates for every row."""
        codes = towers.codes(self.tower_ids)
        rows = codes[self.tower] if self.tower.size else np.array([], dtype=np.int64)
        return towers.xs[rows], towers.ys[rows]

    def tower_positions(self, towers: TowerMap) -> np.ndarray:
        """Row-wise position of each record's tower in ``towers``."""
        codes = towers.codes(self.tower_ids)
        return codes[self.tower] if self.tower.size else np.array([], dtype=np.int64)

    def rows(self, subscriber_id: str) -> slice:
        k = self._pos[subscriber_id]
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def select_rows(self, keep: np.ndarray) -> "SubscriberIndex":
        """Sub-index of the rows where ``keep`` is true, re-applying the
        single-record rule."""
        keep = np.asarray(keep, dtype=bool)
        owner = self.owner()[keep]
        return _assemble(
            [self.subscribers[i] for i in range(len(self.subscribers))],
            owner, self.time_us[keep], self.tower_ids, self.tower[keep],
            self.cell_ids, self.cell[keep], self.activity[keep], presorted=True,
        )

    def without_activities(self, excluded: Iterable[ActivityType]) -> "SubscriberIndex":
        excluded = [int(a) for a in excluded]
        return self.select_rows(~np.isin(self.activity, excluded))

    def iter_records(self) -> Iterator[CdrRecord]:
        for sid in self.subscribers:
            yield from self[sid]


def _assemble(sub_vocab, sub, time_us, tower_vocab, tower, cell_vocab, cell, activity,
              report: IngestReport | None = None, presorted: bool = False) -> SubscriberIndex:
    """Sort, group and filter interned columns into an index."""
    report = report or IngestReport()
    sub = np.asarray(sub, dtype=np.int64)
    time_us = np.asarray(time_us, dtype=np.int64)
    tower = np.asarray(tower, dtype=np.int64)
    cell = np.asarray(cell, dtype=np.int64)
    activity = np.asarray(activity, dtype=np.int8)

    # Relabel subscribers by lexical order so grouping sorts alphabetically.
    order = sorted(range(len(sub_vocab)), key=sub_vocab.__getitem__)
    rank = np.empty(len(sub_vocab), dtype=np.int64)
    rank[order] = np.arange(len(sub_vocab))
    names = [sub_vocab[i] for i in order]
    sub = rank[sub] if sub.size else sub

    if not presorted:
        # Two stable passes: time, then subscriber; ties keep input order.
        perm = np.argsort(time_us, kind="stable")
        perm = perm[np.argsort(sub[perm], kind="stable")]
        sub, time_us, tower, cell, activity = sub[perm], time_us[perm], tower[perm], cell[perm], activity[perm]

    counts = np.bincount(sub, minlength=len(names)) if names else np.zeros(0, dtype=np.int64)
    keep_sub = counts >= 2
    report.subscribers_kept = int(keep_sub.sum())
    report.subscribers_dropped = int((counts > 0).sum() - keep_sub.sum())
    report.records_dropped_single = int(counts[(counts > 0) & ~keep_sub].sum())
    if sub.size:
        keep_row = keep_sub[sub]
        sub, time_us, tower, cell, activity = sub[keep_row], time_us[keep_row], tower[keep_row], cell[keep_row], activity[keep_row]
    kept_names = [n for n, k in zip(names, keep_sub) if k]
    offsets = np.concatenate([[0], np.cumsum(counts[keep_sub])]).astype(np.int64)

    # Compact vocabularies to the labels still in use, in sorted order.
    tower_vocab, tower = _compact(tower_vocab, tower)
    cell_vocab, cell = _compact(cell_vocab, cell)
    return SubscriberIndex(kept_names, offsets, time_us, tower_vocab, tower, cell_vocab, cell, activity, report)


def _compact(vocab: Sequence[str], codes: np.ndarray) -> tuple[list[str], np.ndarray]:
    used = np.unique(codes) if codes.size else np.zeros(0, dtype=np.int64)
    labels = [vocab[i] for i in used.tolist()]
    order = sorted(range(len(labels)), key=labels.__getitem__)
    remap = np.empty(len(vocab), dtype=np.int64)
    remap[used[order]] = np.arange(len(labels))
    return [labels[i] for i in order], remap[codes] if codes.size else codes


def build_subscriber_index(records: Iterable[CdrRecord]) -> SubscriberIndex:
    """Group records by subscriber, sort by time, drop one-record subscribers."""
    subs: dict[str, int] = {}
    towers: dict[str, int] = {}
    cells: dict[str, int] = {}
    sub, time_us, tower, cell, act = [], [], [], [], []
    for r in records:
        sub.append(subs.setdefault(r.subscriber_id, len(subs)))
        time_us.append(to_us(r.timestamp))
        tower.append(towers.setdefault(r.tower_id, len(towers)))
        cell.append(cells.setdefault(r.cell_id, len(cells)))
        act.append(int(r.activity))
    report = IngestReport(records=len(sub))
    return _assemble(list(subs), sub, time_us, list(towers), tower, list(cells), cell, act, report)


# ------------------------------------------------------- chunked file load

_WORKER_CTX: _Context | None = None


def _init_worker(ctx: _Context) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _parse_segment(args: tuple[str, int, int, int]) -> _Columns:
    path, start, end, first_lineno = args
    with open(path, "rb") as fh:
        fh.seek(start)
        data = fh.read(end - start)
    text = io.StringIO(data.decode("utf-8"), newline="")
    return _parse_rows(_csv_rows(text, first_lineno), _WORKER_CTX)


def _segments(path: str, n: int) -> list[tuple[str, int, int, int]]:
    """Split a file into ``n`` newline-aligned byte ranges with line offsets."""
    size = os.path.getsize(path)
    bounds = [0]
    with open(path, "rb") as fh:
        for k in range(1, n):
            fh.seek(max(bounds[-1], size * k // n))
            fh.readline()
            pos = fh.tell()
            if pos >= size:
                break
            if pos > bounds[-1]:
                bounds.append(pos)
        bounds.append(size)
        segs = []
        lineno = 1
        for a, b in zip(bounds[:-1], bounds[1:]):
            segs.append((path, a, b, lineno))
            fh.seek(a)
            lineno += fh.read(b - a).count(b"\n")
    return segs


def _merge_columns(parts: list[_Columns]) -> tuple:
    sub_vocab: dict[str, int] = {}
    cell_vocab: dict[str, int] = {}
    sub, time_us, tower, cell, act = [], [], [], [], []
    for p in parts:
        smap = np.array([sub_vocab.setdefault(s, len(sub_vocab)) for s in p.sub_vocab], dtype=np.int64)
        cmap = np.array([cell_vocab.setdefault(c, len(cell_vocab)) for c in p.cell_vocab], dtype=np.int64)
        if p.sub:
            sub.append(smap[np.asarray(p.sub)])
            cell.append(cmap[np.asarray(p.cell)])
            time_us.append(np.asarray(p.time_us, dtype=np.int64))
            tower.append(np.asarray(p.tower, dtype=np.int64))
            act.append(np.asarray(p.activity, dtype=np.int8))
    cat = lambda xs, dt: np.concatenate(xs) if xs else np.zeros(0, dtype=dt)  # noqa: E731
    return (list(sub_vocab), cat(sub, np.int64), cat(time_us, np.int64), cat(tower, np.int64),
            list(cell_vocab), cat(cell, np.int64), cat(act, np.int8))


def default_threads() -> int:
    env = os.environ.get("CDRMOB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def load_index(
    path: str | Path,
    towers: TowerMap,
    config: StudyConfig | None = None,
    *,
    strict: bool = False,
    threads: int | None = None,
    min_segment_bytes: int = 8 << 20,
) -> SubscriberIndex:
    """Parse a CDR file straight into a :class:`SubscriberIndex`.

    Large files are split into newline-aligned segments parsed in worker
    processes; the partial columns are merged in file order so the result
    does not depend on the degree of parallelism.
    """
    config = config or StudyConfig()
    path = str(path)
    ctx = _Context.build(towers, config, strict, path)
    threads = threads or default_threads()
    size = os.path.getsize(path)
    n = max(1, min(threads, size // max(1, min_segment_bytes)))
    if n == 1:
        with open(path, newline="", encoding="utf-8") as fh:
            parts = [_parse_rows(_csv_rows(fh, 1), ctx)]
    else:
        segs = _segments(path, n)
        with ProcessPoolExecutor(max_workers=len(segs), initializer=_init_worker, initargs=(ctx,)) as pool:
            parts = list(pool.map(_parse_segment, segs))
    report = IngestReport()
    for p in parts:
        report.merge(p.report)
    firsts = [p for p in parts if p.first_error_line is not None]
    if firsts:
        report.first_error = min(firsts, key=lambda p: p.first_error_line).report.first_error
    sub_vocab, sub, time_us, tower, cell_vocab, cell, act = _merge_columns(parts)
    return _assemble(sub_vocab, sub, time_us, towers.ids, tower, cell_vocab, cell, act, report)


def write_index(path: str | Path, index: SubscriberIndex, header: Iterable[str] = ()) -> None:
    """Persist an index as a CDR file sorted and grouped by subscriber."""
    ts = format_timestamps(index.time_us)
    towers = index.tower_labels().tolist()
    cells = index.cell_labels().tolist()
    codes = [ACTIVITY_CODES[a] for a in index.activity.tolist()]
    owner = index.owner().tolist()
    subs = index.subscribers
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for h in header:
            fh.write(f"# {h}\n")
        fh.write("".join(
            f"{subs[o]},{t},{tw},{c},{a}\n" for o, t, tw, c, a in zip(owner, ts, towers, cells, codes)
        ))


def write_records(path: str | Path, records: Iterable[CdrRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for r in records:
            fh.write(r.to_line() + "\n")


def day_of(time_us: np.ndarray) -> np.ndarray:
    """Calendar day (days since 1970-01-01) of each timestamp."""
    return np.floor_divide(np.asarray(time_us, dtype=np.int64), US_PER_DAY)


def hour_of(time_us: np.ndarray) -> np.ndarray:
    return np.floor_divide(np.asarray(time_us, dtype=np.int64) % US_PER_DAY, US_PER_HOUR)


def day_ordinal_to_date(day: int) -> date:
    return date(1970, 1, 1) + timedelta(days=int(day))
