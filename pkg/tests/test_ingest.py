import random
from datetime import date, datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdrmob.config import StudyConfig
from cdrmob.errors import (
    DateOutOfWindow,
    InvalidConfig,
    MalformedLine,
    UnknownActivityCode,
    UnknownTower,
)
from cdrmob.ingest import (
    ActivityType,
    CdrRecord,
    DayKind,
    IngestReport,
    build_subscriber_index,
    classify_day,
    load_index,
    parse_cdr_file,
    read_towers,
    write_index,
    write_towers,
)

from conftest import cdr_line, make_towers

T0 = datetime(2008, 7, 4, 10, 0)


@pytest.fixture
def towers():
    return make_towers([(0, 0), (3000, 4000), (10000, 10000)])


def test_single_line_maps_fields(write_cdr):
    towers = make_towers([(0, 0)] * 13)  # ids T000..T012
    path = write_cdr(["A1,2008-07-04T10:00:00,T012,3,CALL_OUT\n"])
    (rec,) = list(parse_cdr_file(path, towers))
    assert rec == CdrRecord("A1", T0, "T012", "3", ActivityType.CALL_OUT)


def test_empty_file_yields_nothing(write_cdr, towers):
    report = IngestReport()
    assert list(parse_cdr_file(write_cdr([]), towers, report=report)) == []
    assert report.dropped == 0 and report.records == 0


def test_unknown_activity_strict_reports_line(write_cdr, towers):
    path = write_cdr([cdr_line("A", T0, "T000"), "A,2008-07-04T11:00:00,T000,1,XX\n"])
    with pytest.raises(UnknownActivityCode) as err:
        list(parse_cdr_file(path, towers, strict=True))
    assert err.value.lineno == 2
    assert ":2:" in str(err.value)


def test_lenient_mode_counts_and_skips(write_cdr, towers):
    lines = [
        cdr_line("A", T0, "T000"),
        "A,2008-07-04T11:00:00,T000,1,XX\n",            # bad code
        "A,not-a-time,T000,1,CALL_IN\n",                # bad timestamp
        "A,2008-07-04T11:00:00,T000,1\n",               # field count
        cdr_line("A", T0, "T999"),                      # unknown tower
        cdr_line("A", datetime(2008, 8, 1), "T000"),    # out of window
        "# a comment\n",
        cdr_line("A", T0 + timedelta(minutes=5), "T001"),
    ]
    report = IngestReport()
    recs = list(parse_cdr_file(write_cdr(lines), towers, report=report))
    assert len(recs) == 2
    assert (report.unknown_activity, report.malformed, report.unknown_tower, report.out_of_window) == (1, 2, 1, 1)
    assert report.comments == 1


@pytest.mark.parametrize("line,exc", [
    ("A,2008-07-04T11:00:00,T000,1\n", MalformedLine),
    ("A,2008-07-04T25:00:00,T000,1,CALL_IN\n", MalformedLine),
    ("A,2008-07-04T11:00:00,TX,1,CALL_IN\n", UnknownTower),
    (",2008-07-04T11:00:00,T000,1,CALL_IN\n", MalformedLine),
])
def test_strict_errors(write_cdr, towers, line, exc):
    with pytest.raises(exc):
        list(parse_cdr_file(write_cdr([line]), towers, strict=True))


def test_minute_resolution_and_fractional_seconds(write_cdr, towers):
    path = write_cdr(["A,2008-07-04T10:00,T000,1,SMS_IN\n", "A,2008-07-04T10:00:30.250000,T000,1,SMS_OUT\n"])
    index = load_index(path, towers)
    assert (index.time_us[1] - index.time_us[0]) == 30_250_000


def test_index_example_single_occurrence_rule():
    recs = [
        CdrRecord("A", T0, "T1", "0", ActivityType.CALL_IN),
        CdrRecord("B", T0 - timedelta(hours=1), "T1", "0", ActivityType.CALL_IN),
        CdrRecord("A", T0 + timedelta(hours=1), "T1", "0", ActivityType.CALL_IN),
    ]
    index = build_subscriber_index(recs)
    assert list(index) == ["A"]
    assert [r.timestamp for r in index["A"]] == [T0, T0 + timedelta(hours=1)]
    assert index.report.subscribers_dropped == 1
    assert index.report.records_dropped_single == 1


def test_empty_index():
    index = build_subscriber_index([])
    assert len(index) == 0 and index.n_records == 0


def test_shuffled_records_match_sort_oracle():
    rng = random.Random(4)
    times = [T0 + timedelta(seconds=rng.randrange(10**6)) for _ in range(1000)]
    recs = [CdrRecord("S", t, "T1", str(i), ActivityType.HANDOVER) for i, t in enumerate(times)]
    rng.shuffle(recs)
    index = build_subscriber_index(recs)
    oracle = sorted(recs, key=lambda r: r.timestamp)  # stable, like the index
    assert index["S"] == oracle


def test_duplicate_timestamps_keep_input_order():
    recs = [CdrRecord("A", T0, "T1", c, ActivityType.CALL_IN) for c in "xyz"]
    assert [r.cell_id for r in build_subscriber_index(recs)["A"]] == ["x", "y", "z"]


def test_classify_day_examples():
    assert classify_day(date(2008, 7, 6)) == classify_day(date(2008, 7, 6))
    assert classify_day(date(2008, 7, 6)).kind is DayKind.OFF_DAY
    assert classify_day(date(2008, 7, 6)).within_event
    assert classify_day(date(2008, 7, 7)).kind is DayKind.WORK_DAY
    assert classify_day(date(2008, 7, 7)).within_event
    c = classify_day(date(2008, 7, 4))
    assert c.kind is DayKind.WORK_DAY and not c.within_event
    assert not classify_day(date(2008, 7, 15)).within_event


def test_default_calendar_split():
    kinds = [classify_day(d).kind for d in StudyConfig().days]
    assert len(kinds) == 12
    assert kinds.count(DayKind.WORK_DAY) == 7 and kinds.count(DayKind.OFF_DAY) == 5


def test_classify_day_outside_window():
    with pytest.raises(DateOutOfWindow):
        classify_day(date(2008, 7, 16))


def test_excluded_hours_dropped(write_cdr, towers):
    cfg = StudyConfig(excluded_hours=((datetime(2008, 7, 4, 10), datetime(2008, 7, 4, 11)),))
    lines = [cdr_line("A", T0 + timedelta(minutes=m), "T000") for m in (0, 30, 60, 90)]
    index = load_index(write_cdr(lines), towers, cfg)
    assert index.n_records == 2
    assert index.report.excluded_hours == 2
    assert cfg.effective_hours == 287


def test_config_file_roundtrip(tmp_path):
    p = tmp_path / "study.cfg"
    p.write_text(
        "# calendar\n"
        "off_days = 2008-07-05, 2008-07-06\n"
        "excluded_hours = 2008-07-04T02:00/2008-07-04T05:00\n"
        "center_rect = 1, 2, 3, 4\n",
        encoding="utf-8",
    )
    cfg = StudyConfig.from_file(p)
    assert cfg.off_days == frozenset({date(2008, 7, 5), date(2008, 7, 6)})
    assert cfg.effective_hours == 285
    assert cfg.center_rect == (1.0, 2.0, 3.0, 4.0)
    p.write_text("off_days = 2008-07-05\noff_days = 2008-07-06\n", encoding="utf-8")
    with pytest.raises(InvalidConfig):
        StudyConfig.from_file(p)


def test_towers_region_check(tmp_path):
    p = tmp_path / "t.csv"
    write_towers(p, make_towers([(0, 0), (40000, 0)]).towers)
    assert len(read_towers(p)) == 2
    with pytest.raises(InvalidConfig):
        read_towers(p, region=(0, 0, 30000, 30000))


def test_round_trip_identical(small_population, tmp_path):
    index, towers = small_population["index"], small_population["towers"]
    out = tmp_path / "index.csv"
    write_index(out, index, header=["provenance line"])
    again = load_index(out, towers)
    assert again == index
    out2 = tmp_path / "index2.csv"
    write_index(out2, again, header=["provenance line"])
    assert out.read_bytes() == out2.read_bytes()


def test_chunked_parse_matches_serial(small_population):
    serial = small_population["index"]
    parallel = load_index(small_population["cdr"], small_population["towers"], threads=3, min_segment_bytes=4096)
    assert parallel == serial
    assert parallel.report.as_dict() == serial.report.as_dict()


def test_retained_subscribers_invariant(small_population):
    index = small_population["index"]
    assert np.all(index.counts >= 2)
    t = index.time_us
    owner = index.owner()
    same = owner[1:] == owner[:-1]
    assert np.all(np.diff(t)[same] >= 0)


_codes = [a.code for a in ActivityType]


@st.composite
def cdr_files(draw):
    n = draw(st.integers(0, 40))
    subs = draw(st.lists(st.sampled_from(["a", "b", "c", "d"]), min_size=n, max_size=n))
    secs = draw(st.lists(st.integers(0, 12 * 86400 - 1), min_size=n, max_size=n, unique=True))
    towers = draw(st.lists(st.sampled_from(["T000", "T001", "T002"]), min_size=n, max_size=n))
    codes = draw(st.lists(st.sampled_from(_codes), min_size=n, max_size=n))
    return [cdr_line(s, datetime(2008, 7, 4) + timedelta(seconds=x), t, 0, c)
            for s, x, t, c in zip(subs, secs, towers, codes)]


@settings(max_examples=60, deadline=None)
@given(lines=cdr_files(), seed=st.integers(0, 10**6))
def test_permutation_invariance(tmp_path_factory, lines, seed):
    towers = make_towers([(0, 0), (1, 1), (2, 2)])
    root = tmp_path_factory.mktemp("perm")
    shuffled = list(lines)
    random.Random(seed).shuffle(shuffled)
    a, b = root / "a.csv", root / "b.csv"
    a.write_text("".join(lines))
    b.write_text("".join(shuffled))
    ia, ib = load_index(a, towers), load_index(b, towers)
    assert ia == ib
    assert all(ia.counts >= 2)
