import math
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdrmob.config import StudyConfig
from cdrmob.errors import EmptyPartition, OverlappingConfig, UnmappedTower
from cdrmob.ingest import ActivityType, CdrRecord, Tower, TowerMap, build_subscriber_index
from cdrmob.spatial import (
    SECTOR_NAMES,
    Sector,
    VoronoiPartition,
    build_sectors,
    density_table,
    nearest_tower,
    read_sector_config,
    write_sector_config,
)

from conftest import make_towers


def brute_nearest(tx, ty, px, py):
    # linear scan; first minimum wins, and towers are id-ordered
    out = np.empty(len(px), dtype=np.int64)
    for i in range(len(px)):
        d = (tx - px[i]) ** 2 + (ty - py[i]) ** 2
        out[i] = int(np.argmin(d))
    return out


def test_single_tower_everywhere():
    part = VoronoiPartition(make_towers([(5, 5)]))
    for p in [(0, 0), (-1e9, 3e9), (5, 5)]:
        assert nearest_tower(p, part) == "T000"


def test_empty_partition():
    with pytest.raises(EmptyPartition):
        VoronoiPartition(TowerMap([]))


def test_equidistant_goes_to_lowest_id():
    part = VoronoiPartition(make_towers([(10, 0), (-10, 0)]))
    assert nearest_tower((0, 0), part) == "T000"
    assert nearest_tower((0, 123.5), part) == "T000"


def test_many_way_tie_beyond_k():
    # eight integer points on a radius-100 circle, all tied for the centre
    pts = [(100, 0), (0, 100), (-100, 0), (0, -100), (60, 80), (-60, 80), (60, -80), (-80, -60)]
    ids = [f"T{9 - i:03d}" for i in range(len(pts))]  # reversed ids so the lowest sits last
    towers = TowerMap(Tower(t, x, y, 1) for t, (x, y) in zip(ids, pts))
    part = VoronoiPartition(towers)
    assert part.nearest(0.0, 0.0) == min(ids)


def test_random_points_match_scan():
    rng = np.random.default_rng(1)
    tx, ty = rng.uniform(0, 3e4, 1000), rng.uniform(0, 3e4, 1000)
    px, py = rng.uniform(-1e3, 3.1e4, 10_000), rng.uniform(-1e3, 3.1e4, 10_000)
    part = VoronoiPartition(make_towers(zip(tx, ty)))
    np.testing.assert_array_equal(part.query(px, py), brute_nearest(tx, ty, px, py))


def test_lattice_ties_match_scan():
    # integer lattice with points on cell edges and corners: plenty of exact ties
    g = np.arange(0, 10) * 100.0
    tx, ty = [a.ravel() for a in np.meshgrid(g, g, indexing="ij")]
    q = np.arange(-50, 1000, 25.0)
    px, py = [a.ravel() for a in np.meshgrid(q, q, indexing="ij")]
    part = VoronoiPartition(make_towers(zip(tx, ty)))
    np.testing.assert_array_equal(part.query(px, py), brute_nearest(tx, ty, px, py))


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    shift=st.tuples(st.integers(-10**6, 10**6), st.integers(-10**6, 10**6)),
)
def test_translation_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    # integer coordinates so shifted distances are computed exactly
    tx, ty = rng.integers(0, 5000, 50).astype(float), rng.integers(0, 5000, 50).astype(float)
    px, py = rng.integers(0, 5000, 200).astype(float), rng.integers(0, 5000, 200).astype(float)
    a = VoronoiPartition(make_towers(zip(tx, ty))).query(px, py)
    dx, dy = shift
    b = VoronoiPartition(make_towers(zip(tx + dx, ty + dy))).query(px + dx, py + dy)
    np.testing.assert_array_equal(a, b)


def quadrant_oracle(dx, dy):
    # rotated axes: each half-open quadrant keeps the diagonal on its
    # counter-clockwise end
    u, v = dx + dy, dy - dx
    if u > 0 and v <= 0:
        return "East"
    if u >= 0 and v > 0:
        return "North"
    if u < 0 and v >= 0:
        return "West"
    return "South"


def test_due_north_outside_rectangle():
    towers = make_towers([(15000, 28000)])
    sectors = {s.sector_id: s.tower_ids for s in build_sectors(towers)}
    assert sectors["North"] == {"T000"}


def test_grid_sectors_match_quadrant_oracle():
    pts = [(x, y) for x in range(0, 30001, 1000) for y in range(0, 30001, 1000)]
    towers = make_towers(pts)
    cfg = StudyConfig()
    x0, y0, x1, y1 = cfg.center_rect
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    got = {tid: s.sector_id for s in build_sectors(towers, config=cfg) for tid in s.tower_ids}
    for t in towers.towers:
        inside = x0 <= t.x <= x1 and y0 <= t.y <= y1
        want = "Center" if inside else quadrant_oracle(t.x - cx, t.y - cy)
        assert got[t.tower_id] == want, t
    assert len(got) == len(towers)


def test_sectors_disjoint_and_covering(grid_towers):
    sectors = build_sectors(grid_towers)
    assert [s.sector_id for s in sectors] == list(SECTOR_NAMES)
    union = set().union(*(s.tower_ids for s in sectors))
    assert union == set(grid_towers.ids)
    assert sum(len(s.tower_ids) for s in sectors) == len(grid_towers)


def test_mapping_all_center(grid_towers):
    sectors = build_sectors(grid_towers, {t: "center" for t in grid_towers.ids})
    sizes = {s.sector_id: len(s.tower_ids) for s in sectors}
    assert sizes["Center"] == len(grid_towers)
    assert sum(1 for v in sizes.values() if v == 0) == 4


def test_mapping_missing_tower(grid_towers):
    mapping = {t: "North" for t in grid_towers.ids[1:]}
    with pytest.raises(UnmappedTower):
        build_sectors(grid_towers, mapping)


def test_sector_file_conflict(tmp_path, grid_towers):
    p = tmp_path / "sectors.csv"
    write_sector_config(p, build_sectors(grid_towers))
    assert build_sectors(grid_towers, read_sector_config(p)) == build_sectors(grid_towers)
    p.write_text("tower_id,sector_name\nT000,North\nT000,South\n")
    with pytest.raises(OverlappingConfig):
        read_sector_config(p)


def test_density_overlapping_sectors(grid_towers):
    index = build_subscriber_index([])
    sectors = [Sector("Center", frozenset({"T000"})), Sector("North", frozenset({"T000"}))]
    with pytest.raises(OverlappingConfig):
        density_table(index, sectors)


def _records(tower_of, n, rng):
    t0 = datetime(2008, 7, 4)
    out = []
    for i in range(n):
        when = t0 + timedelta(seconds=int(rng.integers(0, 12 * 86400)))
        out.append(CdrRecord(f"S{i % 50}", when, tower_of(i), "0", ActivityType.CALL_IN))
    return out


def test_all_center_ratio_one(grid_towers):
    sectors = build_sectors(grid_towers)
    centre = sorted(next(s for s in sectors if s.sector_id == "Center").tower_ids)
    rng = np.random.default_rng(3)
    index = build_subscriber_index(_records(lambda i: centre[i % len(centre)], 500, rng))
    table = density_table(index, sectors, VoronoiPartition(grid_towers))
    c = table.sectors.index("Center")
    occupied = table.hour_counts.sum(axis=0) > 0
    np.testing.assert_array_equal(table.hour_ratio[c, occupied], 1.0)
    assert np.all(np.isnan(table.hour_ratio[:, ~occupied]))


def test_empty_bins_are_nan(grid_towers):
    sectors = build_sectors(grid_towers)
    t = datetime(2008, 7, 7, 9, 30)
    recs = [CdrRecord("A", t, "T000", "0", ActivityType.CALL_IN),
            CdrRecord("A", t + timedelta(minutes=20), "T000", "0", ActivityType.CALL_IN)]
    table = density_table(build_subscriber_index(recs), sectors)
    assert table.hour_counts[:, 9].sum() == 2
    for h in range(24):
        if h != 9:
            assert np.all(np.isnan(table.hour_ratio[:, h]))
    rows = [r for r in table.rows() if r[0] == "hour" and r[1] == "10"]
    assert all(math.isnan(r[4]) for r in rows)


def test_default_table_shape_and_partition(small_population):
    index, towers = small_population["index"], small_population["towers"]
    table = density_table(index, build_sectors(towers), VoronoiPartition(towers))
    assert table.day_counts.shape == (5, 12)
    assert table.hour_counts.shape == (5, 24)
    assert table.hour_counts.sum() == index.n_records
    assert table.day_counts.sum() == index.n_records
    for ratio, counts in ((table.hour_ratio, table.hour_counts), (table.day_ratio, table.day_counts)):
        nz = counts.sum(axis=0) > 0
        np.testing.assert_allclose(ratio[:, nz].sum(axis=0), 1.0, atol=1e-9)
    for share, counts in ((table.hour_share, table.hour_counts), (table.day_share, table.day_counts)):
        nz = counts.sum(axis=1) > 0
        np.testing.assert_allclose(share[nz].sum(axis=1), 1.0, atol=1e-9)


def test_uniform_placement_binomial():
    # five sectors with four towers each; records land on a uniformly random tower
    towers = make_towers([(i * 100, 0) for i in range(20)])
    sectors = [Sector(name, frozenset(f"T{4 * k + j:03d}" for j in range(4)))
               for k, name in enumerate(SECTOR_NAMES)]
    rng = np.random.default_rng(11)
    n = 60_000
    picks = rng.integers(0, 20, n)
    index = build_subscriber_index(_records(lambda i: f"T{picks[i]:03d}", n, rng))
    table = density_table(index, sectors, VoronoiPartition(towers))
    for counts, ratio in ((table.hour_counts, table.hour_ratio), (table.day_counts, table.day_ratio)):
        per_bin = counts.sum(axis=0)
        sigma = np.sqrt(0.2 * 0.8 / per_bin)
        assert np.all(np.abs(ratio - 0.2) <= 3 * sigma)
