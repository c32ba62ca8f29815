import math
from datetime import datetime

import numpy as np
import pytest
from scipy import integrate, stats as sps

from cdrmob.config import StudyConfig, read_kv
from cdrmob.errors import InvalidConfig, InvalidSupport
from cdrmob.ingest import load_index, read_towers
from cdrmob.spatial import VoronoiPartition
from cdrmob.stats import displacements, fit_exponential, fit_truncated_power_law, inter_event_times
from cdrmob.synth import (
    GeneratorConfig,
    TruncatedPowerLawSampler,
    _Walker,
    _allowed_arcs,
    generate_population,
    grid_towers,
    sample_truncated_power_law,
    tower_layout,
)

from conftest import rel


def rng_of(seed):
    return np.random.default_rng(seed)


# ------------------------------------------------------------ sampler


@pytest.mark.parametrize("lo,hi", [(1.0, 50.0), (2.0, math.inf)])
def test_beta_zero_is_truncated_exponential(lo, hi):
    kappa = 10.0
    x = sample_truncated_power_law(0.0, kappa, lo, hi, rng_of(1), 100_000)
    mass = -math.expm1(-(hi - lo) / kappa) if math.isfinite(hi) else 1.0

    def cdf(v):
        return -np.expm1(-(np.asarray(v) - lo) / kappa) / mass

    assert sps.kstest(x, cdf).statistic < 0.01


@pytest.mark.parametrize("lo,hi", [(1.0, 1000.0), (1.0, math.inf), (100.0, 7.23e4)])
def test_histogram_matches_normalised_density(lo, hi):
    beta, kappa = 1.5, 100.0
    if lo == 100.0:
        kappa = 1e4
    n = 200_000
    x = sample_truncated_power_law(beta, kappa, lo, hi, rng_of(2), n)
    assert np.all((x >= lo) & (x <= hi))
    f = lambda v: v**-beta * math.exp(-v / kappa)  # noqa: E731
    top = hi if math.isfinite(hi) else lo + 60 * kappa
    edges = np.geomspace(lo, top, 25)
    z = sum(integrate.quad(f, a, b, limit=200)[0] for a, b in zip(edges[:-1], edges[1:]))
    if not math.isfinite(hi):
        z += integrate.quad(f, top, math.inf)[0]
    counts, _ = np.histogram(x, edges)
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        p = integrate.quad(f, a, b, limit=200)[0] / z
        sigma = math.sqrt(n * p * (1 - p))
        assert abs(c - n * p) <= 4 * sigma + 1, (a, b, c, n * p)


def test_support_collapse():
    x = sample_truncated_power_law(1.5, 100.0, 50.0, 50.0 + 1e-9, rng_of(3), 1000)
    assert np.all(x >= 50.0) and np.all(x <= 50.0 + 1e-9)
    assert x.mean() == pytest.approx(50.0, abs=1e-8)


def test_all_envelopes_agree_in_mean():
    # beta < 1 picks gamma, large kappa picks power, small kappa picks exponential
    for beta, kappa, lo, hi in [(0.5, 10.0, 0.1, math.inf), (1.8, 1e6, 1.0, 1e3), (2.0, 0.5, 5.0, 100.0)]:
        s = TruncatedPowerLawSampler(beta, kappa, lo, hi)
        x = s.sample(rng_of(4), 200_000)
        f = lambda v: v**-beta * math.exp(-v / kappa)  # noqa: E731
        top = hi if math.isfinite(hi) else lo + 80 * kappa
        z = integrate.quad(f, lo, top, limit=400, points=[lo * 10])[0]
        m = integrate.quad(lambda v: v * f(v), lo, top, limit=400, points=[lo * 10])[0] / z
        m2 = integrate.quad(lambda v: v * v * f(v), lo, top, limit=400, points=[lo * 10])[0] / z
        se = math.sqrt((m2 - m * m) / x.size)
        assert abs(float(x.mean()) - m) < 4 * se, (s.method, x.mean(), m, se)
    methods = {TruncatedPowerLawSampler(*a).method for a in
               [(0.5, 10.0, 0.1), (1.8, 1e6, 1.0, 1e3), (2.0, 0.5, 5.0, 100.0)]}
    assert methods == {"gamma", "power", "exponential"}


def test_single_draw_and_bad_support():
    assert isinstance(sample_truncated_power_law(1.0, 10.0, 1.0, 5.0, rng_of(0)), float)
    for args in [(1.5, 100.0, 10.0, 10.0), (1.5, 100.0, 0.0, 10.0), (-1.0, 1.0, 1.0, 2.0), (1.0, 0.0, 1.0, 2.0)]:
        with pytest.raises(InvalidSupport):
            TruncatedPowerLawSampler(*args)


# ---------------------------------------------------------- geometry


def test_allowed_arcs_against_angle_grid():
    rng = rng_of(6)
    box = (0.0, 0.0, 1000.0, 600.0)
    phis = np.linspace(0, 2 * math.pi, 20_001)[:-1]
    for _ in range(200):
        px, py = rng.uniform(0, 1000), rng.uniform(0, 600)
        length = rng.uniform(10, 1300)
        inside = ((px + length * np.cos(phis) >= 0) & (px + length * np.cos(phis) <= 1000)
                  & (py + length * np.sin(phis) >= 0) & (py + length * np.sin(phis) <= 600))
        arcs = _allowed_arcs(px, py, length, box)
        covered = np.zeros_like(inside)
        for lo, w in arcs:
            covered |= ((phis - lo) % (2 * math.pi)) <= w
        # disagreement only within one grid step of an arc boundary
        assert np.mean(covered != inside) < 5e-4
        total = sum(w for _, w in arcs)
        assert abs(total - inside.mean() * 2 * math.pi) < 2e-3


def test_snap_is_nearest_tower_with_jitter():
    cfg = GeneratorConfig(seed=8, grid_nx=15, grid_ny=11, grid_spacing=500.0, grid_jitter=0.5)
    layout = tower_layout(cfg)
    towers = grid_towers(cfg, layout)
    walker = _Walker(cfg, layout, None)
    x0, y0, x1, y1 = cfg.region
    rng = rng_of(9)
    x, y = rng.uniform(x0, x1, 20_000), rng.uniform(y0, y1, 20_000)
    ix, iy = walker.snap(x, y)
    got = ix * cfg.grid_ny + iy
    np.testing.assert_array_equal(got, VoronoiPartition(towers).query(x, y))


def test_snap_without_jitter_within_half_diagonal():
    cfg = GeneratorConfig(grid_nx=9, grid_ny=9, grid_spacing=1000.0)
    layout = tower_layout(cfg)
    walker = _Walker(cfg, layout, None)
    rng = rng_of(10)
    x, y = rng.uniform(0, 8000, 5000), rng.uniform(0, 8000, 5000)
    ix, iy = walker.snap(x, y)
    d = np.hypot(layout[0][ix, iy] - x, layout[1][ix, iy] - y)
    assert d.max() <= 1000.0 * math.sqrt(2) / 2 + 1e-9


def test_jitter_stays_in_region():
    cfg = GeneratorConfig(seed=3, grid_nx=20, grid_ny=20, grid_jitter=0.5)
    tx, ty = tower_layout(cfg)
    x0, y0, x1, y1 = cfg.region
    assert tx.min() >= x0 and tx.max() <= x1 and ty.min() >= y0 and ty.max() <= y1
    lattice = np.arange(20) * cfg.grid_spacing
    assert np.max(np.abs(tx - lattice[:, None])) <= 0.25 * cfg.grid_spacing


# --------------------------------------------------------- populations


def test_zero_subscribers(tmp_path):
    pop = generate_population(GeneratorConfig(n_subscribers=0))
    cdr, man = tmp_path / "c.csv", tmp_path / "m.txt"
    pop.write(cdr, tmp_path / "t.csv", man)
    assert cdr.read_text() == ""
    kv = read_kv(man)
    assert kv["n_records"] == "0" and kv["n_subscribers"] == "0"


def test_same_seed_byte_identical(tmp_path):
    cfg = GeneratorConfig(seed=77, n_subscribers=120, waiting_mu=90.0, grid_jitter=0.3)
    paths = []
    for run in range(2):
        d = tmp_path / str(run)
        d.mkdir()
        generate_population(cfg).write(d / "c.csv", d / "t.csv", d / "m.txt", header=["fixed"])
        paths.append(d)
    for name in ("c.csv", "t.csv", "m.txt"):
        assert (paths[0] / name).read_bytes() == (paths[1] / name).read_bytes()
    other = generate_population(GeneratorConfig(seed=78, n_subscribers=120, waiting_mu=90.0, grid_jitter=0.3))
    assert "".join(other.cdr_lines()) != (paths[0] / "c.csv").read_text().split("\n", 1)[1]


def test_subscribers_independent_of_population_size():
    small = generate_population(GeneratorConfig(seed=5, n_subscribers=12, waiting_mu=200.0))
    large = generate_population(GeneratorConfig(seed=5, n_subscribers=150, waiting_mu=200.0))
    for k in range(12):
        a, b = small.owner == k, large.owner == k
        for col in ("time_us", "tower", "cell", "activity"):
            np.testing.assert_array_equal(getattr(small, col)[a], getattr(large, col)[b])


def test_manifest_matches_ingest(small_population):
    kv = read_kv(small_population["manifest"])
    index = small_population["index"]
    assert int(kv["n_subscribers_retained"]) == len(index)
    assert int(kv["n_records_retained"]) == index.n_records
    assert int(kv["n_records"]) == small_population["pop"].n_records
    assert kv["rng_algorithm"].startswith("numpy.random.PCG64")
    assert int(kv["seed"]) == 21
    assert GeneratorConfig.from_manifest(small_population["manifest"]) == small_population["config"]


def test_records_use_ingest_format(small_population):
    lines = small_population["pop"].cdr_lines()
    fields = lines[0].rstrip("\n").split(",")
    assert len(fields) == 5
    datetime.fromisoformat(fields[1])
    assert small_population["index"].report.dropped == 0


def test_pre_truncation_mean():
    cfg = GeneratorConfig(seed=11, n_subscribers=2500, waiting_mu=1431.0, waiting_min=15.0, waiting_max=1440.0,
                          grid_nx=21, grid_ny=21)
    man = generate_population(cfg).manifest
    assert man["wait_raw_draws"] >= 100_000
    assert rel(man["wait_raw_mean"], 1431.0) < 0.02
    assert man["wait_rejected"] > 0


def test_truncated_power_law_waits():
    cfg = GeneratorConfig(seed=12, n_subscribers=50, waiting_model="truncated_power_law",
                          waiting_beta=0.8, waiting_kappa=300.0, waiting_min=1.0, waiting_max=2000.0)
    pop = generate_population(cfg)
    t = pop.time_us
    same = pop.owner[1:] == pop.owner[:-1]
    waits = np.diff(t)[same] / 60e6
    assert waits.max() <= 2000.0 + 1 / 60
    assert pop.manifest["wait_rejected"] == 0


def test_group_blocks():
    cfg = GeneratorConfig(n_subscribers=10, group_fractions=(0.3, 0.2), group_mus=(5.0, 6.0))
    assert [cfg.group_of(k) for k in range(10)] == [0, 0, 0, 1, 1, 2, 2, 2, 2, 2]
    assert cfg.mean_wait(1) == 6.0 and cfg.mean_wait(2) == cfg.waiting_mu


@pytest.mark.parametrize("kw", [
    {"n_subscribers": -1},
    {"window_end": datetime(2008, 7, 4)},
    {"waiting_mu": 0.0},
    {"waiting_min": 20.0, "waiting_max": 10.0},
    {"jump_min": 100.0, "jump_max": 50.0},
    {"jump_kappa": -1.0},
    {"grid_jitter": 0.7},
    {"grid_nx": 0},
    {"group_fractions": (0.5,), "group_mus": ()},
    {"group_fractions": (0.7, 0.6), "group_mus": (1.0, 2.0)},
    {"waiting_model": "lognormal"},
    {"waiting_model": "truncated_power_law", "waiting_min": 0.0},
])
def test_invalid_config(kw):
    with pytest.raises(InvalidConfig):
        GeneratorConfig(**kw)


def test_config_file_parsing(tmp_path):
    p = tmp_path / "g.cfg"
    p.write_text("seed = 4\nn_subscribers = 7\nwaiting_mu = 30\ngroup_mus = 1, 2\ngroup_fractions = 0.1, 0.2\n")
    cfg = GeneratorConfig.from_file(p)
    assert (cfg.seed, cfg.n_subscribers, cfg.waiting_mu, cfg.group_mus) == (4, 7, 30.0, (1.0, 2.0))
    p.write_text("sede = 4\n")
    with pytest.raises(InvalidConfig):
        GeneratorConfig.from_file(p)
    p.write_text("n_subscribers = many\n")
    with pytest.raises(InvalidConfig):
        GeneratorConfig.from_file(p)


# ---------------------------------------------- recovery through ingest


def _ingest(cfg, tmp_path):
    pop = generate_population(cfg)
    cdr, tw = tmp_path / "c.csv", tmp_path / "t.csv"
    pop.write(cdr, tw)
    study = StudyConfig(window_start=cfg.window_start, window_end=cfg.window_end)
    towers = read_towers(tw)
    return load_index(cdr, towers, study), towers


def test_pipeline_recovers_waiting_mean(tmp_path):
    cfg = GeneratorConfig(seed=2, n_subscribers=500, waiting_mu=1431.0,
                          window_end=datetime(2009, 1, 20), grid_nx=21, grid_ny=21)
    index, _ = _ingest(cfg, tmp_path)
    dt = inter_event_times(index, None).dt
    assert dt.size >= 100_000
    assert rel(fit_exponential(dt).params["mu"], 1431.0) < 0.02


def test_pipeline_recovers_jump_law(tmp_path):
    # spacing kappa/20 with jittered towers, fit above six spacings
    cfg = GeneratorConfig(seed=1, n_subscribers=4000, waiting_mu=17.28, window_end=datetime(2008, 7, 9),
                          grid_nx=207, grid_ny=207, grid_spacing=500.0, grid_jitter=0.5)
    index, towers = _ingest(cfg, tmp_path)
    dr = displacements(index, towers).dr
    fit = fit_truncated_power_law(dr[dr > 0], 3000.0, 7.23e4)
    assert fit.n >= 100_000
    assert rel(fit.params["beta"], 1.5) < 0.05
    assert rel(fit.params["kappa"], 1e4) < 0.05
