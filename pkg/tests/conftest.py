import math
from datetime import datetime, timedelta

import numpy as np
import pytest

from cdrmob.config import StudyConfig
from cdrmob.ingest import Tower, TowerMap, load_index, read_towers
from cdrmob.synth import GeneratorConfig, generate_population


def make_towers(points, cells=3):
    return TowerMap(Tower(f"T{i:03d}", float(x), float(y), cells) for i, (x, y) in enumerate(points))


def cdr_line(sid, when, tower, cell=0, code="CALL_OUT"):
    if isinstance(when, datetime):
        when = when.isoformat()
    return f"{sid},{when},{tower},{cell},{code}\n"


@pytest.fixture
def grid_towers():
    pts = [(x, y) for x in range(0, 30001, 5000) for y in range(0, 30001, 5000)]
    return make_towers(pts)


@pytest.fixture
def write_cdr(tmp_path):
    counter = iter(range(10**6))

    def _write(lines, name=None):
        path = tmp_path / (name or f"cdr_{next(counter)}.csv")
        path.write_text("".join(lines), encoding="utf-8")
        return path

    return _write


@pytest.fixture(scope="session")
def small_population(tmp_path_factory):
    """A 300-subscriber population written to disk and re-ingested."""
    root = tmp_path_factory.mktemp("pop")
    cfg = GeneratorConfig(seed=21, n_subscribers=300, waiting_mu=120.0)
    pop = generate_population(cfg)
    cdr, towers_path, manifest = root / "pop.csv", root / "towers.csv", root / "manifest.txt"
    pop.write(cdr, towers_path, manifest)
    towers = read_towers(towers_path)
    index = load_index(cdr, towers, StudyConfig(), threads=1)
    return {"config": cfg, "pop": pop, "cdr": cdr, "towers_path": towers_path,
            "manifest": manifest, "towers": towers, "index": index}


def random_walk_points(rng, n, sites=None):
    """Points drawn with repetition from a handful of random sites."""
    k = sites or int(rng.integers(3, 12))
    centres = rng.uniform(-5e4, 5e4, size=(k, 2)) * rng.uniform(0.01, 1.0)
    pick = rng.integers(0, k, size=n)
    return centres[pick]


def base_time():
    return datetime(2008, 7, 4)


def minutes(m):
    return timedelta(minutes=m)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


__all__ = ["make_towers", "cdr_line", "random_walk_points", "base_time", "minutes", "rel", "math", "np"]
