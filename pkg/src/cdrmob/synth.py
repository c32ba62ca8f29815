"""Synthetic CDR populations with known ground truth.

Each subscriber is an independent random walker over a grid of towers:
waiting times come from an exponential or truncated power law, jump lengths
from a truncated power law, directions are uniform.  After every jump the
walker moves to the tower nearest its landing point and continues from
there.

Towers sit on a regular lattice, optionally jittered.  On a bare lattice
tower-to-tower distances take few distinct values near the grid scale, which
distorts fits whose lower bound is only a few spacings; a jitter of up to
half a spacing removes that degeneracy.

Randomness: numpy's PCG64 bit generator.  Subscriber ``k`` draws from
``PCG64(SeedSequence(seed, spawn_key=(k,)))``, which makes each walk
independent of the others and of generation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from datetime import datetime
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from . import tpl
from .config import (
    DEFAULT_WINDOW,
    parse_datetime,
    parse_floats,
    read_kv,
    split_list,
    write_kv,
)
from .errors import InvalidConfig, InvalidSupport
from .ingest import ACTIVITY_CODES, Tower, TowerMap, format_timestamps, to_us, write_towers

LAYOUT_SPAWN_KEY = (0, 1)
RNG_ALGORITHM = "numpy.random.PCG64 seeded by SeedSequence(seed, spawn_key=(subscriber_ordinal,))"


# ----------------------------------------------------------------- sampler


class TruncatedPowerLawSampler:
    """Exact rejection sampler for ``x**-beta exp(-x/kappa)`` on ``[x_min, x_max]``.

    Three envelopes are available and the one with the best acceptance rate
    is used: a pure power law (accept with ``exp(-(x - x_min)/kappa)``), a
    shifted exponential (accept with ``(x/x_min)**-beta``) and, for
    ``beta < 1``, the matching gamma law restricted to the support.
    """

    def __init__(self, beta: float, kappa: float, x_min: float, x_max: float = math.inf):
        if not (x_min > 0 and x_max > x_min):
            raise InvalidSupport(f"need 0 < x_min < x_max, got [{x_min}, {x_max}]")
        if not (beta >= 0 and kappa > 0 and math.isfinite(beta)):
            raise InvalidSupport(f"need beta >= 0 and kappa > 0, got beta={beta}, kappa={kappa}")
        self.beta, self.kappa, self.x_min, self.x_max = float(beta), float(kappa), float(x_min), float(x_max)
        a, b = self.x_min, self.x_max
        lam = 1.0 / kappa
        log_z = tpl.log_normaliser(beta, lam, a, b)
        rates: dict[str, float] = {}
        # power-law envelope: x**-beta on [a, b]
        if beta != 1.0:
            e = 1.0 - beta
            if math.isfinite(b) or beta > 1:
                hi = b**e if math.isfinite(b) else 0.0
                log_pl = math.log(abs(hi - a**e) / abs(e))
                rates["power"] = math.exp(log_z - log_pl + lam * a)
        else:
            if math.isfinite(b):
                rates["power"] = math.exp(log_z - math.log(math.log(b / a)) + lam * a)
        # exponential envelope: a**-beta exp(-x lam) on [a, b]
        mass = -math.expm1(-lam * (b - a)) if math.isfinite(b) else 1.0
        log_exp = -beta * math.log(a) - lam * a + math.log(kappa * mass)
        rates["exponential"] = math.exp(log_z - log_exp)
        if beta < 1:
            log_gamma = gammaln(1.0 - beta) + (1.0 - beta) * math.log(kappa)
            rates["gamma"] = math.exp(log_z - log_gamma)
        self.method = max(rates, key=rates.get)
        self.acceptance = min(1.0, rates[self.method])

    def _propose(self, rng: np.random.Generator, m: int) -> np.ndarray:
        a, b, beta, kappa = self.x_min, self.x_max, self.beta, self.kappa
        if self.method == "power":
            u = rng.random(m)
            if beta == 1.0:
                x = a * (b / a) ** u
            else:
                e = 1.0 - beta
                hi = b**e if math.isfinite(b) else 0.0
                x = (a**e + u * (hi - a**e)) ** (1.0 / e)
            keep = rng.random(m) < np.exp(-(x - a) / kappa)
        elif self.method == "exponential":
            u = rng.random(m)
            if math.isfinite(b):
                x = a - kappa * np.log1p(-u * -math.expm1(-(b - a) / kappa))
            else:
                x = a - kappa * np.log1p(-u)
            keep = rng.random(m) < (x / a) ** -beta
        else:
            x = rng.gamma(1.0 - beta, kappa, size=m)
            keep = (x >= a) & (x <= b)
        x = x[keep]
        # guard against rounding just outside the support
        return x[(x >= a) & (x <= b)]

    def sample(self, rng: np.random.Generator, size: int | None = None):
        want = 1 if size is None else int(size)
        parts: list[np.ndarray] = []
        have = 0
        while have < want:
            m = int(min(1 << 22, math.ceil((want - have) / max(self.acceptance, 1e-6) * 1.1) + 16))
            got = self._propose(rng, m)
            parts.append(got)
            have += got.size
        out = np.concatenate(parts)[:want]
        return float(out[0]) if size is None else out


def sample_truncated_power_law(beta: float, kappa: float, x_min: float, x_max: float,
                               rng: np.random.Generator, size: int | None = None):
    """Draw from ``p(x) ∝ x**-beta exp(-x/kappa)`` on ``[x_min, x_max]``."""
    return TruncatedPowerLawSampler(beta, kappa, x_min, x_max).sample(rng, size)


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class GeneratorConfig:
    """Ground truth for a synthetic population.

    Waiting times are in minutes, lengths in meters.  ``waiting_min`` and
    ``waiting_max`` truncate the waiting law by rejection.  Subscribers are
    split into consecutive ordinal blocks by ``group_fractions``; block ``g``
    waits with mean ``group_mus[g]`` and the remainder uses ``waiting_mu``.
    """

    seed: int = 0
    n_subscribers: int = 1000
    window_start: datetime = DEFAULT_WINDOW[0]
    window_end: datetime = DEFAULT_WINDOW[1]
    waiting_model: str = "exponential"
    waiting_mu: float = 1431.0
    waiting_beta: float = 1.0
    waiting_kappa: float = 1431.0
    waiting_min: float = 0.0
    waiting_max: float = math.inf
    jump_beta: float = 1.5
    jump_kappa: float = 1.0e4
    jump_min: float = 100.0
    jump_max: float = 7.23e4
    grid_x0: float = 0.0
    grid_y0: float = 0.0
    grid_nx: int = 61
    grid_ny: int = 61
    grid_spacing: float = 500.0
    grid_jitter: float = 0.0
    cells_per_tower: int = 3
    group_fractions: tuple[float, ...] = ()
    group_mus: tuple[float, ...] = ()

    def __post_init__(self):
        if self.n_subscribers < 0:
            raise InvalidConfig("n_subscribers must be non-negative")
        if not self.window_start < self.window_end:
            raise InvalidConfig("window must be non-empty")
        if self.waiting_model not in ("exponential", "truncated_power_law"):
            raise InvalidConfig(f"unknown waiting_model {self.waiting_model!r}")
        positive = ["waiting_mu", "waiting_kappa", "jump_kappa", "jump_min", "jump_max", "grid_spacing"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"{name} must be positive")
        if self.waiting_beta < 0 or self.jump_beta < 0:
            raise InvalidConfig("exponents must be non-negative")
        if not (0 <= self.waiting_min < self.waiting_max):
            raise InvalidConfig("waiting truncation bounds must satisfy 0 <= min < max")
        if self.waiting_model == "truncated_power_law" and self.waiting_min <= 0:
            raise InvalidConfig("a power-law waiting model needs waiting_min > 0")
        if not self.jump_min < self.jump_max:
            raise InvalidConfig("jump truncation bounds must satisfy min < max")
        if not 0 <= self.grid_jitter <= 0.5:
            raise InvalidConfig("grid_jitter must lie in [0, 0.5]")
        if self.grid_nx < 1 or self.grid_ny < 1 or self.cells_per_tower < 1:
            raise InvalidConfig("grid sizes and cells_per_tower must be at least 1")
        if len(self.group_fractions) != len(self.group_mus):
            raise InvalidConfig("group_fractions and group_mus must have equal length")
        if any(f <= 0 for f in self.group_fractions) or sum(self.group_fractions) > 1 + 1e-12:
            raise InvalidConfig("group fractions must be positive and sum to at most 1")
        if any(m <= 0 for m in self.group_mus):
            raise InvalidConfig("group means must be positive")

    @property
    def region(self) -> tuple[float, float, float, float]:
        return (self.grid_x0, self.grid_y0,
                self.grid_x0 + (self.grid_nx - 1) * self.grid_spacing,
                self.grid_y0 + (self.grid_ny - 1) * self.grid_spacing)

    def group_of(self, ordinal: int) -> int:
        """Activity group of a subscriber ordinal; ``len(group_mus)`` = default."""
        edge = 0.0
        for g, f in enumerate(self.group_fractions):
            edge += f * self.n_subscribers
            if ordinal < round(edge):
                return g
        return len(self.group_fractions)

    def mean_wait(self, group: int) -> float:
        return self.group_mus[group] if group < len(self.group_mus) else self.waiting_mu

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "GeneratorConfig":
        kw: dict[str, object] = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, raw in values.items():
            if key not in types:
                raise InvalidConfig(f"unknown generator setting {key!r}")
            if key in ("window_start", "window_end"):
                kw[key] = parse_datetime(raw, key)
            elif key == "waiting_model":
                kw[key] = raw.strip()
            elif key in ("group_fractions", "group_mus"):
                kw[key] = parse_floats(raw, key=key) if split_list(raw) else ()
            elif types[key] in ("int", int):
                try:
                    kw[key] = int(raw)
                except ValueError:
                    raise InvalidConfig(f"{key}: expected an integer, got {raw!r}") from None
            else:
                try:
                    kw[key] = float(raw)
                except ValueError:
                    raise InvalidConfig(f"{key}: expected a number, got {raw!r}") from None
        return cls(**kw)

    @classmethod
    def from_file(cls, path: str | Path) -> "GeneratorConfig":
        return cls.from_mapping(read_kv(path))

    @classmethod
    def from_manifest(cls, path: str | Path) -> "GeneratorConfig":
        """Rebuild the configuration recorded in a manifest file."""
        names = {f.name for f in fields(cls)}
        return cls.from_mapping({k: v for k, v in read_kv(path).items() if k in names})

    def to_mapping(self) -> dict[str, object]:
        out: dict[str, object] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.isoformat() if isinstance(v, datetime) else v
        return out


# --------------------------------------------------------------- generator


@dataclass
class Population:
    """Generated records (columns, grouped by subscriber and time-sorted)."""

    config: GeneratorConfig
    towers: TowerMap
    subscribers: list[str]
    owner: np.ndarray
    time_us: np.ndarray
    tower: np.ndarray
    cell: np.ndarray
    activity: np.ndarray
    manifest: dict[str, object] = field(default_factory=dict)

    @property
    def n_records(self) -> int:
        return int(self.time_us.size)

    def cdr_lines(self) -> list[str]:
        ts = format_timestamps(self.time_us)
        ids = self.towers.ids
        subs = self.subscribers
        return [
            f"{subs[o]},{t},{ids[tw]},{c},{ACTIVITY_CODES[a]}\n"
            for o, t, tw, c, a in zip(self.owner.tolist(), ts, self.tower.tolist(),
                                      self.cell.tolist(), self.activity.tolist())
        ]

    def write(self, cdr_path: str | Path, towers_path: str | Path | None = None,
              manifest_path: str | Path | None = None, header: Sequence[str] = ()) -> None:
        with open(cdr_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("".join(f"# {h}\n" for h in header))
            fh.write("".join(self.cdr_lines()))
        if towers_path is not None:
            write_towers(towers_path, self.towers.towers, header)
        if manifest_path is not None:
            write_kv(manifest_path, self.manifest, header=[*header, "synthetic population ground truth"])


def tower_layout(config: GeneratorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Tower coordinates as ``(nx, ny)`` arrays.

    Lattice points are displaced by up to ``grid_jitter * grid_spacing / 2``
    per axis (then clipped to the region).  Jitter uses its own stream,
    ``SeedSequence(seed, spawn_key=LAYOUT_SPAWN_KEY)``.
    """
    ix, iy = np.meshgrid(np.arange(config.grid_nx), np.arange(config.grid_ny), indexing="ij")
    tx = config.grid_x0 + ix * config.grid_spacing
    ty = config.grid_y0 + iy * config.grid_spacing
    if config.grid_jitter > 0:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed, spawn_key=LAYOUT_SPAWN_KEY)))
        half = config.grid_jitter * config.grid_spacing / 2.0
        x0, y0, x1, y1 = config.region
        tx = np.clip(tx + rng.uniform(-half, half, tx.shape), x0, x1)
        ty = np.clip(ty + rng.uniform(-half, half, ty.shape), y0, y1)
    return tx.astype(float), ty.astype(float)


def grid_towers(config: GeneratorConfig, layout=None) -> TowerMap:
    tx, ty = layout if layout is not None else tower_layout(config)
    width = len(str(max(config.grid_nx, config.grid_ny) - 1))
    return TowerMap(
        Tower(f"T{ix:0{width}d}_{iy:0{width}d}", float(tx[ix, iy]), float(ty[ix, iy]), config.cells_per_tower)
        for ix in range(config.grid_nx) for iy in range(config.grid_ny)
    )


class _WaitDrawer:
    def __init__(self, config: GeneratorConfig):
        self.config = config
        self.raw_draws = 0
        self.raw_sum = 0.0
        self.rejected = 0
        self.samplers: dict[int, TruncatedPowerLawSampler] = {}
        if config.waiting_model == "truncated_power_law":
            self.tpl = TruncatedPowerLawSampler(config.waiting_beta, config.waiting_kappa,
                                                config.waiting_min, config.waiting_max)

    def draw(self, rng: np.random.Generator, group: int, m: int) -> np.ndarray:
        cfg = self.config
        if cfg.waiting_model == "truncated_power_law":
            w = self.tpl.sample(rng, m)
            self.raw_draws += m
            self.raw_sum += float(w.sum())
            return w
        w = rng.exponential(cfg.mean_wait(group), size=m)
        self.raw_draws += m
        self.raw_sum += float(w.sum())
        ok = (w >= cfg.waiting_min) & (w <= cfg.waiting_max)
        self.rejected += int(m - ok.sum())
        return w[ok]


def _allowed_arcs(px: float, py: float, length: float,
                  box: tuple[float, float, float, float]) -> list[tuple[float, float]]:
    """Angles ``(start, width)`` keeping ``p + length*(cos, sin)`` inside ``box``."""
    x0, y0, x1, y1 = box
    banned = []
    a = (x1 - px) / length
    if a < 1:
        t = math.acos(max(a, -1.0))
        banned.append((-t, t))
    b = (x0 - px) / length
    if b > -1:
        t = math.acos(min(b, 1.0))
        banned.append((t, 2 * math.pi - t))
    c = (y1 - py) / length
    if c < 1:
        t = math.asin(max(c, -1.0))
        banned.append((t, math.pi - t))
    e = (y0 - py) / length
    if e > -1:
        t = math.asin(min(e, 1.0))
        banned.append((math.pi - t, 2 * math.pi + t))
    tau = 2 * math.pi
    pieces = []
    for lo, hi in banned:
        width = hi - lo
        lo %= tau
        hi = lo + width
        if hi > tau:
            pieces += [(lo, tau), (0.0, hi - tau)]
        else:
            pieces.append((lo, hi))
    pieces.sort()
    arcs, cursor = [], 0.0
    for lo, hi in pieces:
        if lo > cursor:
            arcs.append((cursor, lo - cursor))
        cursor = max(cursor, hi)
    if cursor < tau:
        arcs.append((cursor, tau - cursor))
    return [(lo, w) for lo, w in arcs if w > 0]


def _turn_inside(rng, sampler, px, py, length, box) -> tuple[float, float, int]:
    """Direction (and, if unavoidable, a new length) keeping the jump inside.

    The direction is drawn uniformly from the arcs that stay inside ``box``,
    so the length law is untouched; a length is redrawn only when it exceeds
    the distance to the farthest corner.  Returns ``(length, phi, redraws)``.
    """
    x0, y0, x1, y1 = box
    reach = math.hypot(max(px - x0, x1 - px), max(py - y0, y1 - py))
    redrawn = 0
    while True:
        if length <= reach:
            arcs = _allowed_arcs(px, py, length, box)
            if arcs:
                break
        redrawn += 1
        length = sampler.sample(rng)
    u = rng.random() * sum(w for _, w in arcs)
    phi = arcs[-1][0] + arcs[-1][1]
    for lo, w in arcs:
        if u <= w:
            phi = lo + u
            break
        u -= w
    return length, phi, redrawn


class _Walker:
    """Advances every subscriber's walk one step at a time, all at once.

    Each subscriber keeps its own generator, and the rare boundary draws are
    taken from it in step order, so results do not depend on how many other
    subscribers walk alongside.
    """

    def __init__(self, config: GeneratorConfig, layout: tuple[np.ndarray, np.ndarray], sampler):
        self.cfg = config
        self.tx, self.ty = layout
        self.sampler = sampler
        self.turned = 0
        self.redrawn = 0
        if config.grid_jitter > 0:
            # a jitter of at most a quarter spacing per axis keeps the nearest
            # tower inside the 3x3 block around the nearest lattice point
            self.offsets = [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)]
        else:
            self.offsets = [(0, 0)]

    def snap(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cfg = self.cfg
        cx = np.clip(np.rint((x - cfg.grid_x0) / cfg.grid_spacing), 0, cfg.grid_nx - 1).astype(np.int64)
        cy = np.clip(np.rint((y - cfg.grid_y0) / cfg.grid_spacing), 0, cfg.grid_ny - 1).astype(np.int64)
        if len(self.offsets) == 1:
            return cx, cy
        gx = np.stack([np.clip(cx + a, 0, cfg.grid_nx - 1) for a, _ in self.offsets])
        gy = np.stack([np.clip(cy + b, 0, cfg.grid_ny - 1) for _, b in self.offsets])
        d2 = (self.tx[gx, gy] - x) ** 2 + (self.ty[gx, gy] - y) ** 2
        # candidates are listed in identifier order, argmin keeps the first
        pick = np.argmin(d2, axis=0)
        cols = np.arange(x.size)
        return gx[pick, cols], gy[pick, cols]

    def run(self, rngs, start_ix, start_iy, lengths, angles) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Tower grid indices along every walk, concatenated per subscriber."""
        steps = np.array([l.size for l in lengths], dtype=np.int64)
        n_sub = steps.size
        pos_off = np.zeros(n_sub + 1, dtype=np.int64)
        np.cumsum(steps + 1, out=pos_off[1:])
        step_off = pos_off[:-1] - np.arange(n_sub)
        L = np.concatenate(lengths) if n_sub else np.zeros(0)
        PHI = np.concatenate(angles) if n_sub else np.zeros(0)
        IX = np.empty(pos_off[-1], dtype=np.int64)
        IY = np.empty(pos_off[-1], dtype=np.int64)
        cur_x, cur_y = np.asarray(start_ix, dtype=np.int64), np.asarray(start_iy, dtype=np.int64)
        IX[pos_off[:-1]], IY[pos_off[:-1]] = cur_x, cur_y
        order = np.argsort(-steps, kind="stable")
        ranked = steps[order]
        box = self.cfg.region
        x0, y0, x1, y1 = box
        for k in range(int(ranked[0]) if n_sub else 0):
            act = order[: int(np.searchsorted(-ranked, -k, side="left"))]
            px = self.tx[cur_x[act], cur_y[act]]
            py = self.ty[cur_x[act], cur_y[act]]
            idx = step_off[act] + k
            ln, ph = L[idx], PHI[idx]
            nx, ny = px + ln * np.cos(ph), py + ln * np.sin(ph)
            out = np.flatnonzero((nx < x0) | (nx > x1) | (ny < y0) | (ny > y1))
            for j in out.tolist():
                sub = int(act[j])
                length, phi, r = _turn_inside(rngs[sub], self.sampler, float(px[j]), float(py[j]),
                                              float(ln[j]), box)
                self.turned += 1
                self.redrawn += r
                nx[j] = px[j] + length * math.cos(phi)
                ny[j] = py[j] + length * math.sin(phi)
            sx, sy = self.snap(nx, ny)
            cur_x[act], cur_y[act] = sx, sy
            IX[pos_off[act] + k + 1], IY[pos_off[act] + k + 1] = sx, sy
        return IX, IY, pos_off


def _wait_times(rng, waits: _WaitDrawer, group: int, mean: float, t0: int, t1: int) -> np.ndarray:
    """Activity times (whole seconds, microsecond units) inside ``[t0, t1)``."""
    span = (t1 - t0) / 60e6
    chunk = int(span / max(mean, 1e-9) * 1.2) + 8
    parts, offset = [], 0.0
    while offset < span:
        c = offset + np.cumsum(waits.draw(rng, group, chunk))
        parts.append(c)
        if c.size:
            offset = float(c[-1])
    cum = np.concatenate(parts)
    t = t0 + np.round(cum * 60.0).astype(np.int64) * 1_000_000
    return t[t < t1]


def generate_population(config: GeneratorConfig) -> Population:
    """Simulate every subscriber and collect records plus a manifest.

    Per subscriber the stream is consumed in a fixed order: waiting times,
    jump lengths, start cell, directions, boundary corrections, cell ids,
    activity codes.
    """
    layout = tower_layout(config)
    towers = grid_towers(config, layout)
    width = len(str(max(config.n_subscribers - 1, 0)))
    names = [f"S{k:0{width}d}" for k in range(config.n_subscribers)]
    jumps = TruncatedPowerLawSampler(config.jump_beta, config.jump_kappa, config.jump_min, config.jump_max)
    waits = _WaitDrawer(config)
    t0, t1 = to_us(config.window_start), to_us(config.window_end)
    ordinals, rngs, times, lengths, angles, sx, sy = [], [], [], [], [], [], []
    for k in range(config.n_subscribers):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed, spawn_key=(k,))))
        group = config.group_of(k)
        mean = config.mean_wait(group) if config.waiting_model == "exponential" else config.waiting_kappa
        t = _wait_times(rng, waits, group, mean, t0, t1)
        n = t.size
        ln = jumps.sample(rng, n - 1) if n > 1 else np.zeros(0)
        if n:
            sx.append(int(rng.integers(config.grid_nx)))
            sy.append(int(rng.integers(config.grid_ny)))
            ordinals.append(k)
            rngs.append(rng)
            times.append(t)
            lengths.append(ln)
            angles.append(rng.uniform(0.0, 2.0 * math.pi, size=ln.size))
    walker = _Walker(config, layout, jumps)
    IX, IY, off = walker.run(rngs, sx, sy, lengths, angles)
    cells, acts = [], []
    for rng, t in zip(rngs, times):
        cells.append(rng.integers(config.cells_per_tower, size=t.size))
        acts.append(rng.integers(len(ACTIVITY_CODES), size=t.size).astype(np.int8))

    cat = lambda xs, dt: np.concatenate(xs) if xs else np.zeros(0, dtype=dt)  # noqa: E731
    counts = np.array([t.size for t in times], dtype=np.int64)
    owner = np.repeat(np.asarray(ordinals, dtype=np.int64), counts)
    pop = Population(config, towers, names, owner, cat(times, np.int64),
                     IX * config.grid_ny + IY, cat(cells, np.int64), cat(acts, np.int8))
    per_sub = np.bincount(owner, minlength=config.n_subscribers)
    all_lengths = cat(lengths, float)
    retained = per_sub >= 2
    manifest: dict[str, object] = {"rng_algorithm": RNG_ALGORITHM}
    manifest.update(config.to_mapping())
    manifest.update({
        "n_towers": len(towers),
        "n_records": pop.n_records,
        "n_subscribers_active": int((per_sub > 0).sum()),
        "n_subscribers_retained": int(retained.sum()),
        "n_records_retained": int(per_sub[retained].sum()),
        "wait_raw_draws": waits.raw_draws,
        "wait_raw_mean": waits.raw_sum / waits.raw_draws if waits.raw_draws else float("nan"),
        "wait_rejected": waits.rejected,
        "jump_draws": int(all_lengths.size),
        "jump_mean": float(all_lengths.mean()) if all_lengths.size else float("nan"),
        "jump_sampler": jumps.method,
        "direction_redraws": walker.turned,
        "length_redraws": walker.redrawn,
    })
    pop.manifest = manifest
    return pop
