"""Collective mobility statistics: waiting times, displacements, gyration.

Sample extraction works on whole :class:`~cdrmob.ingest.SubscriberIndex`
objects at once; each sample batch keeps the subscriber and start time of
every sample so it can be split by day class or activity group later.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date
from typing import Callable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

from . import tpl
from .config import StudyConfig
from .errors import (
    DegenerateFit,
    EmptyInput,
    InsufficientSamples,
    InvalidConfig,
    NonPositiveSample,
    OptimizerNonConvergence,
)
from .ingest import (
    DayClass,
    DayKind,
    SubscriberIndex,
    TowerMap,
    US_PER_DAY,
    US_PER_MINUTE,
    classify_day,
    day_of,
    day_ordinal_to_date,
    from_us,
)
from .trajectory import Trajectory

DEFAULT_DT_WINDOW = (15.0, 1440.0)  # minutes
DEFAULT_DR_CUTOFF = 7.23e4  # meters
DEFAULT_LOG_BINS = 40


# ---------------------------------------------------------------- samples


class InterEventSample(NamedTuple):
    subscriber_id: str
    dt: float
    from_tower: str
    to_tower: str


class DisplacementSample(NamedTuple):
    subscriber_id: str
    dr: float
    dt: float


@dataclass
class SampleBatch:
    """Column-wise samples drawn from consecutive activity pairs.

    ``owner`` indexes ``subscribers``; ``time_us`` is the time of the pair's
    first activity, which decides the day a sample belongs to.  ``dropped``
    counts pairs rejected by the window or cutoff.
    """

    subscribers: Sequence[str]
    owner: np.ndarray
    time_us: np.ndarray
    dt: np.ndarray
    dr: np.ndarray | None = None
    from_tower: np.ndarray | None = None
    to_tower: np.ndarray | None = None
    tower_ids: Sequence[str] = ()
    dropped: int = 0
    pairs: int = 0

    def __len__(self) -> int:
        return int(self.dt.size)

    @property
    def values(self) -> np.ndarray:
        return self.dr if self.dr is not None else self.dt

    def take(self, mask) -> "SampleBatch":
        mask = np.asarray(mask)
        pick = lambda a: None if a is None else a[mask]  # noqa: E731
        return SampleBatch(self.subscribers, self.owner[mask], self.time_us[mask], self.dt[mask],
                           pick(self.dr), pick(self.from_tower), pick(self.to_tower), self.tower_ids,
                           0, int(np.count_nonzero(mask)) if mask.dtype == bool else len(mask))

    def for_subscribers(self, subscriber_ids) -> "SampleBatch":
        pos = {s: i for i, s in enumerate(self.subscribers)}
        wanted = np.array(sorted(pos[s] for s in subscriber_ids if s in pos), dtype=np.int64)
        return self.take(np.isin(self.owner, wanted))

    def __iter__(self) -> Iterator[InterEventSample | DisplacementSample]:
        subs = self.subscribers
        if self.dr is not None:
            for o, dr, dt in zip(self.owner.tolist(), self.dr.tolist(), self.dt.tolist()):
                yield DisplacementSample(subs[o], dr, dt)
        else:
            ids = self.tower_ids
            for o, dt, a, b in zip(self.owner.tolist(), self.dt.tolist(),
                                   self.from_tower.tolist(), self.to_tower.tolist()):
                yield InterEventSample(subs[o], dt, ids[a], ids[b])


def _pairs(index: SubscriberIndex) -> tuple[np.ndarray, np.ndarray]:
    """Row positions ``(i, i + 1)`` of consecutive records of one subscriber."""
    n = index.n_records
    if n < 2:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    first = np.arange(n - 1)
    last_rows = index.offsets[1:] - 1
    same = np.ones(n - 1, dtype=bool)
    same[last_rows[last_rows < n - 1]] = False
    a = first[same]
    return a, a + 1


def inter_event_times(
    index: SubscriberIndex,
    window: tuple[float, float] | None = DEFAULT_DT_WINDOW,
) -> SampleBatch:
    """Waiting times (minutes) between consecutive activities.

    Pairs with ``dt`` outside ``window`` (inclusive bounds) are dropped and
    counted; zero waits are always dropped.  ``window=None`` keeps every
    positive wait.
    """
    a, b = _pairs(index)
    dt = (index.time_us[b] - index.time_us[a]) / US_PER_MINUTE
    keep = dt > 0
    if window is not None:
        lo, hi = window
        keep &= (dt >= lo) & (dt <= hi)
    owner = index.owner()
    return SampleBatch(
        index.subscribers, owner[a][keep], index.time_us[a][keep], dt[keep],
        from_tower=index.tower[a][keep], to_tower=index.tower[b][keep], tower_ids=index.tower_ids,
        dropped=int(keep.size - np.count_nonzero(keep)), pairs=int(keep.size),
    )


def displacements(
    index: SubscriberIndex,
    towers: TowerMap,
    cutoff: float | None = DEFAULT_DR_CUTOFF,
    window: tuple[float, float] | None = None,
) -> SampleBatch:
    """Tower-to-tower distances (meters) between consecutive activities.

    Steps longer than ``cutoff`` are dropped and counted, as are steps whose
    waiting time falls outside ``window`` when one is given.
    """
    a, b = _pairs(index)
    xs, ys = index.positions(towers)
    dx = xs[b] - xs[a]
    dy = ys[b] - ys[a]
    dr = np.sqrt(dx * dx + dy * dy)
    dt = (index.time_us[b] - index.time_us[a]) / US_PER_MINUTE
    keep = np.ones(dr.size, dtype=bool)
    if cutoff is not None:
        keep &= dr <= cutoff
    if window is not None:
        keep &= (dt >= window[0]) & (dt <= window[1])
    owner = index.owner()
    return SampleBatch(
        index.subscribers, owner[a][keep], index.time_us[a][keep], dt[keep], dr=dr[keep],
        from_tower=index.tower[a][keep], to_tower=index.tower[b][keep], tower_ids=index.tower_ids,
        dropped=int(keep.size - np.count_nonzero(keep)), pairs=int(keep.size),
    )


# ------------------------------------------------------------- gyration


@dataclass(frozen=True)
class GyrationRadius:
    subscriber_id: str
    r_g: float
    n_positions: int


def radius_of_gyration(traj: Trajectory) -> GyrationRadius:
    """Root-mean-square distance of the positions from their mean."""
    traj.require(1)
    dx = traj.x - traj.x.mean()
    dy = traj.y - traj.y.mean()
    r_g = math.sqrt(float(np.mean(dx * dx + dy * dy)))
    return GyrationRadius(traj.subscriber_id, r_g, len(traj))


def gyration_radii(index: SubscriberIndex, towers: TowerMap) -> np.ndarray:
    """``r_g`` of every subscriber in ``index``, in index order."""
    if len(index) == 0:
        return np.zeros(0)
    xs, ys = index.positions(towers)
    counts = index.counts
    starts = index.offsets[:-1]
    cx = np.add.reduceat(xs, starts) / counts
    cy = np.add.reduceat(ys, starts) / counts
    owner = index.owner()
    dx = xs - cx[owner]
    dy = ys - cy[owner]
    return np.sqrt(np.add.reduceat(dx * dx + dy * dy, starts) / counts)


def day_ends(config: StudyConfig | None = None) -> list[tuple[date, int]]:
    """``(day, exclusive end in microseconds)`` for every observed day."""
    config = config or StudyConfig()
    out = []
    for d in config.days:
        end = (d.toordinal() - date(1970, 1, 1).toordinal() + 1) * US_PER_DAY
        out.append((d, end))
    return out


def rg_time_series(
    traj: Trajectory,
    day_boundaries: Sequence[tuple[date, int]] | None = None,
) -> list[tuple[date, float]]:
    """``r_g`` of the cumulative trajectory prefix at the end of each day.

    Days before the first activity have no prefix and are skipped.
    """
    traj.require(1)
    boundaries = day_boundaries if day_boundaries is not None else day_ends()
    out = []
    for day, end in boundaries:
        n = int(np.searchsorted(traj.time_us, end, side="left"))
        if n == 0:
            continue
        out.append((day, radius_of_gyration(traj.prefix(n)).r_g))
    return out


def rg_series_population(
    index: SubscriberIndex,
    towers: TowerMap,
    day_boundaries: Sequence[tuple[date, int]] | None = None,
) -> tuple[list[date], np.ndarray]:
    """Prefix ``r_g`` for every subscriber at every day end.

    Returns the days and an array ``(n_subscribers, n_days)`` with NaN where
    a subscriber has no activity yet.  Coordinates are shifted to each
    subscriber's first position before accumulating so the running-sum
    formula keeps its precision.
    """
    boundaries = day_boundaries if day_boundaries is not None else day_ends()
    days = [d for d, _ in boundaries]
    out = np.full((len(index), len(days)), np.nan)
    if len(index) == 0:
        return days, out
    xs, ys = index.positions(towers)
    starts = index.offsets[:-1]
    owner = index.owner()
    sx = xs - xs[starts][owner]
    sy = ys - ys[starts][owner]
    cx, cy, c2 = np.cumsum(sx), np.cumsum(sy), np.cumsum(sx * sx + sy * sy)
    base = starts - 1

    def upto(arr, rows):
        res = np.where(rows >= 0, arr[np.maximum(rows, 0)], 0.0)
        prev = np.where(base >= 0, arr[np.maximum(base, 0)], 0.0)
        return res - prev

    t = index.time_us
    for j, (_, end) in enumerate(boundaries):
        # rows are time-sorted per subscriber, so the prefix is a count
        n = np.add.reduceat((t < end).astype(np.int64), starts)
        rows = starts + n - 1
        has = n > 0
        mx = upto(cx, rows) / np.maximum(n, 1)
        my = upto(cy, rows) / np.maximum(n, 1)
        m2 = upto(c2, rows) / np.maximum(n, 1)
        var = np.maximum(m2 - mx * mx - my * my, 0.0)
        out[has, j] = np.sqrt(var[has])
    return days, out


# ---------------------------------------------------------- distributions


@dataclass(frozen=True)
class EmpiricalDistribution:
    edges: np.ndarray
    density: np.ndarray
    n: int
    binning: str

    @property
    def centers(self) -> np.ndarray:
        if self.binning == "log":
            return np.sqrt(self.edges[:-1] * self.edges[1:])
        return (self.edges[:-1] + self.edges[1:]) / 2.0

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def mass(self) -> float:
        return float(np.sum(self.density * self.widths))


def empirical_distribution(samples, binning: str = "log", bins: int = DEFAULT_LOG_BINS) -> EmpiricalDistribution:
    """Normalised histogram over the sample range (``linear`` or ``log`` bins)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise EmptyInput("no samples to bin")
    if bins < 1:
        raise InvalidConfig("need at least one bin")
    if binning not in ("log", "linear"):
        raise InvalidConfig(f"unknown binning {binning!r}")
    lo, hi = float(x.min()), float(x.max())
    if binning == "log":
        if lo <= 0:
            raise NonPositiveSample("logarithmic bins need strictly positive samples")
        edges = np.geomspace(lo, hi, bins + 1) if hi > lo else np.array([lo / 10**0.05, lo * 10**0.05])
    else:
        edges = np.linspace(lo, hi, bins + 1) if hi > lo else np.array([lo - 0.5, lo + 0.5])
    # pin the outer edges so no sample falls off through rounding
    edges[0], edges[-1] = min(edges[0], lo), max(edges[-1], hi)
    counts, _ = np.histogram(x, bins=edges)
    density = counts / (x.size * np.diff(edges))
    return EmpiricalDistribution(edges, density, int(x.size), binning)


# ------------------------------------------------------------------ fits


@dataclass
class DistributionFit:
    """A fitted exponential (``mu``) or truncated power law (``beta``, ``kappa``)."""

    model: str
    params: dict[str, float]
    log_likelihood: float
    n: int
    x_min: float = 0.0
    x_max: float = math.inf
    log_normaliser: float = 0.0
    extra: dict[str, float | str] = field(default_factory=dict)

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x >= self.x_min) & (x <= self.x_max)
        if self.model == "exponential":
            mu = self.params["mu"]
            if self.x_min == 0 and math.isinf(self.x_max):
                val = np.exp(-x / mu) / mu
            else:
                val = np.exp(-x / mu - self.log_normaliser)
        else:
            beta, kappa = self.params["beta"], self.params["kappa"]
            with np.errstate(divide="ignore"):
                val = np.exp(-beta * np.log(x) - x / kappa - self.log_normaliser)
        return np.where(inside, val, 0.0)

    def summary(self) -> dict[str, object]:
        out: dict[str, object] = {"model": self.model, **self.params, "log_likelihood": self.log_likelihood,
                                  "n": self.n, "x_min": self.x_min, "x_max": self.x_max}
        out.update(self.extra)
        return out


def _positive(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size and not np.all(x > 0):
        raise NonPositiveSample("samples must be strictly positive")
    if not np.all(np.isfinite(x)):
        raise NonPositiveSample("samples must be finite")
    return x


def _truncated_exp_logz(lam: float, lo: float, hi: float) -> float:
    """log of the integral of exp(-lam x) over [lo, hi]."""
    if math.isinf(hi):
        return -lam * lo - math.log(lam)
    w = hi - lo
    return -lam * lo + math.log(-math.expm1(-lam * w)) - math.log(lam)


def fit_exponential(samples, lower: float | None = None, upper: float | None = None) -> DistributionFit:
    """Maximum-likelihood exponential ``f(x) = exp(-x/mu) / mu``.

    Without bounds ``mu`` is the sample mean.  With ``lower``/``upper`` the
    likelihood is that of the exponential truncated to ``[lower, upper]``,
    solved for the rate by a bracketed root search on the mean equation.
    """
    x = _positive(samples)
    if x.size < 2:
        raise InsufficientSamples(f"need at least 2 samples, got {x.size}")
    n = int(x.size)
    if lower is None and upper is None:
        mu = float(x.mean())
        ll = -n * math.log(mu) - float(x.sum()) / mu
        return DistributionFit("exponential", {"mu": mu}, ll, n, 0.0, math.inf, math.log(mu))
    lo = 0.0 if lower is None else float(lower)
    hi = math.inf if upper is None else float(upper)
    x = x[(x >= lo) & (x <= hi)]
    n = int(x.size)
    if n < 2:
        raise InsufficientSamples(f"need at least 2 samples inside [{lo}, {hi}], got {n}")
    if float(x.max()) == float(x.min()):
        raise DegenerateFit("all samples are equal")
    mean = float(x.mean())
    excess = mean - lo
    if math.isinf(hi):
        lam = 1.0 / excess
    else:
        w = hi - lo
        if excess >= w / 2:
            raise DegenerateFit("sample mean is not below the window midpoint; no decaying exponential fits")

        def mean_gap(s):  # truncated mean minus lo, in units of w, for rate s/w
            return 1.0 / s - math.exp(-s) / -math.expm1(-s) - excess / w

        s = brentq(mean_gap, 1e-9, 1e6, xtol=1e-14, rtol=1e-15, maxiter=500)
        lam = s / w
    mu = 1.0 / lam
    logz = _truncated_exp_logz(lam, lo, hi)
    ll = -lam * float(x.sum()) - n * logz
    return DistributionFit("exponential", {"mu": mu}, ll, n, lo, hi, logz)


def fit_truncated_power_law(samples, x_min: float, x_max: float = math.inf, min_samples: int = 100) -> DistributionFit:
    """Maximum-likelihood fit of ``p(x) ∝ x**-beta exp(-x/kappa)`` on ``[x_min, x_max]``.

    Samples outside the support are ignored (their count is reported as
    ``excluded``).  The exponential member of the family (``beta = 0``) is fit
    on the same support and its log-likelihood reported for comparison.
    """
    x_all = _positive(samples)
    if not x_min > 0:
        raise InvalidConfig("x_min must be positive")
    if not x_max > x_min:
        raise InvalidConfig("x_max must exceed x_min")
    x = x_all[(x_all >= x_min) & (x_all <= x_max)]
    n = int(x.size)
    if n < min_samples:
        raise InsufficientSamples(f"need at least {min_samples} samples in [{x_min}, {x_max}], got {n}")
    if float(x.max()) == float(x.min()):
        raise DegenerateFit("all samples are equal; beta and kappa are not identifiable")

    # Work in units of the sample mean so both natural parameters are O(1).
    scale = float(x.mean())
    xs = x / scale
    a, b = x_min / scale, x_max / scale
    s_log, s_x = float(np.log(xs).mean()), float(xs.mean())
    res = tpl.newton_fit(s_log, s_x, a, b, n)
    diag = {"iterations": res.iterations, "grad_beta": res.grad[0], "grad_lam": res.grad[1]}
    if not res.converged:
        raise OptimizerNonConvergence(res.message or "no convergence", {**diag, "beta": res.beta, "lam": res.lam})
    if res.lam * max(b - a, 1.0) < 1e-9 and math.isinf(x_max):
        raise OptimizerNonConvergence("cutoff scale diverges; data look like an untruncated power law",
                                      {**diag, "beta": res.beta})
    beta, kappa = float(res.beta), float(scale / res.lam)
    log_z = tpl.log_normaliser(beta, 1.0 / kappa, x_min, x_max)
    ll = float(-beta * np.log(x).sum() - x.sum() / kappa - n * log_z)

    exp_res = tpl.newton_fit(s_log, s_x, a, b, n, fix_beta=0.0)
    exp_kappa = float(scale / exp_res.lam)
    exp_ll = tpl.log_likelihood(x, 0.0, exp_kappa, x_min, x_max)
    extra = {
        "excluded": int(x_all.size - n),
        "exponential_log_likelihood": exp_ll,
        "exponential_kappa": exp_kappa,
        "iterations": res.iterations,
        "beta_at_bound": str(res.at_beta_bound).lower(),
    }
    return DistributionFit("truncated_power_law", {"beta": beta, "kappa": kappa}, ll, n,
                           float(x_min), float(x_max), log_z, extra)


# ------------------------------------------------------------ partitions


def _day_classes(days: np.ndarray, classifier: Callable[[date], DayClass]) -> dict[int, DayKind]:
    return {int(d): classifier(day_ordinal_to_date(int(d))).kind for d in np.unique(days).tolist()}


def split_by_dayclass(
    samples: SampleBatch,
    classifier: Callable[[date], DayClass] | StudyConfig | None = None,
) -> tuple[SampleBatch, SampleBatch]:
    """Partition samples into (work day, off day) by the day of their first activity."""
    if classifier is None or isinstance(classifier, StudyConfig):
        config = classifier or StudyConfig()
        classifier = lambda d: classify_day(d, config)  # noqa: E731
    days = day_of(samples.time_us)
    kinds = _day_classes(days, classifier)
    off = np.array([kinds[int(d)] is DayKind.OFF_DAY for d in days.tolist()], dtype=bool)
    return samples.take(~off), samples.take(off)


def day_kind_mask(time_us: np.ndarray, kind: DayKind, config: StudyConfig | None = None) -> np.ndarray:
    """Rows whose calendar day has the given class."""
    config = config or StudyConfig()
    days = day_of(time_us)
    kinds = _day_classes(days, lambda d: classify_day(d, config))
    lut = {d: k is kind for d, k in kinds.items()}
    return np.array([lut[int(d)] for d in days.tolist()], dtype=bool)


def activity_sampling_groups(index: SubscriberIndex, edges: Sequence[int]) -> dict[int, set[str]]:
    """Group subscribers by total record count.

    Group 0 holds counts ``<= edges[0]``, group ``k`` counts in
    ``(edges[k-1], edges[k]]`` and the last group counts above ``edges[-1]``.
    """
    edges = list(edges)
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise InvalidConfig("group edges must be strictly increasing")
    group = np.searchsorted(np.asarray(edges, dtype=float), index.counts, side="left")
    out: dict[int, set[str]] = {g: set() for g in range(len(edges) + 1)}
    for sid, g in zip(index.subscribers, group.tolist()):
        out[g].add(sid)
    return out
