"""Intrinsic reference frame of an individual trajectory.

The transform centres a trajectory on its center of mass, rotates it onto
the principal axes of its inertia tensor (largest spread along x), turns it
by 180 degrees when needed so the most visited position has positive x, and
finally divides each axis by its standard deviation.  Trajectories of
different people then share one dimensionless frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateTensor, GroupEmpty, InsufficientPositions, InvalidConfig, ZeroVariance
from .ingest import SubscriberIndex, TowerMap
from .stats import gyration_radii
from .trajectory import Trajectory

# relative size below which eigenvalue gaps / spreads count as zero
DEGENERACY_TOL = 1e-12


def center_of_mass(traj: Trajectory) -> tuple[float, float]:
    traj.require(1)
    return float(traj.x.mean()), float(traj.y.mean())


def most_frequent_position(traj: Trajectory) -> tuple[float, float]:
    """Most repeated exact ``(x, y)``; ties go to the earliest first visit."""
    traj.require(1)
    counts: dict[tuple[float, float], int] = {}
    for p in zip(traj.x.tolist(), traj.y.tolist()):
        counts[p] = counts.get(p, 0) + 1
    # dicts keep first-insertion order and max() keeps the first maximum
    return max(counts.items(), key=lambda kv: kv[1])[0]


def _most_frequent_row(traj: Trajectory) -> int:
    target = most_frequent_position(traj)
    hit = (traj.x == target[0]) & (traj.y == target[1])
    return int(np.flatnonzero(hit)[0])


@dataclass(frozen=True)
class InertiaTensor:
    ixx: float
    iyy: float
    ixy: float

    @property
    def iyx(self) -> float:
        return self.ixy

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.ixx, self.ixy], [self.ixy, self.iyy]])

    @property
    def mu(self) -> float:
        """Eigenvalue gap, ``sqrt(4 Ixy Iyx + (Ixx - Iyy)**2)``."""
        return math.hypot(self.ixx - self.iyy, 2.0 * self.ixy)


def inertia_tensor(traj: Trajectory, about: str = "center_of_mass") -> InertiaTensor:
    """Second-moment tensor ``Ixx = Σy², Iyy = Σx², Ixy = -Σxy``.

    ``about="center_of_mass"`` (default) sums coordinates relative to the
    mean position; ``about="origin"`` sums raw coordinates.
    """
    traj.require(2, InsufficientPositions)
    x, y = traj.x, traj.y
    if about == "center_of_mass":
        x = x - x.mean()
        y = y - y.mean()
    elif about != "origin":
        raise InvalidConfig(f"about must be 'center_of_mass' or 'origin', not {about!r}")
    return InertiaTensor(float(y @ y), float(x @ x), float(-(x @ y)))


def closed_form_cos(tensor: InertiaTensor) -> float:
    """Cosine of the principal angle, evaluated literally as printed.

    ``cos θ = -Ixy / h / sqrt(1 + Ixy² / h²)`` with
    ``h = (Ixx - Iyy + mu) / 2``.  Undefined (0/0) when ``Ixy = 0`` and
    ``Ixx < Iyy``; :func:`principal_angle` handles that branch.
    """
    ixx, iyy, ixy = tensor.ixx, tensor.iyy, tensor.ixy
    mu = math.sqrt(4 * ixy * ixy + ixx * ixx - 2 * ixx * iyy + iyy * iyy)
    h = 0.5 * ixx - 0.5 * iyy + 0.5 * mu
    return -ixy / h / math.sqrt(1 + ixy * ixy / (h * h))


def principal_angle(tensor: InertiaTensor) -> float:
    """Angle in (-π/2, π/2] of the axis of largest positional spread.

    This is the eigenvector ``(-Ixy, h)`` of the smaller eigenvalue of the
    tensor, ``h = (Ixx - Iyy + mu)/2``, which is what the closed-form cosine
    describes.  ``h`` and its partner ``k = (Iyy - Ixx + mu)/2`` satisfy
    ``h k = Ixy²``, so whichever is large is computed directly and the other
    from that product, avoiding cancellation; the parallel vector
    ``(k, -Ixy)`` covers the case where ``(-Ixy, h)`` vanishes.
    """
    d = tensor.ixx - tensor.iyy
    mu = tensor.mu
    scale = abs(tensor.ixx) + abs(tensor.iyy)
    if scale == 0 or mu <= DEGENERACY_TOL * scale:
        raise DegenerateTensor("isotropic inertia tensor: no principal direction")
    ixy = tensor.ixy
    if d >= 0:
        h = (d + mu) / 2.0
        k = ixy * ixy / h
    else:
        k = (-d + mu) / 2.0
        h = ixy * ixy / k
    if h >= k:
        vx, vy = -ixy, h
    else:
        vx, vy = k, -ixy
    theta = math.atan2(vy, vx)
    if theta <= -math.pi / 2:
        theta += math.pi
    elif theta > math.pi / 2:
        theta -= math.pi
    return theta


def _rotate(x: np.ndarray, y: np.ndarray, angle: float) -> tuple[np.ndarray, np.ndarray]:
    c, s = math.cos(angle), math.sin(angle)
    return c * x - s * y, s * x + c * y


@dataclass(frozen=True)
class IntrinsicFrame:
    """Parameters mapping a trajectory to its intrinsic frame.

    ``theta`` is the principal angle; when ``flipped`` the trajectory was
    turned by a further 180 degrees.  ``sigma_x``/``sigma_y`` are measured
    after rotation.
    """

    center_of_mass: tuple[float, float]
    theta: float
    flipped: bool
    sigma_x: float
    sigma_y: float
    most_frequent: tuple[float, float]

    @property
    def rotation(self) -> float:
        """Total turn applied, wrapped to (-π, π]."""
        r = self.theta + (math.pi if self.flipped else 0.0)
        return r - 2 * math.pi if r > math.pi else r

    def apply(self, traj: Trajectory) -> Trajectory:
        x, y = _rotate(traj.x - self.center_of_mass[0], traj.y - self.center_of_mass[1], -self.rotation)
        return Trajectory(traj.subscriber_id, traj.time_us, x / self.sigma_x, y / self.sigma_y)

    def invert(self, scaled: Trajectory) -> Trajectory:
        x, y = _rotate(scaled.x * self.sigma_x, scaled.y * self.sigma_y, self.rotation)
        return Trajectory(scaled.subscriber_id, scaled.time_us,
                          x + self.center_of_mass[0], y + self.center_of_mass[1])

    def summary(self) -> dict[str, object]:
        return {
            "x_cm": self.center_of_mass[0], "y_cm": self.center_of_mass[1],
            "theta": self.theta, "flipped": str(self.flipped).lower(),
            "sigma_x": self.sigma_x, "sigma_y": self.sigma_y,
            "most_frequent_x": self.most_frequent[0], "most_frequent_y": self.most_frequent[1],
        }


def to_intrinsic(traj: Trajectory) -> tuple[IntrinsicFrame, Trajectory]:
    """Frame parameters and the trajectory expressed in that frame."""
    traj.require(3, InsufficientPositions)
    cm = center_of_mass(traj)
    x = traj.x - cm[0]
    y = traj.y - cm[1]
    tensor = InertiaTensor(float(y @ y), float(x @ x), float(-(x @ y)))
    theta = principal_angle(tensor)
    xr, yr = _rotate(x, y, -theta)
    row = _most_frequent_row(traj)
    flipped = bool(xr[row] <= 0)
    if flipped:
        xr, yr = -xr, -yr
    sx = math.sqrt(float(np.mean(xr * xr)))
    sy = math.sqrt(float(np.mean(yr * yr)))
    if sy <= 1e-9 * sx or sx == 0:
        raise ZeroVariance(f"trajectory {traj.subscriber_id!r} has no spread across its principal axis")
    frame = IntrinsicFrame(cm, theta, flipped, sx, sy, most_frequent_position(traj))
    return frame, Trajectory(traj.subscriber_id, traj.time_us, xr / sx, yr / sy)


def select_by_rg(
    index: SubscriberIndex,
    towers: TowerMap,
    groups: Sequence[tuple[float, float]],
    k: int,
    seed: int,
) -> dict[tuple[float, float], list[str]]:
    """Pick ``k`` random subscribers whose ``r_g`` lies in each ``[lo, hi)``.

    Candidates are ordered by subscriber id before drawing, so the choice
    only depends on ``seed`` and the population.
    """
    spans = sorted((float(lo), float(hi)) for lo, hi in groups)
    for lo, hi in spans:
        if not lo < hi:
            raise InvalidConfig(f"empty r_g range [{lo}, {hi})")
    for (_, hi), (lo, _) in zip(spans, spans[1:]):
        if lo < hi:
            raise InvalidConfig("r_g ranges overlap")
    rg = gyration_radii(index, towers)
    rng = np.random.default_rng(seed)
    out: dict[tuple[float, float], list[str]] = {}
    for lo, hi in groups:
        cand = [index.subscribers[i] for i in np.flatnonzero((rg >= lo) & (rg < hi)).tolist()]
        if len(cand) < k:
            raise GroupEmpty(f"only {len(cand)} subscribers with r_g in [{lo}, {hi}), need {k}")
        pick = rng.choice(len(cand), size=k, replace=False) if k else []
        out[(lo, hi)] = [cand[i] for i in pick]
    return out
