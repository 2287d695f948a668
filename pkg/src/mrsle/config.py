"""Torus configurations and the semiclassical partition function."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi
COLLISION_GAP = 1e-12

__all__ = [
    "TaggedInf",
    "POS_COLLISION",
    "NEG_COLLISION",
    "CollisionError",
    "TorusConfig",
    "cyclic_gaps",
    "log_partition_u",
    "partition_z",
    "grad_u",
    "u_min",
    "equally_spaced",
]


class TaggedInf(float):
    """An infinite float that remembers why it is infinite.

    Arithmetic behaves like ``float('inf')``; ``tag`` keeps collisions
    apart from ordinary overflow, and :meth:`to_json` never emits a bare
    infinity.
    """

    def __new__(cls, sign: float, tag: str):
        obj = super().__new__(cls, math.copysign(math.inf, sign))
        obj.tag = tag
        return obj

    def __repr__(self):
        return f"TaggedInf({'+' if self > 0 else '-'}, {self.tag!r})"

    def to_json(self) -> str:
        return f"{'+' if self > 0 else '-'}inf:{self.tag}"


POS_COLLISION = TaggedInf(1.0, "collision")
NEG_COLLISION = TaggedInf(-1.0, "collision")


def is_collision(x) -> bool:
    return isinstance(x, TaggedInf) and x.tag == "collision"


class CollisionError(ValueError):
    """Two driving angles coincide."""


def cyclic_gaps(angles) -> np.ndarray:
    """Gaps ``theta^{j+1} - theta^j`` reduced mod 2pi, with ``theta^{n+1} =
    theta^1 + 2pi``. They sum to ``2pi`` exactly when the labels are in
    cyclic order."""
    a = np.asarray(angles, dtype=float)
    if a.size == 1:
        return np.array([TWO_PI])
    d = np.mod(np.diff(np.append(a, a[0])), TWO_PI)
    return d


@dataclass(frozen=True)
class TorusConfig:
    """Ordered angles on the circle.

    Angles are kept unwrapped; :meth:`canonical` produces the representative
    with first angle in ``[0, 2pi)`` and ascending values.
    """

    angles: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.angles, dtype=float).ravel()
        if a.size < 1:
            raise ValueError("need at least one angle")
        a.setflags(write=False)
        object.__setattr__(self, "angles", a)

    @property
    def n(self) -> int:
        return self.angles.size

    def gaps(self) -> np.ndarray:
        return cyclic_gaps(self.angles)

    def min_gap(self) -> float:
        g = self.gaps()
        if abs(g.sum() - TWO_PI) > 1e-9:
            return 0.0
        return float(g.min())

    def is_valid(self) -> bool:
        return self.min_gap() > COLLISION_GAP

    def canonical(self) -> np.ndarray:
        a0 = math.fmod(self.angles[0], TWO_PI)
        if a0 < 0:
            a0 += TWO_PI
        return a0 + np.cumsum(np.concatenate(([0.0], self.gaps()[:-1])))

    def rotated(self, c: float) -> "TorusConfig":
        return TorusConfig(self.angles + c)

    def relabeled(self, shift: int) -> "TorusConfig":
        """Cyclic relabeling ``j -> j + shift`` keeping cyclic order."""
        a = self.canonical()
        s = shift % self.n
        return TorusConfig(np.concatenate((a[s:], a[:s] + TWO_PI)))

    def __repr__(self):
        return f"TorusConfig({np.array2string(self.angles, precision=6)})"


def _as_angles(theta) -> np.ndarray:
    if isinstance(theta, TorusConfig):
        return theta.angles
    return np.asarray(theta, dtype=float)


def _pair_half_diffs(a):
    i, j = np.triu_indices(a.size, 1)
    return 0.5 * (a[j] - a[i])


def log_partition_u(theta) -> float:
    """``U(theta) = -2 sum_{i<j} log sin((theta^j - theta^i)/2)``.

    Returns :data:`POS_COLLISION` for collided configurations.
    """
    a = _as_angles(theta)
    if a.size == 1:
        return 0.0
    if TorusConfig(a).min_gap() <= COLLISION_GAP:
        return POS_COLLISION
    s = np.abs(np.sin(_pair_half_diffs(a)))
    return float(-2.0 * np.sum(np.log(s)))


def partition_z(theta, kappa: float) -> float:
    """``Z^kappa = exp(-U / kappa)``, zero on collision."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    u = log_partition_u(theta)
    if is_collision(u):
        return 0.0
    return math.exp(-u / kappa)


def grad_u(theta) -> np.ndarray:
    """Gradient of :func:`log_partition_u`.

    Component ``j`` is ``-sum_{i != j} cot((theta^j - theta^i)/2)``.
    """
    a = _as_angles(theta)
    if a.size > 1 and TorusConfig(a).min_gap() <= COLLISION_GAP:
        raise CollisionError("grad_u undefined at a collision")
    d = 0.5 * (a[:, None] - a[None, :])
    np.fill_diagonal(d, 0.5 * math.pi)  # cot(pi/2) = 0
    cot = 1.0 / np.tan(d)
    np.fill_diagonal(cot, 0.0)
    return -cot.sum(axis=1)


def u_min(n: int) -> float:
    """Minimum of ``U`` over ``T_n``, attained at equal spacing."""
    if n < 1:
        raise ValueError("n must be >= 1")
    tot = 0.0
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            tot += math.log(math.sin(math.pi * (j - i) / n))
    return -2.0 * tot


def equally_spaced(n: int, offset: float = 0.0) -> TorusConfig:
    return TorusConfig(offset + TWO_PI * np.arange(n) / n)
