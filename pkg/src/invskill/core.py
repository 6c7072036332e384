"""Domain types for demonstrations and datasets."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimMismatch, InvalidStd, InvalidTrajectory, RoleError


class Role(str, enum.Enum):
    FORWARD = "forward"
    INVERSE = "inverse"

    @classmethod
    def parse(cls, value: "str | Role") -> "Role":
        if isinstance(value, Role):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise RoleError(f"unknown role {value!r}") from None


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise InvalidTrajectory(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidTrajectory(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


def normalize_time(raw_times) -> np.ndarray:
    """Affinely map strictly increasing timestamps onto [0, 1].

    The first element maps to exactly 0.0 and the last to exactly 1.0.
    """
    t = np.asarray(raw_times, dtype=np.float64)
    if t.ndim != 1 or t.size < 2:
        raise InvalidTrajectory("need at least two timestamps")
    if not np.all(np.isfinite(t)):
        raise InvalidTrajectory("timestamps must be finite")
    if np.any(np.diff(t) <= 0):
        raise InvalidTrajectory("timestamps must be strictly increasing")
    out = (t - t[0]) / (t[-1] - t[0])
    out[0] = 0.0
    out[-1] = 1.0
    return out


@dataclass(frozen=True)
class Trajectory:
    """Sensorimotor readings on a normalized time grid.

    ``values`` has one row per timestep; 1-D input is treated as ``d_y == 1``.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = _frozen(self.times, 1, "times")
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        values = _frozen(values, 2, "values")
        if times.size < 2:
            raise InvalidTrajectory("trajectory needs at least two timesteps")
        if values.shape[0] != times.size:
            raise InvalidTrajectory(
                f"{times.size} timestamps but {values.shape[0]} value rows"
            )
        if times[0] != 0.0 or times[-1] != 1.0:
            raise InvalidTrajectory("times must start at 0.0 and end at 1.0")
        if np.any(np.diff(times) <= 0):
            raise InvalidTrajectory("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.times.size

    @property
    def d_y(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(
            self.values, other.values
        )


@dataclass(frozen=True)
class Demonstration:
    trajectory: Trajectory
    task_param: np.ndarray
    s_init: np.ndarray
    s_final: np.ndarray
    role: Role = Role.FORWARD

    def __post_init__(self):
        object.__setattr__(self, "task_param", _frozen(self.task_param, 1, "task_param"))
        object.__setattr__(self, "s_init", _frozen(self.s_init, 1, "s_init"))
        object.__setattr__(self, "s_final", _frozen(self.s_final, 1, "s_final"))
        object.__setattr__(self, "role", Role.parse(self.role))
        if self.s_init.shape != self.s_final.shape:
            raise InvalidTrajectory(
                f"s_init has {self.s_init.size} dims but s_final has {self.s_final.size}"
            )

    @property
    def d_s(self) -> int:
        return self.s_init.size

    @property
    def d_psi(self) -> int:
        return self.task_param.size

    def __eq__(self, other):
        if not isinstance(other, Demonstration):
            return NotImplemented
        return (
            self.role == other.role
            and self.trajectory == other.trajectory
            and np.array_equal(self.task_param, other.task_param)
            and np.array_equal(self.s_init, other.s_init)
            and np.array_equal(self.s_final, other.s_final)
        )


def check_consistent(demos: Sequence[Demonstration]) -> tuple[int, int, int] | None:
    """Return the shared ``(d_y, d_psi, d_s)`` of ``demos`` or raise DimMismatch."""
    if not demos:
        return None
    first = demos[0]
    dims = (first.trajectory.d_y, first.d_psi, first.d_s)
    for i, d in enumerate(demos):
        got = (d.trajectory.d_y, d.d_psi, d.d_s)
        if got != dims:
            raise DimMismatch(f"demonstration {i} has dims {got}, expected {dims}")
    return dims


@dataclass(frozen=True)
class PairedDataset:
    pairs: tuple[tuple[Demonstration, Demonstration], ...]
    pairing_cost: float
    pair_costs: tuple[float, ...] = ()

    def __post_init__(self):
        pairs = tuple((f, i) for f, i in self.pairs)
        for f, i in pairs:
            if f.role is not Role.FORWARD or i.role is not Role.INVERSE:
                raise RoleError("pairs must be (forward, inverse)")
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "pair_costs", tuple(float(c) for c in self.pair_costs))
        if self.pairing_cost < 0:
            raise ValueError("pairing_cost must be nonnegative")

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class AuxiliaryDataset:
    demos: tuple[Demonstration, ...] = field(default_factory=tuple)

    def __post_init__(self):
        demos = tuple(self.demos)
        for d in demos:
            if d.role is not Role.FORWARD:
                raise RoleError("auxiliary set may only hold forward demonstrations")
        object.__setattr__(self, "demos", demos)

    def __len__(self) -> int:
        return len(self.demos)


@dataclass(frozen=True)
class GaussianPrediction:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape:
            raise DimMismatch(f"mean shape {mean.shape} != std shape {std.shape}")
        if not np.all(std > 0):
            raise InvalidStd("standard deviation must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
