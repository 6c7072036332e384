"""Synthetic sinusoid benchmark.

Forward executions follow ``tau_F(t) = psi * sin(1.5 * pi * t) + t`` and the
inverse execution is the time reversal ``tau_I(t) = tau_F(1 - t)``.  The
environment states are the trajectory endpoints.  Four dataset conditions
differ only in how inverse amplitudes are drawn and how pairs are formed.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .assign import pair_demonstrations
from .core import Demonstration, PairedDataset, Role, Trajectory
from .model import JointModel, ModelDims, generate_trajectory
from .seeding import derive_seed
from .train import TrainConfig, train

log = logging.getLogger(__name__)

AMPLITUDE_MIN = 0.1
AMPLITUDE_MAX = 0.25
N_TEST_AMPLITUDES = 20


class Condition(str, enum.Enum):
    RANDOM = "random"
    PAIRED_NOISY = "paired_noisy"
    PAIRED_PERFECT = "paired_perfect"
    UNIFORM = "uniform"

    @classmethod
    def parse(cls, name: "str | Condition") -> "Condition":
        if isinstance(name, Condition):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"noisy": "paired_noisy", "perfect": "paired_perfect"}
        return cls(aliases.get(key, key))


ALL_CONDITIONS = tuple(Condition)


@dataclass(frozen=True)
class SynthSpec:
    condition: Condition = Condition.UNIFORM
    n_pairs: int = 20
    n_points: int = 200
    seed: int = 0
    amplitude_min: float = AMPLITUDE_MIN
    amplitude_max: float = AMPLITUDE_MAX

    def __post_init__(self):
        object.__setattr__(self, "condition", Condition.parse(self.condition))
        if self.n_points < 2:
            raise ValueError("n_points must be >= 2")
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be >= 1")
        if (self.amplitude_min, self.amplitude_max) != (AMPLITUDE_MIN, AMPLITUDE_MAX):
            raise ValueError("amplitude range is fixed to [0.1, 0.25]")


def _grid(n_points: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_points)


def forward_values(psi: float, t: np.ndarray) -> np.ndarray:
    return psi * np.sin(1.5 * math.pi * t) + t


def forward_traj(psi: float, n_points: int = 200) -> Trajectory:
    t = _grid(n_points)
    return Trajectory(t, forward_values(psi, t))


def inverse_traj(psi: float, n_points: int = 200) -> Trajectory:
    # Reversing the forward samples gives tau_F(1 - t) on the (numerically
    # symmetric) grid and keeps the endpoints exact.
    fwd = forward_traj(psi, n_points)
    return Trajectory(fwd.times, fwd.values[::-1])


def forward_demo(psi: float, n_points: int = 200) -> Demonstration:
    tr = forward_traj(psi, n_points)
    return Demonstration(tr, [psi], tr.values[0], tr.values[-1], Role.FORWARD)


def inverse_demo(psi: float, n_points: int = 200) -> Demonstration:
    tr = inverse_traj(psi, n_points)
    return Demonstration(tr, [psi], tr.values[0], tr.values[-1], Role.INVERSE)


@dataclass(frozen=True)
class ConditionData:
    forwards: tuple[Demonstration, ...]
    inverses: tuple[Demonstration, ...]
    paired: PairedDataset


def make_condition_datasets(spec: SynthSpec) -> ConditionData:
    """Forward set, inverse set, and the pairing each condition prescribes.

    Random and PairedNoisy share the same amplitude draws for a given seed;
    they differ only in pairing (random permutation vs optimal assignment).
    """
    rng = np.random.default_rng(spec.seed)
    n, pts = spec.n_pairs, spec.n_points
    lo, hi = spec.amplitude_min, spec.amplitude_max
    cond = spec.condition

    if cond is Condition.UNIFORM:
        psi_f = np.linspace(lo, hi, n)
    else:
        psi_f = rng.uniform(lo, hi, n)
    if cond in (Condition.RANDOM, Condition.PAIRED_NOISY):
        psi_i = rng.uniform(lo, hi, n)
    else:
        # Same amplitudes, collected in an unrelated order.
        psi_i = psi_f[rng.permutation(n)]

    forwards = tuple(forward_demo(float(a), pts) for a in psi_f)
    inverses = tuple(inverse_demo(float(a), pts) for a in psi_i)

    if cond is Condition.RANDOM:
        perm = rng.permutation(n)
        pairs = tuple((forwards[i], inverses[j]) for i, j in enumerate(perm))
        costs = tuple(float(np.linalg.norm(f.s_final - v.s_init)) for f, v in pairs)
        total = 0.0
        for c in costs:
            total += c
        paired = PairedDataset(pairs, total, costs)
    else:
        paired = pair_demonstrations(forwards, inverses)
    return ConditionData(forwards, inverses, paired)


def eval_amplitudes(n: int = N_TEST_AMPLITUDES) -> np.ndarray:
    """Evenly spaced amplitudes strictly inside the training range."""
    return np.linspace(0.105, 0.245, n)


def eval_observations(psi: float, n_points: int, n_obs: int) -> np.ndarray:
    """``n_obs`` evenly spaced ``(t, y)`` rows from the forward execution."""
    fwd = forward_traj(psi, n_points)
    idx = np.unique(np.round(np.linspace(0, n_points - 1, n_obs)).astype(int))
    return np.column_stack([fwd.times[idx], fwd.values[idx]])


def evaluate(
    model: JointModel,
    amplitudes: Sequence[float] | None = None,
    n_obs_eval: int = 10,
    n_points: int = 200,
) -> np.ndarray:
    """Inverse-trajectory MSE per test amplitude.

    The model sees forward observations and the amplitude, and is queried for
    the inverse execution on the full grid.
    """
    amps = eval_amplitudes() if amplitudes is None else np.asarray(amplitudes, np.float64)
    grid = _grid(n_points)
    out = np.empty(amps.size)
    for k, psi in enumerate(amps):
        obs = eval_observations(float(psi), n_points, n_obs_eval)
        roll = generate_trajectory(model, obs, Role.FORWARD, [psi], Role.INVERSE, grid)
        truth = inverse_traj(float(psi), n_points).values
        out[k] = float(np.mean((roll.mean - truth) ** 2))
    return out


@dataclass
class CellResult:
    condition: Condition
    seed_index: int
    amplitudes: np.ndarray
    mse: np.ndarray | None
    pairing_cost: float = float("nan")
    seconds: float = 0.0
    error: str | None = None


@dataclass
class ExperimentReport:
    cells: list[CellResult] = field(default_factory=list)
    steps: int = 0

    def rows(self) -> list[tuple[str, int, float, float | None]]:
        out = []
        for c in self.cells:
            for k, a in enumerate(c.amplitudes):
                out.append((c.condition.value, c.seed_index, float(a),
                            None if c.mse is None else float(c.mse[k])))
        return out

    def summary(self) -> list[tuple[str, float, float, int]]:
        """(condition, mean, std, n) over all successful (seed, amplitude) values."""
        out = []
        seen = []
        for c in self.cells:
            if c.condition not in seen:
                seen.append(c.condition)
        for cond in seen:
            vals = [c.mse for c in self.cells if c.condition is cond and c.mse is not None]
            if vals:
                v = np.concatenate(vals)
                out.append((cond.value, float(np.mean(v)), float(np.std(v)), int(v.size)))
            else:
                out.append((cond.value, float("nan"), float("nan"), 0))
        return out

    def condition_means(self) -> dict[str, float]:
        return {name: mean for name, mean, _, _ in self.summary()}

    @property
    def failed(self) -> list[CellResult]:
        return [c for c in self.cells if c.error is not None]

    def write_report(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["condition", "seed", "test_amplitude", "mse"])
            for cond, seed, amp, mse in self.rows():
                w.writerow([cond, seed, format(amp, ".17g"),
                            "failed" if mse is None else format(mse, ".17g")])

    def write_summary(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["condition", "mean_mse", "std_mse", "n"])
            for cond, mean, std, n in self.summary():
                w.writerow([cond, format(mean, ".17g"), format(std, ".17g"), n])

    def format_table(self) -> str:
        lines = [f"{'condition':<16}{'mean MSE':>14}{'std':>14}{'n':>6}"]
        for cond, mean, std, n in self.summary():
            lines.append(f"{cond:<16}{mean:>14.4e}{std:>14.4e}{n:>6}")
        return "\n".join(lines)


def run_cell(
    condition: Condition,
    seed_index: int,
    master_seed: int,
    cfg: TrainConfig,
    n_pairs: int = 20,
    n_points: int = 200,
    n_obs_eval: int = 10,
    dims: ModelDims | None = None,
) -> CellResult:
    """Generate, pair, train and evaluate one (condition, seed) cell."""
    cond_index = ALL_CONDITIONS.index(condition)
    data_seed = derive_seed(master_seed, "experiment", cond_index, seed_index, "data")
    init_seed = derive_seed(master_seed, "experiment", cond_index, seed_index, "init")
    train_seed = derive_seed(master_seed, "experiment", cond_index, seed_index, "train")
    amps = eval_amplitudes()
    t0 = time.perf_counter()
    data = make_condition_datasets(SynthSpec(condition, n_pairs, n_points, data_seed))
    model = JointModel.create(dims or ModelDims(), np.random.default_rng(init_seed))
    cell_cfg = TrainConfig(**{**cfg.to_dict(), "seed": train_seed, "p_aux": 0.0})
    trained, _ = train(model, data.paired, None, cell_cfg)
    mse = evaluate(trained, amps, n_obs_eval, n_points)
    return CellResult(condition, seed_index, amps, mse, data.paired.pairing_cost,
                      time.perf_counter() - t0)


def _run_cell_safe(args) -> CellResult:
    condition, seed_index = args[0], args[1]
    try:
        return run_cell(*args)
    except Exception as exc:  # keep the other cells' results
        log.exception("cell %s/%d failed", condition.value, seed_index)
        return CellResult(condition, seed_index, eval_amplitudes(), None, error=repr(exc))


def run_experiment(
    conditions: Sequence[Condition | str] = ALL_CONDITIONS,
    seeds_per_condition: int = 5,
    train_cfg: TrainConfig | None = None,
    master_seed: int = 0,
    n_pairs: int = 20,
    n_points: int = 200,
    n_obs_eval: int = 10,
    jobs: int = 1,
    dims: ModelDims | None = None,
) -> ExperimentReport:
    """Train and evaluate every (condition, seed) cell; cells are independent."""
    cfg = train_cfg or TrainConfig()
    conds = [Condition.parse(c) for c in conditions]
    tasks = [
        (c, s, master_seed, cfg, n_pairs, n_points, n_obs_eval, dims)
        for c in conds
        for s in range(seeds_per_condition)
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell_safe, tasks))
    else:
        cells = []
        for task in tasks:
            cells.append(_run_cell_safe(task))
            c = cells[-1]
            log.info("cell %s/%d done in %.1fs", c.condition.value, c.seed_index, c.seconds)
    return ExperimentReport(cells, cfg.steps)
