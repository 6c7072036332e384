"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``A<k> PASS|FAIL: ...`` line (collected again in the
terminal summary).  A1 trains 12 full-size models and dominates the runtime.
"""

import csv
import itertools
import math
import os
import time

import numpy as np
import pytest

from invskill.assign import solve_assignment
from invskill.cli import main
from invskill.core import AuxiliaryDataset, Role
from invskill.model import (
    INVERSE_BLOCKS,
    JointModel,
    LatentRep,
    ModelDims,
    blend,
    encode,
    generate_trajectory,
)
from invskill.synth import SynthSpec, forward_traj, inverse_traj, make_condition_datasets
from invskill.train import PAIRED, TrainConfig, paired_pass, train

from .conftest import record_acceptance, sine_demo
from .gradcheck import default_cfg, finite_difference, paired_loss_fn, randomized_model, relative_error

A1_BUDGET_SECONDS = 45 * 60
A1_FULL_STEPS = 60_000
A1_REDUCED_STEPS = 20_000


# ---------------------------------------------------------------- A1


def _seconds_per_step() -> float:
    data = make_condition_datasets(SynthSpec("uniform", n_pairs=20, n_points=200, seed=0))
    model = JointModel.create(ModelDims(), np.random.default_rng(0))
    cfg = TrainConfig(steps=300, p_aux=0.0)
    t0 = time.perf_counter()
    train(model, data.paired, None, cfg)
    return (time.perf_counter() - t0) / cfg.steps


def _a1_steps(jobs: int) -> tuple[int, float]:
    waves = math.ceil(12 / jobs)
    projected = waves * A1_FULL_STEPS * _seconds_per_step() * 1.1
    # keep a margin for evaluation and process start-up
    return (A1_FULL_STEPS if projected < 0.85 * A1_BUDGET_SECONDS else A1_REDUCED_STEPS), projected


def _condition_means(report_csv) -> dict:
    values: dict = {}
    with open(report_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            values.setdefault(row["condition"], []).append(float(row["mse"]))
    return {k: float(np.mean(v)) for k, v in values.items()}


@pytest.mark.slow
def test_a1_condition_ordering(tmp_path):
    jobs = os.cpu_count() or 1
    steps, projected = _a1_steps(jobs)
    t0 = time.perf_counter()
    code = main(["experiment", "--conditions", "all", "--seeds", "3", "--n-pairs", "20",
                 "--steps", str(steps), "--jobs", str(jobs), "--seed", "0", "--out", str(tmp_path)])
    elapsed = time.perf_counter() - t0
    assert code == 0
    m = _condition_means(tmp_path / "report.csv")
    with open(tmp_path / "report.csv") as fh:
        n_rows = sum(1 for _ in fh) - 1
    rnd, noisy, perfect, uni = m["random"], m["paired_noisy"], m["paired_perfect"], m["uniform"]
    checks = {
        "random>2*noisy": rnd > 2 * noisy,
        "noisy>2*perfect": noisy > 2 * perfect,
        "uniform<=perfect": uni <= perfect,
        "runtime<45min": elapsed < A1_BUDGET_SECONDS,
    }
    ok = all(checks.values()) and n_rows == 12 * 20
    record_acceptance(
        "A1", ok,
        f"steps={steps} (projected {projected / 60:.1f} min at 60K) runtime={elapsed / 60:.1f} min; "
        f"MSE random={rnd:.3e} noisy={noisy:.3e} perfect={perfect:.3e} uniform={uni:.3e}; "
        + " ".join(f"{k}={v}" for k, v in checks.items()),
    )
    assert ok, checks


# ---------------------------------------------------------------- A2


def _brute_force(c: np.ndarray) -> float:
    best = math.inf
    for perm in itertools.permutations(range(c.shape[0])):
        total = 0.0
        for i, j in enumerate(perm):
            total += float(c[i, j])
        best = min(best, total)
    return best


def test_a2_assignment_matches_brute_force():
    rng = np.random.default_rng(2024)
    mismatches = 0
    count = 0
    for n in range(2, 8):
        for k in range(200):
            if k % 4 == 3:
                c = rng.integers(0, 4, size=(n, n)).astype(float)  # many ties
            else:
                c = rng.uniform(0.0, 10.0, size=(n, n))
            a = solve_assignment(c)
            assert sorted(a.perm) == list(range(n))
            mismatches += a.total_cost != _brute_force(c)
            count += 1
    ok = mismatches == 0
    record_acceptance("A2", ok, f"{count} matrices (n=2..7), {mismatches} differ from brute force")
    assert ok


# ---------------------------------------------------------------- A3


def _random_config(rng):
    d_y, d_psi = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    dims = ModelDims(
        d_y=d_y,
        d_psi=d_psi,
        d_r=int(rng.integers(2, 6)),
        d_e=int(rng.integers(1, 4)),
        enc_hidden=tuple(rng.integers(2, 6, size=rng.integers(0, 3))),
        embed_hidden=tuple(rng.integers(2, 5, size=rng.integers(0, 2))),
        dec_hidden=tuple(rng.integers(2, 6, size=rng.integers(0, 3))),
    )
    model = randomized_model(dims, rng)
    psi = rng.uniform(0.1, 0.25, size=d_psi)
    pair = (sine_demo(psi, "forward", 20, d_y), sine_demo(psi, "inverse", 20, d_y))
    cfg = default_cfg(n_query=int(rng.integers(1, 4)))
    return model, pair, cfg, float(rng.random()), int(rng.integers(1 << 30))


def test_a3_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    worst = 0.0
    n_checked = 0
    for _ in range(100):
        model, pair, cfg, p, seed = _random_config(rng)
        _, g = paired_pass(model, pair, np.random.default_rng(seed), cfg, p=p)
        fd = finite_difference(model, paired_loss_fn(model, pair, seed, cfg, p), h=1e-5)
        worst = max(worst, float(relative_error(g, fd).max()))
        n_checked += model.n_params
    ok = worst < 1e-4
    record_acceptance("A3", ok, f"100 configurations, {n_checked} parameters, worst relative error {worst:.2e}")
    assert ok


# ---------------------------------------------------------------- A4


def test_a4_auxiliary_freeze():
    data = make_condition_datasets(SynthSpec("paired_perfect", n_pairs=20, n_points=200, seed=4))
    rng = np.random.default_rng(44)
    aux = AuxiliaryDataset(tuple(
        sine_demo(a, "forward", 200) for a in rng.uniform(0.1, 0.25, 10)
    ))
    model = JointModel.create(ModelDims(), np.random.default_rng(4))
    last = [model.checksum(INVERSE_BLOCKS)]
    violations = []

    def cb(step, kind, loss, m):
        now = m.checksum(INVERSE_BLOCKS)
        if (now != last[0]) != (kind == PAIRED):
            violations.append((step, kind))
        last[0] = now

    cfg = TrainConfig(steps=1000, p_aux=0.5, seed=4)
    _, tl = train(model, data.paired, aux, cfg, callback=cb)
    frac = tl.aux_fraction
    ok = not violations and abs(frac - 0.5) <= 0.05
    record_acceptance(
        "A4", ok,
        f"1000 steps, auxiliary fraction {frac:.3f}, {len(violations)} checksum violations, "
        f"optimizer steps {tl.optimizer_steps}",
    )
    assert ok


# ---------------------------------------------------------------- A5


def test_a5_invariants():
    rng = np.random.default_rng(5)
    results = {}

    model = JointModel.create(ModelDims(), rng)
    perm_ok = True
    for _ in range(50):
        n = int(rng.integers(1, 16))
        rows = np.column_stack([rng.random(n), rng.normal(size=n)])
        r0 = encode(model.encoder(Role.FORWARD), rows).r
        r1 = encode(model.encoder(Role.FORWARD), rows[rng.permutation(n)]).r
        perm_ok &= bool(np.array_equal(r0, r1))
    results["permutation"] = perm_ok

    ends_ok = True
    for _ in range(50):
        a, b = LatentRep(rng.normal(size=128)), LatentRep(rng.normal(size=128))
        ends_ok &= np.array_equal(blend(a, b, 1.0).r, a.r) and np.array_equal(blend(a, b, 0.0).r, b.r)
    results["blend_endpoints"] = bool(ends_ok)

    rev_ok = True
    for psi in rng.uniform(0.1, 0.25, 20):
        rev_ok &= np.array_equal(inverse_traj(psi, 200).values, forward_traj(psi, 200).values[::-1])
    results["time_reversal"] = bool(rev_ok)

    costs = [
        make_condition_datasets(SynthSpec("paired_perfect", n_pairs=20, seed=s)).paired.pairing_cost
        for s in range(5)
    ]
    results["perfect_cost"] = max(costs) <= 1e-9

    # 100 random models x 1000 query times, with large weights to push the
    # raw deviation output into the softplus tails.
    min_std = math.inf
    dims = ModelDims(d_r=16, d_e=4, enc_hidden=(16,), embed_hidden=(8,), dec_hidden=(16,))
    for k in range(100):
        m = JointModel(dims, rng.normal(0.0, 3.0 if k % 2 else 0.5, JointModel(dims).n_params))
        obs = np.column_stack([rng.random(5), rng.normal(size=5)])
        roll = generate_trajectory(m, obs, Role.FORWARD, [rng.uniform(0.1, 0.25)], Role.INVERSE,
                                   rng.random(1000))
        min_std = min(min_std, float(roll.std.min()))
    results["std_positive"] = min_std > 0

    ok = all(results.values())
    record_acceptance(
        "A5", ok,
        " ".join(f"{k}={v}" for k, v in results.items())
        + f" (max perfect cost {max(costs):.1e}, min std over 1e5 decodes {min_std:.2e})",
    )
    assert ok


# ---------------------------------------------------------------- A6


@pytest.mark.slow
def test_a6_experiment_reproducible(tmp_path):
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        assert main(["experiment", "--seeds", "1", "--conditions", "uniform", "--seed", "6",
                     "--jobs", "1", "--out", str(out)]) == 0
        outs.append(out)
    same_report = (outs[0] / "report.csv").read_bytes() == (outs[1] / "report.csv").read_bytes()
    same_summary = (outs[0] / "summary.csv").read_bytes() == (outs[1] / "summary.csv").read_bytes()
    ok = same_report and same_summary
    record_acceptance("A6", ok, f"report identical={same_report}, summary identical={same_summary} (default 60K steps)")
    assert ok
