"""``invskill`` command-line interface.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.

Seeds: every subcommand takes ``--seed`` (falling back to ``$INVSKILL_SEED``,
then 0) as the master seed; per-purpose seeds are derived from it with
:func:`invskill.seeding.derive_seed`.  Config files are JSON objects whose keys
are TrainConfig field names; explicit flags override file values, which
override defaults.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import storage
from .assign import build_cost_matrix, pair_demonstrations, write_cost_csv
from .core import AuxiliaryDataset, Role
from .errors import ConfigError, EmptyObservation, InvskillError, IoError, ParseError
from .model import DEFAULT_GRID_POINTS, JointModel, ModelDims, default_query_grid, generate_trajectory
from .seeding import derive_seed, master_seed
from .synth import ALL_CONDITIONS, Condition, SynthSpec, eval_amplitudes, evaluate, forward_demo, make_condition_datasets, run_experiment
from .train import TrainConfig, train

log = logging.getLogger("invskill")

CONDITION_NAMES = [c.value for c in Condition]
# The step-sampling seed comes from --seed (or a config file), not its own flag.
TRAIN_FIELDS = [f for f in dataclasses.fields(TrainConfig) if f.name != "seed"]


class UsageError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="master seed (default $INVSKILL_SEED or 0)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with TrainConfig fields")
    for f in TRAIN_FIELDS:
        kind = float if f.type in ("float", float) else int
        p.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, type=kind, default=None)


def train_config_values(args) -> dict:
    """Explicitly chosen TrainConfig values: config file, then flags on top."""
    values: dict = {}
    if getattr(args, "config", None) is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise IoError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad config {args.config}: {exc.msg}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        values.update(loaded)
    for f in TRAIN_FIELDS:
        v = getattr(args, "cfg_" + f.name, None)
        if v is not None:
            values[f.name] = v
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="invskill", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset condition")
    p.add_argument("--condition", required=True, choices=CONDITION_NAMES)
    p.add_argument("--n", type=int, default=20, help="forward/inverse demonstrations per side")
    p.add_argument("--points", type=int, default=200, help="timesteps per trajectory")
    p.add_argument("--aux-n", type=int, default=0, help="extra forward-only demonstrations")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _add_common(p)

    p = sub.add_parser("pair", help="match forward and inverse demonstrations")
    p.add_argument("--forward", type=Path, required=True)
    p.add_argument("--inverse", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="paired dataset file")
    p.add_argument("--cost-csv", type=Path, help="also dump the cost matrix")
    _add_common(p)

    p = sub.add_parser("train", help="train a joint model")
    p.add_argument("--paired", type=Path, required=True)
    p.add_argument("--aux", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _add_train_flags(p)
    _add_common(p)

    p = sub.add_parser("infer", help="decode a trajectory from observations")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--obs", type=Path, required=True, help="CSV with columns t,y_1..y_d")
    p.add_argument("--psi", required=True, help="comma-separated task parameter")
    p.add_argument("--target", choices=["forward", "inverse"], default="inverse")
    p.add_argument("--obs-role", choices=["forward", "inverse"], default="forward")
    p.add_argument("--grid", type=int, default=DEFAULT_GRID_POINTS)
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("eval", help="inverse-trajectory MSE on the synthetic test amplitudes")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--n-obs", type=int, default=10)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("experiment", help="run the synthetic multi-condition experiment")
    p.add_argument("--conditions", default="all", help="'all' or comma-separated names")
    p.add_argument("--seeds", type=int, default=5, help="runs per condition")
    p.add_argument("--n-pairs", type=int, default=20)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--n-obs", type=int, default=10)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _add_train_flags(p)
    _add_common(p)
    return parser


def _mkdir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {path}: {exc}") from exc


def cmd_gen_data(args) -> int:
    if args.n < 1 or args.points < 2 or args.aux_n < 0:
        raise UsageError("need --n >= 1, --points >= 2, --aux-n >= 0")
    seed = master_seed(args.seed)
    spec = SynthSpec(Condition(args.condition), args.n, args.points, derive_seed(seed, "gen-data"))
    data = make_condition_datasets(spec)
    _mkdir(args.out)
    storage.save_demos(data.forwards, args.out / "forward.jsonl")
    storage.save_demos(data.inverses, args.out / "inverse.jsonl")
    storage.save_paired(data.paired, args.out / "paired.jsonl")
    manifest = {
        "condition": spec.condition.value,
        "n_pairs": spec.n_pairs,
        "n_points": spec.n_points,
        "amplitude_min": spec.amplitude_min,
        "amplitude_max": spec.amplitude_max,
        "master_seed": seed,
        "data_seed": spec.seed,
        "pairing_cost": data.paired.pairing_cost,
        "aux_n": args.aux_n,
    }
    if args.aux_n:
        rng = np.random.default_rng(derive_seed(seed, "gen-data", "aux"))
        amps = rng.uniform(spec.amplitude_min, spec.amplitude_max, args.aux_n)
        storage.save_demos([forward_demo(float(a), args.points) for a in amps], args.out / "aux.jsonl")
    storage.write_text(args.out / "manifest.json", storage.dumps(manifest) + "\n")
    print(f"wrote {len(data.forwards)} forward + {len(data.inverses)} inverse demonstrations to {args.out}")
    return 0


def cmd_pair(args) -> int:
    forwards = storage.load_demos(args.forward)
    inverses = storage.load_demos(args.inverse)
    paired = pair_demonstrations(forwards, inverses)
    storage.save_paired(paired, args.out)
    if args.cost_csv:
        write_cost_csv(build_cost_matrix(forwards, inverses), args.cost_csv)
    print(f"total cost {paired.pairing_cost:.17g}")
    return 0


def cmd_train(args) -> int:
    seed = master_seed(args.seed)
    paired = storage.load_paired(args.paired)
    aux = AuxiliaryDataset(tuple(storage.load_demos(args.aux))) if args.aux else None
    values = train_config_values(args)
    values.setdefault("seed", derive_seed(seed, "train", "steps"))
    cfg = TrainConfig.from_dict(values)
    if aux is None and cfg.p_aux > 0:
        print(f"no --aux given: p_aux {cfg.p_aux:g} forced to 0")
        cfg = dataclasses.replace(cfg, p_aux=0.0)
    f0, _ = paired.pairs[0]
    dims = ModelDims(d_y=f0.trajectory.d_y, d_psi=f0.d_psi)
    init_seed = derive_seed(seed, "train", "init")
    model = JointModel.create(dims, np.random.default_rng(init_seed))
    _mkdir(args.out)

    def checkpoint(step, m):
        storage.save_model(m, args.out / f"model_step{step}.json", cfg.to_dict(), init_seed)

    trained, tlog = train(model, paired, aux, cfg, checkpoint=checkpoint)
    storage.save_model(trained, args.out / "model.json", cfg.to_dict(), init_seed)
    tlog.write_csv(args.out / "train_log.csv")
    print(f"trained {cfg.steps} steps ({tlog.aux_fraction:.3f} auxiliary); checksum {tlog.checksum}")
    return 0


def _read_obs_csv(path: Path) -> np.ndarray:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if rows and rows[0] and rows[0][0].strip().lower() == "t":
        rows = rows[1:]
    if not rows:
        raise EmptyObservation(f"{path} holds no observations")
    try:
        return np.array([[float(x) for x in r] for r in rows])
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


def cmd_infer(args) -> int:
    if args.grid < 1:
        raise UsageError("--grid must be >= 1")
    model = storage.load_model(args.ckpt)
    obs = _read_obs_csv(args.obs)
    try:
        psi = [float(x) for x in args.psi.split(",")]
    except ValueError:
        raise UsageError(f"bad --psi {args.psi!r}") from None
    grid = default_query_grid(args.grid) if args.grid > 1 else np.array([0.0])
    roll = generate_trajectory(model, obs, Role(args.obs_role), psi, Role(args.target), grid)
    d_y = roll.mean.shape[1]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"mu_{k + 1}" for k in range(d_y)] + [f"sigma_{k + 1}" for k in range(d_y)])
        for t, mu, sd in zip(roll.times, roll.mean, roll.std):
            w.writerow([storage.format_number(t)] + [storage.format_number(x) for x in mu] + [storage.format_number(x) for x in sd])
    print(f"wrote {len(roll.times)} rows to {args.out}")
    return 0


def cmd_eval(args) -> int:
    model = storage.load_model(args.ckpt)
    amps = eval_amplitudes()
    mse = evaluate(model, amps, args.n_obs, args.points)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["test_amplitude", "mse"])
        for a, m in zip(amps, mse):
            w.writerow([storage.format_number(a), storage.format_number(m)])
    print(f"mean MSE {float(np.mean(mse)):.6e} over {mse.size} amplitudes")
    return 0


def parse_conditions(text: str) -> list[Condition]:
    if text.strip().lower() == "all":
        return list(ALL_CONDITIONS)
    try:
        return [Condition.parse(c) for c in text.split(",") if c.strip()]
    except ValueError as exc:
        raise UsageError(f"unknown condition in {text!r}; choose from {CONDITION_NAMES}") from exc


def cmd_experiment(args) -> int:
    conditions = parse_conditions(args.conditions)
    if args.seeds < 1 or args.jobs < 1:
        raise UsageError("--seeds and --jobs must be >= 1")
    cfg = TrainConfig.from_dict(train_config_values(args))
    seed = master_seed(args.seed)
    _mkdir(args.out)
    report = run_experiment(conditions, args.seeds, cfg, seed, args.n_pairs, args.points,
                            args.n_obs, jobs=args.jobs)
    report.write_report(args.out / "report.csv")
    report.write_summary(args.out / "summary.csv")
    print(f"steps per run: {cfg.steps}")
    print(report.format_table())
    if report.failed:
        for c in report.failed:
            print(f"cell {c.condition.value}/{c.seed_index} failed: {c.error}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "pair": cmd_pair,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"invskill {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (InvskillError, ValueError) as exc:
        print(f"invskill {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
