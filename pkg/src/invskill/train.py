"""Interleaved paired / auxiliary training of the joint model.

Each step either draws a batch of matched forward/inverse pairs (all five
networks learn, latents are blended with a random convex weight) or, with
probability ``p_aux``, a batch of forward-only auxiliary demonstrations
(blend weight fixed to 1, inverse encoder and decoder frozen).
"""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import AuxiliaryDataset, Demonstration, PairedDataset, Role, Trajectory
from .errors import ConfigError, EmptyDataset, InvalidTrajectory, RoleError
from .model import INVERSE_BLOCKS, SHARED_BLOCKS, JointModel, ObservationPoint
from .nnet import AdamWState, adamw_step, gaussian_nll_raw, mlp_backward, mlp_forward

log = logging.getLogger(__name__)

PAIRED = "paired"
AUXILIARY = "auxiliary"


@dataclass
class TrainConfig:
    lr: float = 5e-4
    weight_decay: float = 1e-3
    batch_size: int = 4
    steps: int = 60_000
    p_aux: float = 0.2
    obs_min: int = 1
    obs_max: int = 15
    n_query: int = 1
    seed: int = 0
    log_every: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 1 <= self.obs_min <= self.obs_max:
            raise ConfigError(f"need 1 <= obs_min <= obs_max, got {self.obs_min}, {self.obs_max}")
        if not 0.0 <= self.p_aux <= 1.0:
            raise ConfigError(f"p_aux must be a probability, got {self.p_aux}")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.batch_size < 1 or self.n_query < 1:
            raise ConfigError("batch_size and n_query must be >= 1")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ConfigError("lr must be positive and weight_decay nonnegative")
        if self.log_every < 0:
            raise ConfigError("log_every must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainLog:
    steps: list[int] = field(default_factory=list)
    kinds: list[str] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    checksum: str = ""
    # (pair index, forward psi, inverse psi); the forward psi conditions training
    pair_audit: list[tuple[int, list[float], list[float]]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    # AdamW step counts per parameter group at the end of training
    optimizer_steps: dict[str, int] = field(default_factory=dict)

    def record(self, step: int, kind: str, loss: float) -> None:
        self.steps.append(step)
        self.kinds.append(kind)
        self.losses.append(loss)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def aux_fraction(self) -> float:
        return self.kinds.count(AUXILIARY) / max(1, len(self.kinds))

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "pass", "loss"])
            for s, k, loss in zip(self.steps, self.kinds, self.losses):
                w.writerow([s, k, format(loss, ".17g")])


def _draw_indices(length: int, rng: np.random.Generator, obs_min: int, obs_max: int) -> np.ndarray:
    if length < obs_max:
        raise InvalidTrajectory(f"trajectory has {length} points, fewer than obs_max={obs_max}")
    n = int(rng.integers(obs_min, obs_max + 1))
    return np.sort(rng.choice(length, size=n, replace=False))


def sample_observations(
    traj: Trajectory, rng: np.random.Generator, obs_min: int = 1, obs_max: int = 15
) -> list[ObservationPoint]:
    """Between ``obs_min`` and ``obs_max`` distinct timesteps, uniformly at random."""
    idx = _draw_indices(len(traj), rng, obs_min, obs_max)
    return [ObservationPoint(traj.times[k], traj.values[k]) for k in idx]


class _Demo:
    # Flat arrays for the hot loop.
    __slots__ = ("rows", "length", "psi")

    def __init__(self, d: Demonstration):
        tr = d.trajectory
        self.rows = np.column_stack([tr.times, tr.values])
        self.length = len(tr)
        self.psi = d.task_param


class _Stepper:
    """Computes batch losses and gradients into a reusable flat buffer."""

    def __init__(self, model: JointModel, cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        self.grad = np.zeros(model.n_params)
        self.gviews = model.block_views(self.grad)

    def _encode(self, block_name: str, obs_sets: list[np.ndarray]):
        block = self.model.blocks[block_name]
        counts = np.array([o.shape[0] for o in obs_sets])
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        h, tape = mlp_forward(block, np.concatenate(obs_sets))
        r = np.add.reduceat(h, starts, axis=0) / counts[:, None]
        return r, tape, counts

    def _encode_backward(self, block_name, tape, counts, g_r):
        g_rows = np.repeat(g_r / counts[:, None], counts, axis=0)
        mlp_backward(self.model.blocks[block_name], tape, g_rows, out=self.gviews[block_name],
                     need_input_grad=False)

    def _decode(self, block_name, r, e, t_q, y_q, scale):
        # r: (B, d_r), e: (B, d_e); t_q: (B, nq); y_q: (B, nq, d_y)
        B, nq = t_q.shape
        d_r, d_e = r.shape[1], e.shape[1]
        x = np.concatenate(
            [np.repeat(r, nq, axis=0), np.repeat(e, nq, axis=0), t_q.reshape(-1, 1)], axis=1
        )
        out, tape = mlp_forward(self.model.blocks[block_name], x)
        d_y = out.shape[1] // 2
        loss, d_mean, d_raw = gaussian_nll_raw(out[:, :d_y], out[:, d_y:], y_q.reshape(B * nq, d_y))
        g_out = np.concatenate([d_mean, d_raw], axis=1) * scale
        _, g_x = mlp_backward(self.model.blocks[block_name], tape, g_out, out=self.gviews[block_name])
        g_x = g_x.reshape(B, nq, -1).sum(axis=1)
        return loss.reshape(B, nq).mean(axis=1), g_x[:, :d_r], g_x[:, d_r : d_r + d_e]

    def _queries(self, demos: Sequence[_Demo], rng):
        nq = self.cfg.n_query
        t_q = np.empty((len(demos), nq))
        y_q = np.empty((len(demos), nq, demos[0].rows.shape[1] - 1))
        for b, d in enumerate(demos):
            k = rng.integers(d.length, size=nq)
            t_q[b] = d.rows[k, 0]
            y_q[b] = d.rows[k, 1:]
        return t_q, y_q

    def paired(self, pairs: Sequence[tuple[_Demo, _Demo]], rng, p_override=None) -> float:
        """Mean paired loss over ``pairs``; gradients land in ``self.grad``."""
        cfg = self.cfg
        self.grad.fill(0.0)
        obs_f, obs_i, ps = [], [], []
        for fwd, inv in pairs:
            obs_f.append(fwd.rows[_draw_indices(fwd.length, rng, cfg.obs_min, cfg.obs_max)])
            obs_i.append(inv.rows[_draw_indices(inv.length, rng, cfg.obs_min, cfg.obs_max)])
            ps.append(rng.random() if p_override is None else p_override)
        p = np.array(ps)[:, None]
        tq_f, yq_f = self._queries([f for f, _ in pairs], rng)
        tq_i, yq_i = self._queries([i for _, i in pairs], rng)

        r_f, tape_ef, n_f = self._encode("E_F", obs_f)
        r_i, tape_ei, n_i = self._encode("E_I", obs_i)
        r = p * r_f + (1.0 - p) * r_i
        psi = np.stack([f.psi for f, _ in pairs])
        e, tape_psi = mlp_forward(self.model.blocks["E_psi"], psi)

        B = len(pairs)
        scale = 1.0 / (B * cfg.n_query)
        loss_f, gr_f, ge_f = self._decode("D_F", r, e, tq_f, yq_f, scale)
        loss_i, gr_i, ge_i = self._decode("D_I", r, e, tq_i, yq_i, scale)
        g_r = gr_f + gr_i
        mlp_backward(self.model.blocks["E_psi"], tape_psi, ge_f + ge_i,
                     out=self.gviews["E_psi"], need_input_grad=False)
        self._encode_backward("E_F", tape_ef, n_f, p * g_r)
        self._encode_backward("E_I", tape_ei, n_i, (1.0 - p) * g_r)
        return float(np.mean(loss_f + loss_i))

    def auxiliary(self, demos: Sequence[_Demo], rng) -> float:
        """Mean forward-only loss; inverse-block gradients stay zero."""
        cfg = self.cfg
        self.grad.fill(0.0)
        obs = [d.rows[_draw_indices(d.length, rng, cfg.obs_min, cfg.obs_max)] for d in demos]
        tq, yq = self._queries(demos, rng)
        r, tape_e, counts = self._encode("E_F", obs)
        e, tape_psi = mlp_forward(self.model.blocks["E_psi"], np.stack([d.psi for d in demos]))
        scale = 1.0 / (len(demos) * cfg.n_query)
        loss, g_r, g_e = self._decode("D_F", r, e, tq, yq, scale)
        mlp_backward(self.model.blocks["E_psi"], tape_psi, g_e,
                     out=self.gviews["E_psi"], need_input_grad=False)
        self._encode_backward("E_F", tape_e, counts, g_r)
        return float(np.mean(loss))


def paired_pass(
    model: JointModel,
    pair: tuple[Demonstration, Demonstration],
    rng: np.random.Generator,
    cfg: TrainConfig | None = None,
    p: float | None = None,
) -> tuple[float, np.ndarray]:
    """Loss and flat gradient (all five blocks) for one forward/inverse pair.

    ``p`` overrides the random blend weight.
    """
    fwd, inv = pair
    if fwd.role is not Role.FORWARD or inv.role is not Role.INVERSE:
        raise RoleError("pair must be (forward, inverse)")
    stepper = _Stepper(model, cfg or TrainConfig())
    loss = stepper.paired([(_Demo(fwd), _Demo(inv))], rng, p_override=p)
    return loss, stepper.grad.copy()


def auxiliary_pass(
    model: JointModel,
    demo: Demonstration,
    rng: np.random.Generator,
    cfg: TrainConfig | None = None,
) -> tuple[float, np.ndarray]:
    """Loss and flat gradient for one forward-only demonstration.

    Entries for the inverse encoder and decoder are zero.
    """
    if demo.role is not Role.FORWARD:
        raise RoleError("auxiliary pass takes forward demonstrations only")
    stepper = _Stepper(model, cfg or TrainConfig())
    loss = stepper.auxiliary([_Demo(demo)], rng)
    return loss, stepper.grad.copy()


def make_optimizer(model: JointModel, cfg: TrainConfig) -> AdamWState:
    shared = slice(model.slices[SHARED_BLOCKS[0]].start, model.slices[SHARED_BLOCKS[-1]].stop)
    inverse = slice(model.slices[INVERSE_BLOCKS[0]].start, model.slices[INVERSE_BLOCKS[-1]].stop)
    return AdamWState.create(
        model.n_params,
        {"shared": shared, "inverse": inverse},
        lr=cfg.lr,
        weight_decay=cfg.weight_decay,
    )


StepCallback = Callable[[int, str, float, JointModel], None]


def train(
    model: JointModel,
    paired: PairedDataset,
    aux: AuxiliaryDataset | None,
    cfg: TrainConfig,
    callback: StepCallback | None = None,
    checkpoint: Callable[[int, JointModel], None] | None = None,
) -> tuple[JointModel, TrainLog]:
    """Train a copy of ``model``; the input model is left untouched.

    ``callback(step, kind, loss, model)`` runs after every optimizer step and
    ``checkpoint(step, model)`` every ``cfg.log_every`` steps when set.
    """
    if len(paired) == 0:
        raise EmptyDataset("paired dataset is empty")
    model = model.copy()
    aux_demos = list(aux.demos) if aux is not None else []
    trainlog = TrainLog()
    p_aux = cfg.p_aux
    if not aux_demos and p_aux > 0:
        trainlog.notes.append(f"no auxiliary data: p_aux {p_aux} treated as 0")
        log.info(trainlog.notes[-1])
        p_aux = 0.0

    pairs = [(_Demo(f), _Demo(i)) for f, i in paired.pairs]
    aux_flat = [_Demo(d) for d in aux_demos]
    for k, (f, i) in enumerate(paired.pairs):
        trainlog.pair_audit.append((k, f.task_param.tolist(), i.task_param.tolist()))

    rng = np.random.default_rng(cfg.seed)
    stepper = _Stepper(model, cfg)
    opt = make_optimizer(model, cfg)
    for step in range(1, cfg.steps + 1):
        u = rng.random()
        if u < p_aux:
            batch = rng.integers(len(aux_flat), size=cfg.batch_size)
            loss = stepper.auxiliary([aux_flat[k] for k in batch], rng)
            adamw_step(model.params, stepper.grad, opt, only=("shared",))
            kind = AUXILIARY
        else:
            batch = rng.integers(len(pairs), size=cfg.batch_size)
            loss = stepper.paired([pairs[k] for k in batch], rng)
            adamw_step(model.params, stepper.grad, opt)
            kind = PAIRED
        trainlog.record(step, kind, loss)
        if callback is not None:
            callback(step, kind, loss, model)
        if cfg.log_every and step % cfg.log_every == 0:
            window = trainlog.losses[-cfg.log_every :]
            log.info("step %d  mean loss %.5f", step, float(np.mean(window)))
            if checkpoint is not None:
                checkpoint(step, model)
    trainlog.checksum = model.checksum()
    trainlog.optimizer_steps = dict(opt.step_count)
    return model, trainlog
