"""Joint forward/inverse conditional neural process.

Two encoders (forward, inverse) turn observed ``(t, y)`` points into latent
vectors that are averaged per demonstration and blended convexly.  The task
parameter is embedded by its own network, concatenated with the latent and a
query time, and decoded into a Gaussian by a forward or an inverse decoder.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import GaussianPrediction, Role, Trajectory
from .errors import DimMismatch, EmptyObservation, InvalidWeight
from .nnet import MlpBlock, build_mlp, glorot_init, mlp_forward, mlp_param_count, std_from_raw

log = logging.getLogger(__name__)

# Frozen-during-auxiliary blocks come last so they form one contiguous tail.
BLOCK_NAMES = ("E_F", "E_psi", "D_F", "E_I", "D_I")
INVERSE_BLOCKS = ("E_I", "D_I")
SHARED_BLOCKS = ("E_F", "E_psi", "D_F")

DEFAULT_GRID_POINTS = 200


@dataclass(frozen=True)
class ModelDims:
    d_y: int = 1
    d_psi: int = 1
    d_r: int = 128
    d_e: int = 16
    enc_hidden: tuple[int, ...] = (128, 128)
    embed_hidden: tuple[int, ...] = (32,)
    dec_hidden: tuple[int, ...] = (128, 128)

    def __post_init__(self):
        for name in ("enc_hidden", "embed_hidden", "dec_hidden"):
            object.__setattr__(self, name, tuple(int(w) for w in getattr(self, name)))

    def widths(self, block: str) -> list[int]:
        enc = [1 + self.d_y, *self.enc_hidden, self.d_r]
        dec = [self.d_r + self.d_e + 1, *self.dec_hidden, 2 * self.d_y]
        return {
            "E_F": enc,
            "E_I": enc,
            "E_psi": [self.d_psi, *self.embed_hidden, self.d_e],
            "D_F": dec,
            "D_I": dec,
        }[block]

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelDims":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


class JointModel:
    """Parameters of all five networks, stored in one flat float64 vector.

    ``blocks[name]`` are views into ``params``; ``slices[name]`` locates each
    block in the vector.
    """

    def __init__(self, dims: ModelDims, params: np.ndarray | None = None):
        self.dims = dims
        sizes = [mlp_param_count(dims.widths(n)) for n in BLOCK_NAMES]
        total = sum(sizes)
        if params is None:
            params = np.zeros(total)
        params = np.ascontiguousarray(params, dtype=np.float64)
        if params.shape != (total,):
            raise DimMismatch(f"expected {total} parameters, got {params.shape}")
        self.params = params
        self.slices: dict[str, slice] = {}
        self.blocks: dict[str, MlpBlock] = {}
        off = 0
        for name, size in zip(BLOCK_NAMES, sizes):
            self.slices[name] = slice(off, off + size)
            self.blocks[name] = build_mlp(dims.widths(name), params[off : off + size])
            off += size

    @classmethod
    def create(cls, dims: ModelDims, rng: np.random.Generator) -> "JointModel":
        model = cls(dims)
        for name in BLOCK_NAMES:
            glorot_init(model.blocks[name], rng)
        log.info("joint model with %d trainable parameters", model.n_params)
        return model

    @property
    def n_params(self) -> int:
        return self.params.size

    def block_views(self, flat: np.ndarray) -> dict[str, MlpBlock]:
        """Lay the model's block structure over another vector (e.g. gradients)."""
        return {
            name: build_mlp(self.dims.widths(name), flat[self.slices[name]])
            for name in BLOCK_NAMES
        }

    def encoder(self, role: Role | str) -> MlpBlock:
        return self.blocks["E_F" if Role.parse(role) is Role.FORWARD else "E_I"]

    def decoder(self, role: Role | str) -> MlpBlock:
        return self.blocks["D_F" if Role.parse(role) is Role.FORWARD else "D_I"]

    @property
    def embedder(self) -> MlpBlock:
        return self.blocks["E_psi"]

    def checksum(self, names: Iterable[str] = BLOCK_NAMES) -> str:
        h = hashlib.sha256()
        for name in names:
            h.update(name.encode())
            h.update(self.params[self.slices[name]].tobytes())
        return h.hexdigest()

    def copy(self) -> "JointModel":
        return JointModel(self.dims, self.params.copy())

    def __deepcopy__(self, memo):
        return self.copy()


@dataclass(frozen=True)
class ObservationPoint:
    t: float
    y: np.ndarray

    def __post_init__(self):
        t = float(self.t)
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"observation time {t} outside [0, 1]")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=np.float64)))


@dataclass(frozen=True)
class LatentRep:
    r: np.ndarray


@dataclass(frozen=True)
class TaskEmbedding:
    e: np.ndarray


def observation_rows(obs) -> np.ndarray:
    """Stack observations into ``(n, 1 + d_y)`` rows of ``t ⊕ y``."""
    if isinstance(obs, np.ndarray):
        rows = np.asarray(obs, dtype=np.float64)
        if rows.ndim != 2:
            raise DimMismatch("observation array must be 2-D (n, 1 + d_y)")
    else:
        obs = list(obs)
        if not obs:
            raise EmptyObservation("no observations")
        rows = np.stack([np.concatenate(([p.t], p.y)) for p in obs])
    if rows.shape[0] == 0:
        raise EmptyObservation("no observations")
    return rows


def canonical_order(rows: np.ndarray) -> np.ndarray:
    """Indices sorting rows by t, then by y columns; stable for exact duplicates."""
    keys = tuple(rows[:, k] for k in range(rows.shape[1] - 1, -1, -1))
    return np.lexsort(keys)


def encode(encoder: MlpBlock, obs) -> LatentRep:
    """Mean of per-observation encodings, taken in canonical order."""
    rows = observation_rows(obs)
    if rows.shape[1] != encoder.in_width:
        raise DimMismatch(f"observation width {rows.shape[1]} != encoder input {encoder.in_width}")
    rows = rows[canonical_order(rows)]
    # One row at a time: BLAS may round a 1-row product differently from a
    # batched one, and the mean must not depend on the observation count.
    total = np.zeros(encoder.out_width)
    for row in rows:
        h, _ = mlp_forward(encoder, row)
        total += h
    return LatentRep(total / rows.shape[0])


def blend(r_f: LatentRep, r_i: LatentRep, p: float) -> LatentRep:
    """``p * r_f + (1 - p) * r_i``; the endpoints return an input unchanged."""
    if r_f.r.shape != r_i.r.shape:
        raise DimMismatch(f"latent widths differ: {r_f.r.shape} vs {r_i.r.shape}")
    if not 0.0 <= p <= 1.0:
        raise InvalidWeight(f"blend weight {p} outside [0, 1]")
    if p == 1.0:
        return LatentRep(r_f.r.copy())
    if p == 0.0:
        return LatentRep(r_i.r.copy())
    return LatentRep(p * r_f.r + (1.0 - p) * r_i.r)


def embed_task_param(embed: MlpBlock, psi) -> TaskEmbedding:
    psi = np.atleast_1d(np.asarray(psi, dtype=np.float64))
    if psi.ndim != 1 or psi.size != embed.in_width:
        raise DimMismatch(f"task parameter width {psi.size} != embedder input {embed.in_width}")
    e, _ = mlp_forward(embed, psi)
    return TaskEmbedding(e)


def _decoder_input(r: np.ndarray, e: np.ndarray, t_q: np.ndarray) -> np.ndarray:
    n = t_q.size
    return np.concatenate(
        [np.broadcast_to(r, (n, r.size)), np.broadcast_to(e, (n, e.size)), t_q[:, None]], axis=1
    )


def decode(decoder: MlpBlock, r: LatentRep, e: TaskEmbedding, t_q: float) -> GaussianPrediction:
    """Gaussian over sensorimotor values at query time ``t_q``."""
    if not 0.0 <= t_q <= 1.0:
        raise ValueError(f"query time {t_q} outside [0, 1]")
    width = r.r.size + e.e.size + 1
    if width != decoder.in_width:
        raise DimMismatch(f"decoder input {width} != decoder width {decoder.in_width}")
    out, _ = mlp_forward(decoder, _decoder_input(r.r, e.e, np.array([float(t_q)]))[0])
    d_y = out.size // 2
    return GaussianPrediction(out[:d_y], std_from_raw(out[d_y:]))


@dataclass(frozen=True)
class Rollout:
    """Decoded means and deviations on a query grid."""

    times: np.ndarray
    mean: np.ndarray  # (n, d_y)
    std: np.ndarray  # (n, d_y)

    @property
    def trajectory(self) -> Trajectory:
        return Trajectory(self.times, self.mean)


def default_query_grid(n: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def generate_trajectory(
    model: JointModel,
    obs,
    obs_role: Role | str,
    psi,
    target_role: Role | str,
    query_times: Sequence[float] | np.ndarray | None = None,
) -> Rollout:
    """Condition on observations of one role and decode the other (or same) role.

    The latent comes solely from the observed side, i.e. blend weight 1
    toward the observed encoder.
    """
    t_q = default_query_grid() if query_times is None else np.asarray(query_times, np.float64)
    if t_q.ndim != 1 or t_q.size == 0:
        raise ValueError("query_times must be a nonempty vector")
    if np.any((t_q < 0.0) | (t_q > 1.0)):
        raise ValueError("query times must lie in [0, 1]")
    r = encode(model.encoder(obs_role), obs)
    e = embed_task_param(model.embedder, psi)
    decoder = model.decoder(target_role)
    out, _ = mlp_forward(decoder, _decoder_input(r.r, e.e, t_q))
    d_y = model.dims.d_y
    return Rollout(t_q.copy(), out[:, :d_y], std_from_raw(out[:, d_y:]))
