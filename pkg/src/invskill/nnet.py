"""Dense-network numerics in float64: forward, reverse-mode gradients,
Gaussian negative log-likelihood and AdamW.

Layers hold views into caller-owned buffers so that a whole model can live
in one flat parameter vector; the optimizer then updates contiguous slices.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import GaussianPrediction
from .errors import DimMismatch, InvalidStd, StateError

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
STD_FLOOR = 1e-6


class Activation(str, enum.Enum):
    RELU = "relu"
    IDENTITY = "identity"


@dataclass
class DenseLayer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: Activation = Activation.IDENTITY

    @property
    def in_width(self) -> int:
        return self.W.shape[1]

    @property
    def out_width(self) -> int:
        return self.W.shape[0]


@dataclass
class MlpBlock:
    layers: list[DenseLayer]

    def __post_init__(self):
        if not self.layers:
            raise DimMismatch("an MLP block needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_width != nxt.in_width:
                raise DimMismatch(
                    f"layer widths do not chain: {prev.out_width} -> {nxt.in_width}"
                )
        if self.layers[-1].activation is not Activation.IDENTITY:
            raise DimMismatch("last layer must be linear")

    @property
    def in_width(self) -> int:
        return self.layers[0].in_width

    @property
    def out_width(self) -> int:
        return self.layers[-1].out_width

    @property
    def widths(self) -> list[int]:
        return [self.in_width] + [layer.out_width for layer in self.layers]

    @property
    def n_params(self) -> int:
        return sum(layer.W.size + layer.b.size for layer in self.layers)


def mlp_param_count(widths: Sequence[int]) -> int:
    return sum(a * b + b for a, b in zip(widths, widths[1:]))


def build_mlp(widths: Sequence[int], buffer: np.ndarray | None = None) -> MlpBlock:
    """Lay out an MLP with the given widths over ``buffer`` (W then b per layer).

    Hidden layers use ReLU, the output layer is linear.  Without a buffer a
    zero-filled one is allocated.
    """
    n = mlp_param_count(widths)
    if buffer is None:
        buffer = np.zeros(n)
    if buffer.size != n:
        raise DimMismatch(f"buffer holds {buffer.size} values, block needs {n}")
    layers = []
    off = 0
    last = len(widths) - 2
    for k, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        W = buffer[off : off + fan_in * fan_out].reshape(fan_out, fan_in)
        off += fan_in * fan_out
        b = buffer[off : off + fan_out]
        off += fan_out
        act = Activation.IDENTITY if k == last else Activation.RELU
        layers.append(DenseLayer(W, b, act))
    return MlpBlock(layers)


def glorot_init(block: MlpBlock, rng: np.random.Generator) -> None:
    """Uniform(+-sqrt(6 / (fan_in + fan_out))) weights and zero biases, in place."""
    for layer in block.layers:
        limit = math.sqrt(6.0 / (layer.in_width + layer.out_width))
        layer.W[...] = rng.uniform(-limit, limit, size=layer.W.shape)
        layer.b[...] = 0.0


@dataclass
class Tape:
    """Layer inputs and ReLU masks recorded by :func:`mlp_forward`."""

    inputs: list[np.ndarray] = field(default_factory=list)
    masks: list[np.ndarray | None] = field(default_factory=list)
    vector_input: bool = False


def mlp_forward(block: MlpBlock, x) -> tuple[np.ndarray, Tape]:
    """Evaluate ``block`` on one input vector or a batch of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    tape = Tape(vector_input=x.ndim == 1)
    a = x[None, :] if x.ndim == 1 else x
    if a.ndim != 2 or a.shape[1] != block.in_width:
        raise DimMismatch(f"input width {x.shape[-1]} != block input width {block.in_width}")
    for layer in block.layers:
        tape.inputs.append(a)
        z = a @ layer.W.T
        z += layer.b
        if layer.activation is Activation.RELU:
            mask = z > 0
            z *= mask
            tape.masks.append(mask)
        else:
            tape.masks.append(None)
        a = z
    return (a[0] if tape.vector_input else a), tape


def mlp_backward(
    block: MlpBlock,
    tape: Tape | None,
    grad_out,
    out: MlpBlock | None = None,
    need_input_grad: bool = True,
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray | None]:
    """Reverse-mode pass through ``block`` given dLoss/dOutput.

    Returns per-layer ``(dW, db)`` and dLoss/dInput.  When ``out`` (a block of
    the same shape, typically laid over a gradient buffer) is given, parameter
    gradients are accumulated into it instead of freshly allocated.
    """
    if tape is None or len(tape.inputs) != len(block.layers):
        raise StateError("no forward tape recorded for this block")
    g = np.asarray(grad_out, dtype=np.float64)
    if tape.vector_input:
        g = g[None, :]
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(block.layers)  # type: ignore[list-item]
    for k in range(len(block.layers) - 1, -1, -1):
        layer = block.layers[k]
        mask = tape.masks[k]
        if mask is not None:
            g = g * mask
        a = tape.inputs[k]
        if out is not None:
            dW, db = out.layers[k].W, out.layers[k].b
            dW += g.T @ a
            db += g.sum(axis=0)
        else:
            dW, db = g.T @ a, g.sum(axis=0)
        grads[k] = (dW, db)
        if k > 0 or need_input_grad:
            g = g @ layer.W
    grad_in = None
    if need_input_grad:
        grad_in = g[0] if tape.vector_input else g
    return grads, grad_in


def softplus(z):
    return np.logaddexp(0.0, z)


def sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def std_from_raw(z):
    """Map unconstrained decoder outputs to strictly positive deviations."""
    return softplus(z) + STD_FLOOR


def gaussian_nll(pred: GaussianPrediction, target) -> float:
    """Negative log-likelihood of ``target`` under independent Gaussians."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.mean.shape:
        raise DimMismatch(f"target shape {target.shape} != prediction shape {pred.mean.shape}")
    if not np.all(pred.std > 0):
        raise InvalidStd("standard deviation must be positive")
    zscore = (target - pred.mean) / pred.std
    return float(np.sum(np.log(pred.std) + HALF_LOG_2PI + 0.5 * zscore * zscore))


def gaussian_nll_raw(mean: np.ndarray, raw_std: np.ndarray, target: np.ndarray):
    """NLL per row plus gradients w.r.t. ``mean`` and the pre-softplus ``raw_std``.

    All arrays are ``(n, d_y)``; the loss is summed over the last axis.
    """
    sigma = std_from_raw(raw_std)
    diff = mean - target
    inv = 1.0 / sigma
    zsq = (diff * inv) ** 2
    loss = np.sum(np.log(sigma) + HALF_LOG_2PI + 0.5 * zsq, axis=-1)
    d_mean = diff * inv * inv
    d_sigma = inv * (1.0 - zsq)
    d_raw = d_sigma * sigmoid(raw_std)
    return loss, d_mean, d_raw


# Moments of parameters that stop receiving gradient (dead ReLU units) decay
# geometrically and would reach the subnormal range after a few thousand steps,
# where float arithmetic becomes several times slower.  Entries this small
# cannot affect an update, so they are zeroed every FLUSH_EVERY steps.
FLUSH_BELOW = 1e-200
FLUSH_EVERY = 256


@dataclass
class AdamWState:
    """Moments and per-group step counters for :func:`adamw_step`.

    ``groups`` maps a name to a slice of the flat parameter vector; each group
    keeps its own step count so that groups skipped in a step (frozen) do not
    advance their bias correction.
    """

    m: np.ndarray
    v: np.ndarray
    groups: dict[str, slice]
    step_count: dict[str, int]
    lr: float = 1e-3
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    scratch: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def create(
        cls,
        n_params: int,
        groups: Mapping[str, slice] | None = None,
        **hyper,
    ) -> "AdamWState":
        groups = dict(groups) if groups else {"all": slice(0, n_params)}
        return cls(
            m=np.zeros(n_params),
            v=np.zeros(n_params),
            groups=groups,
            step_count={name: 0 for name in groups},
            **hyper,
        )


def adamw_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamWState,
    only: Sequence[str] | None = None,
) -> tuple[np.ndarray, AdamWState]:
    """One AdamW update, in place, over the groups named in ``only`` (default all).

    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
    """
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise DimMismatch(
            f"params {params.shape}, grads {grads.shape}, state {state.m.shape} differ"
        )
    names = list(state.groups) if only is None else list(only)
    if state.scratch is None or state.scratch.shape != params.shape:
        state.scratch = np.empty_like(params)
    b1, b2 = state.beta1, state.beta2
    for name in names:
        s = state.groups[name]
        t = state.step_count[name] + 1
        state.step_count[name] = t
        g, m, v, tmp, theta = grads[s], state.m[s], state.v[s], state.scratch[s], params[s]
        m *= b1
        np.multiply(g, 1.0 - b1, out=tmp)
        m += tmp
        v *= b2
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - b2
        v += tmp
        if t % FLUSH_EVERY == 0:
            for acc in (m, v):
                np.abs(acc, out=tmp)
                acc[tmp < FLUSH_BELOW] = 0.0
        # m_hat / (sqrt(v_hat) + eps) with the bias corrections folded into scalars
        np.sqrt(v, out=tmp)
        tmp *= 1.0 / math.sqrt(1.0 - b2**t)
        tmp += state.eps
        np.divide(m, tmp, out=tmp)
        tmp *= state.lr / (1.0 - b1**t)
        theta *= 1.0 - state.lr * state.weight_decay
        theta -= tmp
    return params, state
