"""On-disk formats for demonstrations, paired datasets and model checkpoints.

All numbers are written as decimal text with 17 significant digits, which
round-trips every float64 exactly.  Demonstration and paired files are
line-delimited JSON with a header object on the first line; checkpoints are
a single JSON document.

Record numbering in :class:`ParseError` counts demonstration records from 1;
the header is record 0.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .core import Demonstration, PairedDataset, Role, Trajectory, check_consistent
from .errors import InvalidTrajectory, IoError, ParseError
from .model import BLOCK_NAMES, JointModel, ModelDims

DEMOS_FORMAT = "invskill-demos"
PAIRED_FORMAT = "invskill-paired"
MODEL_FORMAT = "invskill-model"
VERSION = 1


class InvalidRecord(ParseError, InvalidTrajectory):
    """A syntactically valid record that violates a trajectory invariant."""


def format_number(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x}")
    s = format(x, ".17g")
    if s.lstrip("-").isdigit():
        s += ".0"  # keeps -0.0 and marks the value as a float
    return s


def dumps(obj: Any) -> str:
    """Compact JSON with exact float text; dict order is preserved."""
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_number(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_text(path: str | Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _read_lines(path: str | Path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def demo_record(d: Demonstration) -> dict:
    return {
        "role": d.role.value,
        "psi": d.task_param,
        "s_init": d.s_init,
        "s_final": d.s_final,
        "t": d.trajectory.times,
        "y": d.trajectory.values,
    }


def demo_from_record(rec: Any, line: int, dims: tuple[int, int, int] | None = None) -> Demonstration:
    if not isinstance(rec, dict):
        raise ParseError("record is not an object", line)
    missing = {"role", "psi", "s_init", "s_final", "t", "y"} - set(rec)
    if missing:
        raise ParseError(f"missing fields {sorted(missing)}", line)
    try:
        role = Role.parse(rec["role"])
        y = np.asarray(rec["y"], dtype=np.float64)
        t = np.asarray(rec["t"], dtype=np.float64)
        psi = np.asarray(rec["psi"], dtype=np.float64)
        s_init = np.asarray(rec["s_init"], dtype=np.float64)
        s_final = np.asarray(rec["s_final"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad field value: {exc}", line) from None
    if y.ndim != 2:
        raise ParseError("y must be an array of rows", line)
    try:
        demo = Demonstration(Trajectory(t, y), psi, s_init, s_final, role)
    except InvalidTrajectory as exc:
        raise InvalidRecord(str(exc), line) from None
    except Exception as exc:
        raise ParseError(str(exc), line) from None
    if dims is not None:
        got = (demo.trajectory.d_y, demo.d_psi, demo.d_s)
        if got != dims:
            raise ParseError(f"dims (d_y, d_psi, d_s) = {got}, header says {dims}", line)
    return demo


def _header(fmt: str, dims: tuple[int, int, int] | None, **extra) -> dict:
    d_y, d_psi, d_s = dims if dims is not None else (None, None, None)
    return {"format": fmt, "version": VERSION, "d_y": d_y, "d_psi": d_psi, "d_s": d_s, **extra}


def _parse_header(line: str, fmt: str) -> tuple[dict, tuple[int, int, int] | None]:
    try:
        head = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad header: {exc.msg}", 0) from None
    if not isinstance(head, dict) or head.get("format") != fmt:
        raise ParseError(f"not an {fmt} file", 0)
    if head.get("version") != VERSION:
        raise ParseError(f"unsupported version {head.get('version')!r}", 0)
    keys = ("d_y", "d_psi", "d_s")
    if all(head.get(k) is None for k in keys):
        return head, None
    try:
        return head, tuple(int(head[k]) for k in keys)  # type: ignore[return-value]
    except (KeyError, TypeError, ValueError):
        raise ParseError("header dims must be integers", 0) from None


def save_demos(demos: Sequence[Demonstration], path: str | Path) -> None:
    dims = check_consistent(demos)
    lines = [dumps(_header(DEMOS_FORMAT, dims))]
    lines += [dumps(demo_record(d)) for d in demos]
    write_text(path, "\n".join(lines) + "\n")


def _records(lines: list[str]) -> Iterable[tuple[int, Any]]:
    for k, text in enumerate(lines[1:], start=1):
        if not text.strip():
            continue
        try:
            yield k, json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON: {exc.msg}", k) from None


def load_demos(path: str | Path) -> list[Demonstration]:
    """Demonstrations in file order; an empty file gives an empty list."""
    lines = _read_lines(path)
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        return []
    _, dims = _parse_header(lines[0], DEMOS_FORMAT)
    return [demo_from_record(rec, k, dims) for k, rec in _records(lines)]


def save_paired(paired: PairedDataset, path: str | Path) -> None:
    flat = [d for pair in paired.pairs for d in pair]
    dims = check_consistent(flat)
    costs = paired.pair_costs or tuple(
        float(np.linalg.norm(f.s_final - i.s_init)) for f, i in paired.pairs
    )
    lines = [dumps(_header(PAIRED_FORMAT, dims, total_cost=float(paired.pairing_cost)))]
    for (f, i), c in zip(paired.pairs, costs):
        lines.append(dumps({"forward": demo_record(f), "inverse": demo_record(i), "cost": c}))
    write_text(path, "\n".join(lines) + "\n")


def load_paired(path: str | Path) -> PairedDataset:
    lines = _read_lines(path)
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ParseError("empty paired file", 0)
    head, dims = _parse_header(lines[0], PAIRED_FORMAT)
    pairs, costs = [], []
    for k, rec in _records(lines):
        if not isinstance(rec, dict) or not {"forward", "inverse"} <= set(rec):
            raise ParseError("paired record needs 'forward' and 'inverse'", k)
        pairs.append((demo_from_record(rec["forward"], k, dims), demo_from_record(rec["inverse"], k, dims)))
        costs.append(float(rec.get("cost", np.linalg.norm(pairs[-1][0].s_final - pairs[-1][1].s_init))))
    total = head.get("total_cost")
    if total is None:
        total = 0.0
        for c in costs:
            total += c
    try:
        return PairedDataset(tuple(pairs), float(total), tuple(costs))
    except Exception as exc:
        raise ParseError(str(exc), 0) from None


def model_document(model: JointModel, train_config: dict | None = None, rng_seed: int | None = None) -> dict:
    blocks = {}
    for name in BLOCK_NAMES:
        blocks[name] = [{"W": layer.W, "b": layer.b} for layer in model.blocks[name].layers]
    return {
        "format": MODEL_FORMAT,
        "version": VERSION,
        "dims": model.dims.to_dict(),
        "blocks": blocks,
        "train_config": train_config or {},
        "rng_seed": rng_seed,
    }


def save_model(
    model: JointModel,
    path: str | Path,
    train_config: dict | None = None,
    rng_seed: int | None = None,
) -> None:
    write_text(path, dumps(model_document(model, train_config, rng_seed)) + "\n")


def load_checkpoint(path: str | Path) -> tuple[JointModel, dict, int | None]:
    """Model plus the stored training config and seed."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"corrupt checkpoint {path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ParseError(f"{path} is not an {MODEL_FORMAT} document")
    if doc.get("version") != VERSION:
        raise ParseError(f"unsupported checkpoint version {doc.get('version')!r}")
    try:
        dims = ModelDims.from_dict(doc["dims"])
        model = JointModel(dims)
        for name in BLOCK_NAMES:
            layers = doc["blocks"][name]
            block = model.blocks[name]
            if len(layers) != len(block.layers):
                raise ParseError(f"block {name} has {len(layers)} layers, expected {len(block.layers)}")
            for layer, stored in zip(block.layers, layers):
                W = np.asarray(stored["W"], dtype=np.float64)
                b = np.asarray(stored["b"], dtype=np.float64)
                if W.shape != layer.W.shape or b.shape != layer.b.shape:
                    raise ParseError(f"block {name}: parameter shape mismatch")
                layer.W[...] = W
                layer.b[...] = b
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed checkpoint: {exc!r}") from None
    return model, dict(doc.get("train_config") or {}), doc.get("rng_seed")


def load_model(path: str | Path) -> JointModel:
    return load_checkpoint(path)[0]
