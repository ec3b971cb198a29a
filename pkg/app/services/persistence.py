"""Result files, problem fixtures and channel dumps."""

import csv
import json
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from pydantic import BaseModel
from scipy import sparse

from app.core.logger import get_logger
from app.models.channel import ChannelRealization
from app.models.conic import ConeDims, SocpProblem

logger = get_logger(__name__)

PathLike = Union[str, Path]


def write_csv(path: PathLike, rows: Sequence[BaseModel]) -> Path:
    """One header row plus one line per model, in field order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        raise ValueError("no rows to write")
    fieldnames = list(type(rows[0]).model_fields)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row.model_dump())
    logger.info("Wrote %s rows to %s", len(rows), path)
    return path


def write_json(path: PathLike, model: BaseModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def dump_problem(path: PathLike, problem: SocpProblem) -> Path:
    """Plain JSON matrices, dense, for regression fixtures."""
    payload = {
        "c": problem.c.tolist(),
        "G": problem.G.toarray().tolist(),
        "h": problem.h.tolist(),
        "A": problem.A.toarray().tolist(),
        "b": problem.b.tolist(),
        "dims": {"l": problem.dims.l, "q": list(problem.dims.q)},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def load_problem(path: PathLike) -> SocpProblem:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    n = len(payload["c"])
    a = np.asarray(payload["A"], dtype=float).reshape(-1, n)
    return SocpProblem(
        c=np.asarray(payload["c"], dtype=float),
        G=sparse.csr_matrix(np.asarray(payload["G"], dtype=float).reshape(-1, n)),
        h=np.asarray(payload["h"], dtype=float),
        dims=ConeDims(l=int(payload["dims"]["l"]), q=tuple(int(q) for q in payload["dims"]["q"])),
        A=sparse.csr_matrix(a),
        b=np.asarray(payload["b"], dtype=float),
    )


def dump_channel(path: PathLike, channels: ChannelRealization, seed: int) -> Path:
    """``<path>.npy`` with H plus ``<path>.json`` describing it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path.with_suffix(".npy"), channels.h)
    header = {"shape": list(channels.h.shape), "dtype": str(channels.h.dtype), "seed": seed}
    path.with_suffix(".json").write_text(json.dumps(header), encoding="utf-8")
    return path.with_suffix(".npy")


def load_channel(path: PathLike) -> ChannelRealization:
    return ChannelRealization(h=np.load(Path(path).with_suffix(".npy")))
