"""Synthetic linear-regression task, IID client shards, loss and gradient oracles.

Loss convention (fixes the smoothness constant): for a data set S,

    f_S(x) = mean_k (<x, a_k> - y_k)^2 + reg * ||x||^2
    grad   = (2/|S|) * A^T (A x - y) + 2 * reg * x
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .streams import Purpose, stream


class Dataset(Protocol):
    features: np.ndarray
    labels: np.ndarray


@dataclass(frozen=True)
class RegressionTask:
    m: int
    d: int
    true_w: np.ndarray = field(repr=False)
    features: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    label_noise_var: float
    seed: int


@dataclass(frozen=True)
class ClientShard:
    client_id: int
    indices: np.ndarray = field(repr=False)
    features: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class LossConfig:
    reg: float = 1e-4
    batch_size: int | None = 32  # None = full local batch

    def __post_init__(self) -> None:
        if self.reg < 0:
            raise ValueError(f"reg must be >= 0, got {self.reg}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError(f"batch_size must be positive or None (full), got {self.batch_size}")


def generate_task(m: int, d: int, label_noise_var: float, seed: int) -> RegressionTask:
    """Draw ``y = <w, x> + eps`` with ``x, w ~ N(0, I)`` and ``eps ~ N(0, label_noise_var)``."""
    if m < 1 or d < 1:
        raise ValueError(f"m and d must be >= 1, got m={m}, d={d}")
    if label_noise_var < 0:
        raise ValueError(f"label_noise_var must be >= 0, got {label_noise_var}")
    rng = stream(seed, Purpose.DATA)
    true_w = rng.standard_normal(d)
    features = rng.standard_normal((m, d))
    eps = rng.standard_normal(m) * np.sqrt(label_noise_var)
    labels = features @ true_w + eps
    for a in (true_w, features, labels):
        a.setflags(write=False)
    return RegressionTask(m, d, true_w, features, labels, float(label_noise_var), seed)


def partition(task: RegressionTask, n: int, seed: int) -> list[ClientShard]:
    """Random IID split into ``n`` shards whose sizes differ by at most one."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if n > task.m:
        raise ValueError(f"cannot split {task.m} samples across {n} clients")
    perm = stream(seed, Purpose.PARTITION).permutation(task.m)
    shards = []
    for i, idx in enumerate(np.array_split(perm, n)):
        idx = np.sort(idx)
        shards.append(ClientShard(i, idx, task.features[idx], task.labels[idx]))
    return shards


def evaluate_loss(x: np.ndarray, data: Dataset, reg: float = 0.0) -> float:
    if len(data.labels) == 0:
        raise ValueError("cannot evaluate loss on an empty data set")
    r = data.features @ x - data.labels
    return float(r @ r / len(r) + reg * (x @ x))


def full_gradient(x: np.ndarray, data: Dataset, reg: float = 0.0) -> np.ndarray:
    a = data.features
    return (2.0 / a.shape[0]) * (a.T @ (a @ x - data.labels)) + 2.0 * reg * x


def gradient(x: np.ndarray, shard: Dataset, cfg: LossConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Stochastic gradient of a local objective.

    With ``cfg.batch_size`` set, draws a mini-batch uniformly without
    replacement from the shard; otherwise returns the exact local gradient.
    """
    m_i = len(shard.labels)
    if cfg.batch_size is None:
        return full_gradient(x, shard, cfg.reg)
    if cfg.batch_size > m_i:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds shard size {m_i}")
    if rng is None:
        raise ValueError("a mini-batch gradient needs an rng")
    idx = rng.choice(m_i, size=cfg.batch_size, replace=False)
    a = shard.features[idx]
    r = a @ x - shard.labels[idx]
    return (2.0 / cfg.batch_size) * (a.T @ r) + 2.0 * cfg.reg * x


def save_task_csv(task: RegressionTask, path: str | Path) -> None:
    """Write the task as CSV: a header row, its values, ``true_w``, then one row per sample (features..., label)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("m,d,label_noise_var,seed\n")
        fh.write(f"{task.m},{task.d},{task.label_noise_var!r},{task.seed}\n")
        fh.write(",".join(repr(float(v)) for v in task.true_w) + "\n")
        for row, y in zip(task.features, task.labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{float(y)!r}\n")


def load_task_csv(path: str | Path) -> RegressionTask:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "m,d,label_noise_var,seed":
            raise ValueError(f"{path}: unexpected task header {header!r}")
        m, d, var, seed = fh.readline().strip().split(",")
        m, d = int(m), int(d)
        true_w = np.array([float(v) for v in fh.readline().split(",")])
        body = np.loadtxt(fh, delimiter=",", ndmin=2)
    if true_w.shape != (d,) or body.shape != (m, d + 1):
        raise ValueError(f"{path}: body shape {body.shape} does not match m={m}, d={d}")
    return RegressionTask(m, d, true_w, body[:, :d].copy(), body[:, d].copy(), float(var), int(seed))
