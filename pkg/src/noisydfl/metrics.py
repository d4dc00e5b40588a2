"""Per-round quantities logged by the simulator and their repeat-averages."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .datagen import Dataset, evaluate_loss, full_gradient


@dataclass(frozen=True)
class MetricsRecord:
    algorithm: str
    topology: str
    noise_var_per_coord: float
    repeat: int
    t: int
    eta: float
    loss: float
    consensus_error: float
    grad_norm_sq: float
    diverged: bool = False
    local_loss: float = float("nan")


@dataclass(frozen=True)
class MeanRecord:
    algorithm: str
    topology: str
    noise_var_per_coord: float
    t: int
    eta: float
    loss: float
    consensus_error: float
    grad_norm_sq: float
    local_loss: float
    survivors: int
    diverged: int = 0  # repeats whose last recorded round is this one


def consensus_error(x: np.ndarray) -> float:
    """``(1/n) * sum_i ||x_i - xbar||^2`` for the d x n parameter matrix."""
    dev = x - x.mean(axis=1, keepdims=True)
    return float(np.sum(dev * dev) / x.shape[1])


def grad_norm_at_average(x: np.ndarray, task: Dataset, reg: float) -> float:
    g = full_gradient(x.mean(axis=1), task, reg)
    return float(g @ g)


def evaluate_state(x: np.ndarray, task: Dataset, shards, reg: float) -> tuple[float, float, float, float]:
    """``(loss at xbar, consensus error, ||grad f(xbar)||^2, mean of local losses)``."""
    xbar = x.mean(axis=1)
    loss = evaluate_loss(xbar, task, reg)
    local = float(np.mean([evaluate_loss(x[:, s.client_id], s, reg) for s in shards]))
    g = full_gradient(xbar, task, reg)
    return loss, consensus_error(x), float(g @ g), local


def aggregate(records) -> list[MeanRecord]:
    """Mean over repeats per ``(algorithm, topology, noise, t)``.

    A repeat that diverged stops contributing after its last recorded round;
    ``survivors`` counts the repeats present in each group.
    """
    records = list(records)
    if not records:
        raise ValueError("cannot aggregate an empty record set")
    groups: dict[tuple, list[MetricsRecord]] = defaultdict(list)
    for r in records:
        groups[(r.algorithm, r.topology, r.noise_var_per_coord, r.t)].append(r)
    out = []
    for (alg, topo, noise, t), rs in groups.items():
        out.append(MeanRecord(
            algorithm=alg, topology=topo, noise_var_per_coord=noise, t=t,
            eta=rs[0].eta,
            loss=float(np.mean([r.loss for r in rs])),
            consensus_error=float(np.mean([r.consensus_error for r in rs])),
            grad_norm_sq=float(np.mean([r.grad_norm_sq for r in rs])),
            local_loss=float(np.mean([r.local_loss for r in rs])),
            survivors=len(rs),
            diverged=sum(r.diverged for r in rs),
        ))
    return out
