"""FedNDL1/2/3 round updates and the training driver.

Parameters are held as a d x n matrix ``X`` whose column ``i`` is client
``i``'s vector.  Mixing multiplies by ``W^T`` from the right, i.e.
``x_i <- sum_j w_ij * x_j``.  Every step is synchronous: all gradients and
noise for round ``t`` are drawn from the pre-round snapshot, and a fresh
matrix is returned.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .channel import NoiseSchedule, sample_noise
from .datagen import ClientShard, LossConfig, RegressionTask, gradient
from .metrics import MetricsRecord, MeanRecord, aggregate, evaluate_state
from .streams import Purpose, stream
from .topology import MixingMatrix

log = logging.getLogger(__name__)

ALGORITHMS = ("FedNDL1", "FedNDL2", "FedNDL3")

GradientOracle = Callable[[np.ndarray], np.ndarray]


class DivergenceError(FloatingPointError):
    def __init__(self, t: int, algorithm: str, client: int):
        super().__init__(f"{algorithm}: non-finite parameters for client {client} after round {t}")
        self.t = t
        self.algorithm = algorithm
        self.client = client


@dataclass(frozen=True)
class LrSchedule:
    lr0: float
    decay: float = 1.0
    kind: str = "geometric"  # or "constant"

    def __post_init__(self) -> None:
        if not self.lr0 > 0:
            raise ValueError(f"lr0 must be > 0, got {self.lr0}")
        if not 0 < self.decay <= 1:
            raise ValueError(f"decay must be in (0, 1], got {self.decay}")
        if self.kind not in ("geometric", "constant"):
            raise ValueError(f"unknown lr schedule {self.kind!r}")


def lr_at(schedule: LrSchedule, t: int) -> float:
    if t < 0:
        raise ValueError(f"round must be >= 0, got {t}")
    if schedule.kind == "constant":
        return schedule.lr0
    return schedule.lr0 * schedule.decay ** t


@dataclass
class Step:
    """Outcome of one round: the new state plus what was drawn to get there."""

    x: np.ndarray
    grads: np.ndarray
    noise: np.ndarray
    mixed_at: np.ndarray | None = None  # FedNDL2: the post-gossip point gradients were taken at


def step_fedndl1(x: np.ndarray, w: np.ndarray, grad: GradientOracle, noise: np.ndarray, eta: float) -> Step:
    """Local SGD step, then gossip of the noisy half-step parameters."""
    g = grad(x)
    half = x - eta * g
    return Step((half + noise) @ w.T, g, noise)


def step_fedndl2(x: np.ndarray, w: np.ndarray, grad: GradientOracle, noise: np.ndarray, eta: float) -> Step:
    """Gossip of the noisy parameters, then a local SGD step from the mixed point."""
    half = (x + noise) @ w.T
    g = grad(half)
    return Step(half - eta * g, g, noise, mixed_at=half)


def step_fedndl3(x: np.ndarray, w: np.ndarray, grad: GradientOracle, noise: np.ndarray, eta: float) -> Step:
    """Gossip of the noisy gradients; parameters themselves are never exchanged."""
    g = grad(x)
    return Step(x - eta * ((g + noise) @ w.T), g, noise)


STEPS = {"FedNDL1": step_fedndl1, "FedNDL2": step_fedndl2, "FedNDL3": step_fedndl3}


def check_finite(x: np.ndarray, t: int, algorithm: str) -> None:
    bad = ~np.isfinite(x).all(axis=0)
    if bad.any():
        raise DivergenceError(t, algorithm, int(np.argmax(bad)))


@dataclass(frozen=True)
class RunConfig:
    algorithm: str
    mixing: MixingMatrix
    loss: LossConfig
    noise: NoiseSchedule
    lr: LrSchedule
    rounds: int
    seed: int = 0
    repeats: int = 1
    init: str = "identical"  # or "random": independent draw per client
    init_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.rounds < 0:
            raise ValueError(f"rounds must be >= 0, got {self.rounds}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        if self.init not in ("identical", "random"):
            raise ValueError(f"unknown init mode {self.init!r}")


@dataclass
class MetricsLog:
    records: list[MetricsRecord] = field(default_factory=list)
    diverged: list[DivergenceError] = field(default_factory=list)

    @property
    def means(self) -> list[MeanRecord]:
        return aggregate(self.records)


def initial_state(cfg: RunConfig, d: int, repeat: int) -> np.ndarray:
    n = cfg.mixing.n
    if cfg.init == "identical":
        x0 = stream(cfg.seed, Purpose.INIT, repeat=repeat).standard_normal(d) * cfg.init_scale
        return np.repeat(x0[:, None], n, axis=1)
    cols = [stream(cfg.seed, Purpose.INIT, repeat=repeat, client=i).standard_normal(d) for i in range(n)]
    return np.stack(cols, axis=1) * cfg.init_scale


def client_oracle(shards: list[ClientShard], loss: LossConfig, seed: int, repeat: int, t: int) -> GradientOracle:
    """Column-wise stochastic gradients for round ``t``, each client on its own batch stream."""
    def grad(x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        for s in shards:
            rng = stream(seed, Purpose.BATCH, repeat=repeat, client=s.client_id, t=t)
            out[:, s.client_id] = gradient(x[:, s.client_id], s, loss, rng)
        return out
    return grad


def round_noise(schedule: NoiseSchedule, n: int, seed: int, repeat: int, t: int) -> np.ndarray:
    cols = [sample_noise(t, i, schedule, stream(seed, Purpose.NOISE, repeat=repeat, client=i, t=t)) for i in range(n)]
    return np.stack(cols, axis=1)


def run_repeat(cfg: RunConfig, task: RegressionTask, shards: list[ClientShard], repeat: int,
               trace: Callable[[int, np.ndarray, Step], None] | None = None) -> tuple[list[MetricsRecord], DivergenceError | None]:
    """Run ``cfg.rounds`` rounds for one repeat; stops at the first non-finite state.

    ``trace(t, x_before, step)`` is called after every round when given.
    """
    if len(shards) != cfg.mixing.n:
        raise ValueError(f"{len(shards)} shards for a {cfg.mixing.n}-client topology")
    step_fn = STEPS[cfg.algorithm]
    w = cfg.mixing.w
    x = initial_state(cfg, task.d, repeat)
    records = []

    def record(t: int, x: np.ndarray) -> bool:
        with np.errstate(over="ignore", invalid="ignore"):
            loss, ce, gn, local = evaluate_state(x, task, shards, cfg.loss.reg)
        if not np.isfinite([loss, ce, gn]).all():
            return False
        records.append(MetricsRecord(cfg.algorithm, cfg.mixing.name, cfg.noise.nominal, repeat, t,
                                     lr_at(cfg.lr, t), loss, ce, gn, local_loss=local))
        return True

    if not record(0, x):
        raise ValueError("initial state has non-finite metrics")
    for t in range(cfg.rounds):
        eta = lr_at(cfg.lr, t)
        grad = client_oracle(shards, cfg.loss, cfg.seed, repeat, t)
        noise = round_noise(cfg.noise, cfg.mixing.n, cfg.seed, repeat, t)
        with np.errstate(over="ignore", invalid="ignore"):
            step = step_fn(x, w, grad, noise, eta)
        try:
            check_finite(step.x, t + 1, cfg.algorithm)
            if trace is not None:
                trace(t, x, step)
            x = step.x
            if not record(t + 1, x):
                raise DivergenceError(t + 1, cfg.algorithm, int(np.argmax(np.abs(x).max(axis=0))))
        except DivergenceError as err:
            records[-1] = replace(records[-1], diverged=True)
            log.warning("%s (repeat %d); stopping this repeat", err, repeat)
            return records, err
    return records, None


def run_experiment(cfg: RunConfig, task: RegressionTask, shards: list[ClientShard]) -> MetricsLog:
    """All repeats of one configuration; the same rng keys give the same log."""
    out = MetricsLog()
    for r in range(cfg.repeats):
        recs, err = run_repeat(cfg, task, shards, r)
        out.records.extend(recs)
        if err is not None:
            out.diverged.append(err)
    return out
