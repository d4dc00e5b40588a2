"""Convergence upper bounds for FedNDL1/2/3 and estimators for their constants.

The exact evaluators compute each right-hand side term by term:

FedNDL1 (``K = 1 - 4 eta L``, LHS weight on consensus error ``L^2/2``)::

    2 (f_gap + phi ce1) / (eta K)                      # no 1/T unless divide_init_by_T
    2 eta (phi (1 - rho) + L/n) / K * sigma2
    16 phi eta / (K rho) * B2
    2 (L + phi (rho/2 + 2/rho)) / (eta K) * Dbar2
    phi = 2 rho L^2 eta / (rho^2 - 24 eta^2 L^2)

FedNDL2 (``K = 1 - 2 eta L``, LHS weight ``L^2``)::

    2 (f_gap + phi ce1) / (eta K T)
    2 eta (phi + L/n) / K * sigma2
    8 phi eta (1 + 2/rho) / K * B2
    2 (L^2 [eta (1 + 2 L eta) + 2] + 4 phi [1 - rho + 24 L^2 eta^2 / rho]) / (eta K) * Dbar2
    phi = rho L^2 eta (3 + 2 eta L) / (rho^2 - 48 L^2 eta^2)

FedNDL3 (``K = 1 - 2 L eta``, LHS weight ``2 L^2``)::

    2 (f_gap + phi_1 ce1) / (eta K T)
    L eta / (n K) * sigma2
    L^2 (1 - 6 L eta) / (T K) * sum_t gamma_t / rho_t
    L eta / K * Dbar2
    phi_{t+1} = L^2 eta (1 - 6 eta L) / (2 rho_t),  phi_1 = L^2 eta (1 + 2 L eta) + 2 phi_2 rho_1
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .datagen import ClientShard, LossConfig, RegressionTask, full_gradient, gradient
from .streams import Purpose, stream

LHS_CE_WEIGHT = {"FedNDL1": 0.5, "FedNDL2": 1.0, "FedNDL3": 2.0}  # times L^2


class GateError(ValueError):
    """A step-size precondition of a bound does not hold."""

    def __init__(self, algorithm: str, violated: list[str]):
        super().__init__(f"{algorithm}: {'; '.join(v + ' violated' for v in violated)}")
        self.algorithm = algorithm
        self.violated = violated


@dataclass(frozen=True)
class TheoremInputs:
    L: float
    sigma2: float
    B2: float
    rho: float
    eta: float
    T: int
    n: int
    Dbar2: float
    f_gap: float
    ce1: float = 0.0
    recursion: tuple[tuple[float, float], ...] | None = None  # (rho_t, gamma_t), FedNDL3 only
    divide_init_by_T: bool = False  # FedNDL1 only: add the 1/T missing from the printed first term

    def __post_init__(self) -> None:
        for name in ("L", "sigma2", "B2", "Dbar2", "f_gap", "ce1"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0 < self.rho <= 1:
            raise ValueError(f"rho must be in (0, 1], got {self.rho}")
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.T < 1 or self.n < 1:
            raise ValueError("T and n must be >= 1")
        if self.recursion is not None:
            for rt, gt in self.recursion:
                if not 0 < rt < 1 or gt < 0:
                    raise ValueError(f"recursion pair ({rt}, {gt}) needs rho_t in (0,1) and gamma_t >= 0")


@dataclass(frozen=True)
class BoundBreakdown:
    algorithm: str
    term_init: float
    term_sigma: float
    term_B: float
    term_noise: float
    phi: float
    lhs_ce_weight: float
    preconditions: dict[str, bool] = field(default_factory=dict)
    form: str = "exact"

    @property
    def total(self) -> float:
        return self.term_init + self.term_sigma + self.term_B + self.term_noise


def gates(algorithm: str, L: float, eta: float, rho: float) -> dict[str, bool]:
    """Step-size preconditions of each theorem, keyed by the inequality."""
    el = eta * L
    if algorithm == "FedNDL1":
        return {"ηL < 1/6": el < 1 / 6, "ηL < ρ/(2√6)": el < rho / (2 * math.sqrt(6))}
    if algorithm == "FedNDL2":
        return {"ηL < 1/12": el < 1 / 12, "ηL < ρ/(4√3)": el < rho / (4 * math.sqrt(3))}
    if algorithm == "FedNDL3":
        return {"ηL < 1/6": el < 1 / 6}
    raise ValueError(f"unknown algorithm {algorithm!r}")


def _require(algorithm: str, L: float, eta: float, rho: float) -> dict[str, bool]:
    g = gates(algorithm, L, eta, rho)
    bad = [k for k, ok in g.items() if not ok]
    if bad:
        raise GateError(algorithm, bad)
    return g


def phi_constant(algorithm: str, inputs: TheoremInputs) -> float | list[float]:
    """Potential weight phi; for FedNDL3 the list ``[phi_2, ..., phi_{T+1}]`` (one per rho_t)."""
    L, eta, rho = inputs.L, inputs.eta, inputs.rho
    _require(algorithm, L, eta, rho)
    if algorithm == "FedNDL1":
        return 2 * rho * L**2 * eta / (rho**2 - 24 * eta**2 * L**2)
    if algorithm == "FedNDL2":
        return rho * L**2 * eta * (3 + 2 * eta * L) / (rho**2 - 48 * L**2 * eta**2)
    if inputs.recursion is None:
        raise ValueError("FedNDL3 needs the (rho_t, gamma_t) recursion")
    return [L**2 * eta * (1 - 6 * eta * L) / (2 * rt) for rt, _ in inputs.recursion]


def theorem_bound(algorithm: str, inputs: TheoremInputs) -> BoundBreakdown:
    L, eta, rho, T, n = inputs.L, inputs.eta, inputs.rho, inputs.T, inputs.n
    pre = _require(algorithm, L, eta, rho)
    phi = phi_constant(algorithm, inputs)
    if algorithm == "FedNDL1":
        k = 1 - 4 * eta * L
        init = 2 * (inputs.f_gap + phi * inputs.ce1) / (eta * k)
        if inputs.divide_init_by_T:
            init /= T
        return BoundBreakdown(
            algorithm, init,
            2 * eta * (phi * (1 - rho) + L / n) / k * inputs.sigma2,
            16 * phi * eta / (k * rho) * inputs.B2,
            2 * (L + phi * (rho / 2 + 2 / rho)) / (eta * k) * inputs.Dbar2,
            phi, LHS_CE_WEIGHT[algorithm] * L**2, pre)
    if algorithm == "FedNDL2":
        k = 1 - 2 * eta * L
        return BoundBreakdown(
            algorithm,
            2 * (inputs.f_gap + phi * inputs.ce1) / (eta * k * T),
            2 * eta * (phi + L / n) / k * inputs.sigma2,
            8 * phi * eta * (1 + 2 / rho) / k * inputs.B2,
            2 * (L**2 * (eta * (1 + 2 * L * eta) + 2) + 4 * phi * (1 - rho + 24 * L**2 * eta**2 / rho))
            / (eta * k) * inputs.Dbar2,
            phi, LHS_CE_WEIGHT[algorithm] * L**2, pre)
    rec = inputs.recursion
    if len(rec) != T:
        raise ValueError(f"FedNDL3 needs {T} recursion pairs, got {len(rec)}")
    k = 1 - 2 * L * eta
    phi1 = L**2 * eta * (1 + 2 * L * eta) + 2 * phi[0] * rec[0][0]
    return BoundBreakdown(
        algorithm,
        2 * (inputs.f_gap + phi1 * inputs.ce1) / (eta * k * T),
        L * eta / (n * k) * inputs.sigma2,
        L**2 * (1 - 6 * L * eta) / (T * k) * sum(g / r for r, g in rec),
        L * eta / k * inputs.Dbar2,
        phi1, LHS_CE_WEIGHT[algorithm] * L**2, pre)


def big_o_terms(algorithm: str, inputs: TheoremInputs) -> BoundBreakdown:
    """Unit-constant version of the headline rates (``eta = O(1/sqrt(T))`` substituted).

    FedNDL1/2: ``rho sigma2 / (n sqrt T) + rho^2 B2 / T + T^(3/2) Dbar2 / rho``.
    FedNDL3: ``sigma2 / (n sqrt T) + mean(gamma_t / rho_t) + Dbar2 / sqrt T``.
    The initialisation term is absorbed in these rates and reported as 0.
    """
    T, n, rho = inputs.T, inputs.n, inputs.rho
    rt = math.sqrt(T)
    if algorithm in ("FedNDL1", "FedNDL2"):
        return BoundBreakdown(algorithm, 0.0, rho * inputs.sigma2 / (n * rt), rho**2 * inputs.B2 / T,
                              T**1.5 * inputs.Dbar2 / rho, float("nan"), LHS_CE_WEIGHT[algorithm] * inputs.L**2,
                              form="big-O")
    if algorithm != "FedNDL3":
        raise ValueError(f"unknown algorithm {algorithm!r}")
    rec = inputs.recursion or ()
    het = sum(g / r for r, g in rec) / T
    return BoundBreakdown(algorithm, 0.0, inputs.sigma2 / (n * rt), het, inputs.Dbar2 / rt, float("nan"),
                          LHS_CE_WEIGHT[algorithm] * inputs.L**2, form="big-O")


# -- estimators ---------------------------------------------------------------

def power_iteration(matvec, dim: int, tol: float = 1e-6, max_iter: int = 100_000, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD operator, via Rayleigh quotients.

    Stops once the residual ``||A v - theta v||`` is below ``tol * theta``.
    """
    v = np.random.default_rng(seed).standard_normal(dim)
    v /= np.linalg.norm(v)
    theta = 0.0
    for _ in range(max_iter):
        av = matvec(v)
        theta = float(v @ av)
        norm = np.linalg.norm(av)
        if norm == 0.0:
            return 0.0
        if np.linalg.norm(av - theta * v) <= tol * abs(theta):
            return theta
        v = av / norm
    raise RuntimeError(f"power iteration did not converge in {max_iter} iterations (last estimate {theta})")


@dataclass(frozen=True)
class Smoothness:
    global_L: float
    client_L: float  # max over clients; the per-f_i constant the theorems assume


def _hessian_top(features: np.ndarray, reg: float, tol: float) -> float:
    m, d = features.shape
    return power_iteration(lambda v: (2.0 / m) * (features.T @ (features @ v)) + 2.0 * reg * v, d, tol=tol)


def estimate_smoothness(task: RegressionTask, reg: float, shards: Sequence[ClientShard] = (), tol: float = 1e-6) -> Smoothness:
    """Top Hessian eigenvalue of the pooled loss and the largest among the client losses."""
    g = _hessian_top(task.features, reg, tol)
    c = max((_hessian_top(s.features, reg, tol) for s in shards), default=g)
    return Smoothness(g, c)


@dataclass(frozen=True)
class Sigma2Estimate:
    value: float
    stderr: float


def estimate_sigma2(task: RegressionTask, shards: Sequence[ClientShard], cfg: LossConfig,
                    probe_points: Sequence[np.ndarray], samples: int = 200, seed: int = 0) -> Sigma2Estimate:
    """Max over probe points and clients of the Monte Carlo mean of ``||g~ - grad f_i||^2``."""
    if cfg.batch_size is None:
        return Sigma2Estimate(0.0, 0.0)
    if samples < 2:
        raise ValueError("need at least 2 samples for a standard error")
    best = Sigma2Estimate(0.0, 0.0)
    for p, x in enumerate(probe_points):
        for s in shards:
            full = full_gradient(x, s, cfg.reg)
            rng = stream(seed, Purpose.PROBE, repeat=p, client=s.client_id)
            dev = np.array([np.sum((gradient(x, s, cfg, rng) - full) ** 2) for _ in range(samples)])
            mean = float(dev.mean())
            if mean > best.value:
                best = Sigma2Estimate(mean, float(dev.std(ddof=1) / math.sqrt(samples)))
    return best


def estimate_B2(task: RegressionTask, shards: Sequence[ClientShard], reg: float,
                probe_points: Sequence[np.ndarray]) -> float:
    """Max over probe points of ``(1/n) sum_i ||grad f_i(x) - grad f(x)||^2`` with ``f = mean_i f_i``."""
    best = 0.0
    for x in probe_points:
        g = np.stack([full_gradient(x, s, reg) for s in shards])
        dev = g - g.mean(axis=0)
        best = max(best, float(np.sum(dev * dev) / len(shards)))
    return best


def fit_consensus_recursion(ce: Sequence[float], eps: float = 1e-9) -> tuple[float, float]:
    """Upper-envelope fit of ``ce[t+1] <= rho * ce[t] + gamma``.

    ``rho`` comes from least squares (minimum-norm when degenerate), clamped
    into (0, 1); ``gamma`` is then raised until every consecutive pair obeys
    the inequality.
    """
    c = np.asarray(ce, dtype=float)
    if c.size < 3:
        raise ValueError("need at least 3 consensus-error values")
    if not np.all(np.isfinite(c)):
        raise ValueError("consensus-error sequence has non-finite entries")
    if np.any(c < 0):
        raise ValueError("consensus errors must be >= 0")
    a = np.column_stack([c[:-1], np.ones(c.size - 1)])
    (slope, _), *_ = np.linalg.lstsq(a, c[1:], rcond=None)
    rho = float(min(max(slope, eps), 1 - eps))
    gamma = float(max(0.0, np.max(c[1:] - rho * c[:-1])))
    return rho, gamma


def optimal_value(task: RegressionTask, reg: float, tol: float = 1e-10, max_iter: int = 100_000) -> tuple[float, np.ndarray]:
    """``(f*, x*)`` of the pooled regularised least-squares loss.

    Starts from the normal-equation solution and polishes with full-batch
    gradient descent until ``||grad f|| <= tol``.
    """
    a, y, m = task.features, task.labels, task.m
    h = (2.0 / m) * (a.T @ a) + 2.0 * reg * np.eye(task.d)
    x = np.linalg.lstsq(h, (2.0 / m) * (a.T @ y), rcond=None)[0]
    step = 1.0 / max(np.linalg.eigvalsh(h)[-1], 1e-300)
    for _ in range(max_iter):
        g = full_gradient(x, task, reg)
        if np.linalg.norm(g) <= tol:
            break
        x = x - step * g
    r = a @ x - y
    return float(r @ r / m + reg * (x @ x)), x

