"""Additive zero-mean Gaussian channel noise on everything a client transmits.

Variances here are per coordinate: a ``const:0.005`` channel on ``d`` = 2000
parameters has total variance ``E||delta||^2 = 2000 * 0.005 = 10``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str  # "zero" | "const" | "table"
    d: int
    nu: float = 0.0
    table: np.ndarray | None = field(default=None, repr=False)
    source: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("zero", "const", "table"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.nu < 0:
            raise ValueError(f"noise variance must be >= 0, got {self.nu}")
        if self.kind == "table":
            if self.table is None or self.table.ndim != 2:
                raise ValueError("table noise needs a 2-D (rounds x clients) array")
            if np.any(self.table < 0) or not np.all(np.isfinite(self.table)):
                raise ValueError("noise table entries must be finite and >= 0")

    def variance(self, t: int, i: int) -> float:
        """Per-coordinate variance for sender ``i`` in round ``t``."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "const":
            return self.nu
        if t >= self.table.shape[0] or i >= self.table.shape[1]:
            raise IndexError(f"noise table {self.table.shape} has no entry for round {t}, client {i}")
        return float(self.table[t, i])

    def total_variance(self, t: int, i: int) -> float:
        """``D^2_{t,i} = E||delta_i^(t)||^2``."""
        return self.d * self.variance(t, i)

    def mean_total_variance(self, rounds: int, n: int) -> float:
        """Average of ``D^2_{t,i}`` over the first ``rounds`` rounds and ``n`` clients."""
        if self.kind == "table":
            return float(self.d * self.table[:rounds, :n].mean())
        return self.d * self.variance(0, 0)

    @property
    def nominal(self) -> float:
        """Per-coordinate variance reported in logs (table mean for table schedules)."""
        if self.kind == "table":
            return float(self.table.mean())
        return self.nu

    @property
    def label(self) -> str:
        if self.kind == "table":
            return f"table-{Path(self.source).stem}" if self.source else "table"
        return f"{self.nu:g}"

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind == "const" and self.nu == 0.0)


def sample_noise(t: int, i: int, schedule: NoiseSchedule, rng: np.random.Generator) -> np.ndarray:
    """One noise vector for sender ``i`` in round ``t``; every receiver sees the same draw."""
    nu = schedule.variance(t, i)
    if nu == 0.0:
        return np.zeros(schedule.d)
    return rng.standard_normal(schedule.d) * np.sqrt(nu)


def load_noise_table(path: str | Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def make_schedule(spec: str | float | int, d: int, base_dir: str | Path | None = None) -> NoiseSchedule:
    """Build a schedule from ``"zero"``, ``"const:NU"``, a bare number, or ``"table:PATH"``."""
    if isinstance(spec, bool):
        raise ValueError(f"malformed noise spec {spec!r}")
    if isinstance(spec, (int, float)):
        return _const(float(spec), d)
    text = spec.strip()
    if text == "zero":
        return NoiseSchedule("zero", d)
    if text.startswith("const:"):
        return _const(_number(text[len("const:"):], spec), d)
    if text.startswith("table:"):
        path = Path(text[len("table:"):])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        path = path.resolve()
        return NoiseSchedule("table", d, table=load_noise_table(path), source=str(path))
    return _const(_number(text, spec), d)


def _number(text: str, spec) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"malformed noise spec {spec!r}") from None


def _const(nu: float, d: int) -> NoiseSchedule:
    if nu < 0:
        raise ValueError(f"noise variance must be >= 0, got {nu}")
    if nu == 0.0:
        return NoiseSchedule("zero", d)
    return NoiseSchedule("const", d, nu=nu)
