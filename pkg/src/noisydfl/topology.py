"""Communication graphs and their gossip (mixing) matrices."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CONSTRUCTED_TOL = 1e-12
LOADED_TOL = 1e-9


@dataclass(frozen=True)
class TopologyKind:
    """One of ``ring``, ``torus`` (rows x cols grid with wraparound) or ``full``."""

    name: str
    rows: int | None = None
    cols: int | None = None

    def __post_init__(self) -> None:
        if self.name not in ("ring", "torus", "full"):
            raise ValueError(f"unknown topology {self.name!r}; expected ring, torus or full")
        if self.name == "torus" and (self.rows is None or self.cols is None):
            raise ValueError("torus topology needs rows and cols")

    @classmethod
    def ring(cls) -> TopologyKind:
        return cls("ring")

    @classmethod
    def torus(cls, rows: int, cols: int) -> TopologyKind:
        return cls("torus", rows, cols)

    @classmethod
    def full(cls) -> TopologyKind:
        return cls("full")

    @classmethod
    def parse(cls, text: str, n: int) -> TopologyKind:
        """Parse ``ring``, ``full``, ``torus`` or ``torus:RxC``.

        A bare ``torus`` picks the most square factorisation of ``n`` with both
        sides at least 3.
        """
        text = text.strip().lower()
        if text in ("full", "fully_connected", "fullyconnected"):
            return cls.full()
        if text == "ring":
            return cls.ring()
        if text == "torus":
            return cls.torus(*square_factors(n))
        if text.startswith("torus:"):
            try:
                r, c = text[len("torus:"):].split("x")
                return cls.torus(int(r), int(c))
            except ValueError:
                raise ValueError(f"malformed torus spec {text!r}; expected torus:RxC") from None
        raise ValueError(f"unknown topology {text!r}")

    @property
    def label(self) -> str:
        return self.name


def square_factors(n: int) -> tuple[int, int]:
    """Most square ``rows * cols == n`` with ``rows, cols >= 3``."""
    for r in range(math.isqrt(n), 2, -1):
        if n % r == 0 and n // r >= 3:
            return r, n // r
    raise ValueError(f"n={n} has no torus factorisation with both sides >= 3")


@dataclass(frozen=True)
class MixingMatrix:
    n: int
    w: np.ndarray = field(repr=False)
    rho: float
    name: str = "custom"

    def __post_init__(self) -> None:
        self.w.setflags(write=False)


def _ring_adjacency(n: int) -> np.ndarray:
    a = np.zeros((n, n))
    for i in range(n):
        a[i, (i - 1) % n] = a[i, (i + 1) % n] = 1.0
    return a


def _torus_adjacency(rows: int, cols: int) -> np.ndarray:
    n = rows * cols
    a = np.zeros((n, n))
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                j = ((r + dr) % rows) * cols + (c + dc) % cols
                a[i, j] = 1.0
    return a


def build_mixing_matrix(kind: TopologyKind, n: int) -> MixingMatrix:
    """Uniform-weight gossip matrix: every nonzero entry equals 1/(degree + 1)."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if kind.name == "full":
        w = np.full((n, n), 1.0 / n)
    elif kind.name == "ring":
        if n < 3:
            raise ValueError(f"ring topology requires n >= 3, got n={n}")
        w = (np.eye(n) + _ring_adjacency(n)) / 3.0
    else:
        rows, cols = kind.rows, kind.cols
        if rows * cols != n:
            raise ValueError(f"torus {rows}x{cols} has {rows * cols} nodes but n={n}")
        if rows < 3 or cols < 3:
            raise ValueError(f"torus sides must both be >= 3 so the four neighbours are distinct, got {rows}x{cols}")
        w = (np.eye(n) + _torus_adjacency(rows, cols)) / 5.0
    problems = validate_mixing(w, tol=CONSTRUCTED_TOL)
    if problems:
        raise AssertionError(f"constructed {kind.name} matrix is invalid: {problems}")
    return MixingMatrix(n=n, w=w, rho=spectral_gap(w), name=kind.label)


def spectral_gap(w: MixingMatrix | np.ndarray) -> float:
    """``1 - lambda_2**2`` where ``lambda_2`` is the largest |eigenvalue| off the consensus direction.

    The consensus eigenvector (all ones) is removed by projecting ``W`` onto the
    complement of span(1); this avoids having to identify which numerical
    eigenvalue "is" the unit one when 1 is repeated (disconnected graphs).
    """
    w = w.w if isinstance(w, MixingMatrix) else np.asarray(w, dtype=float)
    n = w.shape[0]
    if n == 1:
        return 1.0
    proj = np.eye(n) - np.full((n, n), 1.0 / n)
    try:
        eig = np.linalg.eigvalsh(proj @ w @ proj)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"eigen-solve failed; malformed mixing matrix: {exc}") from exc
    lam2 = float(np.max(np.abs(eig)))
    return float(min(max(1.0 - lam2 * lam2, 0.0), 1.0))


def validate_mixing(w: MixingMatrix | np.ndarray, tol: float = CONSTRUCTED_TOL) -> list[str]:
    """List every violated mixing-matrix invariant; empty means valid."""
    w = w.w if isinstance(w, MixingMatrix) else np.asarray(w, dtype=float)
    problems = []
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        return [f"not square: shape {w.shape}"]
    if not np.all(np.isfinite(w)):
        return ["non-finite entries"]
    if np.any(w < 0):
        problems.append("negative entries")
    if np.any(w > 1 + tol):
        problems.append("entries > 1")
    if np.max(np.abs(w - w.T)) > tol:
        problems.append("not symmetric")
    if np.max(np.abs(w.sum(axis=1) - 1.0)) > tol:
        problems.append("row sums ≠ 1")
    if np.max(np.abs(w.sum(axis=0) - 1.0)) > tol:
        problems.append("column sums ≠ 1")
    if np.any(np.diag(w) <= 0):
        problems.append("missing self-loop (w_ii = 0)")
    if not problems:
        rho = spectral_gap(w)
        if not 0.0 < rho <= 1.0:
            problems.append("rho not in (0,1]")
    return problems


def from_array(w: np.ndarray, name: str = "custom", tol: float = LOADED_TOL) -> MixingMatrix:
    w = np.array(w, dtype=float)
    problems = validate_mixing(w, tol=tol)
    if problems:
        raise ValueError(f"invalid mixing matrix: {'; '.join(problems)}")
    return MixingMatrix(n=w.shape[0], w=w, rho=spectral_gap(w), name=name)


def load_mixing_csv(path: str | Path, name: str = "custom") -> MixingMatrix:
    """Load an n x n comma-separated matrix and validate it (tolerance 1e-9)."""
    w = np.loadtxt(path, delimiter=",", ndmin=2)
    return from_array(w, name=name, tol=LOADED_TOL)
