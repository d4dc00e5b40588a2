"""Experiment configuration: strict TOML parsing, defaults, and the resolved echo."""
from __future__ import annotations

import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .channel import NoiseSchedule, make_schedule
from .datagen import LossConfig
from .engine import ALGORITHMS, LrSchedule
from .topology import MixingMatrix, TopologyKind, build_mixing_matrix, load_mixing_csv

OUTPUT_ENV = "NOISYDFL_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridSection:
    algorithms: tuple[str, ...] = ALGORITHMS
    topologies: tuple[str, ...] = ("ring", "torus", "full")
    noise: tuple[Any, ...] = (0.0, 0.005)  # per-coordinate variances or "zero"/"const:NU"/"table:PATH"
    n: int = 16


@dataclass(frozen=True)
class DataSection:
    m: int = 2000
    d: int = 200
    label_noise_var: float = 0.05
    reg: float = 1e-4
    batch_size: int | str = 32  # or "full"


@dataclass(frozen=True)
class OptimSection:
    lr0: float = 0.2
    decay: float = 0.9
    schedule: str = "geometric"
    T: int = 300


@dataclass(frozen=True)
class InitSection:
    mode: str = "identical"
    scale: float = 1.0


@dataclass(frozen=True)
class BoundsSection:
    divide_init_by_T: bool = False  # FedNDL1 only


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    repeats: int = 3
    output: str = "out"
    grid: GridSection = field(default_factory=GridSection)
    data: DataSection = field(default_factory=DataSection)
    optim: OptimSection = field(default_factory=OptimSection)
    init: InitSection = field(default_factory=InitSection)
    bounds: BoundsSection = field(default_factory=BoundsSection)
    base_dir: Path = field(default=Path("."), compare=False)

    @property
    def loss(self) -> LossConfig:
        b = self.data.batch_size
        return LossConfig(self.data.reg, None if b == "full" else b)

    @property
    def lr(self) -> LrSchedule:
        return LrSchedule(self.optim.lr0, self.optim.decay, self.optim.schedule)

    @property
    def output_dir(self) -> Path:
        root = os.environ.get(OUTPUT_ENV)
        if root:
            return Path(root)
        p = Path(self.output)
        return p if p.is_absolute() else Path.cwd() / p

    def mixing(self, topology: str) -> MixingMatrix:
        if topology.startswith("csv:"):
            path = _resolve(topology[4:], self.base_dir)
            return load_mixing_csv(path, name=path.stem)
        return build_mixing_matrix(TopologyKind.parse(topology, self.grid.n), self.grid.n)

    def schedule(self, noise: Any) -> NoiseSchedule:
        return make_schedule(noise, self.data.d, base_dir=self.base_dir)


_SECTIONS = {"grid": GridSection, "data": DataSection, "optim": OptimSection, "init": InitSection, "bounds": BoundsSection}
_TOP = {"seed": int, "repeats": int, "output": str}
_TYPES = {
    ("grid", "algorithms"): list, ("grid", "topologies"): list, ("grid", "noise"): list, ("grid", "n"): int,
    ("data", "m"): int, ("data", "d"): int, ("data", "label_noise_var"): float, ("data", "reg"): float,
    ("data", "batch_size"): (int, str),
    ("optim", "lr0"): float, ("optim", "decay"): float, ("optim", "schedule"): str, ("optim", "T"): int,
    ("init", "mode"): str, ("init", "scale"): float,
    ("bounds", "divide_init_by_T"): bool,
}


def _resolve(path: str, base: Path) -> Path:
    p = Path(path)
    return (p if p.is_absolute() else base / p).resolve()


def _line_of(text: str, section: str | None, key: str) -> int | None:
    lines = text.splitlines()
    start = 0
    if section is not None:
        hdr = re.compile(rf"^\s*\[\s*{re.escape(section)}\s*\]")
        start = next((i + 1 for i, ln in enumerate(lines) if hdr.match(ln)), None)
        if start is None:
            return None
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i in range(start, len(lines)):
        if section is None and lines[i].lstrip().startswith("["):
            return None
        if pat.match(lines[i]):
            return i + 1
    return None


def _err(src: str, text: str, section: str | None, key: str, msg: str) -> ConfigError:
    where = f"{section}.{key}" if section else key
    line = _line_of(text, section, key)
    loc = f"{src}:{line}" if line else src
    return ConfigError(f"{loc}: {where}: {msg}")


def _check_type(value: Any, want, src: str, text: str, section: str | None, key: str) -> Any:
    wants = want if isinstance(want, tuple) else (want,)
    if float in wants and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if (isinstance(value, bool) and bool not in wants) or not isinstance(value, wants):
        names = " or ".join(w.__name__ for w in wants)
        raise _err(src, text, section, key, f"expected {names}, got {type(value).__name__} {value!r}")
    return tuple(value) if isinstance(value, list) else value


def parse_config_text(text: str, src: str = "<config>", base_dir: Path | None = None) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{src}: malformed TOML: {exc}") from None
    top: dict[str, Any] = {}
    sections: dict[str, dict[str, Any]] = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise _err(src, text, None, key, "expected a [section]")
            fields = {}
            for k, v in value.items():
                if (key, k) not in _TYPES:
                    raise _err(src, text, key, k, "unknown key")
                fields[k] = _check_type(v, _TYPES[(key, k)], src, text, key, k)
            sections[key] = fields
        elif key in _TOP:
            top[key] = _check_type(value, _TOP[key], src, text, None, key)
        else:
            raise _err(src, text, None, key, "unknown key")
    cfg = ExperimentConfig(
        **top,
        **{name: cls(**sections.get(name, {})) for name, cls in _SECTIONS.items()},
        base_dir=(base_dir or Path.cwd()).resolve(),
    )
    _validate(cfg, src, text)
    return cfg


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    return parse_config_text(text, src=str(path), base_dir=path.parent)


def _validate(cfg: ExperimentConfig, src: str, text: str) -> None:
    def fail(section, key, msg):
        raise _err(src, text, section, key, msg)

    if cfg.seed < 0:
        fail(None, "seed", "must be >= 0")
    if cfg.repeats < 1:
        fail(None, "repeats", "must be >= 1")
    g, d, o, i = cfg.grid, cfg.data, cfg.optim, cfg.init
    if not g.algorithms:
        fail("grid", "algorithms", "must not be empty")
    for a in g.algorithms:
        if a not in ALGORITHMS:
            fail("grid", "algorithms", f"unknown algorithm {a!r}; expected one of {', '.join(ALGORITHMS)}")
    if g.n < 1:
        fail("grid", "n", "must be >= 1")
    if not g.topologies:
        fail("grid", "topologies", "must not be empty")
    for t in g.topologies:
        if not isinstance(t, str):
            fail("grid", "topologies", f"entries must be strings, got {t!r}")
        try:
            w = cfg.mixing(t)
        except (ValueError, OSError) as exc:
            fail("grid", "topologies", str(exc))
        if w.n != g.n:
            fail("grid", "topologies", f"{t} has {w.n} clients but grid.n = {g.n}")
    if not g.noise:
        fail("grid", "noise", "must not be empty")
    for nz in g.noise:
        try:
            sched = cfg.schedule(nz)
        except (ValueError, OSError) as exc:
            fail("grid", "noise", str(exc))
        if sched.kind == "table" and (sched.table.shape[0] < o.T or sched.table.shape[1] < g.n):
            fail("grid", "noise", f"table {sched.source} is {sched.table.shape}, needs at least {o.T} rounds x {g.n} clients")
    if d.m < 1:
        fail("data", "m", "must be >= 1")
    if d.d < 1:
        fail("data", "d", "must be >= 1")
    if g.n > d.m:
        fail("grid", "n", f"{g.n} clients but only {d.m} samples")
    if d.label_noise_var < 0:
        fail("data", "label_noise_var", "must be >= 0")
    if d.reg < 0:
        fail("data", "reg", "must be >= 0")
    if isinstance(d.batch_size, str):
        if d.batch_size != "full":
            fail("data", "batch_size", "must be a positive integer or \"full\"")
    elif d.batch_size < 1:
        fail("data", "batch_size", "must be >= 1")
    elif d.batch_size > d.m // g.n:
        fail("data", "batch_size", f"{d.batch_size} exceeds the smallest shard ({d.m // g.n} samples)")
    if not o.lr0 > 0:
        fail("optim", "lr0", "must be > 0")
    if not 0 < o.decay <= 1:
        fail("optim", "decay", "must be in (0, 1]")
    if o.schedule not in ("geometric", "constant"):
        fail("optim", "schedule", "must be \"geometric\" or \"constant\"")
    if o.T < 0:
        fail("optim", "T", "must be >= 0")
    if i.mode not in ("identical", "random"):
        fail("init", "mode", "must be \"identical\" or \"random\"")
    if not i.scale >= 0:
        fail("init", "scale", "must be >= 0")


def _resolved_entry(value: Any, prefix: str, base: Path) -> Any:
    if isinstance(value, str) and value.startswith(prefix):
        return prefix + str(_resolve(value[len(prefix):], base))
    return value


def resolved_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Every field with defaults filled in and file references made absolute."""
    g, d, o, i = cfg.grid, cfg.data, cfg.optim, cfg.init
    topologies = []
    for t in g.topologies:
        if t.startswith("csv:"):
            topologies.append(_resolved_entry(t, "csv:", cfg.base_dir))
        else:
            k = TopologyKind.parse(t, g.n)
            topologies.append(f"torus:{k.rows}x{k.cols}" if k.name == "torus" else k.name)
    return {
        "seed": cfg.seed,
        "repeats": cfg.repeats,
        "output": str(cfg.output_dir),
        "grid": {
            "algorithms": list(g.algorithms),
            "topologies": topologies,
            "noise": [_resolved_entry(n, "table:", cfg.base_dir) for n in g.noise],
            "n": g.n,
        },
        "data": {"m": d.m, "d": d.d, "label_noise_var": d.label_noise_var, "reg": d.reg, "batch_size": d.batch_size},
        "optim": {"lr0": o.lr0, "decay": o.decay, "schedule": o.schedule, "T": o.T},
        "init": {"mode": i.mode, "scale": i.scale},
        "bounds": {"divide_init_by_T": cfg.bounds.divide_init_by_T},
    }


def dump_resolved(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(resolved_dict(cfg))
