"""Grid orchestration and the run CSV formats."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .config import ExperimentConfig, dump_resolved
from .datagen import generate_task, partition
from .engine import RunConfig, run_experiment
from .metrics import MeanRecord, MetricsRecord, aggregate

log = logging.getLogger(__name__)

RAW_HEADER = ["algorithm", "topology", "noise_var_per_coord", "repeat", "iteration", "eta",
              "loss", "consensus_error", "grad_norm_sq", "diverged"]
MEAN_HEADER = ["algorithm", "topology", "noise_var_per_coord", "iteration", "eta",
               "loss", "consensus_error", "grad_norm_sq", "local_loss", "survivors", "diverged"]
CONFIG_ECHO = "config.toml"


def cell_name(topology: str, noise_label: str) -> str:
    return f"{topology}_{noise_label}"


def write_raw_csv(path: Path, records: list[MetricsRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_HEADER)
        for r in records:
            w.writerow([r.algorithm, r.topology, repr(r.noise_var_per_coord), r.repeat, r.t, repr(r.eta),
                        repr(r.loss), repr(r.consensus_error), repr(r.grad_norm_sq), int(r.diverged)])


def write_mean_csv(path: Path, means: list[MeanRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEAN_HEADER)
        for r in means:
            w.writerow([r.algorithm, r.topology, repr(r.noise_var_per_coord), r.t, repr(r.eta), repr(r.loss),
                        repr(r.consensus_error), repr(r.grad_norm_sq), repr(r.local_loss), r.survivors, r.diverged])


def read_raw_csv(path: Path) -> list[MetricsRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header != RAW_HEADER:
            raise ValueError(f"{path}: not a run CSV (header {header})")
        return [MetricsRecord(a, topo, float(nz), int(rep), int(t), float(eta), float(loss), float(ce), float(gn), d == "1")
                for a, topo, nz, rep, t, eta, loss, ce, gn, d in rows]


def read_mean_csv(path: Path) -> list[MeanRecord]:
    """Read an aggregated CSV; a raw run CSV is aggregated on the fly."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header == RAW_HEADER:
            recs = read_raw_csv(path)
            return aggregate(recs) if recs else []
        if header != MEAN_HEADER:
            raise ValueError(f"{path}: unrecognised CSV header {header}")
        return [MeanRecord(a, topo, float(nz), int(t), float(eta), float(loss), float(ce), float(gn), float(ll), int(s), int(dv))
                for a, topo, nz, t, eta, loss, ce, gn, ll, s, dv in rows]


@dataclass
class GridResult:
    out_dir: Path
    csv_paths: list[Path] = field(default_factory=list)
    summary: list[str] = field(default_factory=list)


def run_grid(cfg: ExperimentConfig) -> GridResult:
    """Run every (algorithm, topology, noise) cell and write one raw and one mean CSV per (topology, noise)."""
    out = cfg.output_dir
    runs = out / "runs"
    runs.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_ECHO).write_text(dump_resolved(cfg), encoding="utf-8")

    task = generate_task(cfg.data.m, cfg.data.d, cfg.data.label_noise_var, cfg.seed)
    shards = partition(task, cfg.grid.n, cfg.seed)
    result = GridResult(out)
    for topo in cfg.grid.topologies:
        mixing = cfg.mixing(topo)
        for nz in cfg.grid.noise:
            schedule = cfg.schedule(nz)
            records: list[MetricsRecord] = []
            for alg in cfg.grid.algorithms:
                rc = RunConfig(alg, mixing, cfg.loss, schedule, cfg.lr, cfg.optim.T, seed=cfg.seed,
                               repeats=cfg.repeats, init=cfg.init.mode, init_scale=cfg.init.scale)
                mlog = run_experiment(rc, task, shards)
                records.extend(mlog.records)
                last = [m for m in aggregate(mlog.records)][-1]
                result.summary.append(
                    f"{alg:8s} {mixing.name:>8s} noise={schedule.label:<8s} t={last.t:<4d} "
                    f"loss={last.loss:.6g} consensus_error={last.consensus_error:.6g} "
                    f"diverged={len(mlog.diverged)}/{cfg.repeats}")
            name = cell_name(mixing.name, schedule.label)
            raw, mean = runs / f"{name}.csv", runs / f"{name}_mean.csv"
            write_raw_csv(raw, records)
            write_mean_csv(mean, aggregate(records))
            result.csv_paths += [raw, mean]
            log.info("wrote %s", raw)
    return result
