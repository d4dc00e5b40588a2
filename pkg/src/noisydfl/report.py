"""Bound report for a finished run directory."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .bounds import (LHS_CE_WEIGHT, GateError, TheoremInputs, big_o_terms, estimate_B2, estimate_sigma2, estimate_smoothness,
                     fit_consensus_recursion, gates, optimal_value, theorem_bound)
from .config import parse_config
from .datagen import generate_task, partition
from .engine import RunConfig, initial_state
from .runs import CONFIG_ECHO, cell_name, read_mean_csv
from .streams import Purpose, stream

REPORT_NAME = "bounds.txt"


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def report_bounds(run_dir: str | Path, probes: int = 10, samples: int = 100) -> str:
    """Estimate the assumption constants for a run and evaluate all three bounds per grid cell.

    Writes ``bounds.txt`` into ``run_dir`` and returns its text.  Gate
    violations are reported inline.
    """
    run_dir = Path(run_dir)
    cfg = parse_config(run_dir / CONFIG_ECHO)
    task = generate_task(cfg.data.m, cfg.data.d, cfg.data.label_noise_var, cfg.seed)
    shards = partition(task, cfg.grid.n, cfg.seed)
    loss = cfg.loss
    T, n = cfg.optim.T, cfg.grid.n
    eta = cfg.optim.lr0

    smooth = estimate_smoothness(task, loss.reg, shards)
    L = smooth.client_L
    f_star, x_star = optimal_value(task, loss.reg)
    any_mixing = cfg.mixing(cfg.grid.topologies[0])
    probe_rc = RunConfig("FedNDL1", any_mixing, loss, cfg.schedule(cfg.grid.noise[0]), cfg.lr, T,
                         seed=cfg.seed, init=cfg.init.mode, init_scale=cfg.init.scale)
    points = [initial_state(probe_rc, task.d, r).mean(axis=1) for r in range(min(cfg.repeats, probes - 1))]
    points.append(x_star)
    rng = stream(cfg.seed, Purpose.PROBE, repeat=10_000)
    while len(points) < probes:
        points.append(rng.standard_normal(task.d) * max(cfg.init.scale, 1.0))
    sigma = estimate_sigma2(task, shards, loss, points, samples=samples, seed=cfg.seed)
    b2 = estimate_B2(task, shards, loss.reg, points)

    lines = [f"# bound report for {run_dir}", "[constants]",
             f"L = {_fmt(L)}", f"L_global = {_fmt(smooth.global_L)}",
             f"sigma2 = {_fmt(sigma.value)}", f"sigma2_stderr = {_fmt(sigma.stderr)}",
             f"B2 = {_fmt(b2)}", f"f_star = {_fmt(f_star)}", f"eta = {_fmt(eta)}", f"T = {T}", f"n = {n}",
             f"probe_points = {len(points)}"]
    if cfg.optim.schedule == "geometric" and cfg.optim.decay < 1:
        lines.append(f"eta_note = run used a decaying schedule (decay {cfg.optim.decay}); bounds use the "
                     "constant eta = lr at t=0")
    if cfg.bounds.divide_init_by_T:
        lines.append("init_term_note = FedNDL1 initialisation term divided by T, as for FedNDL2/3")
    else:
        lines.append("init_term_note = FedNDL1 initialisation term carries no 1/T, unlike FedNDL2/3; "
                     "set bounds.divide_init_by_T to add it")
    if T < 2:
        lines.append("skipped = need at least 2 rounds to evaluate bounds")
        return _write(run_dir, lines)

    for topo in cfg.grid.topologies:
        mixing = cfg.mixing(topo)
        for nz in cfg.grid.noise:
            schedule = cfg.schedule(nz)
            name = cell_name(mixing.name, schedule.label)
            path = run_dir / "runs" / f"{name}_mean.csv"
            if not path.exists():
                lines += ["", f"[{name}]", f"missing = {path.name}"]
                continue
            means = read_mean_csv(path)
            by_alg = {a: sorted((r for r in means if r.algorithm == a), key=lambda r: r.t) for a in cfg.grid.algorithms}
            first = next(rs[0] for rs in by_alg.values() if rs)
            dbar2 = schedule.mean_total_variance(T, n)
            base = dict(L=L, sigma2=sigma.value, B2=b2, rho=mixing.rho, eta=eta, T=T, n=n, Dbar2=dbar2,
                        f_gap=max(first.loss - f_star, 0.0), ce1=first.consensus_error)
            fedndl1_extra = dict(divide_init_by_T=cfg.bounds.divide_init_by_T)
            lines += ["", f"[{name}]", f"rho = {_fmt(mixing.rho)}", f"Dbar2 = {_fmt(dbar2)}",
                      f"noise_var_per_coord = {_fmt(schedule.nominal)}",
                      f"f_gap = {_fmt(base['f_gap'])}", f"ce1 = {_fmt(base['ce1'])}"]
            recursion = None
            ce3 = [r.consensus_error for r in by_alg.get("FedNDL3", [])][: T + 1]
            if len(ce3) >= 3:
                rho_hat, gamma_hat = fit_consensus_recursion(ce3)
                recursion = ((rho_hat, gamma_hat),) * T
                lines += [f"rho_hat = {_fmt(rho_hat)}", f"gamma_hat = {_fmt(gamma_hat)}"]
            for alg, rs in by_alg.items():
                lines += ["", f"[{name}.{alg}]"]
                for k, ok in gates(alg, L, eta, mixing.rho).items():
                    lines.append(f"gate {k} = {'ok' if ok else 'violated'}")
                extra = fedndl1_extra if alg == "FedNDL1" else {}
                inputs = TheoremInputs(**base, **extra, recursion=recursion if alg == "FedNDL3" else None)
                window = rs[:T]
                if window:
                    w = LHS_CE_WEIGHT[alg] * L**2
                    lhs = np.mean([r.grad_norm_sq for r in window]) + w * np.mean([r.consensus_error for r in window])
                    lines.append(f"empirical_lhs = {_fmt(lhs)}")
                try:
                    b = theorem_bound(alg, inputs)
                except (GateError, ValueError) as exc:
                    lines.append(f"bound = not evaluated ({exc})")
                else:
                    lines += [f"phi = {_fmt(b.phi)}", f"term_init = {_fmt(b.term_init)}",
                              f"term_sigma = {_fmt(b.term_sigma)}", f"term_B = {_fmt(b.term_B)}",
                              f"term_noise = {_fmt(b.term_noise)}", f"total = {_fmt(b.total)}"]
                if alg != "FedNDL3" or recursion is not None:
                    lines.append(f"bigO_term_noise = {_fmt(big_o_terms(alg, inputs).term_noise)}")
    return _write(run_dir, lines)


def _write(run_dir: Path, lines: list[str]) -> str:
    text = "\n".join(lines) + "\n"
    (run_dir / REPORT_NAME).write_text(text, encoding="utf-8")
    return text
