import csv
import logging
import xml.etree.ElementTree as ET
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from noisydfl.bounds import big_o_terms
from noisydfl.cli import main
from noisydfl.config import OUTPUT_ENV, ConfigError, parse_config, parse_config_text
from noisydfl.metrics import MeanRecord
from noisydfl.plotting import render_plots, render_svg
from noisydfl.runs import read_mean_csv, run_grid, write_mean_csv

GOLDEN_HEADER = "algorithm,topology,noise_var_per_coord,repeat,iteration,eta,loss,consensus_error,grad_norm_sq,diverged"
CONFIGS = resources.files("noisydfl") / "configs"

SMALL = """
seed = {seed}
repeats = {repeats}
output = "{out}"

[grid]
algorithms = {algs}
topologies = {topos}
noise = {noise}
n = 4

[data]
m = 400
d = 10
label_noise_var = 0.05
reg = 1e-4
batch_size = 8

[optim]
lr0 = {lr0}
decay = {decay}
T = {T}
"""


def small_config(tmp_path, name="c.toml", seed=0, repeats=1, algs='["FedNDL1", "FedNDL2", "FedNDL3"]',
                 topos='["ring", "full"]', noise="[0.0]", lr0=0.05, decay=0.99, T=20, out=None):
    out = out or (tmp_path / "out").as_posix()
    p = tmp_path / name
    p.write_text(SMALL.format(seed=seed, repeats=repeats, algs=algs, topos=topos, noise=noise, lr0=lr0,
                              decay=decay, T=T, out=out))
    return p


def test_shipped_grid_config():
    cfg = parse_config(CONFIGS / "paper_fig1.toml")
    assert cfg.grid.algorithms == ("FedNDL1", "FedNDL2", "FedNDL3")
    assert cfg.grid.topologies == ("ring", "torus", "full")
    assert cfg.grid.noise == (0.0, 0.005)
    assert cfg.grid.n == 16 and cfg.repeats == 3
    for name in ("fig1a_full.toml", "fig1b_torus.toml", "fig1c_ring.toml", "paper_full.toml"):
        parse_config(CONFIGS / name)


def test_negative_lr_names_the_field(tmp_path):
    p = small_config(tmp_path, lr0=-0.1)
    with pytest.raises(ConfigError, match=r"c\.toml:\d+: optim\.lr0: must be > 0"):
        parse_config(p)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="data.batchsize: unknown key"):
        parse_config_text("[data]\nbatchsize = 3\n")
    with pytest.raises(ConfigError, match="malformed"):
        parse_config_text("[data\n")
    with pytest.raises(ConfigError, match="expected int"):
        parse_config_text("[grid]\nn = \"four\"\n")


def test_missing_file():
    with pytest.raises(ConfigError, match="no such config"):
        parse_config("/nonexistent/x.toml")


def test_batch_size_default_is_echoed(tmp_path, monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    text = small_config(tmp_path, T=1, algs='["FedNDL1"]', topos='["full"]').read_text().replace("batch_size = 8\n", "")
    p = tmp_path / "nobatch.toml"
    p.write_text(text)
    assert parse_config(p).data.batch_size == 32
    run_grid(parse_config(p))
    assert "batch_size = 32" in (tmp_path / "out" / "config.toml").read_text()


def test_one_algorithm_one_round_gives_two_rows(tmp_path):
    res = run_grid(parse_config(small_config(tmp_path, T=1, algs='["FedNDL2"]', topos='["ring"]')))
    raw = tmp_path / "out" / "runs" / "ring_0.csv"
    lines = raw.read_text().splitlines()
    assert lines[0] == GOLDEN_HEADER
    assert len(lines) == 3
    assert [ln.split(",")[4] for ln in lines[1:]] == ["0", "1"]
    assert raw in res.csv_paths


def test_loss_is_nonincreasing_after_warmup(tmp_path):
    run_grid(parse_config(small_config(tmp_path, T=60, lr0=0.02)))
    for path in (tmp_path / "out" / "runs").glob("*_mean.csv"):
        means = read_mean_csv(path)
        for alg in ("FedNDL1", "FedNDL2", "FedNDL3"):
            loss = [r.loss for r in means if r.algorithm == alg]
            assert all(b <= a * 1.05 for a, b in zip(loss[10:], loss[11:])), (path.name, alg)
            assert loss[-1] < loss[10]


def test_reruns_are_byte_identical_and_seed_matters(tmp_path):
    cfg = small_config(tmp_path, noise="[0.0, 0.01]", repeats=2)
    snap = lambda d: {p.name: p.read_bytes() for p in sorted((d / "runs").glob("*.csv"))}
    run_grid(parse_config(cfg))
    first = snap(tmp_path / "out")
    run_grid(parse_config(cfg))
    assert snap(tmp_path / "out") == first
    other = small_config(tmp_path, name="s.toml", seed=1, noise="[0.0, 0.01]", repeats=2,
                         out=(tmp_path / "out2").as_posix())
    run_grid(parse_config(other))
    assert snap(tmp_path / "out2") != first


def test_echo_reproduces_the_run(tmp_path):
    run_grid(parse_config(small_config(tmp_path, noise="[0.01]")))
    before = (tmp_path / "out" / "runs" / "ring_0.01.csv").read_bytes()
    echoed = parse_config(tmp_path / "out" / "config.toml")
    assert echoed.data == parse_config(tmp_path / "c.toml").data
    run_grid(echoed)
    assert (tmp_path / "out" / "runs" / "ring_0.01.csv").read_bytes() == before


def test_output_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "elsewhere"))
    run_grid(parse_config(small_config(tmp_path, T=1, algs='["FedNDL1"]', topos='["full"]')))
    assert (tmp_path / "elsewhere" / "runs" / "full_0.csv").exists()
    assert not (tmp_path / "out").exists()


def test_exit_codes(tmp_path, capsys):
    good = small_config(tmp_path, T=2)
    assert main(["validate", str(good)]) == 0
    assert "[grid]" in capsys.readouterr().out
    assert main(["run", str(good)]) == 0
    assert main(["run", str(small_config(tmp_path, name="bad.toml", lr0=-1))]) == 1
    assert "optim.lr0" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.toml")]) == 1
    assert main(["plot", str(tmp_path / "nowhere")]) == 2
    assert main(["plot", str(tmp_path / "out")]) == 0
    assert list((tmp_path / "out" / "plots").glob("*.svg"))


def test_divergence_still_exits_zero(tmp_path):
    cfg = small_config(tmp_path, lr0=5.0, decay=1.0, T=200, algs='["FedNDL1"]', topos='["ring"]')
    assert main(["run", str(cfg)]) == 0
    rows = list(csv.DictReader((tmp_path / "out" / "runs" / "ring_0.csv").open()))
    assert rows[-1]["diverged"] == "1" and len(rows) < 201


def svg_polylines(text):
    root = ET.fromstring(text)
    return [e for e in root.iter() if e.tag.endswith("polyline") and e.get("class") == "series"]


def mean(alg, t, loss, diverged=0):
    return MeanRecord(alg, "ring", 0.005, t, 0.1, loss, loss / 2, loss, loss, 3, diverged)


def test_svg_has_one_polyline_per_algorithm():
    recs = [mean(a, t, 10.0 / (t + 1) * (i + 1)) for i, a in enumerate(("FedNDL1", "FedNDL2", "FedNDL3")) for t in range(20)]
    svg = render_svg(recs, "loss", "ring, 0.005")
    lines = svg_polylines(svg)
    assert [p.get("data-algorithm") for p in lines] == ["FedNDL1", "FedNDL2", "FedNDL3"]
    root = ET.fromstring(svg)
    legend = [e.text for e in root.iter() if e.get("class") == "legend"]
    assert legend == ["FedNDL1", "FedNDL2", "FedNDL3"]


def test_truncated_series_is_marked():
    recs = [mean("FedNDL1", t, 1.0 + t, diverged=int(t == 4)) for t in range(5)] + [mean("FedNDL3", t, 1.0) for t in range(10)]
    root = ET.fromstring(render_svg(recs, "loss", "x"))
    markers = [e for e in root.iter() if e.get("class") == "diverged-marker"]
    assert len(markers) == 1
    first = svg_polylines(ET.tostring(root, encoding="unicode"))[0]
    assert len(first.get("points").split()) == 5


def test_header_only_csv_gives_axes_and_warning(tmp_path, caplog):
    p = tmp_path / "ring_0_mean.csv"
    write_mean_csv(p, [])
    with caplog.at_level(logging.WARNING):
        out = render_plots([p], tmp_path / "plots")
    assert "no data rows" in caplog.text
    for svg in out:
        text = svg.read_text()
        assert svg_polylines(text) == [] and "<line" in text


@pytest.fixture(scope="module")
def bounds_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("bounds")
    text = SMALL.format(seed=0, repeats=1, algs='["FedNDL1", "FedNDL2", "FedNDL3"]', topos='["ring", "full"]',
                        noise="[0.0, 0.01]", lr0=0.005, decay=1.0, T=30, out=(d / "out").as_posix())
    (d / "c.toml").write_text(text.replace("T = 30", 'T = 30\nschedule = "constant"'))
    assert main(["run", str(d / "c.toml")]) == 0
    assert main(["bounds", str(d / "out"), "--probes", "4", "--samples", "20"]) == 0
    return parse_report((d / "out" / "bounds.txt").read_text())


def parse_report(text):
    out, sec = {}, None
    for ln in text.splitlines():
        if ln.startswith("[") and ln.endswith("]"):
            sec = ln[1:-1]
            out[sec] = {}
        elif " = " in ln and sec:
            k, v = ln.split(" = ", 1)
            out[sec][k] = v
    return out


def test_bounds_report_noiseless_term_noise_is_zero(bounds_run):
    for topo in ("ring", "full"):
        for alg in ("FedNDL1", "FedNDL2", "FedNDL3"):
            sec = bounds_run[f"{topo}_0.{alg}"]
            assert float(sec["term_noise"]) == 0.0, (topo, alg, sec)


def test_bounds_report_noise_topology_dependence(bounds_run):
    ring, full = bounds_run["ring_0.01.FedNDL1"], bounds_run["full_0.01.FedNDL1"]
    assert float(ring["term_noise"]) > float(full["term_noise"]) > 0
    r3, f3 = bounds_run["ring_0.01.FedNDL3"], bounds_run["full_0.01.FedNDL3"]
    assert float(r3["term_noise"]) == float(f3["term_noise"]) > 0
    assert float(bounds_run["constants"]["L"]) > 0
    assert "gate ηL < 1/6" in bounds_run["ring_0.01.FedNDL3"]
