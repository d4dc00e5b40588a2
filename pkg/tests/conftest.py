from __future__ import annotations

import numpy as np
import pytest

from noisydfl.datagen import LossConfig, generate_task, partition
from noisydfl.topology import TopologyKind, build_mixing_matrix

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion; printed at the end of the session."""
    def record(name: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE.append((name, bool(passed), detail))
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


@pytest.fixture(scope="session")
def small_task():
    return generate_task(320, 6, 0.05, seed=11)


@pytest.fixture(scope="session")
def small_shards(small_task):
    return partition(small_task, 4, seed=11)


@pytest.fixture(scope="session")
def ring16():
    return build_mixing_matrix(TopologyKind.ring(), 16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def loss_cfg():
    return LossConfig(reg=1e-3, batch_size=4)
