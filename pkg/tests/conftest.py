import dataclasses
import time

import pytest

from distmmwave.experiments import ScenarioConfig, run_sweep

#: evaluation setup; path_loss_db/noise_var_dbm put it at about 1 dB per-user SNR
EVALUATION = ScenarioConfig(trials=2000, master_seed=20240601)

_ACCEPTANCE: list[str] = []


@pytest.fixture
def record():
    """Log one acceptance line: ``record(number, ok, detail)``."""

    def _record(number: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        print(_ACCEPTANCE[-1])
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def _timed_sweep(cfg, sweep, values):
    start = time.perf_counter()
    curves = run_sweep(cfg, sweep, values)
    return curves, time.perf_counter() - start


@pytest.fixture(scope="session")
def power_ratio_sweep():
    """Both schemes over power ratio 1..10 at 2000 trials per point, with its runtime."""
    cfg = dataclasses.replace(EVALUATION, schemes=("distributed_hybrid", "collocated_digital"))
    return _timed_sweep(cfg, "power_ratio", range(1, 11))


@pytest.fixture(scope="session")
def cluster_count_sweep():
    """Collocated scheme over 1..8 clusters at 2000 trials per point, with its runtime."""
    cfg = dataclasses.replace(EVALUATION, schemes=("collocated_digital",))
    return _timed_sweep(cfg, "n_cl", range(1, 9))


@pytest.fixture(scope="session")
def power_ratio_curves(power_ratio_sweep):
    return power_ratio_sweep[0]
