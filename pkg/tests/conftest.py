import os
from pathlib import Path

import numpy as np
import pytest

REPO = Path(__file__).resolve().parent.parent
ML100K_ENV = "DEBIAS_BENCH_ML100K"

# filled by test_acceptance; printed once at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def ml100k_path() -> Path | None:
    candidates = [os.environ.get(ML100K_ENV), REPO / "data" / "ml-100k" / "u.data"]
    for c in candidates:
        if c and Path(c).is_file():
            return Path(c)
    return None


@pytest.fixture(scope="session")
def ml100k_file():
    path = ml100k_path()
    if path is None:
        pytest.skip(f"MovieLens 100K u.data not found; set ${ML100K_ENV} or place it at data/ml-100k/u.data")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


# -- full-scale experiment runs, shared by the harness and acceptance tests --

@pytest.fixture(scope="session")
def latent_compare():
    from debias_bench.harness import CompareConfig, run_comparison
    return run_comparison(CompareConfig(), jobs=1)


@pytest.fixture(scope="session")
def ml100k_compare(ml100k_file):
    from debias_bench.harness import CompareConfig, DataSource, run_comparison
    return run_comparison(CompareConfig(source=DataSource("ml100k-imputed", str(ml100k_file))), jobs=1)


@pytest.fixture(scope="session")
def latent_sweep():
    from debias_bench.harness import SweepConfig, run_sweep
    return run_sweep(SweepConfig(), jobs=1)

