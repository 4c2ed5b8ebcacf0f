import numpy as np
import pytest

from vistat.pipeline import synthetic_sinusoid, write_table_csv


def write_csv(path, rows, header="date,open,high,low,close,volume"):
    path.write_text(header + "\n" + "".join(r + "\n" for r in rows))
    return path


@pytest.fixture
def sine_csv(tmp_path):
    path = tmp_path / "sine.csv"
    write_table_csv(synthetic_sinusoid(T=300, seed=1), path)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
