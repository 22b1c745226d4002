import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from lmbench import synthetic  # noqa: E402
from lmbench.datasets import ingest  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def family(tmp_path_factory):
    """Synthetic chest/head/hand corpora at 64 px, ingested."""
    root = tmp_path_factory.mktemp("family")
    made = synthetic.make_family(root, n_train=6, n_test=3, size=64, seed=0)
    return {name: ingest(path, spec) for name, (path, spec) in made.items()}


@pytest.fixture(scope="session")
def small_chest(tmp_path_factory):
    root = tmp_path_factory.mktemp("chest64")
    spec = synthetic.synthetic_spec("chest", 10, 4, 64)
    return ingest(synthetic.make_dataset(root, spec, seed=3), spec)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    def record(n: int, ok: bool, detail: str):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
