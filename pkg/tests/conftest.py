from __future__ import annotations

import numpy as np
import pytest

from patchfinder.index import build_index
from patchfinder.nn import Network, NetworkSpec
from patchfinder.synth import synth_images, write_corpus

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def net() -> Network:
    return Network(NetworkSpec(seed=0))


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus12")
    write_corpus(root, 12, seed=3)
    return root


@pytest.fixture(scope="session")
def small_index(small_corpus, net):
    index, skipped = build_index(small_corpus, net)
    assert skipped == []
    return index


@pytest.fixture(scope="session")
def small_images():
    return synth_images(12, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
