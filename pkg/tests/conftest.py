import sys

import numpy as np
import pytest

from lilac.datasets import corpus_path, corpus_text
from lilac.interp import HarnessRegistry, register_reference_harnesses
from lilac.ir import parse_ir
from lilac.lilacfile import parse_lilac


@pytest.fixture(scope="session")
def spec():
    return parse_lilac(corpus_path("spec.lilac").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def whats(spec):
    return {w.name: w for w in spec.whats}


@pytest.fixture
def registry(spec):
    reg = HarnessRegistry()
    register_reference_harnesses(reg, spec.whats)
    return reg


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def load(name: str):
    return parse_ir(corpus_text(name))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance")
    for line in mod.report_lines():
        terminalreporter.write_line(line)
