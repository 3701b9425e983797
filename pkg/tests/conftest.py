from __future__ import annotations

import numpy as np
import pytest

from weaksym.jet import JetSpec
from weaksym.model import parse_model
from weaksym.scenarios import emit_model


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def burgers_spec():
    return JetSpec(("x", "t"), ("u",), 1)


@pytest.fixture(scope="session")
def gb_exp():
    return parse_model(emit_model("generalized-burgers", {"f": "exp"}))


@pytest.fixture(scope="session")
def gb_id():
    return parse_model(emit_model("generalized-burgers", {"f": "id"}))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
