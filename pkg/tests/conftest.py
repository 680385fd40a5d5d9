from __future__ import annotations

import re
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest

from condfair.core import ClassPartition, EvalRecord, EvalSet

FIXTURES = Path(__file__).parent / "fixtures"

_CRITERION = re.compile(r"test_acceptance\.py::(?:\w+::)?test_criterion_(\d+)_")
_outcomes: dict[int, list[tuple[str, str]]] = defaultdict(list)


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes[int(m.group(1))].append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_outcomes):
        results = _outcomes[crit]
        failed = [name for name, outcome in results if outcome == "failed"]
        skipped = [name for name, outcome in results if outcome == "skipped"]
        verdict = "FAIL" if failed else "PASS"
        extra = f" (failed: {', '.join(failed)})" if failed else ""
        if skipped:
            extra += f" (skipped optional: {', '.join(skipped)})"
        terminalreporter.write_line(f"criterion {crit}: {verdict}{extra}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def abc():
    return ClassPartition(("A", "B", "C"))


def make_eval_set(partition, pairs, name="t", scalars=None):
    """EvalSet from (true, recon) index pairs; ids are r0, r1, ..."""
    records = []
    for i, (t, r) in enumerate(pairs):
        extra = {} if scalars is None else {key: vals[i] for key, vals in scalars.items()}
        records.append(EvalRecord(f"r{i}", t, r, scalars=extra))
    return EvalSet(partition, tuple(records), name)
