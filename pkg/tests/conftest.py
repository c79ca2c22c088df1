import os
import re
from pathlib import Path

import numpy as np
import pytest

from tsr import synthetic as syn
from tsr.index import BuildConfig
from tsr.preprocess import normalize
from tsr.shapeio import BinaryShape

_CRITERIA: dict[int, tuple[str, str]] = {}
_CRIT_RE = re.compile(r"test_criterion_(\d+)_(\w+)")


@pytest.fixture(scope="session")
def fixture_grids():
    return {name: syn.fixture_shape(name) for name in syn.fixture_outlines()}


@pytest.fixture(scope="session")
def normalized_fixtures(fixture_grids):
    return {name: normalize(BinaryShape(name, g)) for name, g in fixture_grids.items()}


@pytest.fixture(scope="session")
def small_gallery():
    """4 classes x 12 shapes; classes are larger than the diffusion locality."""
    return syn.synthetic_gallery(n_classes=4, per_class=12, seed=3, size=140)


@pytest.fixture(scope="session")
def small_index(small_gallery):
    from tsr.pipeline import build_index

    return build_index(small_gallery, BuildConfig(M=4, knn_w=8, n_trees=40))


def dataset_dir(var: str) -> Path | None:
    p = os.environ.get(var)
    return Path(p) if p and Path(p).is_dir() else None


# --------------------------------------------------------------------------
# one PASS/FAIL line per acceptance criterion


def pytest_runtest_logreport(report):
    m = _CRIT_RE.search(report.nodeid)
    if not m:
        return
    k = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "PASS" if report.outcome == "passed" else "FAIL"
        reason = ""
        if report.outcome != "passed":
            text = str(report.longrepr).strip().splitlines()
            errs = [t for t in text if t.startswith("E ")]
            reason = (errs[0] if errs else text[-1] if text else "")[2:].strip()[:110]
        _CRITERIA[k] = (f"{status} {m.group(2)}", reason)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        line, reason = _CRITERIA[k]
        tr.write_line(f"criterion {k:2d}: {line}" + (f"  [{reason}]" if reason else ""))
    n_pass = sum(v[0].startswith("PASS") for v in _CRITERIA.values())
    tr.write_line(f"{n_pass}/{len(_CRITERIA)} criteria pass")
