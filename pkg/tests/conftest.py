import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("wgqed", deadline=None, max_examples=25)
settings.load_profile("wgqed")


@pytest.fixture
def two_emitters():
    from wgqed import config_from_dict
    return config_from_dict({"model": "TwoLevelArray", "gamma": 1.0, "n": 2,
                             "d": 1.0, "k0d": 0.0})


@pytest.fixture
def eit20():
    from wgqed import config_from_dict
    return config_from_dict({"model": "RydbergEitArray", "gamma": 1.0, "gamma_f": 1.0,
                             "n": 20, "d": 1e-4, "k0d": np.pi / 2,
                             "rydberg": {"omega": 1.0, "delta_s": 0.0}})


# one summary line per acceptance criterion
_CRITERIA = {}
_DETAILS = {}


@pytest.fixture
def record(request):
    def _record(text):
        _DETAILS.setdefault(request.node.get_closest_marker("criterion").args[0], []).append(text)
        print(text)
    return _record


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when not in ("setup", "call"):
        return
    n, title = mark.args
    ok = call.excinfo is None
    prev = _CRITERIA.get(n, (title, True))[1]
    _CRITERIA[n] = (title, prev and ok)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok = _CRITERIA[n]
        detail = "; ".join(_DETAILS.get(n, []))
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}"
                                    + (f"  [{detail}]" if detail else ""))
