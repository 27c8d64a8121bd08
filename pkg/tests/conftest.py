import pytest

_DETAILS: dict[str, list[str]] = {}
_OUTCOMES: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def note(request):
    """Attach a measured value to the current acceptance line."""
    lines = _DETAILS.setdefault(request.node.nodeid, [])
    return lines.append


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    label = f"{mark.args[0]:>2} {mark.args[1]}"
    if call.excinfo is None:
        _OUTCOMES[item.nodeid] = (label, "PASS")
    else:
        _OUTCOMES[item.nodeid] = (label, "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (label, verdict) in _OUTCOMES.items():
        detail = "; ".join(_DETAILS.get(nodeid, []))
        terminalreporter.write_line(f"{verdict}  criterion {label}" + (f"  [{detail}]" if detail else ""))
