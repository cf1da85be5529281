import re

_ACCEPTANCE = {}
_NAME = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    m = _NAME.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or report.failed:
        detail = dict(report.user_properties).get("detail", "")
        prev = _ACCEPTANCE.get(int(m.group(1)))
        if prev is None or prev[0] == "PASS":
            _ACCEPTANCE[int(m.group(1))] = ("PASS" if report.passed else "FAIL", m.group(2), detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, name, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"ACCEPTANCE {n}: {status} {name} {detail}".rstrip())
