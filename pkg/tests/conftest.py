import re

_CRITERIA = {
    1: "gradient correctness",
    2: "constant-hazard oracle",
    3: "monotone training NLL",
    4: "Cox coefficient recovery",
    5: "AUC oracles",
    6: "window AUC-PRC ordering boost > Cox > baseline",
    7: "boost window AUC-PRC >= instant",
    8: "flagging oracles",
    9: "thread-count determinism",
    10: "round trips",
}
_outcomes: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criteria")


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)_", report.nodeid)
    if not m:
        return
    k = int(m.group(1))
    if report.when == "call" or report.failed:
        if report.failed or _outcomes.get(k) != "FAIL":
            _outcomes[k] = "FAIL" if report.failed else ("PASS" if report.passed else "SKIP")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        if k in _outcomes:
            terminalreporter.write_line(f"{_outcomes[k]} criterion {k}: {_CRITERIA[k]}")
