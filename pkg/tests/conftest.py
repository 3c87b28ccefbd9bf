import re


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    outcomes = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            if getattr(rep, "when", "call") != "call" and status == "passed":
                continue
            name = nodeid.split("::")[-1]
            word = "PASS" if status == "passed" else "FAIL"
            # a failed setup/teardown still counts as a failure
            if name not in outcomes or word == "FAIL":
                outcomes[name] = word
    if not outcomes:
        return

    def key(name):
        m = re.search(r"criterion_(\d+)", name)
        return int(m.group(1)) if m else 99

    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(outcomes, key=key):
        terminalreporter.write_line(f"{name}: {outcomes[name]}")
