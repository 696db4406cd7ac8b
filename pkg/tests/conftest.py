"""Shared pytest wiring: one visible pass/fail line per acceptance criterion."""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    tr = terminalreporter
    rows = []
    for outcome in ("passed", "failed", "error", "skipped"):
        for rep in tr.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            if getattr(rep, "when", "call") != "call" and outcome == "passed":
                continue
            name = nodeid.split("::")[-1]
            rows.append((name, "PASS" if outcome == "passed" else outcome.upper()))
    if rows:
        tr.write_sep("=", "acceptance criteria")
        seen = set()
        for name, outcome in rows:
            if name in seen:
                continue
            seen.add(name)
            tr.write_line(f"[{outcome}] {name}")
