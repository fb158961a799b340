def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion at the end of the run."""
    entries = []
    for outcome in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" in nodeid and getattr(rep, "when", "call") == "call":
                entries.append((nodeid.split("::")[-1], outcome))
    if entries:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, outcome in sorted(entries):
            terminalreporter.write_line(f"[{outcome.upper():>7}] {name}")
