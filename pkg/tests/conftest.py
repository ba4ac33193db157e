def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", "call") != "call" and outcome != "error":
                continue
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" in props:
                verdict = "PASS" if outcome == "passed" else "FAIL"
                lines.append((props["criterion"], f"criterion {props['criterion']}: {verdict}  {props.get('detail', '')}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
