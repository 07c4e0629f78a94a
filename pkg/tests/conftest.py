import re


def pytest_terminal_summary(terminalreporter):
    """One verdict line per acceptance criterion, in criterion order."""
    lines = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            if "test_acceptance" not in getattr(rep, "nodeid", ""):
                continue
            m = re.search(r"test_criterion_(\d+)", rep.nodeid)
            if not m:
                continue
            num = int(m.group(1))
            if rep.when != "call" and rep.passed:
                continue
            detail = dict(rep.user_properties).get("detail", "")
            if not detail and not rep.passed:
                detail = f"{rep.when} error"
            verdict = "PASS" if rep.passed else "FAIL"
            lines[num] = f"criterion {num:2d}: {verdict}  {detail}"
    if lines:
        terminalreporter.section("acceptance criteria")
        for num in sorted(lines):
            terminalreporter.write_line(lines[num])
