"""Shared pytest wiring: per-criterion pass/fail summary lines."""

from __future__ import annotations

import re

_CRITERION = re.compile(r"test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results: dict[int, tuple[str, str]] = {}
    rank = {"FAIL": 2, "PASS": 1, "SKIP": 0}
    for outcome in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            match = _CRITERION.search(nodeid)
            if not match:
                continue
            num = int(match.group(1))
            label = {"passed": "PASS", "failed": "FAIL", "error": "FAIL", "skipped": "SKIP"}[outcome]
            prev = results.get(num)
            if prev and rank[prev[0]] >= rank[label]:
                continue
            results[num] = (label, nodeid.split("::")[-1])
    if results:
        terminalreporter.write_sep("-", "acceptance criteria")
        for num in sorted(results):
            label, name = results[num]
            terminalreporter.write_line(f"criterion {num:2d}: {label}  ({name})")
