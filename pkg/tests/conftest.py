"""Shared fixtures and the acceptance-summary reporter.

The acceptance tests register one line per criterion through
:func:`record_criterion`; the terminal summary prints them after the run,
outside pytest's output capture, so every criterion shows its PASS/FAIL
status even when all tests pass.
"""

from __future__ import annotations

import re

import pytest

from suscept.ode import IntegratorSettings
from suscept.scan import ScanConfig, run_scan, run_validation

_CRITERION_LINES: list[tuple[str, str, bool, str]] = []


def record_criterion(label: str, description: str, passed: bool, detail: str = "") -> None:
    """Record one acceptance-criterion outcome and assert it."""
    _CRITERION_LINES.append((label, description, bool(passed), detail))
    assert passed, f"criterion {label} ({description}): {detail}"


def _label_key(label: str) -> tuple[int, str]:
    match = re.match(r"(\d+)", label)
    return (int(match.group(1)) if match else 999, label)


def pytest_terminal_summary(terminalreporter, exitstatus, config) -> None:
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, desc, passed, detail in sorted(_CRITERION_LINES, key=lambda r: _label_key(r[0])):
        status = "PASS" if passed else "FAIL"
        line = f"criterion {label:>3} {status}  {desc}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def full_scan(tmp_path_factory):
    """The default 13-point mu scan at order 4, run once per session."""
    out = tmp_path_factory.mktemp("scan-output")
    config = ScanConfig(output_dir=str(out))
    report = run_scan(config)
    return report


@pytest.fixture(scope="session")
def oracle_checks():
    """The independent-oracle validation suite at mu = 1, run once."""
    return run_validation()


@pytest.fixture(scope="session")
def settings():
    return IntegratorSettings()
