"""Verification report shared by the solver, rounding and verifier checks."""

from __future__ import annotations

from dataclasses import dataclass, field

PASS = "pass"
FAIL = "fail"
NOT_CHECKED = "not-checked"

EXIT_CODES = {PASS: 0, FAIL: 1, NOT_CHECKED: 2}


@dataclass
class Report:
    name: str
    status: str = PASS
    violations: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == PASS

    @property
    def passed(self) -> bool:
        return self.ok

    def fail(self, **witness) -> None:
        self.violations.append(witness)
        self.status = FAIL

    def to_dict(self) -> dict:
        return {
            "check": self.name,
            "status": self.status,
            "violations": self.violations,
            "notes": self.notes,
        }

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]


def combine(name: str, reports) -> Report:
    """Worst status wins: fail over not-checked over pass."""
    reports = list(reports)
    out = Report(name, notes={"parts": [r.to_dict() for r in reports]})
    statuses = {r.status for r in reports}
    if FAIL in statuses:
        out.status = FAIL
    elif NOT_CHECKED in statuses:
        out.status = NOT_CHECKED
    return out
