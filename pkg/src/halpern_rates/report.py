"""Pass/fail records returned by every verifier in the package."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict[str, Any] = field(default_factory=dict)
    truncated: bool = False

    def to_dict(self) -> dict:
        out = {"name": self.name, "passed": self.passed, "truncated": self.truncated}
        out.update(self.detail)
        return out


@dataclass
class VerificationReport:
    """An ordered collection of named checks.

    Failures are data, never exceptions. ``passed`` is true iff no check
    failed; truncated checks (horizon too short) do not count as failures
    but are listed so a reader can see what was not examined.
    """

    subject: str
    checks: list[CheckResult] = field(default_factory=list)

    def add(self, name: str, passed: bool, truncated: bool = False, **detail) -> CheckResult:
        result = CheckResult(name, bool(passed), detail, truncated)
        self.checks.append(result)
        return result

    def extend(self, other: "VerificationReport", prefix: str | None = None) -> None:
        for c in other.checks:
            name = f"{prefix}/{c.name}" if prefix else c.name
            self.checks.append(CheckResult(name, c.passed, dict(c.detail), c.truncated))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    @property
    def truncations(self) -> list[CheckResult]:
        return [c for c in self.checks if c.truncated]

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "passed": self.passed,
            "n_checks": len(self.checks),
            "n_failures": len(self.failures),
            "checks": [c.to_dict() for c in self.checks],
        }

    def __repr__(self) -> str:
        status = "PASS" if self.passed else f"FAIL({len(self.failures)})"
        return f"VerificationReport({self.subject!r}, {len(self.checks)} checks, {status})"
