"""Report containers shared by every check in the laboratory."""

from __future__ import annotations

from dataclasses import dataclass, field

PASS = "PASS"
FAIL = "FAIL"
INFO = "INFO"


@dataclass(frozen=True)
class EstimatorResult:
    """A scalar estimate with its Monte Carlo / quadrature error."""

    value: float
    stderr: float
    n: int = 0
    method: str = ""
    notes: str = ""

    def __str__(self):
        return f"{self.value:.6g} +- {self.stderr:.2g} ({self.method or 'exact'})"


@dataclass(frozen=True)
class LemmaReport:
    """Outcome of one verified identity or bound.

    ``statistic`` is the worst-case discrepancy (or the reported ratio for
    INFO checks), ``tolerance`` the acceptance threshold it was compared to.
    Composite checks carry their parts in ``sub``; a composite FAILs iff any
    gated part does.
    """

    check_id: str
    verdict: str
    statistic: float
    stderr: float = 0.0
    tolerance: float = 0.0
    notes: str = ""
    sub: tuple["LemmaReport", ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.verdict not in (PASS, FAIL, INFO):
            raise ValueError(f"bad verdict {self.verdict!r}")

    @property
    def failed(self) -> bool:
        return self.verdict == FAIL or any(s.failed for s in self.sub)

    def flat(self) -> list["LemmaReport"]:
        out = [self]
        for s in self.sub:
            out.extend(s.flat())
        return out

    def __str__(self):
        return (
            f"[{self.verdict}] {self.check_id}: stat={self.statistic:.4g} "
            f"tol={self.tolerance:.4g} {self.notes}".rstrip()
        )


def gate(check_id: str, gap: float, tolerance: float, stderr: float = 0.0,
         notes: str = "", sub: tuple = ()) -> LemmaReport:
    """PASS/FAIL report for ``gap <= tolerance``."""
    verdict = PASS if gap <= tolerance else FAIL
    if any(s.verdict == FAIL for s in sub):
        verdict = FAIL
    return LemmaReport(check_id, verdict, float(gap), float(stderr),
                       float(tolerance), notes, tuple(sub))


def info(check_id: str, statistic: float, stderr: float = 0.0, notes: str = "") -> LemmaReport:
    """Diagnostic report that never gates an exit code."""
    return LemmaReport(check_id, INFO, float(statistic), float(stderr), 0.0, notes)
