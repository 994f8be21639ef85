"""Uniform container for evaluated inequalities."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class EstimateReport:
    """One inequality ``lhs <= rhs`` evaluated on concrete data.

    ``margin`` is ``rhs - lhs``; the check passes when the margin is at
    least ``-tolerance``.  A report without a right-hand side (``rhs`` is
    None) only carries the raw left side, to be judged by a sweep.
    """

    name: str
    lhs: float
    rhs: float | None = None
    tolerance: float = 0.0
    params: dict = field(default_factory=dict)

    @property
    def margin(self) -> float | None:
        return None if self.rhs is None else self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.rhs is None or self.margin >= -self.tolerance

    def with_rhs(self, rhs: float) -> "EstimateReport":
        return EstimateReport(self.name, self.lhs, rhs, self.tolerance, dict(self.params))
