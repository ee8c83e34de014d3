"""Loss-breakdown and loss-log contracts."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .experiment import LossWeights

LOSS_TERMS: tuple[str, ...] = ("kd_fe", "kd_c", "ct_c", "ct_fe")


def weighted_total(values: dict[str, float], weights: LossWeights) -> float:
    """Weighted sum accumulated in the fixed kd_fe, kd_c, ct_c, ct_fe order."""
    total = 0.0
    for term in LOSS_TERMS:
        total += getattr(weights, term) * values[term]
    return total


class LossBreakdown(BaseModel):
    """The four joint-loss components, their weights and the weighted total."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kd_fe: float = 0.0
    kd_c: float = 0.0
    ct_c: float = 0.0
    ct_fe: float = 0.0
    weights: LossWeights = Field(default_factory=LossWeights)
    total: float = 0.0

    @model_validator(mode="after")
    def _total_is_weighted_sum(self) -> LossBreakdown:
        expected = weighted_total(self.components(), self.weights)
        if self.total != expected:
            raise ValueError(f"total {self.total!r} differs from weighted sum {expected!r}")
        return self

    @classmethod
    def from_components(
        cls, weights: LossWeights, **components: float
    ) -> LossBreakdown:
        values = {term: float(components.get(term, 0.0)) for term in LOSS_TERMS}
        return cls(**values, weights=weights, total=weighted_total(values, weights))

    def components(self) -> dict[str, float]:
        return {term: getattr(self, term) for term in LOSS_TERMS}


class StepRecord(BaseModel):
    """One line of the loss-curve log."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    task: int = Field(..., ge=1)
    epoch: int = Field(..., ge=0)
    step: int = Field(..., ge=0)
    kd_fe: float
    kd_c: float
    ct_c: float
    ct_fe: float
    total: float
    lr: float | None = None

    @classmethod
    def from_breakdown(
        cls, breakdown: LossBreakdown, *, task: int, epoch: int, step: int, lr: float | None
    ) -> StepRecord:
        return cls(task=task, epoch=epoch, step=step, lr=lr, total=breakdown.total, **breakdown.components())
