"""
Learning-rate schedules.

Every schedule is a pure function of the step index; ``LRScheduler`` adds
the step counter the training loop advances.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional

# Max LRs found by range tests for each variant.
REFERENCE_MAX_LR = {"ce": 9e-5, "aam": 5e-5, "bce": 3e-5}


class ScheduleKind(str, Enum):
    CONSTANT = "constant"
    EXPONENTIAL_DECAY = "exponential_decay"
    ONE_CYCLE = "one_cycle"
    TRI_STAGE = "tri_stage"


@dataclass
class ScheduleSpec:
    """
    Schedule kind plus the parameters of every kind.

    ``total_steps`` may stay unset in a training config; the trainer binds it
    to the iteration count.
    """
    kind: ScheduleKind = ScheduleKind.ONE_CYCLE
    total_steps: Optional[int] = None
    # constant
    lr: float = 1e-5
    # exponential_decay
    lr_start: float = 1e-5
    lr_end: float = 3e-6
    # one_cycle
    max_lr: float = 5e-5
    warmup_fraction: float = 0.1
    start_div: float = 25.0
    final_div: float = 1e4
    # tri_stage
    lr_floor_init: float = 1e-7
    lr_peak: float = 1e-5
    lr_floor_final: float = 1e-7
    warmup_steps: int = 10000
    hold_steps: int = 40000

    def __post_init__(self):
        self.kind = ScheduleKind(self.kind)

    def bind(self, total_steps: int) -> "ScheduleSpec":
        return replace(self, total_steps=total_steps)

    def validate(self) -> List[str]:
        problems = []
        if self.total_steps is not None and self.total_steps < 1:
            problems.append(f"schedule.total_steps must be >= 1, got {self.total_steps}")
        rates = {
            ScheduleKind.CONSTANT: ("lr",),
            ScheduleKind.EXPONENTIAL_DECAY: ("lr_start", "lr_end"),
            ScheduleKind.ONE_CYCLE: ("max_lr",),
            ScheduleKind.TRI_STAGE: ("lr_floor_init", "lr_peak", "lr_floor_final"),
        }[self.kind]
        for name in rates:
            if getattr(self, name) <= 0:
                problems.append(f"schedule.{name} must be > 0, got {getattr(self, name)}")
        if self.kind is ScheduleKind.ONE_CYCLE:
            if not 0.0 < self.warmup_fraction < 1.0:
                problems.append(f"schedule.warmup_fraction must be in (0, 1), got {self.warmup_fraction}")
            if self.start_div <= 0 or self.final_div <= 0:
                problems.append("schedule.start_div and schedule.final_div must be > 0")
        if self.kind is ScheduleKind.TRI_STAGE:
            if self.warmup_steps < 0 or self.hold_steps < 0:
                problems.append("schedule.warmup_steps and schedule.hold_steps must be >= 0")
            elif self.total_steps is not None and self.warmup_steps + self.hold_steps >= self.total_steps:
                problems.append(
                    f"tri_stage warmup ({self.warmup_steps}) + hold ({self.hold_steps}) "
                    f"must be shorter than total_steps ({self.total_steps})"
                )
        return problems


def _one_cycle(spec: ScheduleSpec, step: int, total: int) -> float:
    if total == 1:
        return spec.max_lr
    last = total - 1
    warm = min(max(1, int(round(spec.warmup_fraction * total))), last)
    start = spec.max_lr / spec.start_div
    if step <= warm:
        return start + (spec.max_lr - start) * step / warm
    final = spec.max_lr / spec.final_div
    progress = (step - warm) / (last - warm)
    return final + (spec.max_lr - final) * 0.5 * (1.0 + math.cos(math.pi * progress))


def _tri_stage(spec: ScheduleSpec, step: int, total: int) -> float:
    if step < spec.warmup_steps:
        return spec.lr_floor_init + (spec.lr_peak - spec.lr_floor_init) * step / spec.warmup_steps
    decay_start = spec.warmup_steps + spec.hold_steps
    decay_steps = total - 1 - decay_start
    if step <= decay_start or decay_steps <= 0:
        return spec.lr_peak
    return spec.lr_peak * (spec.lr_floor_final / spec.lr_peak) ** ((step - decay_start) / decay_steps)


def lr_at(spec: ScheduleSpec, step: int) -> float:
    """
    Learning rate at ``step`` (0-based).

    Raises:
        ValueError: step outside [0, total_steps) or an unbound schedule
    """
    total = spec.total_steps
    if total is None:
        raise ValueError("schedule has no total_steps; bind it to the run length first")
    if not 0 <= step < total:
        raise ValueError(f"step {step} outside [0, {total})")
    if spec.kind is ScheduleKind.CONSTANT:
        return spec.lr
    if spec.kind is ScheduleKind.EXPONENTIAL_DECAY:
        if total == 1:
            return spec.lr_start
        return spec.lr_start * (spec.lr_end / spec.lr_start) ** (step / (total - 1))
    if spec.kind is ScheduleKind.ONE_CYCLE:
        return _one_cycle(spec, step, total)
    return _tri_stage(spec, step, total)


class LRScheduler:
    """Stepwise view of a bound schedule."""

    def __init__(self, spec: ScheduleSpec):
        problems = spec.validate()
        if spec.total_steps is None:
            problems.append("schedule.total_steps is unset")
        if problems:
            raise ValueError("; ".join(problems))
        self.spec = spec
        self.step = 0

    @property
    def lr(self) -> float:
        return lr_at(self.spec, min(self.step, self.spec.total_steps - 1))

    def advance(self) -> float:
        """Return the current rate and move to the next step."""
        rate = self.lr
        self.step += 1
        return rate
