"""
MetricsTracker implementation.

Keeps the step-indexed training log: loss and learning rate every step,
validation EER whenever it is computed.
"""

import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

COLUMNS = ["step", "loss", "lr", "validation_eer"]


class MetricsTracker:
    """
    Records per-step training metrics and validation EERs.

    Steps are 1-based optimizer steps; a validation EER is attached to the
    step after which it was computed.
    """

    def __init__(self):
        """Initialize an empty log."""
        self.steps: List[Dict] = []
        self.validations: List[Tuple[int, float]] = []

    def record_step(self, step: int, loss: float, lr: float):
        """
        Record one optimizer step.

        Args:
            step: Step number (1-based)
            loss: Training loss of the step's batch
            lr: Learning rate the step used
        """
        self.steps.append({"step": step, "loss": float(loss), "lr": float(lr)})

    def record_validation(self, step: int, eer: float):
        """
        Record a validation EER computed after ``step``.

        Args:
            step: Step the parameters were taken from
            eer: Validation EER
        """
        self.validations.append((step, float(eer)))

    def get_dataframe(self) -> pd.DataFrame:
        """The log as a table; ``validation_eer`` is NaN where not computed."""
        frame = pd.DataFrame(self.steps, columns=COLUMNS[:3])
        eers = dict(self.validations)
        frame["validation_eer"] = [eers.get(s, math.nan) for s in frame["step"]]
        return frame.astype({"step": np.int64})

    def to_csv(self, path: Union[str, Path]):
        self.get_dataframe().to_csv(path, index=False, float_format="%.10g")

    def best_validation(self) -> Optional[Tuple[int, float]]:
        """(step, eer) of the lowest validation EER; ties keep the earlier step."""
        best = None
        for step, eer in self.validations:
            if best is None or eer < best[1]:
                best = (step, eer)
        return best

    def best_eer_trace(self) -> List[float]:
        """Running minimum of the validation EER."""
        return list(np.minimum.accumulate([eer for _, eer in self.validations])) if self.validations else []

    def get_loss_summary(self) -> Dict[str, float]:
        """
        Loss statistics over the run.

        Returns:
            Dictionary with initial, final, min and the mean of the first and
            last 10% of steps
        """
        if not self.steps:
            return {}
        losses = np.array([s["loss"] for s in self.steps])
        tenth = max(1, len(losses) // 10)
        return {
            "initial_loss": float(losses[0]),
            "final_loss": float(losses[-1]),
            "min_loss": float(losses.min()),
            "early_mean_loss": float(losses[:tenth].mean()),
            "late_mean_loss": float(losses[-tenth:].mean()),
        }

    def __len__(self) -> int:
        return len(self.steps)

    def __repr__(self) -> str:
        best = self.best_validation()
        best_text = f"{best[1]:.4f}@{best[0]}" if best else "none"
        return f"MetricsTracker(steps={len(self.steps)}, validations={len(self.validations)}, best_eer={best_text})"
