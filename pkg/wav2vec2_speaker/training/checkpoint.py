"""
Checkpoints: parameters, optimizer moments, step, validation EER and model
fingerprint.

On disk a checkpoint is a directory with a ``checkpoint.txt`` header
(``key = value`` lines), the parameters as a weight manifest under
``parameters/`` and the Adam moments as a manifest under ``optimizer/``
(``m.<name>`` and ``v.<name>`` entries).
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from ..exceptions import WeightManifestError
from ..model.speaker_model import SpeakerModel
from ..model.weights import read_manifest, write_manifest
from .optimizer import Adam, AdamState

logger = logging.getLogger(__name__)

HEADER_NAME = "checkpoint.txt"


@dataclass
class Checkpoint:
    """
    Attributes:
        parameters: Parameter arrays by name
        optimizer: Adam moments and step count
        step: Optimizer steps taken when captured
        validation_eer: Validation EER of these parameters (None if not computed)
        fingerprint: Fingerprint of the model that produced the parameters
    """
    parameters: Dict[str, np.ndarray] = field(repr=False)
    optimizer: AdamState = field(repr=False)
    step: int
    validation_eer: Optional[float]
    fingerprint: str

    @classmethod
    def capture(cls, model: SpeakerModel, optimizer: Optional[Adam], step: int,
                validation_eer: Optional[float] = None) -> "Checkpoint":
        """Snapshot a model (and optimizer) without sharing memory with them."""
        state = optimizer.state.copy() if optimizer is not None else AdamState()
        return cls(model.store.state_dict(), state, step, validation_eer, model.fingerprint())

    def restore(self, model: SpeakerModel, optimizer: Optional[Adam] = None):
        """
        Load the snapshot into ``model`` (and ``optimizer``).

        Raises:
            WeightManifestError: when the model's fingerprint differs
        """
        if model.fingerprint() != self.fingerprint:
            raise WeightManifestError([
                f"checkpoint fingerprint {self.fingerprint[:12]} does not match model {model.fingerprint()[:12]}"
            ])
        model.store.load_state_dict(self.parameters)
        if optimizer is not None:
            optimizer.state = self.optimizer.copy()

    def save(self, directory: Union[str, Path]):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_manifest(self.parameters, directory / "parameters")
        moments = {f"m.{k}": a for k, a in self.optimizer.m.items()}
        moments.update({f"v.{k}": a for k, a in self.optimizer.v.items()})
        write_manifest(moments, directory / "optimizer")
        eer = "none" if self.validation_eer is None else repr(float(self.validation_eer))
        (directory / HEADER_NAME).write_text(
            f"step = {self.step}\n"
            f"validation_eer = {eer}\n"
            f"fingerprint = {self.fingerprint}\n"
            f"optimizer_step = {self.optimizer.step}\n"
        )
        logger.info("saved checkpoint (step %d) to %s", self.step, directory)

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "Checkpoint":
        directory = Path(directory)
        header_path = directory / HEADER_NAME
        if not header_path.exists():
            raise FileNotFoundError(header_path)
        header = {}
        for line in header_path.read_text().splitlines():
            if "=" in line:
                key, value = line.split("=", 1)
                header[key.strip()] = value.strip()
        problems = [f"{HEADER_NAME} lacks {k}" for k in ("step", "validation_eer", "fingerprint") if k not in header]
        if problems:
            raise WeightManifestError(problems)

        moments = read_manifest(directory / "optimizer")
        state = AdamState(
            int(header.get("optimizer_step", 0)),
            {k[2:]: a for k, a in moments.items() if k.startswith("m.")},
            {k[2:]: a for k, a in moments.items() if k.startswith("v.")},
        )
        eer = None if header["validation_eer"] == "none" else float(header["validation_eer"])
        if eer is not None and math.isnan(eer):
            eer = None
        return cls(read_manifest(directory / "parameters"), state, int(header["step"]), eer, header["fingerprint"])
