"""
Run configuration files.

A run config is flat ``key = value`` text. Training keys appear bare
(``variant = aam``); nested groups use dotted names (``encoder.model_dim``,
``schedule.kind``, ``adam.beta2``, ``pair_batch.speakers``,
``range_test.steps``). ``#`` starts a comment, ``none`` clears an optional
value, and tuples are comma-separated. Values are coerced to the type of
the dataclass field they set; unknown keys and bad values are all reported
together in one ConfigError.
"""

import dataclasses
import enum
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from .exceptions import ConfigError
from .model.config import EncoderConfig
from .training.config import PairBatchConfig, TrainConfig
from .training.optimizer import AdamConfig
from .training.range_test import RangeTestConfig
from .training.schedule import ScheduleSpec

RESOLVED_NAME = "resolved_config.txt"

SECTIONS = {
    "encoder": EncoderConfig,
    "schedule": ScheduleSpec,
    "adam": AdamConfig,
    "pair_batch": PairBatchConfig,
}
_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}


@dataclass
class RunConfig:
    """
    Everything one command needs: training settings plus artifact paths.

    Attributes:
        train: Training configuration (its seed is the run seed)
        range_test: LR range test settings
        corpus: Corpus directory (holding manifest.tsv) or manifest file
        train_manifest: Manifest of training utterances (default: the whole corpus)
        validation_trials: Trial list for validation EER
        test_trials: Trial list for final evaluation
        out: Output directory
    """
    train: TrainConfig = field(default_factory=TrainConfig)
    range_test: RangeTestConfig = field(default_factory=RangeTestConfig)
    corpus: Optional[str] = None
    train_manifest: Optional[str] = None
    validation_trials: Optional[str] = None
    test_trials: Optional[str] = None
    out: str = "runs/default"

    @property
    def seed(self) -> int:
        return self.train.seed

    def validate(self) -> List[str]:
        problems = self.train.validate()
        problems += self.range_test.validate()
        return problems


def _unwrap_optional(tp: Any) -> Tuple[Any, bool]:
    if typing.get_origin(tp) is Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0], True
    return tp, False


def coerce(text: str, tp: Any) -> Any:
    """Convert ``text`` to the field type ``tp``."""
    tp, optional = _unwrap_optional(tp)
    value = text.strip()
    if optional and value.lower() == "none":
        return None
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        return tp(value)
    if tp is bool:
        if value.lower() in _TRUE:
            return True
        if value.lower() in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    if tp is int:
        return int(value)
    if tp is float:
        return float(value)
    if tp is str:
        return value
    if typing.get_origin(tp) is tuple:
        item = typing.get_args(tp)[0]
        return tuple(coerce(part, item) for part in value.split(",") if part.strip())
    raise ValueError(f"unsupported field type {tp!r}")


def format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(format_value(v) for v in value)
    return str(value)


def _field_types(cls) -> Dict[str, Any]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def _scalar_fields(cls) -> Dict[str, Any]:
    """Fields of ``cls`` that are not nested config groups."""
    return {k: t for k, t in _field_types(cls).items() if not dataclasses.is_dataclass(t)}


def parse_run_config(text: str, source: str = "<config>") -> RunConfig:
    """
    Parse config text.

    Raises:
        ConfigError: every unknown key, malformed line, bad value and
            validation problem at once
    """
    problems: List[str] = []
    values: Dict[str, Dict[str, Any]] = {name: {} for name in (*SECTIONS, "range_test", "train", "run")}
    run_fields = _scalar_fields(RunConfig)
    train_fields = _scalar_fields(TrainConfig)

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{source} line {number}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        section, _, name = key.rpartition(".")
        if section in SECTIONS or section == "range_test":
            cls = SECTIONS.get(section, RangeTestConfig)
            types, target = _scalar_fields(cls), values[section]
        elif section:
            problems.append(f"{source} line {number}: unknown section {section!r}")
            continue
        elif name in run_fields:
            types, target = run_fields, values["run"]
        elif name in train_fields:
            types, target = train_fields, values["train"]
        else:
            problems.append(f"{source} line {number}: unknown key {key!r}")
            continue
        if name not in types:
            problems.append(f"{source} line {number}: unknown key {key!r}")
            continue
        if name in target:
            problems.append(f"{source} line {number}: duplicate key {key!r}")
            continue
        try:
            target[name] = coerce(value, types[name])
        except ValueError as err:
            problems.append(f"{source} line {number}: {key}: {err}")
    if problems:
        raise ConfigError(problems)

    groups = {name: cls(**values[name]) for name, cls in SECTIONS.items()}
    cfg = RunConfig(
        train=TrainConfig(**groups, **values["train"]),
        range_test=RangeTestConfig(**values["range_test"]),
        **values["run"],
    )
    problems = cfg.validate()
    if problems:
        raise ConfigError(problems)
    return cfg


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    return parse_run_config(path.read_text(), source=path.name)


def format_run_config(cfg: RunConfig) -> str:
    """Every setting, resolved, in the format ``parse_run_config`` reads."""
    lines = ["# paths"]
    for name in _scalar_fields(RunConfig):
        lines.append(f"{name} = {format_value(getattr(cfg, name))}")
    lines.append("\n# training")
    for name in _scalar_fields(TrainConfig):
        lines.append(f"{name} = {format_value(getattr(cfg.train, name))}")
    groups = [(name, getattr(cfg.train, name)) for name in SECTIONS] + [("range_test", cfg.range_test)]
    for section, group in groups:
        lines.append(f"\n# {section}")
        for name in _scalar_fields(type(group)):
            lines.append(f"{section}.{name} = {format_value(getattr(group, name))}")
    return "\n".join(lines) + "\n"


def write_resolved_config(cfg: RunConfig, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / RESOLVED_NAME
    path.write_text(format_run_config(cfg))
    return path
