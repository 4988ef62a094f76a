"""
Named ablations of a base training configuration.

Each ablation returns a copy of the base config with a documented set of
fields changed and nothing else.
"""

from dataclasses import replace
from typing import Callable, Dict

from .config import TrainConfig
from .schedule import ScheduleKind


def _encoder(cfg: TrainConfig, **changes) -> TrainConfig:
    return replace(cfg, encoder=replace(cfg.encoder, **changes))


def _schedule(cfg: TrainConfig, **changes) -> TrainConfig:
    return replace(cfg, schedule=replace(cfg.schedule, **changes))


def _tri_stage(cfg: TrainConfig) -> TrainConfig:
    # 10% warm-up and 40% hold, as in the 100k-step run (10k and 40k)
    return _schedule(
        cfg,
        kind=ScheduleKind.TRI_STAGE,
        lr_floor_init=1e-7,
        lr_peak=1e-5,
        lr_floor_final=1e-7,
        warmup_steps=cfg.iterations // 10,
        hold_steps=4 * cfg.iterations // 10,
    )


ABLATIONS: Dict[str, Callable[[TrainConfig], TrainConfig]] = {
    "unfrozen_extractor": lambda c: _encoder(c, freeze_feature_extractor=False),
    "random_init": lambda c: replace(
        _encoder(c, freeze_feature_extractor=False), pretrained_weights=None
    ),
    "no_layerdrop": lambda c: _encoder(c, layerdrop_p=0.0),
    "no_layerdrop_dropout": lambda c: _encoder(c, layerdrop_p=0.0, dropout_p=0.0),
    "no_layerdrop_dropout_timemask": lambda c: _encoder(c, layerdrop_p=0.0, dropout_p=0.0, time_mask_p=0.0),
    "batch_half_200k": lambda c: replace(c, files_per_batch=c.files_per_batch // 2, iterations=c.iterations * 2),
    "batch_double_50k": lambda c: replace(c, files_per_batch=c.files_per_batch * 2, iterations=c.iterations // 2),
    "lr_constant_1e-5": lambda c: _schedule(c, kind=ScheduleKind.CONSTANT, lr=1e-5),
    "lr_constant_3e-6": lambda c: _schedule(c, kind=ScheduleKind.CONSTANT, lr=3e-6),
    "lr_exp_decay": lambda c: _schedule(c, kind=ScheduleKind.EXPONENTIAL_DECAY, lr_start=1e-5, lr_end=3e-6),
    "lr_tri_stage": _tri_stage,
}


def run_ablation(base: TrainConfig, name: str) -> TrainConfig:
    """
    Apply the named ablation to ``base``.

    Raises:
        ValueError: unknown name (the message lists the valid ones)
    """
    if name not in ABLATIONS:
        raise ValueError(f"unknown ablation {name!r}; valid ablations: {', '.join(ABLATIONS)}")
    return ABLATIONS[name](base)
