"""Flat run configuration: `key = value` config files plus CLI overrides.

Unknown keys are rejected so typos fail loudly, and every run can write its
fully-resolved configuration next to its outputs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError


@dataclass
class RunConfig:
    seed: int = 0
    fps: float = 30.0

    # model dims
    model_dim: int = 64
    num_heads: int = 4
    num_layers: int = 2
    ff_mult: int = 2
    disc_layers: int = 2

    # training
    epochs: int = 50
    batch_size: int = 2
    lr_g: float = 1e-3
    lr_d: float = 1e-3
    schedule_total: int = 200
    vel_weight: float = 1.0
    w_rec: float = 1.0
    w_cyc: float = 1.0
    w_fd: float = 1.0
    alternation: str = "1:1"
    saturating_fool: bool = False
    checkpoint_every: int = 0

    # metrics
    sigma: float = 3.0
    lead_dancer: int = -1  # -1: pick the fastest dancer
    gda_ordered: bool = True
    embed_dim: int = 32
    retrieval_dim: int = 32
    retrieval_heads: int = 4
    retrieval_layers: int = 1
    retrieval_steps: int = 300
    retrieval_batch: int = 8
    retrieval_lr: float = 1e-3
    retrieval_temp: float = 0.1
    segment_len: int = 48

    # preprocessing
    alpha_tau: float = 0.8
    alpha_rot: float = 0.9
    vel_thresh: float = 10.0
    acc_thresh: float = 100.0
    max_gap: int = 15
    train_frac: float = 0.85
    test_frac: float = 0.15

    # synthesis
    synth_pairs: int = 8
    synth_bpms: str = "60,75,90,105,120,135,150,165"
    synth_duration: float = 4.0
    synth_dancers: int = 2

    def bpm_list(self) -> tuple:
        try:
            return tuple(float(b) for b in self.synth_bpms.split(","))
        except ValueError as e:
            raise ValidationError(f"bad synth_bpms value: {self.synth_bpms!r}") from e


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _parse_value(key: str, raw: str):
    if key not in _FIELDS:
        raise ValidationError(f"unknown config key: {key!r}")
    target = _FIELDS[key].type
    raw = raw.strip()
    if target in ("bool", bool):
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ValidationError(f"config key {key}: expected a boolean, got {raw!r}")
    if target in ("int", int):
        try:
            return int(raw)
        except ValueError as e:
            raise ValidationError(f"config key {key}: expected an int, got {raw!r}") from e
    if target in ("float", float):
        try:
            return float(raw)
        except ValueError as e:
            raise ValidationError(f"config key {key}: expected a float, got {raw!r}") from e
    return raw


def load_config(path=None, overrides: list[str] | None = None) -> RunConfig:
    """Build a RunConfig from an optional file plus `key=value` overrides."""
    values = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = stripped.split("=", 1)
            values[key.strip()] = _parse_value(key.strip(), raw)
    for item in overrides or []:
        if "=" not in item:
            raise ValidationError(f"override must look like key=value: {item!r}")
        key, raw = item.split("=", 1)
        values[key.strip()] = _parse_value(key.strip(), raw)
    return RunConfig(**values)


def resolved_text(config: RunConfig) -> str:
    lines = [f"{f.name} = {getattr(config, f.name)}" for f in dataclasses.fields(RunConfig)]
    return "\n".join(lines) + "\n"
