"""Plain key=value run configuration.

Blank lines and '#' comments are allowed.  Unknown keys are rejected with
the offending line number.  lr_schedule is a comma-separated list of
epoch:rate pairs, e.g. "0:1e-2,30:1e-3,80:1e-4".
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError

_PRESETS = ("full", "toy")


@dataclass
class Config:
    model: str = "S-SRCNN"
    scale: int = 2
    epochs: int = 10
    batch_size: int = 16
    lr_schedule: list = field(default_factory=lambda: [(0, 1e-4)])
    seed: int = 0
    hr_dir: str = ""
    dataset_dir: str = ""
    out_dir: str = "out"
    checkpoint: str = ""
    preset: str = "full"        # channel widths: full (64/32) or toy (16/8)
    optimizer: str = ""         # empty = architecture default
    count_extra_bias: bool = True
    loss: str = "mse"
    clip: float = 0.0           # 0 disables gradient clipping
    patch: int = 33
    stride: int = 14
    init: str = "uniform"       # or identity (near-identity start for short runs)
    loss_shave: int = 0         # border pixels excluded from loss/val PSNR
    val_count: int = 2          # images held out for validation


def _parse_bool(v, lineno):
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"line {lineno}: expected boolean, got {v!r}")


def _parse_schedule(v, lineno):
    out = []
    for part in v.split(","):
        try:
            e, lr = part.split(":")
            out.append((int(e), float(lr)))
        except ValueError:
            raise ConfigError(f"line {lineno}: bad lr_schedule entry {part!r}")
    return sorted(out)


def parse_config(text: str) -> Config:
    cfg = Config()
    fields = {f: type(getattr(cfg, f)) for f in vars(cfg)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key == "lr_schedule":
            setattr(cfg, key, _parse_schedule(value, lineno))
        elif fields[key] is bool:
            setattr(cfg, key, _parse_bool(value, lineno))
        elif fields[key] is int:
            try:
                setattr(cfg, key, int(value))
            except ValueError:
                raise ConfigError(f"line {lineno}: expected integer for {key}, got {value!r}")
        elif fields[key] is float:
            try:
                setattr(cfg, key, float(value))
            except ValueError:
                raise ConfigError(f"line {lineno}: expected number for {key}, got {value!r}")
        else:
            setattr(cfg, key, value)
    if cfg.preset not in _PRESETS:
        raise ConfigError(f"unknown preset {cfg.preset!r}; pick one of {_PRESETS}")
    return cfg


def load_config(path) -> Config:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())
