"""Flat ``key = value`` run configuration with dotted keys.

Example::

    # comments start with '#'
    preset = default
    gen.heads = 4
    train.steps = 2000
    data.format = synthetic-shapes

Unknown keys are an error. ``gen.*`` maps to GeneratorConfig, ``disc.*`` to
DiscriminatorConfig and ``train.*`` to TrainConfig; the discriminator
resolution always follows the generator's.
"""
from __future__ import annotations

import dataclasses
import os
from typing import Dict, Iterable, Optional

from .models import ConfigError, DiscriminatorConfig, GeneratorConfig
from .training.loop import TrainConfig

PRESETS: Dict[str, Dict[str, object]] = {
    "default": {},
    # small enough for finite-difference checks (N <= 8, D <= 16)
    "tiny": {
        "gen.latent_dim": 8, "gen.stages": ((1, 16), (4, 8)), "gen.heads": 2, "gen.mlp_dim": 16,
        "gen.patch_size": 2,
        "disc.stem_channels": 4, "disc.down_channels": (8,), "disc.heads": 2, "disc.mlp_dim": 16,
        "disc.head_channels": 8, "disc.head_convs": 0,
        "train.batch_size": 4,
    },
    # same topology as the default at reduced widths; 32x32 output, seconds per step
    "desk": {
        "gen.latent_dim": 32, "gen.stages": ((16, 128), (64, 64), (256, 32)), "gen.mlp_dim": 64,
        "gen.patch_size": 2,
        "disc.stem_channels": 16, "disc.down_channels": (32,), "disc.mlp_dim": 64,
        "disc.head_channels": 64,
    },
}

_SECTIONS = {"gen": GeneratorConfig, "disc": DiscriminatorConfig, "train": TrainConfig}
_DERIVED = {"disc.resolution", "train.seed"}
_TOP = {"preset": "default", "seed": 0, "out_dir": "runs/default", "checkpoint": "",
        "data.format": "synthetic-shapes", "data.path": "", "data.count": 1000, "data.seed": 0}


def _schema() -> Dict[str, object]:
    out: Dict[str, object] = dict(_TOP)
    for sec, cls in _SECTIONS.items():
        for f in dataclasses.fields(cls):
            key = f"{sec}.{f.name}"
            if key not in _DERIVED:
                out[key] = f.default
    return out


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ",".join("x".join(str(a) for a in s) for s in v)
        return ",".join(str(a) for a in v)
    return str(v)


def _parse(key: str, text: str, default):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            if not text:
                return ()
            if default and isinstance(default[0], tuple):
                return tuple(tuple(int(a) for a in part.split("x")) for part in text.split(","))
            return tuple(int(a) for a in text.split(","))
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for '{key}': {text!r}") from exc


def parse_lines(lines: Iterable[str], source: str = "<config>") -> Dict[str, str]:
    out: Dict[str, str] = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


class RunConfig:
    """Resolved flat configuration (preset, then file, then overrides)."""

    def __init__(self, values: Optional[Dict[str, str]] = None):
        schema = _schema()
        raw = dict(values or {})
        unknown = sorted(k for k in raw if k not in schema)
        if unknown:
            raise ConfigError(f"unknown config key '{unknown[0]}'" + (f" (+{len(unknown) - 1} more)" if len(unknown) > 1 else ""))
        preset = raw.get("preset", "default")
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset '{preset}' (choose from {', '.join(PRESETS)})")
        self.values: Dict[str, object] = dict(schema)
        self.values.update(PRESETS[preset])
        for k, v in raw.items():
            self.values[k] = _parse(k, v, schema[k]) if isinstance(v, str) else v
        self.gen_config()
        self.disc_config()
        self.train_config()

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Iterable[str] = ()) -> "RunConfig":
        vals: Dict[str, str] = {}
        if path:
            with open(path) as fh:
                vals.update(parse_lines(fh, path))
        vals.update(parse_lines(overrides, "<command line>"))
        return cls(vals)

    def __getitem__(self, key: str):
        return self.values[key]

    def _section(self, sec: str) -> Dict[str, object]:
        n = len(sec) + 1
        return {k[n:]: v for k, v in self.values.items() if k.startswith(sec + ".")}

    def gen_config(self) -> GeneratorConfig:
        try:
            return GeneratorConfig(**self._section("gen"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"generator config: {exc}") from exc

    def disc_config(self) -> DiscriminatorConfig:
        try:
            return DiscriminatorConfig(resolution=self.gen_config().resolution, **self._section("disc"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"discriminator config: {exc}") from exc

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(seed=int(self.values["seed"]), **self._section("train"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"train config: {exc}") from exc

    def dumps(self) -> str:
        lines = ["# resolved run configuration"]
        lines += [f"{k} = {_format(v)}" for k, v in sorted(self.values.items())]
        return "\n".join(lines) + "\n"

    def write(self, directory: str, name: str = "config.txt") -> str:
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, name)
        with open(path, "w") as fh:
            fh.write(self.dumps())
        return path
