"""Flat key=value run configuration with typed accessors.

Files are UTF-8 text, one ``key = value`` pair per line, ``#`` comments.
Unknown keys are fatal so typos surface immediately; every key is logged
once on first access.
"""

from __future__ import annotations

import logging
from pathlib import Path

log = logging.getLogger("hazelab.config")

# key -> default (as the string the parser would have read)
DEFAULTS: dict[str, str] = {
    "dcp.patch": "15",
    "dcp.omega": "0.95",
    "dcp.airlight_fraction": "0.001",
    "dcp.t0": "0.1",
    "dcp.gf_radius": "40",
    "dcp.gf_eps": "1e-3",
    "dcp.guidance": "t",  # t | one_minus_t
    "net.depth": "4",
    "net.base_width": "64",
    "net.spp_kernels": "5,9,13",
    "net.instance_norm": "false",
    "net.output_activation": "sigmoid",
    "train.epochs": "400",
    "train.lr0": "1e-4",
    "train.decay_start_epoch": "auto",  # auto = epochs / 2
    "train.batch_size": "1",
    "train.input_size": "512",
    "train.critic_steps": "1",
    "train.seed": "0",
    "train.checkpoint_interval": "50",
    "train.weight_clip": "0",  # 0 disables clipping
    "train.w1": "100",
    "train.w2": "100",
    "train.w3": "100",
    "train.w4": "1",
    "train.sign_mode": "functional",
    "train.crop_lo": "0.8",
    "train.crop_hi": "1.0",
    "adam.beta1": "0.5",
    "adam.beta2": "0.999",
    "adam.eps": "1e-8",
    "synth.beta_lo": "1.0",
    "synth.beta_hi": "3.0",
    "synth.airlight": "0.9,0.9,0.9",
    "synth.seed": "0",
    "infer.pad_to_multiple": "true",
}


class RunConfig:
    def __init__(self, values: dict[str, str] | None = None):
        values = values or {}
        unknown = sorted(set(values) - set(DEFAULTS))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        self._values = dict(values)
        self._logged: set[str] = set()

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if key in values:
                raise ValueError(f"config line {lineno}: duplicate key {key!r}")
            values[key] = value.strip()
        return cls(values)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise ValueError(f"unknown config key: {key}")
        self._values[key] = str(value)

    def _get(self, key: str) -> str:
        if key not in DEFAULTS:
            raise KeyError(f"config key {key!r} is not registered")
        explicit = key in self._values
        value = self._values.get(key, DEFAULTS[key])
        if key not in self._logged:
            self._logged.add(key)
            log.info("config %s = %s%s", key, value, "" if explicit else " (default)")
        return value

    def get_str(self, key: str) -> str:
        return self._get(key)

    def get_int(self, key: str) -> int:
        return int(self._get(key))

    def get_float(self, key: str) -> float:
        return float(self._get(key))

    def get_bool(self, key: str) -> bool:
        v = self._get(key).lower()
        if v in ("true", "1", "yes", "on"):
            return True
        if v in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"config key {key!r}: cannot parse {v!r} as bool")

    def get_floats(self, key: str) -> tuple[float, ...]:
        return tuple(float(p) for p in self._get(key).split(",") if p.strip())

    def get_ints(self, key: str) -> tuple[int, ...]:
        return tuple(int(p) for p in self._get(key).split(",") if p.strip())
