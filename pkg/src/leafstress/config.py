"""INI run configuration: one ``[section]`` per config dataclass.

Values are parsed according to the dataclass field defaults, so the echo
written by :func:`write_config` reads back to an identical configuration.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from fractions import Fraction

from .augment import AugmentConfig
from .dataset import SplitSpec
from .errors import InvalidConfig, IoError
from .imaging import ImagingConfig
from .model import ArchConfig
from .train import LrSchedule, SgdConfig
from .tsne import TsneConfig


@dataclass
class SynthSection:
    image_size: int = 96
    count_per_class: int = 100
    kind: str = "leaf"


@dataclass
class RunSection:
    seed: int = 0


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    model: ArchConfig = field(default_factory=ArchConfig)
    sgd: SgdConfig = field(default_factory=SgdConfig)
    schedule: LrSchedule = field(default_factory=LrSchedule)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    tsne: TsneConfig = field(default_factory=TsneConfig)
    imaging: ImagingConfig = field(default_factory=ImagingConfig)
    synth: SynthSection = field(default_factory=SynthSection)


SECTIONS = [f.name for f in fields(RunConfig)]
# the split seed always follows [run] seed
_SKIP = {("split", "seed")}


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(text: str, default, where: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, Fraction):
            return Fraction(text)
        if isinstance(default, tuple):
            parts = [p for p in (s.strip() for s in text.split(",")) if p]
            if default:
                return tuple(_parse(p, default[0], where) for p in parts)
            return tuple(parts)
        return text
    except ValueError as exc:
        raise InvalidConfig(f"{where}: cannot parse {text!r}") from exc


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise InvalidConfig(f"malformed config: {exc}") from exc
    run = RunConfig()
    for section in cp.sections():
        if section not in SECTIONS:
            raise InvalidConfig(f"unknown config section [{section}]")
        obj = getattr(run, section)
        known = {f.name for f in fields(obj)}
        for key, raw in cp.items(section):
            if key not in known or (section, key) in _SKIP:
                raise InvalidConfig(f"unknown key {key!r} in [{section}]")
            setattr(obj, key, _parse(raw, getattr(obj, key), f"[{section}] {key}"))
    return run


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc


def dump_config(run: RunConfig) -> str:
    lines = []
    for section in SECTIONS:
        obj = getattr(run, section)
        lines.append(f"[{section}]")
        for f in fields(obj):
            if (section, f.name) in _SKIP:
                continue
            lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def write_config(path, run: RunConfig):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dump_config(run))
    except OSError as exc:
        raise IoError(f"cannot write config {path}: {exc}") from exc
