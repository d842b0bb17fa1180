"""Run configuration: one JSON document with rnn/gan/map/data/nets
sections whose defaults reproduce the reference training constants."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .generator import RnnTrainConfig
from .refiner import GanTrainConfig
from .design import MapConfig


@dataclass
class DataConfig:
    downsample_factor: int = 4          # 120 fps capture to 30 fps
    contact_height_eps: float = 0.05    # meters
    contact_speed_eps: float = 0.2      # m/s

    def __post_init__(self):
        if self.downsample_factor < 1:
            raise ValueError("downsample_factor must be >= 1")
        if self.contact_height_eps <= 0 or self.contact_speed_eps <= 0:
            raise ValueError("contact thresholds must be positive")


@dataclass
class NetConfig:
    """Layer widths (desk scale; the source text leaves them open)."""

    generator_hidden: int = 128
    mixtures: int = 5
    refiner_fc: int = 128
    refiner_lstm: int = 128
    discriminator_fc: int = 64
    discriminator_lstm: int = 64
    lstm_form: str = "reference"

    def __post_init__(self):
        if self.lstm_form not in ("reference", "standard"):
            raise ValueError("lstm_form must be 'reference' or 'standard'")


_SECTIONS = {"rnn": RnnTrainConfig, "gan": GanTrainConfig, "map": MapConfig,
             "data": DataConfig, "nets": NetConfig}


def _build(cls, values: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return cls(**values)


@dataclass
class RunConfig:
    rnn: RnnTrainConfig
    gan: GanTrainConfig
    map: MapConfig
    data: DataConfig
    nets: NetConfig

    @classmethod
    def default(cls) -> "RunConfig":
        return cls(RnnTrainConfig(), GanTrainConfig(), MapConfig(),
                   DataConfig(), NetConfig())

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        unknown = sorted(set(doc) - set(_SECTIONS))
        if unknown:
            raise ValueError(f"unknown config section(s): {', '.join(unknown)}")
        parts = {}
        for name, section_cls in _SECTIONS.items():
            parts[name] = _build(section_cls, doc.get(name, {}), name)
        return cls(**parts)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as f:
            return cls.from_json(f.read())

    def to_json(self) -> str:
        return json.dumps({k: dataclasses.asdict(getattr(self, k))
                           for k in _SECTIONS}, indent=2)
