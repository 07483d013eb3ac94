"""One place for every pipeline constant, with JSON round-tripping.

No stage hard-codes a tunable: the detector blend weight, descriptor binning,
evaluation radius, and normal-estimation window all live here and can be
overridden from a (possibly partial) JSON file.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .detector import DetectorParams
from .descriptor import DescriptorParams
from .matching import EvalConfig


@dataclass(frozen=True)
class PipelineConfig:
    detector: DetectorParams = field(default_factory=DetectorParams)
    descriptor: DescriptorParams = field(default_factory=DescriptorParams)
    eval: EvalConfig = field(default_factory=EvalConfig)
    normal_window: int = 11        # plane-fit window for normal estimation, pixels
    n_s: int = 4                   # angle sectors for the main-normal vote
    normal_depth_gate: float = 0.1  # max neighbor depth offset in the plane fit, meters

    def __post_init__(self):
        if self.normal_window < 3 or self.normal_window % 2 == 0:
            raise ValueError(f"normal_window must be odd and >= 3, got {self.normal_window}")
        if self.n_s < 2:
            raise ValueError(f"n_s must be >= 2, got {self.n_s}")
        if self.normal_depth_gate <= 0:
            raise ValueError(f"normal_depth_gate must be positive, got {self.normal_depth_gate}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eval"]["ratio_sweep"] = list(d["eval"]["ratio_sweep"])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        """Build from a possibly partial dict; missing keys keep defaults."""
        def sub(klass, key):
            params = dict(d.get(key, {}))
            known = {f.name for f in fields(klass)}
            unknown = set(params) - known
            if unknown:
                raise ValueError(f"unknown {key} keys: {sorted(unknown)}")
            if key == "eval" and "ratio_sweep" in params:
                params["ratio_sweep"] = tuple(params["ratio_sweep"])
            return klass(**params)

        top = {k: v for k, v in d.items() if k not in ("detector", "descriptor", "eval")}
        known = {f.name for f in fields(cls)}
        unknown = set(top) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(
            detector=sub(DetectorParams, "detector"),
            descriptor=sub(DescriptorParams, "descriptor"),
            eval=sub(EvalConfig, "eval"),
            **top,
        )

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        return cls.from_dict(json.loads(text))


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as f:
        return PipelineConfig.from_json(f.read())
