"""Analysis configuration: a strict JSON file layered over defaults."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .errors import InvalidParameterError, ParseError, ValidationError
from .ocr import OcrEngineConfig
from .raster import PreprocessParams, Roi
from .scoreparse import FORMATS, TrackerConfig
from .segmenter import SegmentConfig

OCR_CMD_ENV = "WICKETLENS_OCR_CMD"


@dataclass
class Config:
    roi: Optional[Roi] = None
    gamma: float = 7.0
    morph_kernel: int = 15
    median_kernel: int = 3
    sample_interval_s: float = 0.1
    score_format: str = "auto"
    debounce: int = 2
    pre_roll_s: float = 8.0
    post_roll_s: float = 2.5
    heatmap: dict = field(default_factory=lambda: {"nu": 10, "nv": 20})
    ocr: dict = field(default_factory=lambda: {"engine": "builtin", "command": None})
    eval: dict = field(default_factory=lambda: {"conf_threshold": 0.25})
    pitch_gap_frames: int = 15

    def validate(self) -> Config:
        PreprocessParams(self.gamma, self.morph_kernel, self.median_kernel)
        if self.score_format not in FORMATS:
            raise ValidationError(f"score_format must be one of {FORMATS}")
        if not self.sample_interval_s > 0:
            raise ValidationError("sample_interval_s must be positive")
        if self.debounce < 1:
            raise ValidationError("debounce must be >= 1")
        if self.pre_roll_s < 0 or self.post_roll_s < 0:
            raise ValidationError("pre_roll_s and post_roll_s must be >= 0")
        if self.pitch_gap_frames < 0:
            raise ValidationError("pitch_gap_frames must be >= 0")
        _check_keys("heatmap", self.heatmap, {"nu", "nv"})
        _check_keys("ocr", self.ocr, {"engine", "command"})
        _check_keys("eval", self.eval, {"conf_threshold"})
        if int(self.heatmap["nu"]) < 1 or int(self.heatmap["nv"]) < 1:
            raise ValidationError("heatmap grid must be at least 1x1")
        if not 0.0 <= float(self.eval["conf_threshold"]) <= 1.0:
            raise ValidationError("eval.conf_threshold must be in [0, 1]")
        self.ocr_config()
        return self

    def ocr_config(self) -> OcrEngineConfig:
        try:
            return OcrEngineConfig(engine=self.ocr.get("engine", "builtin"), command=self.ocr.get("command"))
        except InvalidParameterError as exc:
            raise ValidationError(str(exc)) from None

    def preprocess_params(self) -> PreprocessParams:
        return PreprocessParams(self.gamma, self.morph_kernel, self.median_kernel)

    def segment_config(self, stages=None, jobs: int = 1) -> SegmentConfig:
        kw = {}
        if stages is not None:
            kw["stages"] = tuple(stages)
        return SegmentConfig(
            roi=self.roi,
            preprocess=self.preprocess_params(),
            ocr=self.ocr_config(),
            sample_interval_s=self.sample_interval_s,
            score_format=self.score_format,
            tracker=TrackerConfig(debounce=self.debounce),
            pre_roll_s=self.pre_roll_s,
            post_roll_s=self.post_roll_s,
            jobs=jobs,
            **kw,
        )


def _check_keys(section, value, allowed):
    if not isinstance(value, dict):
        raise ValidationError(f"{section} must be an object")
    unknown = set(value) - allowed
    if unknown:
        raise ValidationError(f"unknown key(s) in {section}: {sorted(unknown)}")


def _parse_roi(raw) -> Roi:
    if raw is None:
        return None
    if not isinstance(raw, dict) or set(raw) != {"x", "y", "w", "h"}:
        raise ValidationError("roi must be an object with exactly x, y, w, h")
    return Roi(int(raw["x"]), int(raw["y"]), int(raw["w"]), int(raw["h"]))


def config_from_dict(raw: dict, base: Config | None = None) -> Config:
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    cfg = replace(base) if base is not None else Config()
    names = {f.name for f in fields(Config)}
    unknown = set(raw) - names
    if unknown:
        raise ValidationError(f"unknown config key(s): {sorted(unknown)}")
    for key, value in raw.items():
        if key == "roi":
            value = _parse_roi(value)
        elif key in ("heatmap", "ocr", "eval"):
            merged = dict(getattr(cfg, key))
            if not isinstance(value, dict):
                raise ValidationError(f"{key} must be an object")
            merged.update(value)
            value = merged
        setattr(cfg, key, value)
    return cfg.validate()


def load_config(path=None, environ=None) -> Config:
    """Defaults, then the JSON file at ``path``, then the OCR command env override."""
    cfg = Config()
    if path is not None:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad JSON: {exc}", path=path) from None
        cfg = config_from_dict(raw, cfg)
    env = environ if environ is not None else {}
    cmd = env.get(OCR_CMD_ENV)
    if cmd:
        cfg.ocr = {**cfg.ocr, "command": cmd}
    return cfg.validate()
