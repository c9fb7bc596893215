"""Flat ``key = value`` run configuration.

One setting per line; ``#`` starts a comment. Values are JSON literals
(``0.5``, ``true``, ``[0.5, 1, 2]``, ``"stress"``); anything that is not valid
JSON is kept as a bare string. Keys map onto the scene, fusion, pipeline and
evaluation settings by name; unknown keys are rejected. Unset keys keep the
library defaults.

Extra keys:

``preset``
    ``"plain"`` (default) starts from a bare :class:`SceneConfig`; ``"stress"``
    starts from the pinned stress scene and its output score floor.
``seeds``
    Number of scenes (seeds ``0..n-1``) or an explicit list, used by ``ablate``.
``sweep_alpha`` / ``sweep_beta`` / ``sweep_eta`` / ``sweep_gamma`` / ``sweep_r_null``
    Value lists for the hyper-parameter sweeps of ``ablate``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from typing import Any

from .bench import STRESS_MIN_OUTPUT_SCORE
from .evaluation import EvalConfig
from .pipeline import PipelineConfig
from .scoring import FusionParams
from .simulator import SceneConfig, stress_scene

PRESETS = ("plain", "stress")
SWEEP_PARAMS = ("alpha", "beta", "eta", "gamma", "r_null")

_FUSION_KEYS = tuple(f.name for f in fields(FusionParams) if f.name != "num_classes")
_PIPELINE_KEYS = ("max_inactive", "min_output_score", "min_tracklet_length", "spawn_score", "proposal_top_k")
_EVAL_KEYS = ("box_iou_threshold", "temporal_thresholds")
_SCENE_KEYS = tuple(SceneConfig.field_names())
_EXTRA_KEYS = ("preset", "seeds") + tuple(f"sweep_{p}" for p in SWEEP_PARAMS)
KNOWN_KEYS = frozenset(_FUSION_KEYS + _PIPELINE_KEYS + _EVAL_KEYS + _SCENE_KEYS + _EXTRA_KEYS)

_TUPLE_KEYS = {"velocity_range", "heading_range", "size_range", "aspect_range", "temporal_thresholds"}


class ConfigError(ValueError):
    """Unreadable, unknown or out-of-range configuration."""


def parse_text(text: str, source: str = "<config>") -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        if key in _TUPLE_KEYS and isinstance(parsed, list):
            parsed = tuple(parsed)
        values[key] = parsed
    return values


@dataclass(frozen=True)
class RunConfig:
    values: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        cfg = cls(parse_text(text, source))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls()
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_text(text, path)

    def _pick(self, keys) -> dict[str, Any]:
        return {k: self.values[k] for k in keys if k in self.values}

    @property
    def preset(self) -> str:
        return self.values.get("preset", "plain")

    def validate(self) -> None:
        """Build every settings object once so bad values surface as :class:`ConfigError`."""
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {PRESETS}")
        self.scene()
        self.pipeline()
        self.eval_config()
        self.seeds()
        self.sweeps()

    def scene(self, seed: int | None = None) -> SceneConfig:
        over = self._pick(_SCENE_KEYS)
        if seed is not None:
            over["seed"] = seed
        try:
            if self.preset == "stress":
                return stress_scene(over.pop("seed", 0), **over)
            return SceneConfig(**over)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scene setting: {exc}") from None

    def fusion(self, num_classes: int | None = None) -> FusionParams:
        if num_classes is None:
            num_classes = self.values.get("num_classes", SceneConfig.num_classes)
        try:
            return FusionParams(num_classes=num_classes, **self._pick(_FUSION_KEYS))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid fusion setting: {exc}") from None

    def pipeline(self, num_classes: int | None = None, **flags) -> PipelineConfig:
        over = self._pick(_PIPELINE_KEYS)
        if self.preset == "stress":
            over.setdefault("min_output_score", STRESS_MIN_OUTPUT_SCORE)
        try:
            return PipelineConfig(fusion=self.fusion(num_classes), **over, **flags)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid pipeline setting: {exc}") from None

    def eval_config(self) -> EvalConfig:
        try:
            return EvalConfig(**self._pick(_EVAL_KEYS))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid evaluation setting: {exc}") from None

    def seeds(self) -> list[int]:
        s = self.values.get("seeds", 1)
        if isinstance(s, bool):
            raise ConfigError("seeds must be a count or a list of integers")
        if isinstance(s, int):
            if s < 1:
                raise ConfigError("seeds must be >= 1")
            return list(range(s))
        if isinstance(s, list) and s and all(isinstance(v, int) and not isinstance(v, bool) for v in s):
            return list(s)
        raise ConfigError("seeds must be a count or a non-empty list of integers")

    def sweeps(self) -> dict[str, list[float]]:
        out: dict[str, list[float]] = {}
        for p in SWEEP_PARAMS:
            key = f"sweep_{p}"
            if key not in self.values:
                continue
            vals = self.values[key]
            if not isinstance(vals, list) or not vals:
                raise ConfigError(f"{key} must be a non-empty list")
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
                raise ConfigError(f"{key} must hold numbers")
            base = self.fusion()
            for v in vals:
                try:
                    replace(base, **{p: float(v)})
                except ValueError as exc:
                    raise ConfigError(f"{key}: {exc}") from None
            out[p] = [float(v) for v in vals]
        return out
