"""Pipeline configuration: a flat key = value text file, fully validated before
anything runs. Flags override file values; the SHAPEREADER_CONFIG environment
variable overrides the default config path.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

ENV_CONFIG = "SHAPEREADER_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    # glyph features
    edge_threshold: float | None = None     # None = 10% of max response
    suppression_radius: float = 3.0
    # shape model construction
    pool_window: int = 8
    radius: int = 2                         # minimum perturbation radius
    radius_scale: float = 0.4               # radius grows with pair distance
    gamma: float = 3.0
    normalized_height: int = 48
    # detection
    forward_min_score: float = 0.6
    theta_backtrace: float = 0.7
    nms_radius_frac: float = 0.25
    anchors_per_model: int = 5
    bp_iterations: int = 4
    bp_damping: float = 0.5
    merge_iou: float = 0.5
    scales: tuple[int, ...] = (1, 2)
    # font selection
    compat_threshold: float = 0.8
    coverage: float = 0.9
    # parsing + language model
    max_gap_factor: float = 2.0
    ngram_alpha: float = 0.01
    rerank_lambda: float = 1.0
    k_best: int = 5
    # learning
    learn_C: float = 1.0
    learn_max_epochs: int = 30
    learn_seed: int = 0
    gold_iou: float = 0.8

    def validate(self) -> None:
        checks = [
            (self.edge_threshold is None or self.edge_threshold > 0, "edge_threshold must be > 0"),
            (self.suppression_radius >= 1.0, "suppression_radius must be >= 1"),
            (self.pool_window >= 0, "pool_window must be >= 0"),
            (self.radius >= 1, "radius must be >= 1"),
            (0.0 <= self.radius_scale <= 1.0, "radius_scale must be in [0, 1]"),
            (self.gamma >= 1.0, "gamma must be >= 1"),
            (self.normalized_height >= 8, "normalized_height must be >= 8"),
            (0.0 <= self.forward_min_score <= 1.0, "forward_min_score must be in [0, 1]"),
            (0.0 <= self.theta_backtrace <= 1.0, "theta_backtrace must be in [0, 1]"),
            (self.nms_radius_frac > 0.0, "nms_radius_frac must be > 0"),
            (self.anchors_per_model >= 1, "anchors_per_model must be >= 1"),
            (self.bp_iterations >= 1, "bp_iterations must be >= 1"),
            (0.0 <= self.bp_damping < 1.0, "bp_damping must be in [0, 1)"),
            (0.0 < self.merge_iou <= 1.0, "merge_iou must be in (0, 1]"),
            (len(self.scales) >= 1 and all(s >= 1 for s in self.scales), "scales must be >= 1"),
            (0.0 < self.compat_threshold < 1.0, "compat_threshold must be in (0, 1)"),
            (0.0 < self.coverage <= 1.0, "coverage must be in (0, 1]"),
            (self.max_gap_factor > 0.0, "max_gap_factor must be > 0"),
            (self.ngram_alpha > 0.0, "ngram_alpha must be > 0"),
            (self.rerank_lambda >= 0.0, "rerank_lambda must be >= 0"),
            (self.k_best >= 1, "k_best must be >= 1"),
            (self.learn_C > 0.0, "learn_C must be > 0"),
            (self.learn_max_epochs >= 1, "learn_max_epochs must be >= 1"),
            (0.0 < self.gold_iou <= 1.0, "gold_iou must be in (0, 1]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key == "edge_threshold":
        return None if raw.lower() in ("none", "auto") else float(raw)
    if key == "scales":
        try:
            return tuple(int(tok) for tok in raw.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"scales must be integers, got {raw!r}")
    ftype = _FIELD_TYPES.get(key)
    if ftype is None:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}")
    raise ConfigError(f"unknown config key {key!r}")


def load_config(path: str | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Load key = value lines ('#' comments allowed), apply overrides, validate.

    With path=None, the SHAPEREADER_CONFIG environment variable is consulted;
    if that is unset too, defaults are used.
    """
    if path is None:
        path = os.environ.get(ENV_CONFIG)
    cfg = PipelineConfig()
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, raw = line.split("=", 1)
                key = key.strip()
                setattr(cfg, key, _parse_value(key, raw))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, value)
    cfg.validate()
    return cfg
