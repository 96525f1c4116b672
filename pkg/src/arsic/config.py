"""Pipeline configuration: defaults, JSON file loading and validation."""
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .llm_io import LlmConfig
from .select import ScorerConfig

_LLM_KEYS = {"endpoint", "model", "temperature", "max_retries", "timeout", "max_concurrency", "seed",
             "backoff_base", "backoff_max"}
_SCORER_KEYS = {"endpoint", "timeout"}


@dataclass
class PipelineConfig:
    max_objects: int = 15
    percentile: float = 75.0
    penalty_scale: float = 1.0
    penalty: Optional[float] = None
    threshold: Optional[float] = None
    tol_factor: float = 0.25
    gap_tol_deg: float = 120.0
    near_factor: float = 1.5
    wq: float = 0.7
    wd: float = 0.3
    k: int = 5
    workers: int = 4
    mock_responses: Optional[str] = None
    exemplars: Optional[str] = None
    llm: dict = field(default_factory=dict)
    scorer: dict = field(default_factory=dict)

    def validate(self):
        checks = [
            (self.max_objects >= 1, "max_objects must be >= 1"),
            (0 < self.percentile <= 100, "percentile must be in (0, 100]"),
            (self.penalty_scale >= 0, "penalty_scale must be >= 0"),
            (self.penalty is None or self.penalty >= 0, "penalty must be >= 0"),
            (self.threshold is None or self.threshold >= 0, "threshold must be >= 0"),
            (self.tol_factor > 0, "tol_factor must be > 0"),
            (0 < self.gap_tol_deg < 360, "gap_tol_deg must be in (0, 360)"),
            (self.near_factor >= 1, "near_factor must be >= 1"),
            (self.workers >= 1, "workers must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        for name, allowed in (("llm", _LLM_KEYS), ("scorer", _SCORER_KEYS)):
            unknown = set(getattr(self, name)) - allowed
            if unknown:
                raise ConfigError(f"unknown {name} config key(s): {', '.join(sorted(unknown))}")
        try:
            self.scorer_config()
            self.llm_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        try:
            return cls(**doc).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path=None, **overrides):
        doc = {}
        if path is not None:
            try:
                doc = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(doc)

    def llm_config(self):
        opts = dict(self.llm)
        if self.mock_responses:
            opts["endpoint"] = "mock:" + str(self.mock_responses)
        return LlmConfig(**opts)

    def scorer_config(self):
        return ScorerConfig(wq=self.wq, wd=self.wd, k=self.k, **self.scorer)

    def to_dict(self):
        return asdict(self)
