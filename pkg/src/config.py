"""
Run Configuration
=================
RunConfig mirrors the YAML config file block by block. Values are layered:
built-in defaults, then the --config file, then command-line flags.
"""

from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .llm.cache import DEFAULT_CACHE_DIR
from .llm.client import DEFAULT_MAX_IN_FLIGHT
from .llm.live_backend import DEFAULT_BASE_URL, DEFAULT_TIMEOUT_S
from .prompting import DEFAULT_BUDGET_TOKENS, PromptVariant
from .retrieval import RetrievalParams

DEFAULT_CORPUS = Path('data') / 'synthetic_corpus.jsonl'
DEFAULT_MODEL = 'gpt-4o-mini'


class _Block(BaseModel):
    model_config = ConfigDict(extra='forbid', protected_namespaces=())


class CorpusConfig(_Block):
    path: Path = DEFAULT_CORPUS


class TargetConfig(_Block):
    """Select the target by article id or by url (id wins when both are set)."""

    id: Optional[str] = None
    url: Optional[str] = None


class TemplatePaths(_Block):
    baseline: Optional[Path] = None
    extended: Optional[Path] = None

    def for_variant(self, variant: PromptVariant) -> Optional[Path]:
        return self.baseline if variant is PromptVariant.BASELINE_ONLY else self.extended


class PromptingConfig(_Block):
    variant: PromptVariant = PromptVariant.EXTENDED_TASK
    budget_tokens: int = Field(default=DEFAULT_BUDGET_TOKENS, ge=1)
    templates: TemplatePaths = TemplatePaths()


class LlmConfig(_Block):
    backend: Literal['live', 'mock'] = 'mock'
    model: str = DEFAULT_MODEL
    base_url: str = DEFAULT_BASE_URL
    temperature: float = Field(default=0.0, ge=0)
    max_output_tokens: int = Field(default=1024, ge=1)
    timeout_s: float = Field(default=DEFAULT_TIMEOUT_S, gt=0)
    max_in_flight: int = Field(default=DEFAULT_MAX_IN_FLIGHT, ge=1)
    max_retries: int = Field(default=3, ge=0)
    cache_dir: Path = DEFAULT_CACHE_DIR


class OutputConfig(_Block):
    out: Path = Path('out')
    order: Literal['asc', 'desc'] = 'asc'
    formats: List[Literal['json', 'markdown', 'html']] = ['json', 'markdown', 'html']
    generated_at: Optional[datetime] = None


class RunConfig(_Block):
    corpus: CorpusConfig = CorpusConfig()
    target: TargetConfig = TargetConfig()
    retrieval: RetrievalParams = RetrievalParams()
    prompting: PromptingConfig = PromptingConfig()
    llm: LlmConfig = LlmConfig()
    output: OutputConfig = OutputConfig()

    @model_validator(mode='after')
    def _check_formats(self) -> 'RunConfig':
        if not self.output.formats:
            raise ValueError('output.formats must name at least one format')
        return self


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _strip_none(values: Dict[str, Any]) -> Dict[str, Any]:
    out = {}
    for key, value in values.items():
        if isinstance(value, dict):
            value = _strip_none(value)
            if value:
                out[key] = value
        elif value is not None:
            out[key] = value
    return out


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding='utf-8'))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping of key blocks")
    return data


def build_config(config_path: Optional[Union[str, Path]] = None,
                 overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Layer defaults, the YAML file and flag overrides into a RunConfig.

    Args:
        config_path: Optional YAML file (key blocks mirror RunConfig)
        overrides: Nested dict from command-line flags; None values are ignored

    Returns:
        Validated RunConfig
    """
    values: Dict[str, Any] = {}
    if config_path is not None:
        values = load_config_file(config_path)
    values = _deep_merge(values, _strip_none(overrides or {}))
    try:
        return RunConfig.model_validate(values)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def validate_paths(config: RunConfig, variants: Optional[List[PromptVariant]] = None) -> None:
    """Check every input path before any backend call."""
    if not config.corpus.path.is_file():
        raise ConfigError(f"corpus file not found: {config.corpus.path}")
    for variant in variants or [config.prompting.variant]:
        template = config.prompting.templates.for_variant(variant)
        if template is not None and not template.is_file():
            raise ConfigError(f"{variant.value} template not found: {template}")
    if config.llm.cache_dir.exists() and not config.llm.cache_dir.is_dir():
        raise ConfigError(f"cache_dir is not a directory: {config.llm.cache_dir}")
    if config.output.out.exists() and not config.output.out.is_dir():
        raise ConfigError(f"output path is not a directory: {config.output.out}")
