from pathlib import Path

import pytest

from src.config import RunConfig, build_config, validate_paths
from src.errors import ConfigError
from src.prompting import PromptVariant

ROOT = Path(__file__).resolve().parent.parent


def test_defaults():
    config = RunConfig()
    assert config.prompting.variant is PromptVariant.EXTENDED_TASK
    assert config.llm.backend == 'mock'
    assert config.retrieval.max_candidates == 20
    assert config.llm.cache_dir == Path('.cache')


def test_shipped_config_loads():
    config = build_config(ROOT / 'config' / 'default.yaml')
    assert config.llm.backend == 'mock'
    assert config.output.formats == ['json', 'markdown', 'html']
    assert config.retrieval.halflife_days == 30
    assert config.target.id is None


def test_flags_override_file(tmp_path):
    path = tmp_path / 'run.yaml'
    path.write_text('prompting:\n  variant: baseline\n  budget_tokens: 500\nllm:\n  model: x\n')
    config = build_config(path, {'prompting': {'variant': 'extended', 'budget_tokens': None},
                                 'llm': {'backend': None}})
    assert config.prompting.variant is PromptVariant.EXTENDED_TASK
    assert config.prompting.budget_tokens == 500
    assert config.llm.model == 'x'
    assert config.llm.backend == 'mock'


def test_unknown_key(tmp_path):
    path = tmp_path / 'run.yaml'
    path.write_text('llm:\n  temprature: 0.3\n')
    with pytest.raises(ConfigError):
        build_config(path)


def test_bad_weights(tmp_path):
    path = tmp_path / 'run.yaml'
    path.write_text('retrieval:\n  lexical_weight: 0.9\n')
    with pytest.raises(ConfigError):
        build_config(path)


def test_not_a_mapping(tmp_path):
    path = tmp_path / 'run.yaml'
    path.write_text('- a\n- b\n')
    with pytest.raises(ConfigError):
        build_config(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        build_config(tmp_path / 'missing.yaml')


def test_validate_paths(tmp_path, synthetic_corpus_path):
    validate_paths(build_config(overrides={'corpus': {'path': synthetic_corpus_path}}))

    with pytest.raises(ConfigError):
        validate_paths(build_config(overrides={'corpus': {'path': tmp_path / 'none.jsonl'}}))

    config = build_config(overrides={
        'corpus': {'path': synthetic_corpus_path},
        'prompting': {'templates': {'baseline': tmp_path / 'none.tmpl'}},
    })
    validate_paths(config, [PromptVariant.EXTENDED_TASK])
    with pytest.raises(ConfigError):
        validate_paths(config, [PromptVariant.BASELINE_ONLY])
