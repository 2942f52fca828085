#!/usr/bin/env python3
"""
Тесты конфигурации конвейера.
tests/test_pipeline_config.py
"""
import json
import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config.pipeline import PipelineConfig, apply_overrides, flatten, load_pipeline_config
from config.settings import DEFAULT_SEED, INFERENCE_M, LINK_ZETA1, TRAIN_ON_SUBTUBES, get_env_bool, get_env_int
from utils.exceptions import UsageError


def test_defaults_follow_settings():
    config = load_pipeline_config()
    assert config.seed == DEFAULT_SEED
    assert config.inference_m == INFERENCE_M
    assert config.link.zeta1 == LINK_ZETA1
    assert config.train.seed == DEFAULT_SEED


def test_json_document_sections(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({
        'link': {'zeta1': 20, 'lambda_': 0.2},
        'train': {'iterations': 10},
        'paths': {'tubes': 'tubes.jsonl'},
        'inference_m': 3,
    }), encoding='utf-8')
    config = load_pipeline_config(path)
    assert config.link.zeta1 == 20 and config.link.lambda_ == 0.2
    assert config.link.zeta2 == PipelineConfig().link.zeta2
    assert config.train.iterations == 10
    assert config.paths.tubes == 'tubes.jsonl'
    assert config.inference_m == 3


def test_flags_override_document(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({'train': {'iterations': 10}, 'seed': 3}), encoding='utf-8')
    config = apply_overrides(load_pipeline_config(path), {'train.iterations': 25, 'inference_m': None})
    assert config.train.iterations == 25
    assert config.inference_m == INFERENCE_M
    assert config.seed == 3


def test_seed_reaches_every_section():
    config = apply_overrides(PipelineConfig(), {'seed': 42})
    assert (config.seed, config.train.seed, config.synth.seed) == (42, 42, 42)


def test_thresholds_become_tuple():
    config = apply_overrides(PipelineConfig(), {'thresholds': [0.5, 0.25]})
    assert config.thresholds == (0.5, 0.25)


@pytest.mark.parametrize('overrides', [
    {'train.unknown': 1},
    {'nosection.key': 1},
    {'mystery': 1},
    {'train.loss_mode': 'hinge'},
    {'link.lambda_': 1.5},
])
def test_bad_overrides(overrides):
    with pytest.raises(UsageError):
        apply_overrides(PipelineConfig(), overrides)


def test_missing_config_file(tmp_path):
    with pytest.raises(UsageError):
        load_pipeline_config(tmp_path / 'absent.json')


def test_malformed_config_file(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text('{"seed": ', encoding='utf-8')
    with pytest.raises(UsageError):
        load_pipeline_config(path)
    path.write_text('[1, 2]', encoding='utf-8')
    with pytest.raises(UsageError):
        load_pipeline_config(path)


def test_section_must_be_object():
    with pytest.raises(UsageError):
        flatten({'train': 5})


def test_validate_required_paths(tmp_path):
    config = PipelineConfig()
    with pytest.raises(UsageError):
        config.validate(required=('tubes',))
    config = apply_overrides(config, {'paths.tubes': str(tmp_path / 'missing.jsonl')})
    with pytest.raises(UsageError):
        config.validate(required=('tubes',))
    existing = tmp_path / 'tubes.jsonl'
    existing.write_text('', encoding='utf-8')
    apply_overrides(config, {'paths.tubes': str(existing)}).validate(required=('tubes',))


def test_validate_values():
    with pytest.raises(UsageError):
        apply_overrides(PipelineConfig(), {'scoring': 'max'}).validate()
    with pytest.raises(UsageError):
        apply_overrides(PipelineConfig(), {'threads': 0}).validate()
    with pytest.raises(UsageError):
        apply_overrides(PipelineConfig(), {'thresholds': [1.5]}).validate()


def test_to_dict_is_json_serializable():
    data = PipelineConfig().to_dict()
    assert json.loads(json.dumps(data))['train']['loss_mode'] == 'mg_rank_ce'
    assert isinstance(data['thresholds'], list)


def test_env_values_are_parsed(monkeypatch):
    monkeypatch.setenv('STAD_TEST_INT', ' 12 ')
    monkeypatch.setenv('STAD_TEST_BOOL', 'Off')
    assert get_env_int('STAD_TEST_INT', 3) == 12
    assert get_env_bool('STAD_TEST_BOOL', True) is False
    assert get_env_int('STAD_TEST_UNSET', 3) == 3


def test_malformed_env_falls_back_with_warning(monkeypatch, caplog):
    monkeypatch.setenv('STAD_TEST_INT', 'двенадцать')
    monkeypatch.setenv('STAD_TEST_BOOL', 'maybe')
    with caplog.at_level('WARNING', logger='config.settings'):
        assert get_env_int('STAD_TEST_INT', 3) == 3
        assert get_env_bool('STAD_TEST_BOOL', True) is True
    assert 'STAD_TEST_INT' in caplog.text
    assert 'STAD_TEST_BOOL' in caplog.text


def test_subtube_training_follows_settings():
    assert PipelineConfig().train_on_subtubes == TRAIN_ON_SUBTUBES
