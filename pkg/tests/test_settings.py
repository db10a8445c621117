"""
Test per il caricamento della configurazione
"""

import pytest

from config.settings import (RUN_SECTIONS, create_directories, default_run_config, get_config,
                             load_config_file)
from src.exceptions import ValidationError


class TestLoadConfigFile:

    def test_defaults_without_file(self):
        """Test solo default senza file"""
        config = load_config_file(None)
        assert set(config) == set(RUN_SECTIONS)
        assert config['spectral']['shift_c'] == 3.0

    def test_defaults_are_copies(self):
        """Test modifiche alla configurazione non toccano i default"""
        config = default_run_config()
        config['experiments']['sigma_list'].append(9.0)
        assert 9.0 not in default_run_config()['experiments']['sigma_list']

    def test_partial_override(self, tmp_path):
        """Test sovrascrittura delle sole chiavi indicate"""
        path = tmp_path / 'run.yaml'
        path.write_text("spectral:\n  mode_count: 12\nsolve:\n  sigma: 0.2\n", encoding='utf-8')
        config = load_config_file(path)
        assert config['spectral']['mode_count'] == 12
        assert config['spectral']['shift_c'] == 3.0
        assert config['solve']['sigma'] == 0.2

    def test_empty_file(self, tmp_path):
        """Test file vuoto equivalente ai default"""
        path = tmp_path / 'empty.yaml'
        path.write_text('', encoding='utf-8')
        assert load_config_file(path) == default_run_config()

    def test_missing_file(self, tmp_path):
        """Test file mancante"""
        with pytest.raises(ValidationError) as info:
            load_config_file(tmp_path / 'missing.yaml')
        assert info.value.rule == "config readable"

    def test_unknown_section(self, tmp_path):
        """Test sezione sconosciuta"""
        path = tmp_path / 'bad.yaml'
        path.write_text("translation:\n  model: x\n", encoding='utf-8')
        with pytest.raises(ValidationError) as info:
            load_config_file(path)
        assert info.value.rule == "known keys"

    def test_unknown_key(self, tmp_path):
        """Test chiave sconosciuta"""
        path = tmp_path / 'bad.yaml'
        path.write_text("spectral:\n  modes: 8\n", encoding='utf-8')
        with pytest.raises(ValidationError):
            load_config_file(path)

    def test_invalid_yaml(self, tmp_path):
        """Test YAML non valido e radice non mappa"""
        path = tmp_path / 'bad.yaml'
        path.write_text("spectral: [1, 2\n", encoding='utf-8')
        with pytest.raises(ValidationError):
            load_config_file(path)
        path.write_text("- 1\n- 2\n", encoding='utf-8')
        with pytest.raises(ValidationError):
            load_config_file(path)


class TestHelpers:

    def test_get_config(self):
        """Test sezioni singole e complete"""
        assert get_config('spectral')['mode_count'] == 8
        assert 'logging' in get_config()
        assert get_config('unknown') == {}

    def test_create_directories(self, tmp_path, monkeypatch):
        """Test radice dei run da variabile d'ambiente"""
        monkeypatch.setenv('LP_MANIFOLD_OUTPUT_ROOT', str(tmp_path / 'runs'))
        root = create_directories()
        assert root == tmp_path / 'runs'
        assert root.is_dir()
