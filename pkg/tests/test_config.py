# pytest tests/test_config.py -v
import pytest

from config import settings as defaults
from config.typed_settings import (
    ConfigError, CoreSettings, LoggingSettings, SimulatorConfig, build_config, load_config, read_ini,
)

SAMPLE_INI = """
# геометрия для быстрых прогонов
[core]
dcache_nsets = 16
dcache_assoc = 4        ; ассоциативность

[scheduler]
flush_on_switch = true

[experiment]
samples = 10
clocks_hz = 100000000, 200000000
"""


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in ("SIMF_CORE_DCACHE_NSETS", "SIMF_EXP_SAMPLES", "SIMF_LOG_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def ini_file(tmp_path):
    path = tmp_path / "flushsim.ini"
    path.write_text(SAMPLE_INI)
    return path


class TestLoading:
    """Источники настроек и их приоритет"""

    def test_defaults(self):
        config = load_config()
        assert (config.core.dcache_nsets, config.core.dcache_assoc, config.core.dcache_line_bytes) == (64, 8, 64)
        assert config.core.page_walk_cycles == 100
        assert config.experiment.samples == 20_000
        assert not config.scheduler.flush_on_switch

    def test_ini_file(self, ini_file):
        config = load_config(ini_file)
        assert (config.core.dcache_nsets, config.core.dcache_assoc) == (16, 4)
        assert config.scheduler.flush_on_switch
        assert config.experiment.clocks_hz == (100_000_000, 200_000_000)

    def test_flags_override_file(self, ini_file):
        config = load_config(ini_file, {'experiment': {'samples': 20, 'seed': None}})
        assert config.experiment.samples == 20
        assert config.experiment.seed == 1

    def test_environment_below_file(self, ini_file, monkeypatch):
        monkeypatch.setenv("SIMF_CORE_DCACHE_NSETS", "32")
        assert CoreSettings().dcache_nsets == 32
        assert load_config(ini_file).core.dcache_nsets == 16

    def test_log_level_defaults_to_settings_module(self):
        assert LoggingSettings().log_level == defaults.LOG_LEVEL.upper()
        assert load_config().logging.log_level == defaults.LOG_LEVEL.upper()

    def test_log_level_is_case_insensitive(self, monkeypatch):
        assert LoggingSettings(log_level="warning").log_level == "WARNING"
        monkeypatch.setenv("SIMF_LOG_LOG_LEVEL", "debug")
        assert LoggingSettings().log_level == "DEBUG"

    def test_with_overrides(self):
        config = SimulatorConfig().with_overrides({'scheduler': {'quantum_cycles': 777}})
        assert config.scheduler.quantum_cycles == 777

    def test_resolved_ini_loads_back(self, ini_file, tmp_path):
        config = load_config(ini_file)
        resolved = tmp_path / "resolved.ini"
        resolved.write_text(config.to_ini())
        assert load_config(resolved) == config
        assert "flush_on_switch = true" in config.to_ini()


class TestErrors:
    """Ошибки несут имя ключа"""

    @pytest.mark.parametrize("data, key", [
        ({'core': {'dcache_bogus': 1}}, "core.dcache_bogus"),
        ({'network': {}}, "network"),
        ({'core': {'dcache_nsets': 3}}, "core.dcache_nsets"),
        ({'logging': {'log_level': 'TRACE'}}, "logging.log_level"),
        ({'core': {'l2tlb_entries': 100, 'l2tlb_assoc': 3}}, "core.l2tlb_entries"),
        ({'core': {'dcache_nsets': 4096}}, "core.memory_bytes"),
        ({'experiment': {'fmin_hz': 100, 'fmax_hz': 100}}, "experiment.fmin_hz"),
        ({'experiment': {'clocks_hz': [1000]}}, "experiment.fmax_hz"),
    ])
    def test_error_key(self, data, key):
        with pytest.raises(ConfigError) as info:
            build_config(data)
        assert info.value.key == key

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            read_ini(tmp_path / "absent.ini")

    def test_key_outside_section(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("samples = 5\n[core]\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_config_error_is_value_error(self):
        assert issubclass(ConfigError, ValueError)
