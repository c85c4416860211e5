"""
Типизированные настройки симулятора на Pydantic.

Источники (по возрастанию приоритета): значения по умолчанию из config.settings,
переменные окружения SIMF_*, INI-файл конфигурации, флаги командной строки.
"""

import configparser
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Tuple

from pydantic import Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from config import settings as defaults


class ConfigError(ValueError):
    """Ошибка конфигурации: неизвестный ключ, неверное значение, нечитаемый файл"""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(message)


def _is_power_of_two(value: int) -> bool:
    return value > 0 and (value & (value - 1)) == 0


class CoreSettings(BaseSettings):
    """Геометрия и задержки ядра"""
    model_config = SettingsConfigDict(env_prefix='SIMF_CORE_', extra='forbid', case_sensitive=False)

    # L1 D-cache
    dcache_nsets: int = Field(default=defaults.DCACHE_NSETS, ge=1, le=4096)
    dcache_assoc: int = Field(default=defaults.DCACHE_ASSOC, ge=1, le=64)
    dcache_line_bytes: int = Field(default=defaults.DCACHE_LINE_BYTES, ge=4, le=4096)
    dcache_hit_cycles: int = Field(default=defaults.DCACHE_HIT_CYCLES, ge=1, le=1000)
    dcache_miss_cycles: int = Field(default=defaults.DCACHE_MISS_CYCLES, ge=1, le=100_000)
    dcache_writeback_cycles: int = Field(default=defaults.DCACHE_WRITEBACK_CYCLES, ge=0, le=100_000)

    # L1 I-cache
    icache_nsets: int = Field(default=defaults.ICACHE_NSETS, ge=1, le=4096)
    icache_assoc: int = Field(default=defaults.ICACHE_ASSOC, ge=1, le=64)
    icache_line_bytes: int = Field(default=defaults.ICACHE_LINE_BYTES, ge=4, le=4096)
    icache_hit_cycles: int = Field(default=defaults.ICACHE_HIT_CYCLES, ge=1, le=1000)
    icache_miss_cycles: int = Field(default=defaults.ICACHE_MISS_CYCLES, ge=1, le=100_000)

    # TLB
    itlb_entries: int = Field(default=defaults.ITLB_ENTRIES, ge=1, le=1024)
    dtlb_entries: int = Field(default=defaults.DTLB_ENTRIES, ge=1, le=1024)
    l2tlb_entries: int = Field(default=defaults.L2TLB_ENTRIES, ge=1, le=16384)
    l2tlb_assoc: int = Field(default=defaults.L2TLB_ASSOC, ge=1, le=64)
    l2tlb_hit_extra_cycles: int = Field(default=defaults.L2TLB_HIT_EXTRA_CYCLES, ge=0, le=10_000)
    page_walk_cycles: int = Field(default=defaults.PAGE_WALK_CYCLES, ge=0, le=100_000)

    # Предсказатель
    btb_entries: int = Field(default=defaults.BTB_ENTRIES, ge=1, le=4096)
    ghr_bits: int = Field(default=defaults.GHR_BITS, ge=0, le=16)
    pht_entries: int = Field(default=defaults.PHT_ENTRIES, ge=1, le=65536)
    ras_depth: int = Field(default=defaults.RAS_DEPTH, ge=0, le=64)

    # Память и режимы
    memory_bytes: int = Field(
        default=defaults.MEMORY_BYTES,
        ge=defaults.SCRATCHPAD_BYTES * 2,
        le=defaults.MEMORY_MAX_BYTES,
        description="Размер физической памяти, не больше 256 MiB"
    )
    rf_flush_enabled: bool = defaults.RF_FLUSH_ENABLED
    trace_enabled: bool = defaults.TRACE_ENABLED

    @field_validator(
        'dcache_nsets', 'dcache_assoc', 'dcache_line_bytes',
        'icache_nsets', 'icache_assoc', 'icache_line_bytes',
        'pht_entries',
    )
    @classmethod
    def validate_power_of_two(cls, v: int) -> int:
        if not _is_power_of_two(v):
            raise ValueError(f'{v} is not a power of two')
        return v

    @field_validator('memory_bytes')
    @classmethod
    def validate_memory(cls, v: int) -> int:
        if v % defaults.PAGE_BYTES:
            raise ValueError(f'memory size {v} is not a multiple of the {defaults.PAGE_BYTES}-byte page')
        return v


class SchedulerSettings(BaseSettings):
    """Настройки планировщика контекстов"""
    model_config = SettingsConfigDict(env_prefix='SIMF_SCHED_', extra='forbid', case_sensitive=False)

    quantum_cycles: int = Field(default=defaults.QUANTUM_CYCLES, ge=1)
    flush_on_switch: bool = defaults.FLUSH_ON_SWITCH
    flush_on_trap: bool = defaults.FLUSH_ON_TRAP
    max_cycles: int = Field(default=defaults.MAX_CYCLES, ge=1)


class ExperimentSettings(BaseSettings):
    """Параметры экспериментов: атака, стоимость очистки, кривые накладных расходов"""
    model_config = SettingsConfigDict(env_prefix='SIMF_EXP_', extra='forbid', case_sensitive=False)

    seed: int = Field(default=defaults.DEFAULT_SEED, ge=0)
    samples: int = Field(default=defaults.PRIME_PROBE_SAMPLES, ge=1, le=10_000_000)
    warmup_samples: int = Field(default=defaults.PRIME_PROBE_WARMUP_SAMPLES, ge=0, le=1000)
    batch_samples: int = Field(default=defaults.PRIME_PROBE_BATCH_SAMPLES, ge=1)
    workers: int = Field(default=defaults.PRIME_PROBE_WORKERS, ge=0, le=512)
    per_way: bool = False
    output_dir: str = defaults.OUTPUT_DIR

    clocks_hz: Tuple[int, ...] = Field(default=defaults.OVERHEAD_CLOCKS_HZ)
    fmin_hz: int = Field(default=defaults.OVERHEAD_FMIN_HZ, ge=1)
    fmax_hz: int = Field(default=defaults.OVERHEAD_FMAX_HZ, ge=1)
    grid_points: int = Field(default=defaults.OVERHEAD_GRID_POINTS, ge=2, le=10_000)
    workload: str = defaults.OVERHEAD_WORKLOAD

    @field_validator('clocks_hz', mode='before')
    @classmethod
    def parse_clocks(cls, v: Any) -> Any:
        # В INI частоты пишутся списком через запятую
        if isinstance(v, str):
            v = [item for item in (part.strip() for part in v.split(',')) if item]
        return v

    @field_validator('clocks_hz')
    @classmethod
    def validate_clocks(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if not v:
            raise ValueError('at least one clock frequency is required')
        if any(clock <= 0 for clock in v):
            raise ValueError('clock frequencies must be positive')
        return v


class LoggingSettings(BaseSettings):
    """Настройки логирования с валидацией"""
    model_config = SettingsConfigDict(env_prefix='SIMF_LOG_', extra='forbid', case_sensitive=False)

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = Field(
        default=defaults.LOG_LEVEL.upper(),
        validate_default=True,
    )
    enable_json_logging: bool = defaults.ENABLE_JSON_LOGGING
    json_log_file: str = defaults.JSON_LOG_FILE

    # Ротация
    log_rotation_enabled: bool = defaults.LOG_ROTATION_ENABLED
    log_max_bytes: int = Field(
        default=defaults.LOG_MAX_BYTES,
        ge=1024,  # Минимум 1 KB
        le=104_857_600  # Максимум 100 MB
    )
    log_backup_count: int = Field(default=defaults.LOG_BACKUP_COUNT, ge=0, le=100)

    @field_validator('log_level', mode='before')
    @classmethod
    def upper_case_level(cls, v: Any) -> Any:
        return v.upper() if isinstance(v, str) else v


SECTIONS: Dict[str, type] = {
    'core': CoreSettings,
    'scheduler': SchedulerSettings,
    'experiment': ExperimentSettings,
    'logging': LoggingSettings,
}


class SimulatorConfig(BaseSettings):
    """Главный класс настроек, объединяющий все секции"""
    model_config = SettingsConfigDict(env_prefix='SIMF_', extra='forbid')

    core: CoreSettings = Field(default_factory=CoreSettings)
    scheduler: SchedulerSettings = Field(default_factory=SchedulerSettings)
    experiment: ExperimentSettings = Field(default_factory=ExperimentSettings)
    logging: LoggingSettings = Field(default_factory=LoggingSettings)

    def validate_consistency(self) -> None:
        """Проверка консистентности настроек между собой"""
        core = self.core
        if core.l2tlb_entries % core.l2tlb_assoc:
            raise ConfigError(
                f"l2tlb_entries={core.l2tlb_entries} is not divisible by l2tlb_assoc={core.l2tlb_assoc}",
                key="core.l2tlb_entries",
            )
        if not _is_power_of_two(core.l2tlb_entries // core.l2tlb_assoc):
            raise ConfigError("L2 TLB set count must be a power of two", key="core.l2tlb_entries")

        # Буфер вытеснения атакующего должен помещаться в память вместе с жертвой
        dcache_bytes = core.dcache_nsets * core.dcache_assoc * core.dcache_line_bytes
        if dcache_bytes * 4 > core.memory_bytes:
            raise ConfigError("memory is too small for the configured D-cache", key="core.memory_bytes")

        exp = self.experiment
        if exp.fmin_hz >= exp.fmax_hz:
            raise ConfigError("fmin_hz must be below fmax_hz", key="experiment.fmin_hz")
        if exp.fmax_hz > min(exp.clocks_hz):
            raise ConfigError("flush frequency cannot exceed the clock frequency", key="experiment.fmax_hz")

        if self.logging.log_rotation_enabled and not self.logging.json_log_file:
            raise ConfigError("Log file must be specified when rotation is enabled", key="logging.json_log_file")

    def with_overrides(self, overrides: Mapping[str, Mapping[str, Any]]) -> "SimulatorConfig":
        """Новая конфигурация с применёнными переопределениями (флаги CLI)"""
        data = self.model_dump()
        for section, values in overrides.items():
            data.setdefault(section, {}).update({k: v for k, v in values.items() if v is not None})
        return build_config(data)

    def to_ini(self) -> str:
        """Полностью разрешённая конфигурация в формате INI"""
        lines = []
        for section in SECTIONS:
            lines.append(f"[{section}]")
            for key, value in getattr(self, section).model_dump().items():
                if isinstance(value, bool):
                    value = "true" if value else "false"
                elif isinstance(value, tuple):
                    value = ", ".join(str(item) for item in value)
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)


def build_config(data: Mapping[str, Mapping[str, Any]]) -> SimulatorConfig:
    """Собирает конфигурацию из словаря секций; неизвестные ключи отклоняются"""
    sections: Dict[str, Any] = {}
    for section, values in data.items():
        model = SECTIONS.get(section)
        if model is None:
            raise ConfigError(f"unknown config section [{section}]", key=section)
        for key in values:
            if key not in model.model_fields:
                raise ConfigError(f"unknown config key '{section}.{key}'", key=f"{section}.{key}")
        try:
            sections[section] = model(**values)
        except ValidationError as e:
            first = e.errors()[0]
            field = ".".join(str(part) for part in first.get("loc", ()))
            raise ConfigError(f"invalid value for '{section}.{field}': {first.get('msg')}", key=f"{section}.{field}") from e

    config = SimulatorConfig(**sections)
    config.validate_consistency()
    return config


def read_ini(path: Path) -> Dict[str, Dict[str, str]]:
    """Читает INI-файл в словарь секций без интерпретации значений"""
    parser = configparser.ConfigParser(
        interpolation=None,
        inline_comment_prefixes=('#', ';'),
        empty_lines_in_values=False,
    )
    parser.optionxform = str  # ключи как есть, проверка ниже
    try:
        with open(path, encoding='utf-8') as f:
            parser.read_file(f)
    except (OSError, configparser.Error) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e

    if parser.defaults():
        raise ConfigError("keys outside of a section are not allowed", key="DEFAULT")
    return {section: {key.lower(): value for key, value in parser.items(section)} for section in parser.sections()}


def load_config(
    path: Optional[Path] = None,
    overrides: Optional[Mapping[str, Mapping[str, Any]]] = None,
) -> SimulatorConfig:
    """
    Загружает конфигурацию: defaults < SIMF_* окружение < файл < overrides.
    """
    data: Dict[str, Dict[str, Any]] = {section: {} for section in SECTIONS}
    if path is not None:
        for section, values in read_ini(Path(path)).items():
            data.setdefault(section, {}).update(values)
    for section, values in (overrides or {}).items():
        data.setdefault(section, {}).update({k: v for k, v in values.items() if v is not None})
    return build_config(data)
