"""
Логирование симулятора: цветная консоль в stderr (stdout занят отчётами
команд) и JSON-файл с ротацией для разбора прогонов.
"""

import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional, Tuple

from pythonjsonlogger import jsonlogger

from config.settings import (
    ENABLE_JSON_LOGGING,
    JSON_LOG_FILE,
    LOG_BACKUP_COUNT,
    LOG_DATE_FORMAT,
    LOG_FORMAT,
    LOG_LEVEL,
    LOG_MAX_BYTES,
    LOG_ROTATION_ENABLED,
)

RESET = '\033[0m'
DIM = '\033[2m'

# уровень -> (цвет, эмодзи)
LEVEL_STYLES = {
    'DEBUG': ('\033[36m', '🐛'),
    'INFO': ('\033[32m', '✓'),
    'WARNING': ('\033[33m', '⚠️'),
    'ERROR': ('\033[31m', '❌'),
    'CRITICAL': ('\033[35m', '🔥'),
}

# Префикс имени логгера -> эмодзи компонента; первый совпавший выигрывает
COMPONENT_EMOJIS: Tuple[Tuple[str, str], ...] = (
    ('machine', '🧮'),
    ('uarch', '🧊'),
    ('pipeline', '🚰'),
    ('scheduler', '🔀'),
    ('channel', '🕵️'),
    ('overhead', '📈'),
    ('cli', '🐍'),
)
DEFAULT_COMPONENT_EMOJI = '📝'

# Ключевое слово в сообщении -> пометка перед ним
MESSAGE_MARKS: Tuple[Tuple[Tuple[str, ...], str], ...] = (
    (('starting', 'started'), '✨'),
    (('finished', 'completed'), '🏁'),
    (('flush',), '🧹'),
    (('fault', 'failed', 'diverge'), '☠️'),
)


class ColoredFormatter(logging.Formatter):
    """Консольный форматтер: время, компонент, уровень, короткое имя логгера"""

    @staticmethod
    def component_emoji(name: str) -> str:
        for prefix, emoji in COMPONENT_EMOJIS:
            if name.startswith(prefix):
                return emoji
        return DEFAULT_COMPONENT_EMOJI

    @staticmethod
    def short_name(name: str) -> str:
        """channel.prime_probe.batch3 -> channel.batch3"""
        parts = name.split('.')
        return f"{parts[0]}.{parts[-1]}" if len(parts) > 2 else name

    @staticmethod
    def marked(msg: str) -> str:
        lowered = msg.lower()
        for words, mark in MESSAGE_MARKS:
            if any(word in lowered for word in words):
                return f"{mark} {msg}"
        return msg

    def format(self, record):
        level = record.levelname
        color, level_emoji = LEVEL_STYLES.get(level, (RESET, ''))
        msg = self.marked(record.getMessage())
        if level in ('ERROR', 'CRITICAL'):
            msg = f"{color}{msg}{RESET}"
        return (
            f"{DIM}{self.formatTime(record, self.datefmt)}{RESET} "
            f"{self.component_emoji(record.name)} {level_emoji} "
            f"{color}{DIM}{level:8s}{RESET} "
            f"{DIM}{self.short_name(record.name)}{RESET} - {msg}"
        )


_logging_configured = False
_log_level = LOG_LEVEL


def _console_handler(level: str) -> logging.Handler:
    handler = logging.StreamHandler(sys.stderr)
    if getattr(sys.stderr, 'isatty', lambda: False)():
        handler.setFormatter(ColoredFormatter(datefmt=LOG_DATE_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT))
    handler.setLevel(level)
    return handler


def _json_handler(path: str, level: str) -> logging.Handler:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if LOG_ROTATION_ENABLED:
        handler = RotatingFileHandler(path, maxBytes=LOG_MAX_BYTES, backupCount=LOG_BACKUP_COUNT, encoding='utf-8')
    else:
        handler = logging.FileHandler(path, encoding='utf-8')
    handler.setFormatter(jsonlogger.JsonFormatter(
        '%(asctime)s %(name)s %(levelname)s %(message)s',
        datefmt=LOG_DATE_FORMAT,
    ))
    handler.setLevel(level)
    return handler


def setup_logging(
    level: Optional[str] = None,
    enable_json: Optional[bool] = None,
    json_log_file: Optional[str] = None,
) -> logging.Logger:
    """Устанавливает обработчики корневого логгера один раз за процесс"""
    global _logging_configured, _log_level

    root = logging.getLogger()
    if _logging_configured:
        return root

    _log_level = (level or LOG_LEVEL).upper()
    root.setLevel(_log_level)
    root.addHandler(_console_handler(_log_level))
    if ENABLE_JSON_LOGGING if enable_json is None else enable_json:
        root.addHandler(_json_handler(json_log_file or JSON_LOG_FILE, _log_level))

    for noisy in ("asyncio", "matplotlib"):
        logging.getLogger(noisy).setLevel(logging.WARNING)

    # Логгеры, созданные до настройки, пишут через корневой
    for name in logging.root.manager.loggerDict:
        existing = logging.getLogger(name)
        existing.handlers = []
        existing.propagate = True

    _logging_configured = True
    return root


def get_logger(name: str) -> logging.Logger:
    logger = logging.getLogger(name)
    if _logging_configured:
        logger.handlers = []
        logger.propagate = True
        logger.setLevel(_log_level)
    return logger
