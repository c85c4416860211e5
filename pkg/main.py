"""
Точка входа flushsim: python main.py <команда> [флаги]
"""
import sys
from pathlib import Path

# Добавляем корневую директорию в Python path
sys.path.insert(0, str(Path(__file__).parent))

from cli.commands import main  # noqa: E402


if __name__ == "__main__":
    sys.exit(main())
