import os
from dotenv import load_dotenv

load_dotenv()


# ========================================
# ЯДРО: L1 КЭШИ
# ========================================

# L1 D-cache (32 KiB, 8-way, 64 B)
DCACHE_NSETS = 64
DCACHE_ASSOC = 8
DCACHE_LINE_BYTES = 64
DCACHE_HIT_CYCLES = 2               # Попадание
DCACHE_MISS_CYCLES = 50             # Промах (плоская память, без L2)
DCACHE_WRITEBACK_CYCLES = 8         # Запись грязной линии (64 B / 8 B шина)

# L1 I-cache (только чтение, грязных линий нет)
ICACHE_NSETS = 64
ICACHE_ASSOC = 8
ICACHE_LINE_BYTES = 64
ICACHE_HIT_CYCLES = 2
ICACHE_MISS_CYCLES = 50


# ========================================
# ЯДРО: TLB
# ========================================

ITLB_ENTRIES = 32                   # L1 ITLB, полностью ассоциативный
DTLB_ENTRIES = 32                   # L1 DTLB, полностью ассоциативный
L2TLB_ENTRIES = 128                 # Общий L2 TLB
L2TLB_ASSOC = 4
L2TLB_HIT_EXTRA_CYCLES = 2          # Доп. такты при попадании в L2 TLB
PAGE_WALK_CYCLES = 100              # Обход таблицы страниц (два обращения к памяти)


# ========================================
# ЯДРО: ПРЕДСКАЗАТЕЛЬ ПЕРЕХОДОВ
# ========================================

BTB_ENTRIES = 28
GHR_BITS = 8
PHT_ENTRIES = 512
RAS_DEPTH = 6


# ========================================
# ПАМЯТЬ И РЕЖИМЫ
# ========================================

MEMORY_BYTES = 4 * 1024 * 1024       # 4 MiB по умолчанию
MEMORY_MAX_BYTES = 256 * 1024 * 1024 # Потолок 256 MiB
PAGE_BYTES = 4096
SCRATCHPAD_BYTES = 64 * 1024         # Окно ядра: выборка мимо I-cache и ITLB
RF_FLUSH_ENABLED = False             # Очистка регистрового файла в flushx


# ========================================
# ПЛАНИРОВЩИК
# ========================================

QUANTUM_CYCLES = 100_000
FLUSH_ON_SWITCH = False              # Умеренная схема
FLUSH_ON_TRAP = False                # Агрессивная схема
MAX_CYCLES = 50_000_000              # Предел для run_scheduled по умолчанию


# ========================================
# ЭКСПЕРИМЕНТЫ
# ========================================

DEFAULT_SEED = 1
PRIME_PROBE_SAMPLES = 20_000         # Как в эксперименте Prime+Probe
PRIME_PROBE_WARMUP_SAMPLES = 1       # Отбрасываются
PRIME_PROBE_BATCH_SAMPLES = 500      # Размер батча на один экземпляр симулятора
PRIME_PROBE_WORKERS = 0              # 0 = os.cpu_count()
HEATMAP_PLOT_SAMPLES = 200

OVERHEAD_CLOCKS_HZ = (100_000_000, 1_000_000_000)
OVERHEAD_FMIN_HZ = 100
OVERHEAD_FMAX_HZ = 50_000
OVERHEAD_GRID_POINTS = 25
OVERHEAD_WORKLOAD = "mix"
SWITCH_CLOSURE_TOLERANCE = 0.05      # 5% допуск на дискретизацию

OUTPUT_DIR = os.getenv("SIMF_OUTPUT_DIR", "out")
TRACE_ENABLED = False


# ========================================
# ЛОГИРОВАНИЕ
# ========================================

LOG_LEVEL = os.getenv("SIMF_LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# JSON логирование
ENABLE_JSON_LOGGING = os.getenv("SIMF_JSON_LOGGING", "true").lower() == "true"
JSON_LOG_FILE = "logs/flushsim.json"

# Ротация логов
LOG_ROTATION_ENABLED = True
LOG_MAX_BYTES = 1 * 1024 * 1024     # 1 МБ
LOG_BACKUP_COUNT = 5

# Мониторинг
SLOW_OPERATION_THRESHOLD = 5.0      # Секунды; симуляции долгие, порог выше
