"""
Эксперимент Prime+Probe по L1 D-cache на симулируемом ядре.

Атакующий и жертва собираются из шаблонов templates/*.s и работают как два
контекста одного ядра. Жертва вызывается системным вызовом атакующего и
возвращает управление своим вызовом; при flush_enabled перед возвратом
атакующему выполняется flushx. Задержки проб атакующий сообщает вызовами
окружения, в память результаты не пишутся.

Выборки режутся на батчи фиксированного размера, каждый батч исполняется на
собственном экземпляре ядра и засевается своим потомком SeedSequence, поэтому
результат не зависит от числа воркеров.
"""

from enum import Enum, IntEnum
from functools import lru_cache
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from config import settings
from config.logging import get_logger
from config.typed_settings import CoreSettings, SimulatorConfig
from machine.assembler import assemble
from machine.errors import SimulatorError
from machine.memory import PAGE_SHIFT
from machine.program import Program
from machine.state import ArchState
from pipeline.core import Core
from pipeline.scheduler import Context, Scheduler, SchedulerConfig, TrapOutcome
from utils.monitoring import measure_latency

logger = get_logger("channel.prime_probe")

TEMPLATES_DIR = Path(__file__).parent / "templates"
ATTACKER_TEMPLATE = "attacker.s"
VICTIM_TEMPLATE = "victim.s"

SECRET_WORDS = 4
MAX_SECRET_BITS = 32 * SECRET_WORDS

# Запас по тактам на одну выборку при худшем случае (все промахи и обходы таблиц)
SAMPLE_CYCLE_SLACK = 64

# Загрузок на виток prime; смещения внутри витка укладываются в imm загрузки
PRIME_UNROLL = 8
MAX_LOAD_OFFSET = 2047


class ChannelConfigError(SimulatorError):
    """Эксперимент нельзя поставить на такой геометрии или с такими шаблонами"""


class ChannelSyscall(IntEnum):
    """Системные вызовы эксперимента (номер в a7)"""
    VICTIM = 16
    VICTIM_RETURN = 17
    PROBE_SET = 18
    PROBE_WAY = 19
    SAMPLE_DONE = 20


# ========================================
# СЕКРЕТ ЖЕРТВЫ
# ========================================

class SecretMode(str, Enum):
    FIXED = 'fixed'                 # один вектор на все выборки
    ALTERNATING = 'alternating'     # 1010... по наборам
    RANDOM = 'random'               # свой вектор на каждую выборку


def decorative_pattern(nsets: int) -> np.ndarray:
    """Вектор по умолчанию для FIXED: полосы по четыре набора"""
    return ((np.arange(nsets) // 4) % 2 == 0).astype(np.uint8)


class VictimSpec(BaseModel):
    """
    Как жертва выбирает наборы. pattern для FIXED: строка из 0/1,
    символ i соответствует набору i; без pattern берётся decorative_pattern.
    """
    model_config = ConfigDict(frozen=True)

    mode: SecretMode = SecretMode.RANDOM
    pattern: Optional[str] = None
    density: float = Field(default=0.5, ge=0.0, le=1.0)

    @field_validator('pattern')
    @classmethod
    def binary_pattern(cls, v: Optional[str]) -> Optional[str]:
        if v is not None:
            v = v.strip()
            if not v or set(v) - {'0', '1'}:
                raise ValueError('pattern must be a string of 0 and 1')
        return v

    @classmethod
    def fixed(cls, bits: Sequence[int]) -> 'VictimSpec':
        return cls(mode=SecretMode.FIXED, pattern="".join('1' if b else '0' for b in bits))

    def base_vector(self, nsets: int) -> np.ndarray:
        if self.mode is SecretMode.ALTERNATING:
            return (np.arange(nsets) % 2 == 0).astype(np.uint8)
        if self.pattern is None:
            return decorative_pattern(nsets)
        if len(self.pattern) != nsets:
            raise ChannelConfigError(f"secret pattern has {len(self.pattern)} bits, the D-cache has {nsets} sets")
        return np.frombuffer(self.pattern.encode(), dtype=np.uint8) - ord('0')

    def secrets(self, nsets: int, count: int, rng: np.random.Generator) -> np.ndarray:
        """Матрица count × nsets из 0/1"""
        if nsets > MAX_SECRET_BITS:
            raise ChannelConfigError(f"secret of {nsets} bits does not fit {SECRET_WORDS} registers")
        if self.mode is SecretMode.RANDOM:
            return (rng.random((count, nsets)) < self.density).astype(np.uint8)
        return np.tile(self.base_vector(nsets), (count, 1))


def secret_words(bits: np.ndarray) -> List[int]:
    """Вектор бит -> четыре 32-битных слова, младший бит слова = младший набор"""
    padded = np.zeros(MAX_SECRET_BITS, dtype=np.uint8)
    padded[:bits.size] = bits
    packed = np.packbits(padded, bitorder='little')
    return [int.from_bytes(packed[4 * k:4 * k + 4].tobytes(), 'little') for k in range(SECRET_WORDS)]


# ========================================
# КАРТА ПРОБ
# ========================================

class ProbeMap:
    """
    Задержки проб: latency[sample, set] = сумма по way, в тактах.
    per_way[sample, set, way] заполняется только в режиме отчёта по way.
    secrets сопровождают карту, но в сравнение карт не входят.
    """

    def __init__(
        self,
        latency: np.ndarray,
        per_way: Optional[np.ndarray] = None,
        secrets: Optional[np.ndarray] = None,
    ):
        self.latency = np.asarray(latency, dtype=np.int64)
        if self.latency.ndim != 2:
            raise ValueError(f"latency must be samples x sets, got shape {self.latency.shape}")
        self.per_way = None if per_way is None else np.asarray(per_way, dtype=np.int64)
        self.secrets = None if secrets is None else np.asarray(secrets, dtype=np.uint8)
        if self.secrets is not None and self.secrets.shape != self.latency.shape:
            raise ValueError(f"secrets shape {self.secrets.shape} does not match latency {self.latency.shape}")

    @property
    def samples(self) -> int:
        return self.latency.shape[0]

    @property
    def nsets(self) -> int:
        return self.latency.shape[1]

    @classmethod
    def concatenate(cls, maps: Sequence['ProbeMap']) -> 'ProbeMap':
        if not maps:
            raise ValueError("nothing to concatenate")
        per_way = None
        if all(m.per_way is not None for m in maps):
            per_way = np.concatenate([m.per_way for m in maps])
        secrets = None
        if all(m.secrets is not None for m in maps):
            secrets = np.concatenate([m.secrets for m in maps])
        return cls(np.concatenate([m.latency for m in maps]), per_way, secrets)

    def head(self, samples: int) -> 'ProbeMap':
        return ProbeMap(
            self.latency[:samples],
            None if self.per_way is None else self.per_way[:samples],
            None if self.secrets is None else self.secrets[:samples],
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProbeMap):
            return NotImplemented
        if not np.array_equal(self.latency, other.latency):
            return False
        if self.per_way is None or other.per_way is None:
            return self.per_way is None and other.per_way is None
        return np.array_equal(self.per_way, other.per_way)

    def __repr__(self) -> str:
        return f"<ProbeMap {self.samples}x{self.nsets}>"


# ========================================
# ШАБЛОНЫ
# ========================================

class Layout(NamedTuple):
    """Параметры шаблонов, выведенные из геометрии D-cache"""
    nsets: int
    assoc: int
    line_bytes: int

    @property
    def way_stride(self) -> int:
        return self.nsets * self.line_bytes

    @property
    def evict_lines(self) -> int:
        return self.nsets * self.assoc

    @property
    def evict_bytes(self) -> int:
        return self.evict_lines * self.line_bytes

    @property
    def prime_groups(self) -> int:
        return self.evict_lines // PRIME_UNROLL

    @classmethod
    def from_core(cls, core: CoreSettings) -> 'Layout':
        return cls(core.dcache_nsets, core.dcache_assoc, core.dcache_line_bytes)

    def check(self) -> None:
        if self.nsets > MAX_SECRET_BITS:
            raise ChannelConfigError(f"{self.nsets} sets exceed the {MAX_SECRET_BITS}-bit secret")
        if self.evict_lines % PRIME_UNROLL:
            raise ChannelConfigError(f"prime needs a multiple of {PRIME_UNROLL} lines, the D-cache has {self.evict_lines}")
        if (PRIME_UNROLL - 1) * self.line_bytes > MAX_LOAD_OFFSET:
            raise ChannelConfigError(f"{self.line_bytes} B lines do not fit load offsets of the prime loop")

    def header(self) -> str:
        constants = {
            'NSETS': self.nsets,
            'ASSOC': self.assoc,
            'LINE': self.line_bytes,
            'WAYSTRIDE': self.way_stride,
            'EVICT_LINES': self.evict_lines,
            'EVICT_BYTES': self.evict_bytes,
            'VBUF_BYTES': self.way_stride,
            'PRIME_GROUPS': self.prime_groups,
            'PRIME_STEP': PRIME_UNROLL * self.line_bytes,
        }
        constants.update({f"LINE{k}": k * self.line_bytes for k in range(2, PRIME_UNROLL)})
        constants.update({f"SYS_{call.name}": int(call) for call in ChannelSyscall})
        return "".join(f".equ {name}, {value}\n" for name, value in constants.items())


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    return (TEMPLATES_DIR / name).read_text()


def build_programs(
    layout: Layout,
    attacker_source: Optional[str] = None,
    victim_source: Optional[str] = None,
) -> Tuple[Program, Program]:
    """Собирает атакующего и жертву под геометрию и проверяет их буферы"""
    layout.check()
    header = layout.header()
    attacker = assemble(header + (attacker_source or _template(ATTACKER_TEMPLATE)))
    victim = assemble(header + (victim_source or _template(VICTIM_TEMPLATE)))
    _check_buffer(attacker, 'evict', layout.evict_bytes, layout)
    _check_buffer(victim, 'vbuf', layout.way_stride, layout)
    return attacker, victim


def _check_buffer(program: Program, symbol: str, size: int, layout: Layout) -> None:
    address = program.symbols.get(symbol)
    if address is None:
        raise ChannelConfigError(f"program has no '{symbol}' buffer")
    if program.data_end - address < size:
        raise ChannelConfigError(
            f"buffer '{symbol}' holds {program.data_end - address} bytes, {size} needed "
            f"for {layout.nsets} sets x {layout.assoc} ways x {layout.line_bytes} B"
        )
    if address % (1 << PAGE_SHIFT):
        raise ChannelConfigError(f"buffer '{symbol}' at 0x{address:x} is not page aligned")


def _check_placement(state: ArchState, program: Program, symbol: str, layout: Layout) -> None:
    """После загрузки буфер обязан начинаться с набора 0 и идти подряд по кадрам"""
    table = state.page_table()
    base = program.symbols[symbol]
    first = table.lookup(base >> PAGE_SHIFT)
    span = max(1, layout.way_stride >> PAGE_SHIFT)
    for page in range(span):
        pte = table.lookup((base >> PAGE_SHIFT) + page)
        if first is None or pte is None or pte.ppn != first.ppn + page:
            raise ChannelConfigError(f"buffer '{symbol}' is not physically contiguous")
    if (first.ppn << PAGE_SHIFT) % layout.way_stride:
        raise ChannelConfigError(
            f"buffer '{symbol}' lands at 0x{first.ppn << PAGE_SHIFT:x}, not at set 0 of the D-cache"
        )


# ========================================
# ОДИН БАТЧ
# ========================================

class BatchTask(BaseModel):
    """Всё, что нужно процессу-воркеру для одного батча"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    index: int
    core: CoreSettings
    victim: VictimSpec
    flush_enabled: bool
    samples: int = Field(ge=1)
    warmup: int = Field(default=settings.PRIME_PROBE_WARMUP_SAMPLES, ge=0)
    per_way: bool = False
    seed: np.random.SeedSequence


class PrimeProbeSession:
    """Атакующий и жертва на общем ядре; обработчики вызовов пишут результаты"""

    def __init__(self, task: BatchTask):
        self.task = task
        self.logger = get_logger(f"channel.prime_probe.batch{task.index}")
        self.layout = Layout.from_core(task.core)
        attacker, victim = build_programs(self.layout)

        self.core = Core(task.core.model_copy(update={'trace_enabled': False}))
        total = task.warmup + task.samples
        budget = total * self.layout.evict_lines * (
            task.core.dcache_miss_cycles + task.core.page_walk_cycles + SAMPLE_CYCLE_SLACK
        ) * (2 if task.per_way else 1)
        self.scheduler = Scheduler(self.core, SchedulerConfig(
            quantum_cycles=budget,
            flush_on_switch=False,
            flush_on_trap=False,
            max_cycles=budget,
        ))
        self.attacker = self.scheduler.add_program(attacker, name="attacker")
        self.victim = self.scheduler.add_program(victim, name="victim")
        _check_placement(self.attacker.state, attacker, 'evict', self.layout)
        _check_placement(self.victim.state, victim, 'vbuf', self.layout)
        self.attacker.state.regs[10] = 1 if task.per_way else 0

        for number, handler in (
            (ChannelSyscall.VICTIM, self._on_victim),
            (ChannelSyscall.VICTIM_RETURN, self._on_victim_return),
            (ChannelSyscall.PROBE_SET, self._on_probe_set),
            (ChannelSyscall.PROBE_WAY, self._on_probe_way),
            (ChannelSyscall.SAMPLE_DONE, self._on_sample_done),
        ):
            self.scheduler.register_syscall(number, handler)

        rng = np.random.default_rng(task.seed)
        self.secrets = task.victim.secrets(self.layout.nsets, total, rng)
        self.total = total
        self.sample = 0
        self.latency = np.zeros((total, self.layout.nsets), dtype=np.int64)
        self.per_way = (
            np.zeros((total, self.layout.nsets, self.layout.assoc), dtype=np.int64)
            if task.per_way else None
        )

    # ---------- обработчики вызовов ----------

    def _on_victim(self, scheduler: Scheduler, context: Context) -> TrapOutcome:
        words = secret_words(self.secrets[self.sample])
        self.victim.state.regs[10:10 + SECRET_WORDS] = words
        return TrapOutcome(switch_to=self.victim.cid)

    def _on_victim_return(self, scheduler: Scheduler, context: Context) -> TrapOutcome:
        return TrapOutcome(switch_to=self.attacker.cid, flush=self.task.flush_enabled)

    def _on_probe_set(self, scheduler: Scheduler, context: Context) -> None:
        regs = context.state.regs
        self.latency[self.sample, regs[11]] = regs[10]

    def _on_probe_way(self, scheduler: Scheduler, context: Context) -> None:
        regs = context.state.regs
        self.per_way[self.sample, regs[11], regs[12]] = regs[10]

    def _on_sample_done(self, scheduler: Scheduler, context: Context) -> TrapOutcome:
        self.sample += 1
        return TrapOutcome(stop=self.sample >= self.total)

    # ---------- запуск ----------

    @measure_latency
    def run(self) -> ProbeMap:
        self.logger.debug(
            f"Batch {self.task.index}: {self.task.samples} samples (+{self.task.warmup} warm-up), "
            f"flush={'on' if self.task.flush_enabled else 'off'}"
        )
        self.scheduler.run()
        if self.sample < self.total:
            raise SimulatorError(
                f"batch {self.task.index} stopped after {self.sample} of {self.total} samples "
                f"at cycle {self.core.cycle}"
            )
        keep = slice(self.task.warmup, self.total)
        return ProbeMap(
            self.latency[keep],
            None if self.per_way is None else self.per_way[keep],
            self.secrets[keep],
        )


def run_batch(task: BatchTask) -> ProbeMap:
    """Точка входа воркера; функция модульного уровня, чтобы её можно было передать в пул"""
    return PrimeProbeSession(task).run()


def plan_batches(
    core: CoreSettings,
    victim: VictimSpec,
    flush_enabled: bool,
    samples: int,
    seed: int,
    batch_samples: int = settings.PRIME_PROBE_BATCH_SAMPLES,
    warmup: int = settings.PRIME_PROBE_WARMUP_SAMPLES,
    per_way: bool = False,
) -> List[BatchTask]:
    """Разбивает выборки на батчи; каждый получает своего потомка SeedSequence"""
    if samples < 1:
        raise ValueError("at least one sample is required")
    counts = [batch_samples] * (samples // batch_samples)
    if samples % batch_samples:
        counts.append(samples % batch_samples)
    children = np.random.SeedSequence(seed).spawn(len(counts))
    return [
        BatchTask(
            index=index,
            core=core,
            victim=victim,
            flush_enabled=flush_enabled,
            samples=count,
            warmup=warmup,
            per_way=per_way,
            seed=child,
        )
        for index, (count, child) in enumerate(zip(counts, children))
    ]


def run_prime_probe(
    config: SimulatorConfig,
    victim: VictimSpec,
    flush_enabled: bool,
    samples: Optional[int] = None,
    seed: Optional[int] = None,
    per_way: Optional[bool] = None,
) -> ProbeMap:
    """
    Последовательный прогон всех батчей в текущем процессе.
    Параллельная версия: channel.runner.run_prime_probe_async.
    """
    exp = config.experiment
    tasks = plan_batches(
        config.core,
        victim,
        flush_enabled,
        samples if samples is not None else exp.samples,
        seed if seed is not None else exp.seed,
        exp.batch_samples,
        exp.warmup_samples,
        per_way if per_way is not None else exp.per_way,
    )
    logger.info(
        f"Prime+Probe: {sum(t.samples for t in tasks)} samples in {len(tasks)} batches, "
        f"victim={victim.mode.value}, flush={'on' if flush_enabled else 'off'}"
    )
    return ProbeMap.concatenate([run_batch(task) for task in tasks])
