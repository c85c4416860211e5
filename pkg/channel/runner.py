"""
Параллельный прогон Prime+Probe: батчи уходят в пул процессов, asyncio
собирает результаты. Порядок сборки фиксирован индексом батча.
"""

import asyncio
import os
from concurrent.futures import Executor, ProcessPoolExecutor
from typing import Optional

from config.logging import get_logger
from config.typed_settings import SimulatorConfig
from channel.prime_probe import ProbeMap, VictimSpec, plan_batches, run_batch
from utils.monitoring import measure_latency

logger = get_logger("channel.runner")


def worker_count(requested: int, batches: int) -> int:
    """0 = по числу процессоров; больше, чем батчей, не нужно"""
    workers = requested or os.cpu_count() or 1
    return max(1, min(workers, batches))


@measure_latency
async def run_prime_probe_async(
    config: SimulatorConfig,
    victim: VictimSpec,
    flush_enabled: bool,
    samples: Optional[int] = None,
    seed: Optional[int] = None,
    per_way: Optional[bool] = None,
    executor: Optional[Executor] = None,
) -> ProbeMap:
    """
    То же, что run_prime_probe, но батчи исполняются параллельно.
    Можно передать свой executor (например, ThreadPoolExecutor в тестах).
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
    loop = asyncio.get_running_loop()
    own_executor = executor is None
    if own_executor:
        executor = ProcessPoolExecutor(max_workers=worker_count(exp.workers, len(tasks)))
    logger.info(
        f"Prime+Probe: {sum(t.samples for t in tasks)} samples in {len(tasks)} batches on a pool, "
        f"flush={'on' if flush_enabled else 'off'}"
    )
    try:
        futures = [loop.run_in_executor(executor, run_batch, task) for task in tasks]
        maps = await asyncio.gather(*futures)
    finally:
        if own_executor:
            executor.shutdown(wait=True)
    return ProbeMap.concatenate(maps)


def run_prime_probe_parallel(config: SimulatorConfig, victim: VictimSpec, flush_enabled: bool, **kwargs) -> ProbeMap:
    """Синхронная обёртка для CLI"""
    return asyncio.run(run_prime_probe_async(config, victim, flush_enabled, **kwargs))
