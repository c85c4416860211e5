"""
Метрики канала по карте проб: точность порогового классификатора и взаимная
информация между битом секрета и классифицированным битом.
"""

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field

from config.logging import get_logger
from config.typed_settings import CoreSettings
from channel.prime_probe import ProbeMap

logger = get_logger("channel.analysis")


def classification_threshold(assoc: int, hit_cycles: int, miss_cycles: int) -> float:
    """Середина между набором из одних попаданий и набором с одним промахом"""
    all_hits = assoc * hit_cycles
    one_miss = (assoc - 1) * hit_cycles + miss_cycles
    return (all_hits + one_miss) / 2


class ChannelMetrics(BaseModel):
    samples: int
    nsets: int
    threshold: float
    accuracy: float = Field(ge=0.0, le=1.0)
    mutual_information: float = Field(ge=0.0, le=1.0, description="бит на набор")
    base_rate: float = Field(ge=0.0, le=1.0, description="доля единичных бит секрета")
    miss_fraction: float = Field(ge=0.0, le=1.0, description="доля проб в полосе промахов")
    touched_mean: Optional[float] = None
    untouched_mean: Optional[float] = None
    touched_set_means: List[Optional[float]] = Field(default_factory=list)
    untouched_set_means: List[Optional[float]] = Field(default_factory=list)
    degenerate: bool = False

    def report(self) -> str:
        """Плоский отчёт key=value"""
        def show(value) -> str:
            if value is None:
                return "nan"
            if isinstance(value, bool):
                return "true" if value else "false"
            if isinstance(value, float):
                return f"{value:.6f}"
            return str(value)

        keys = (
            "samples", "nsets", "threshold", "accuracy", "mutual_information",
            "base_rate", "miss_fraction", "touched_mean", "untouched_mean", "degenerate",
        )
        return "".join(f"{key}={show(getattr(self, key))}\n" for key in keys)


def mutual_information(secret: np.ndarray, guess: np.ndarray) -> float:
    """Оценка I(S; C) в битах по эмпирическому совместному распределению"""
    secret = secret.astype(np.int64).ravel()
    guess = guess.astype(np.int64).ravel()
    if secret.size == 0:
        return 0.0
    joint = np.bincount(secret * 2 + guess, minlength=4).reshape(2, 2) / secret.size
    p_secret = joint.sum(axis=1, keepdims=True)
    p_guess = joint.sum(axis=0, keepdims=True)
    expected = p_secret * p_guess
    mask = joint > 0
    value = float(np.sum(joint[mask] * np.log2(joint[mask] / expected[mask])))
    # погрешность округления у нуля и единицы
    return min(max(value, 0.0), 1.0)


def _masked_means(latency: np.ndarray, mask: np.ndarray) -> List[Optional[float]]:
    counts = mask.sum(axis=0)
    sums = np.where(mask, latency, 0).sum(axis=0)
    return [float(s / c) if c else None for s, c in zip(sums, counts)]


def analyze_channel(
    probe_map: ProbeMap,
    secrets: Optional[np.ndarray] = None,
    core: Optional[CoreSettings] = None,
) -> ChannelMetrics:
    """
    Классифицирует каждую пробу порогом и сравнивает с секретом.
    Вырожденные распределения (постоянный секрет или постоянный ответ
    классификатора) отмечаются флагом degenerate, ошибкой не считаются.
    """
    core = core or CoreSettings()
    secrets = probe_map.secrets if secrets is None else np.asarray(secrets, dtype=np.uint8)
    if secrets is None:
        raise ValueError("probe map carries no secrets and none were given")
    if secrets.shape != probe_map.latency.shape:
        raise ValueError(f"secrets shape {secrets.shape} does not match the probe map {probe_map.latency.shape}")

    threshold = classification_threshold(core.dcache_assoc, core.dcache_hit_cycles, core.dcache_miss_cycles)
    latency = probe_map.latency
    touched = secrets.astype(bool)
    guess = latency > threshold

    total = latency.size
    accuracy = float(np.count_nonzero(guess == touched)) / total if total else 1.0
    base_rate = float(np.count_nonzero(touched)) / total if total else 0.0
    degenerate = bool(touched.all() or not touched.any() or guess.all() or not guess.any())

    metrics = ChannelMetrics(
        samples=probe_map.samples,
        nsets=probe_map.nsets,
        threshold=threshold,
        accuracy=accuracy,
        mutual_information=mutual_information(touched, guess),
        base_rate=base_rate,
        miss_fraction=float(np.count_nonzero(latency >= core.dcache_miss_cycles)) / total if total else 0.0,
        touched_mean=float(latency[touched].mean()) if touched.any() else None,
        untouched_mean=float(latency[~touched].mean()) if (~touched).any() else None,
        touched_set_means=_masked_means(latency, touched),
        untouched_set_means=_masked_means(latency, ~touched),
        degenerate=degenerate,
    )
    if degenerate:
        logger.info("Degenerate channel distribution: secret or classifier output is constant")
    logger.debug(f"Channel: accuracy={metrics.accuracy:.4f}, MI={metrics.mutual_information:.4f} bits")
    return metrics
