# pytest tests/test_channel.py -v
# pytest tests/test_channel.py -v -m slow   # 20 000 выборок на геометрии по умолчанию
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from channel.analysis import analyze_channel, classification_threshold, mutual_information
from channel.heatmap import HEATMAP_COLUMNS, column_means, emit_heatmap, parse_heatmap, read_heatmap, write_heatmap
from channel.prime_probe import (
    ChannelConfigError, Layout, PrimeProbeSession, ProbeMap, SecretMode, VictimSpec, build_programs, decorative_pattern,
    plan_batches, run_prime_probe, secret_words,
)
from channel.runner import run_prime_probe_async, run_prime_probe_parallel, worker_count
from config.typed_settings import SimulatorConfig
from tests.fixtures import small_config

# 16 наборов × 4 way: набор жертвы даёт 4 промаха, чужой набор 4 попадания
SMALL_NSETS = 16
TOUCHED_LATENCY = 4 * 50
UNTOUCHED_LATENCY = 4 * 2
STRIPES = VictimSpec.fixed([1, 0] * 8)
INVERTED = VictimSpec.fixed([0, 1] * 8)


def binary_entropy(p: float) -> float:
    return float(-p * np.log2(p) - (1 - p) * np.log2(1 - p))


@pytest.fixture(scope="module")
def config():
    return small_config(samples=4)


class TestVictimSpec:
    """Выбор наборов жертвой"""

    def test_decorative_pattern_has_stripes(self):
        assert decorative_pattern(8).tolist() == [1, 1, 1, 1, 0, 0, 0, 0]

    def test_fixed_pattern_repeats(self):
        secrets = STRIPES.secrets(SMALL_NSETS, 3, np.random.default_rng(0))
        assert secrets.shape == (3, SMALL_NSETS)
        assert (secrets == secrets[0]).all()

    def test_alternating(self):
        spec = VictimSpec(mode=SecretMode.ALTERNATING)
        assert spec.base_vector(4).tolist() == [1, 0, 1, 0]

    def test_pattern_must_match_geometry(self, config):
        with pytest.raises(ChannelConfigError, match="sets"):
            run_prime_probe(config, VictimSpec.fixed([1, 0, 1]), flush_enabled=False)

    def test_pattern_must_be_binary(self):
        with pytest.raises(ValueError):
            VictimSpec(mode=SecretMode.FIXED, pattern="10x1")

    def test_secret_words_little_endian(self):
        bits = np.zeros(SMALL_NSETS + 32, dtype=np.uint8)
        bits[0] = 1
        bits[33] = 1
        assert secret_words(bits)[:2] == [1, 2]


class TestPrimeProbe:
    """Канал по L1 D-cache с очисткой и без"""

    def test_without_flush_the_secret_is_visible(self, config):
        probe = run_prime_probe(config, STRIPES, flush_enabled=False)
        expected = np.where(STRIPES.base_vector(SMALL_NSETS) == 1, TOUCHED_LATENCY, UNTOUCHED_LATENCY)
        assert probe.latency.shape == (4, SMALL_NSETS)
        assert (probe.latency == expected).all()
        assert analyze_channel(probe, core=config.core).accuracy == 1.0

    def test_random_secret_without_flush(self, config):
        probe = run_prime_probe(config, VictimSpec(), flush_enabled=False, seed=11)
        metrics = analyze_channel(probe, core=config.core)
        assert metrics.accuracy == 1.0
        assert metrics.mutual_information == pytest.approx(binary_entropy(metrics.base_rate))

    def test_with_flush_maps_do_not_depend_on_secret(self, config):
        first = run_prime_probe(config, STRIPES, flush_enabled=True)
        second = run_prime_probe(config, INVERTED, flush_enabled=True)
        assert first == second
        assert (first.latency >= TOUCHED_LATENCY).all()

        metrics = analyze_channel(first, core=config.core)
        assert metrics.degenerate
        assert metrics.mutual_information == 0.0

    def test_per_way_sums_to_set_latency(self, config):
        probe = run_prime_probe(config, VictimSpec(), flush_enabled=False, per_way=True)
        assert probe.per_way.shape == (4, SMALL_NSETS, 4)
        assert (probe.per_way.sum(axis=2) == probe.latency).all()

    def test_attacker_instructions_per_sample(self, config):
        """prime по восемь линий за виток, цикл по way без проверки режима отчёта"""
        task, = plan_batches(config.core, VictimSpec(), False, samples=4, seed=1)
        session = PrimeProbeSession(task)
        session.run()
        per_sample = session.attacker.instructions / session.total
        assert per_sample < 12 * session.layout.evict_lines

    def test_layout_rejects_too_few_lines(self):
        with pytest.raises(ChannelConfigError, match="multiple of 8"):
            build_programs(Layout(2, 2, 64))

    def test_same_seed_same_map(self, config):
        first = run_prime_probe(config, VictimSpec(), flush_enabled=False, seed=5)
        second = run_prime_probe(config, VictimSpec(), flush_enabled=False, seed=5)
        assert first == second
        assert (first.secrets == second.secrets).all()


class TestBatches:
    """Разбиение на батчи и параллельный прогон"""

    def test_plan_covers_all_samples(self, config):
        tasks = plan_batches(config.core, VictimSpec(), False, samples=7, seed=1, batch_samples=3)
        assert [task.samples for task in tasks] == [3, 3, 1]
        assert [task.index for task in tasks] == [0, 1, 2]

    def test_plan_rejects_zero_samples(self, config):
        with pytest.raises(ValueError):
            plan_batches(config.core, VictimSpec(), False, samples=0, seed=1)

    def test_worker_count(self):
        assert worker_count(4, 2) == 2
        assert worker_count(1, 10) == 1
        assert worker_count(0, 1) == 1

    @pytest.mark.asyncio
    async def test_pool_matches_sequential_run(self):
        """Результат не зависит от того, где исполнялись батчи"""
        config = small_config(samples=6, batch_samples=2)
        sequential = run_prime_probe(config, VictimSpec(), flush_enabled=False)
        with ThreadPoolExecutor(max_workers=3) as pool:
            pooled = await run_prime_probe_async(config, VictimSpec(), flush_enabled=False, executor=pool)
        assert pooled == sequential
        assert (pooled.secrets == sequential.secrets).all()

    def test_probe_map_helpers(self):
        maps = [ProbeMap(np.full((2, 4), k)) for k in (1, 2)]
        joined = ProbeMap.concatenate(maps)
        assert joined.samples == 4 and joined.nsets == 4
        assert joined.head(2) == maps[0]
        with pytest.raises(ValueError):
            ProbeMap(np.zeros(4))


class TestTemplates:
    def test_layout_header(self):
        header = Layout(16, 4, 64).header()
        assert ".equ WAYSTRIDE, 1024\n" in header
        assert ".equ SYS_VICTIM, 16\n" in header

    def test_buffer_must_be_large_enough(self):
        attacker = "_start:\n    halt\n.data\n.align 12\nevict:\n    .space 64\n"
        with pytest.raises(ChannelConfigError, match="evict"):
            build_programs(Layout(16, 4, 64), attacker_source=attacker)


class TestAnalysis:
    """Порог и метрики"""

    def test_threshold(self):
        assert classification_threshold(8, 2, 50) == 40
        assert classification_threshold(4, 2, 50) == 32

    def test_mutual_information_bounds(self):
        secret = np.array([0, 1, 0, 1])
        assert mutual_information(secret, secret) == pytest.approx(1.0)
        assert mutual_information(secret, np.ones(4)) == 0.0

    def test_report(self, config):
        probe = ProbeMap(np.array([[200, 8]]), secrets=np.array([[1, 0]]))
        text = analyze_channel(probe, core=config.core).report()
        assert "accuracy=1.000000\n" in text
        assert "threshold=32.000000\n" in text

    def test_secrets_required(self):
        with pytest.raises(ValueError):
            analyze_channel(ProbeMap(np.zeros((1, 2))))


class TestHeatmap:
    """CSV sample,set,latency_cycles"""

    def test_emit_and_parse(self):
        probe = ProbeMap(np.array([[1, 2, 3], [4, 5, 6]]))
        text = emit_heatmap(probe)
        lines = text.splitlines()
        assert lines[0] == ",".join(HEATMAP_COLUMNS)
        assert lines[1] == "1,0,1"
        assert len(lines) == 7
        assert parse_heatmap(text) == probe

    def test_file_round_trip(self, tmp_path):
        probe = ProbeMap(np.array([[10, 20]]))
        path = write_heatmap(probe, tmp_path / "out" / "heatmap.csv")
        assert read_heatmap(path) == probe
        assert column_means(probe).tolist() == [10.0, 20.0]

    def test_bad_header(self):
        with pytest.raises(ValueError, match="header"):
            parse_heatmap("a,b,c\n1,0,1\n")

    def test_missing_rows(self):
        with pytest.raises(ValueError, match="rows"):
            parse_heatmap("sample,set,latency_cycles\n1,0,1\n2,1,1\n")


@pytest.mark.slow
def test_default_geometry_acceptance():
    config = SimulatorConfig(experiment={'samples': 20_000})
    open_channel = run_prime_probe_parallel(config, VictimSpec(), flush_enabled=False)
    metrics = analyze_channel(open_channel, core=config.core)
    assert metrics.accuracy >= 0.99
    assert metrics.mutual_information >= 0.9

    closed = run_prime_probe_parallel(config, VictimSpec(), flush_enabled=True)
    assert analyze_channel(closed, core=config.core).mutual_information <= 0.01
