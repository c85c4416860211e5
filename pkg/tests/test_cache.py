# pytest tests/test_cache.py -v
import pytest

from uarch.cache import AccessKind, CacheArray, CacheGeometry

# 4 набора × 2 way × 16 B: набор = биты 4..5 адреса
TINY = CacheGeometry(nsets=4, assoc=2, line_bytes=16, hit_latency_cycles=2, miss_penalty_cycles=50,
                     writeback_cycles_per_line=8)
SET_STRIDE = 4 * 16


def pattern_fill(line_addr: int) -> bytes:
    """Содержимое линии = её адрес, повторённый побайтно"""
    return bytes((line_addr >> 4) & 0xFF for _ in range(16))


@pytest.fixture
def cache():
    return CacheArray(TINY, pattern_fill)


class TestCacheAccess:
    """Попадания, промахи и замещение LRU"""

    def test_miss_then_hit(self, cache):
        first = cache.access(0x100, AccessKind.READ)
        second = cache.access(0x104, AccessKind.READ)
        assert (first.hit, first.latency_cycles) == (False, 50)
        assert (second.hit, second.latency_cycles) == (True, 2)

    def test_lru_victim(self, cache):
        """Третья линия набора вытесняет наименее недавно использованную"""
        a, b, c = 0x000, SET_STRIDE, 2 * SET_STRIDE
        cache.access(a, AccessKind.READ)
        cache.access(b, AccessKind.READ)
        cache.access(a, AccessKind.READ)
        cache.access(c, AccessKind.READ)
        assert cache.peek(a, 4) is not None
        assert cache.peek(b, 4) is None
        assert cache.peek(c, 4) is not None

    def test_dirty_eviction_writes_back(self, cache):
        a, b, c = 0x000, SET_STRIDE, 2 * SET_STRIDE
        cache.access(a, AccessKind.WRITE)
        cache.write(a, 0xDEADBEEF, 4)
        cache.access(b, AccessKind.READ)
        result = cache.access(c, AccessKind.READ)
        assert len(result.writebacks) == 1
        writeback = result.writebacks[0]
        assert writeback.address == a
        assert writeback.data[:4] == (0xDEADBEEF).to_bytes(4, 'little')

    def test_fill_data_visible(self, cache):
        cache.access(0x230, AccessKind.READ)
        assert cache.read(0x230, 1) == 0x23

    def test_read_of_absent_line(self, cache):
        with pytest.raises(KeyError):
            cache.read(0x40, 4)


class TestCacheFlush:
    """Полная очистка, очистка по линии и состояние сброса"""

    def test_flush_all_cost(self, cache):
        """По такту на линию плюс запись каждой грязной"""
        cache.access(0x000, AccessKind.WRITE)
        cache.access(0x010, AccessKind.WRITE)
        cache.access(0x020, AccessKind.READ)
        report = cache.flush_all()
        assert report.cycles == TINY.lines + 2 * 8
        assert len(report.writebacks) == 2
        assert cache.is_reset()

    def test_clean_flush_cost(self, cache):
        assert cache.flush_all().cycles == TINY.lines

    def test_flush_line_restores_boot_lru(self, cache):
        """Набор, очищенный по всем way, возвращается к начальному порядку LRU"""
        cache.access(0, AccessKind.WRITE)
        cache.access(SET_STRIDE, AccessKind.READ)
        cache.access(0, AccessKind.READ)
        assert cache.lru[0] == [1, 0]
        cycles, writeback = cache.flush_line(0, cache.tags[0].index(0))
        assert cycles == 1 + 8 and writeback is not None
        cycles, writeback = cache.flush_line(0, cache.tags[0].index(1))
        assert cycles == 1 and writeback is None
        assert cache.is_reset()

    def test_invalidate_all_is_one_cycle(self, cache):
        cache.access(0x000, AccessKind.IFETCH)
        assert cache.invalidate_all().cycles == 1
        assert cache.valid_count() == 0

    def test_geometry_must_be_power_of_two(self):
        with pytest.raises(ValueError):
            CacheGeometry(nsets=3)


def test_module_level_operations(cache):
    from uarch.cache import cache_access, cache_flush_all, icache_flush_all

    assert not cache_access(cache, 0x000, AccessKind.WRITE).hit
    assert cache_access(cache, 0x000, AccessKind.READ).hit
    assert cache_flush_all(cache).cycles == TINY.lines + 8
    cache_access(cache, 0x040, AccessKind.IFETCH)
    assert icache_flush_all(cache).cycles == 1
    assert cache.is_reset()
