# pytest tests/test_plots.py -v
import numpy as np

from channel.heatmap import write_heatmap
from channel.prime_probe import ProbeMap
from overhead.measure import FlushCosts, WorkloadStats
from overhead.sweep import sweep, write_overhead_csv
from scripts.plot_overhead import plot_heatmap, plot_overhead

COSTS = FlushCosts(c_opt=1, cyc_opt=4611, c_norm=2090, cyc_norm=40_000, c_l1_only=2085, cyc_l1_only=39_000, dirty_lines=512)
STATS = WorkloadStats(name="synthetic", cycles=150_000, instructions=100_000)


def test_overhead_plot(tmp_path):
    csv_path = write_overhead_csv(sweep(STATS, [100_000_000, 1_000_000_000], [10, 100, 1_000], COSTS),
                                  tmp_path / "overhead.csv")
    png = tmp_path / "overhead.png"
    plot_overhead(csv_path, png)
    assert png.stat().st_size > 0


def test_heatmap_plot(tmp_path):
    csv_path = write_heatmap(ProbeMap(np.full((5, 4), 16)), tmp_path / "heatmap.csv")
    png = tmp_path / "heatmap.png"
    plot_heatmap(csv_path, png, samples=3)
    assert png.stat().st_size > 0
