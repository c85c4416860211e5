"""
Графики по CSV команд overhead и attack.

python scripts/plot_overhead.py out/overhead.csv [out/overhead.png]
python scripts/plot_overhead.py --heatmap out/heatmap_flush_off.csv [out/heatmap.png]
"""

import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from channel.heatmap import read_heatmap  # noqa: E402
from config import settings  # noqa: E402

LINESTYLES = {"opt": "-", "norm": "--"}


def plot_overhead(csv_path: Path, png_path: Path) -> None:
    series = defaultdict(list)
    with open(csv_path, newline="") as f:
        for row in csv.DictReader(f):
            key = (int(row["clock_hz"]), row["mechanism"])
            series[key].append((int(row["flush_hz"]), float(row["overhead"])))

    plt.figure(figsize=(10, 6))
    for (clock, mechanism), points in sorted(series.items()):
        points.sort()
        plt.plot(
            [f for f, _ in points],
            [100 * overhead for _, overhead in points],
            LINESTYLES.get(mechanism, ":"),
            linewidth=2,
            label=f"{mechanism} @ {clock / 1e6:g} MHz",
        )
    plt.xscale("log")
    plt.yscale("log")
    plt.xlabel("Flush frequency (Hz)")
    plt.ylabel("Instruction overhead (%)")
    plt.title("Estimated instruction overhead of flushing")
    plt.grid(True, which="both", alpha=0.3)
    plt.legend()
    plt.tight_layout()
    plt.savefig(png_path)
    plt.close()


def plot_heatmap(csv_path: Path, png_path: Path, samples: int = settings.HEATMAP_PLOT_SAMPLES) -> None:
    probe_map = read_heatmap(csv_path).head(samples)
    plt.figure(figsize=(10, 6))
    plt.imshow(probe_map.latency.T, aspect="auto", interpolation="nearest", cmap="viridis")
    plt.colorbar(label="Probe latency (cycles)")
    plt.xlabel("Sample")
    plt.ylabel("Cache set")
    plt.title(f"Prime+Probe on the L1 D-cache ({csv_path.stem})")
    plt.tight_layout()
    plt.savefig(png_path)
    plt.close()


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("csv", type=Path)
    parser.add_argument("png", type=Path, nargs="?")
    parser.add_argument("--heatmap", action="store_true", help="input is a heatmap CSV")
    args = parser.parse_args()
    png = args.png or args.csv.with_suffix(".png")
    if args.heatmap:
        plot_heatmap(args.csv, png)
    else:
        plot_overhead(args.csv, png)
    print(f"wrote {png}")


if __name__ == "__main__":
    main()
