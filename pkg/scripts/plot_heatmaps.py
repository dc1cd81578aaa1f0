import argparse
import glob
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from core_model import mm_to_pixels

sns.set(context="talk", style="whitegrid")

AXES_TITLES = {
    "axis1": "A. Axis1",
    "axis2": "B. Axis2",
    "both": "C. Both axes",
}

PALETTE = {
    "slow": "#1f77b4",
    "medium": "#ff7f0e",
    "fast": "#d62728",
}


def parse_args():
    p = argparse.ArgumentParser(description="Heat maps of jitter estimates and error by band")
    p.add_argument("input_dir",
                   help="Directory holding <band>_<axes>.heatmap.csv and .report.csv files")
    p.add_argument("--output", default=None,
                   help="Path to write the PNG figure (default: <input_dir>/heatmaps.png)")
    p.add_argument("--width", type=float, default=18.0, help="Figure width in inches")
    p.add_argument("--height", type=float, default=12.0, help="Figure height in inches")
    return p.parse_args()


def load_heatmap(path) -> pd.DataFrame:
    df = pd.read_csv(path, index_col=0)
    df.columns = df.columns.astype(int)
    df.index = df.index.astype(int)
    if list(df.index) != list(df.columns):
        raise ValueError(f"Heat map {path} is not a square dy x dx grid")
    return df


def sum_heatmaps(frames):
    """Add heat maps of possibly different radii on their common centre."""
    if not frames:
        return None
    R = max(int(f.columns.max()) for f in frames)
    offsets = np.arange(-R, R + 1)
    total = pd.DataFrame(0, index=offsets, columns=offsets)
    for f in frames:
        total = total.add(f.reindex(index=offsets, columns=offsets, fill_value=0), fill_value=0)
    total.index.name, total.columns.name = "dy", "dx"
    return total.astype(int)


def heatmaps_by_axes(input_dir):
    grouped = {axes: [] for axes in AXES_TITLES}
    for path in sorted(glob.glob(os.path.join(input_dir, "*_*.heatmap.csv"))):
        label = os.path.basename(path)[:-len(".heatmap.csv")]
        axes = label.split("_", 1)[1]
        if axes in grouped:
            grouped[axes].append(load_heatmap(path))
    return {axes: sum_heatmaps(frames) for axes, frames in grouped.items() if frames}


def load_reports(input_dir) -> pd.DataFrame:
    paths = sorted(glob.glob(os.path.join(input_dir, "*.report.csv")))
    if not paths:
        return pd.DataFrame(columns=["band", "axes", "rmse_combined"])
    df = pd.concat([pd.read_csv(p) for p in paths], ignore_index=True)
    return df[df["band"].isin(list(PALETTE))]


def panel_heatmap(ax, grid: pd.DataFrame, title: str):
    # log counts; the zero-shift bin dominates otherwise
    sns.heatmap(np.log1p(grid), ax=ax, cmap="viridis", cbar_kws={"label": "log(1 + count)"},
                xticklabels=10, yticklabels=10, square=True)
    R = int(grid.columns.max())
    circle = plt.Circle((R + 0.5, R + 0.5), mm_to_pixels(0.1), fill=False, color="white",
                        linestyle="--", linewidth=1)
    ax.add_patch(circle)
    ax.invert_yaxis()
    ax.set_title(title, fontsize=12, fontweight='bold')
    ax.set_xlabel("dx (px)")
    ax.set_ylabel("dy (px)")


def panel_error_by_band(ax, reports: pd.DataFrame):
    if reports.empty:
        ax.text(0.5, 0.5, "no reports found", ha="center", va="center")
        ax.axis("off")
        return
    sns.barplot(ax=ax, data=reports, x="axes", y="rmse_combined", hue="band",
                hue_order=list(PALETTE), palette=PALETTE)
    ax.set_title("D. Combined error by band", fontsize=12, fontweight='bold')
    ax.set_xlabel("Motion axes")
    ax.set_ylabel("Error combined (px)")


def main():
    args = parse_args()
    output = args.output or os.path.join(args.input_dir, "heatmaps.png")
    grids = heatmaps_by_axes(args.input_dir)

    fig, axes = plt.subplots(2, 2, figsize=(args.width, args.height))
    panels = [axes[0, 0], axes[0, 1], axes[1, 0]]
    for ax, (key, title) in zip(panels, AXES_TITLES.items()):
        if key in grids:
            panel_heatmap(ax, grids[key], title)
        else:
            ax.set_title(title)
            ax.axis("off")

    panel_error_by_band(axes[1, 1], load_reports(args.input_dir))

    plt.tight_layout()
    fig.savefig(output, dpi=300)
    print(f"Saved figure to {output}")


if __name__ == "__main__":
    main()
