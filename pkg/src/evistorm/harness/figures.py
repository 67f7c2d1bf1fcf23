"""Vector-graphics figures from comparison tables and report maps."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import ConfigError


def _load_table(path: Path) -> tuple[list[str], np.ndarray]:
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    header = lines[0].split("\t")
    body = np.array([[float(v) for v in line.split("\t")] for line in lines[1:]])
    return header, body


def _load_mixed_table(path: Path) -> tuple[list[str], list[list[str]]]:
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    return lines[0].split("\t"), [line.split("\t") for line in lines[1:]]


def make_figures(comparison_dir, out_dir, report_dir=None) -> list[str]:
    """Render the standard figure set as SVG files.

    ``comparison_dir`` must hold the tables written by ``compare``;
    ``report_dir`` (optional) supplies per-lead error/uncertainty maps.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    comparison_dir = Path(comparison_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []

    mse_path = comparison_dir / "mse_overlay.tsv"
    if not mse_path.exists():
        raise ConfigError(f"{comparison_dir} does not look like a comparison directory")

    header, body = _load_table(mse_path)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for col, name in enumerate(header[1:], start=1):
        ax.plot(body[:, 0] * 5.0, body[:, col], marker="o", ms=3, label=name)
    ax.set_xlabel("lead time (minutes)")
    ax.set_ylabel("MSE")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out / "mse_vs_lead.svg"
    fig.savefig(path)
    plt.close(fig)
    written.append(str(path))

    cost_header, cost_rows = _load_mixed_table(comparison_dir / "cost_table.tsv")
    idx = {name: i for i, name in enumerate(cost_header)}
    variants = [r[idx["variant"]] for r in cost_rows]
    gflops = [float(r[idx["total_flops"]]) / 1e9 for r in cost_rows]
    walls = [float(r[idx["wall_mean_s"]]) for r in cost_rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7, 3.2))
    ax1.bar(variants, gflops)
    ax1.set_ylabel("GFLOPs per inference")
    ax1.tick_params(axis="x", rotation=20)
    ax2.bar(variants, walls)
    ax2.set_ylabel("inference time (s)")
    ax2.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    path = out / "cost.svg"
    fig.savefig(path)
    plt.close(fig)
    written.append(str(path))

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.5, 3.2))
    corr_header, corr_rows = _load_mixed_table(comparison_dir / "correlation_overlay.tsv")
    for col, name in enumerate(corr_header[1:], start=1):
        leads = [float(r[0]) * 5.0 for r in corr_rows]
        vals = [float(r[col]) for r in corr_rows]
        ax1.plot(leads, vals, marker="o", ms=3, label=name)
    ax1.set_xlabel("lead time (minutes)")
    ax1.set_ylabel("normalized uncertainty-MSE correlation")
    ax1.legend(fontsize=7)
    rel_header, rel_body = _load_table(comparison_dir / "reliability_overlay.tsv")
    ax2.plot([0, 1], [0, 1], "k--", lw=1)
    for col, name in enumerate(rel_header[1:], start=1):
        ax2.plot(rel_body[:, 0], rel_body[:, col], marker="o", ms=3, label=name)
    ax2.set_xlabel("nominal coverage")
    ax2.set_ylabel("observed coverage")
    ax2.legend(fontsize=7)
    fig.tight_layout()
    path = out / "uncertainty.svg"
    fig.savefig(path)
    plt.close(fig)
    written.append(str(path))

    if report_dir is not None:
        maps_dir = Path(report_dir) / "maps"
        map_paths = sorted(maps_dir.glob("lead-*.tsv"))
        if map_paths:
            columns = ("target", "prediction", "rmse", "uncertainty")
            fig, axes = plt.subplots(len(map_paths), 4,
                                     figsize=(9, 2.2 * len(map_paths)), squeeze=False)
            for row, map_path in enumerate(map_paths):
                header, body = _load_table(map_path)
                h = int(body[:, 0].max()) + 1
                w = int(body[:, 1].max()) + 1
                lead = int(map_path.stem.split("-")[1])
                for col, name in enumerate(columns):
                    grid = body[:, header.index(name)].reshape(h, w)
                    ax = axes[row][col]
                    ax.imshow(grid, cmap="viridis")
                    ax.set_xticks([])
                    ax.set_yticks([])
                    if row == 0:
                        ax.set_title(name, fontsize=9)
                    if col == 0:
                        ax.set_ylabel(f"{lead * 5} min", fontsize=9)
            fig.tight_layout()
            path = out / "error_maps.svg"
            fig.savefig(path)
            plt.close(fig)
            written.append(str(path))
    return written
