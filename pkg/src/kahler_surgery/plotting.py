"""Figures rendered from a pipeline directory's timeseries.csv (matplotlib, Agg backend)."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .pipeline import BASE_COLUMNS, read_timeseries


def render_figures(run_root, out_dir=None) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    root = Path(run_root)
    out = Path(out_dir) if out_dir is not None else root / "figures"
    out.mkdir(parents=True, exist_ok=True)
    ts = read_timeseries(root / "timeseries.csv")
    t = ts["t"]
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, ts["a"], label="a(t)")
    ax.plot(t, ts["b"], label="b(t)")
    ax.set_xlabel("t")
    ax.set_ylabel("class coefficient")
    ax.legend()
    written.append(_save(fig, out / "class.png"))

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, ts["diam_E"], ".-", label="diam E")
    ax.plot(t, ts["vol"] / ts["vol"][0], ".-", label="volume / initial")
    ax.set_xlabel("t")
    ax.legend()
    written.append(_save(fig, out / "diameter_volume.png"))

    eps = ts["eps_gh"]
    if np.any(np.isfinite(eps)):
        m = np.isfinite(eps)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(t[m], eps[m], "o-")
        ax.set_xlabel("t")
        ax.set_ylabel("GH bound")
        written.append(_save(fig, out / "gh.png"))

    monitors = [k for k in ts if k not in BASE_COLUMNS]
    if monitors:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for k in monitors:
            v = ts[k]
            m = np.isfinite(v)
            if m.any():
                ax.plot(t[m], v[m] / np.median(v[m]), label=k)
        ax.axhline(3.0, color="k", lw=0.8, ls="--")
        ax.set_xlabel("t")
        ax.set_ylabel("value / median of the whole series")
        ax.legend(fontsize=7)
        written.append(_save(fig, out / "monitors.png"))
    return written


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    import matplotlib.pyplot as plt

    plt.close(fig)
    return path
