"""Matplotlib renderings of the report tables, written next to the CSVs."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

PHASE_COLORS = {"phase1": "tab:gray", "phase2": "tab:blue", "phase3": "tab:orange"}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_pareto(data: Mapping[str, Any], path: Path) -> Path | None:
    rows = data.get("pareto") or []
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(5.5, 4))
    mem = [row["memory_bytes"] / 1024.0 for row in rows]
    perf = [row["performance"] for row in rows]
    ax.plot(mem, perf, "o-", color="tab:blue", label="non-dominated set")
    best = data.get("best")
    if best is not None:
        ax.plot(
            best["memory_bytes"] / 1024.0,
            best["performance"],
            "*",
            markersize=14,
            color="tab:red",
            label="best",
        )
    ax.axvline(data["budget_bytes"] / 1024.0, color="tab:gray", ls="--", lw=1, label="budget")
    ax.set_xlabel("memory (KiB)")
    ax.set_ylabel("performance")
    ax.legend(fontsize=8)
    return _save(fig, path)


def render_trace(data: Mapping[str, Any], path: Path) -> Path | None:
    rows = data.get("trace") or []
    rows = [r for r in rows if r["best_perf"] is not None]
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for phase in ("phase1", "phase2", "phase3"):
        pts = [(r["evals"], r["best_perf"]) for r in rows if r["phase"] == phase]
        if pts:
            ax.step(
                [p[0] for p in pts],
                [p[1] for p in pts],
                where="post",
                marker="o",
                markersize=3,
                color=PHASE_COLORS[phase],
                label=phase,
            )
    ax.set_xlabel("evaluator calls")
    ax.set_ylabel("best performance so far")
    ax.legend(fontsize=8)
    return _save(fig, path)


def render_allocation(data: Mapping[str, Any], path: Path) -> Path | None:
    best = data.get("best")
    if best is None:
        return None
    bits = best["config"]["bits"]
    ranks = best["config"]["ranks"]
    layers = range(len(bits))
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 4.5), sharex=True)
    ax1.bar(layers, bits, color="tab:blue")
    ax1.set_ylabel("bit-width")
    ax2.bar(layers, ranks, color="tab:orange")
    ax2.set_ylabel("adapter rank")
    ax2.set_xlabel("layer")
    return _save(fig, path)


def render_profile(data: Mapping[str, Any], path: Path) -> Path | None:
    profile = data.get("profile")
    if profile is None:
        return None
    scores = profile["scores"]
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.bar(range(len(scores)), scores, color="tab:green")
    ax.set_xlabel("layer")
    ax.set_ylabel("sensitivity score")
    return _save(fig, path)


def render_all(data: Mapping[str, Any], out_dir: Path) -> list[Path]:
    written = []
    for name, renderer in (
        ("pareto.png", render_pareto),
        ("trace.png", render_trace),
        ("allocation.png", render_allocation),
        ("profile.png", render_profile),
    ):
        result = renderer(data, out_dir / name)
        if result is not None:
            written.append(result)
    return written


def render_pilot(results: Mapping[str, Mapping[str, float]], path: Path) -> Path:
    """Bar chart of the four-configuration study."""
    names = list(results)
    perfs = [results[n]["performance"] for n in names]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(names, perfs, color=["tab:red", "tab:green", "tab:orange", "tab:blue"])
    ax.set_ylabel("performance")
    ax.set_xlabel("configuration")
    return _save(fig, path)
