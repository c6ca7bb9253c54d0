"""Report emission: delimited tables, JSON summaries, and rendered figures.

CSV files use a header row, '.' decimals, and no locale so they diff cleanly
between runs; summary.json carries no timestamps, making byte-identical
output the expected result of repeating a seeded run.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path
from typing import Any, Mapping

from .pipeline import RunReport
from .space import average_bit, average_rank


def _jsonify(value: Any) -> Any:
    """JSON-safe copy: non-finite floats become null."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    return value


def atomic_write(path: Path, data: str | bytes) -> None:
    tmp = path.with_name(f"{path.name}.tmp-{os.getpid()}")
    mode = "wb" if isinstance(data, bytes) else "w"
    try:
        with open(tmp, mode, encoding=None if isinstance(data, bytes) else "utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"failed writing report file {path}: {exc}") from exc


def _csv_text(header: list[str], rows: list[list[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def render(report: RunReport) -> dict[str, Any]:
    """Full JSON-able view of a run; everything the files are derived from."""
    geom = report.geometry
    pareto_rows = []
    for ind in sorted(
        report.pareto, key=lambda i: (i.result.memory_bytes, -i.result.performance)
    ):
        pareto_rows.append(
            {
                "performance": ind.result.performance,
                "memory_bytes": ind.result.memory_bytes,
                "avg_bit": average_bit(ind.config, geom),
                "avg_rank": average_rank(ind.config, geom),
                "config": ind.config.to_wire(),
            }
        )
    data: dict[str, Any] = {
        "status": report.status,
        "seed": report.seed,
        "layers": report.layers,
        "budget_bytes": report.budget_bytes,
        "space": {"bits": list(report.space.bits), "ranks": list(report.space.ranks)},
        "phases": report.phases,
        "profile": None
        if report.profile is None
        else {
            "scores": list(report.profile.scores),
            "normalized": list(report.profile.normalized),
            "uniform_fallback": report.profile.uniform_fallback,
        },
        "trace": [
            {"phase": r.phase, "step": r.step, "best_perf": r.best_perf, "evals": r.evals}
            for r in report.trace
        ],
        "bo_rounds": [
            {
                "front_index": r.front_index,
                "round": r.round,
                "config": r.config.to_wire(),
                "ei": r.ei,
                "performance": r.performance,
                "failed": r.failed,
            }
            for r in report.bo_rounds
        ],
        "pareto": pareto_rows,
        "best": report.best_summary(),
        "baseline_uniform": report.baseline_uniform,
        "pearson_bits_sensitivity": report.pearson_bits_sensitivity,
        "pearson_note": report.pearson_note,
        "counters": {
            "evaluator_calls": report.counters.evaluate_calls,
            "total_proxy_steps": report.counters.total_proxy_steps,
            "failures": report.counters.failures,
            "distribution_calls": report.counters.distribution_calls,
            "baseline_evaluations": report.baseline_evaluations,
        },
    }
    return _jsonify(data)


def summary_from_data(data: Mapping[str, Any]) -> dict[str, Any]:
    return {
        "status": data["status"],
        "seed": data["seed"],
        "layers": data["layers"],
        "budget_bytes": data["budget_bytes"],
        "space": data["space"],
        "phases": data["phases"],
        "best": data["best"],
        "baseline_uniform": data["baseline_uniform"],
        "pearson_bits_sensitivity": data["pearson_bits_sensitivity"],
        "pearson_note": data["pearson_note"],
        "pareto_size": len(data["pareto"]),
        "counters": data["counters"],
    }


def emit_from_data(data: Mapping[str, Any], out_dir: str | Path, figures: bool = True) -> list[Path]:
    """Write every report artifact derived from the rendered run data."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(name: str, text: str | bytes) -> None:
        path = out / name
        atomic_write(path, text)
        written.append(path)

    emit("report.json", json.dumps(data, indent=2, sort_keys=True) + "\n")
    emit(
        "summary.json",
        json.dumps(summary_from_data(data), indent=2, sort_keys=True) + "\n",
    )

    profile = data.get("profile")
    profile_rows = []
    if profile is not None:
        profile_rows = [
            [i, s, p]
            for i, (s, p) in enumerate(zip(profile["scores"], profile["normalized"]))
        ]
    emit("profile.csv", _csv_text(["layer", "score", "normalized"], profile_rows))

    emit(
        "trace.csv",
        _csv_text(
            ["phase", "step", "best_perf", "evals"],
            [[r["phase"], r["step"], r["best_perf"], r["evals"]] for r in data["trace"]],
        ),
    )

    emit(
        "pareto.csv",
        _csv_text(
            ["performance", "memory_bytes", "avg_bit", "avg_rank", "config"],
            [
                [
                    row["performance"],
                    row["memory_bytes"],
                    row["avg_bit"],
                    row["avg_rank"],
                    json.dumps(row["config"], sort_keys=True),
                ]
                for row in data["pareto"]
            ],
        ),
    )

    best = data.get("best")
    alloc_rows = []
    if best is not None:
        config = best["config"]
        alloc_rows = [
            [i, b, r] for i, (b, r) in enumerate(zip(config["bits"], config["ranks"]))
        ]
        emit("best_config.json", json.dumps(config, indent=2, sort_keys=True) + "\n")
    emit("allocation.csv", _csv_text(["layer", "bit", "rank"], alloc_rows))

    if figures:
        from . import figures as fig

        written.extend(fig.render_all(data, out))
    return written


def emit_reports(report: RunReport, out_dir: str | Path, figures: bool = True) -> list[Path]:
    return emit_from_data(render(report), out_dir, figures=figures)


def load_report_data(path: str | Path) -> dict[str, Any]:
    """Read back a report.json produced by emit_reports."""
    p = Path(path)
    if p.is_dir():
        p = p / "report.json"
    with open(p, encoding="utf-8") as fh:
        return json.load(fh)
