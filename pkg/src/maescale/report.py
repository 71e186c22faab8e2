"""Report emission: points CSV, fits JSON, scenario table, and SVG charts.

Each chart plots accuracy against data amount on a logarithmic horizontal
axis, one point series and fitted curve per model size, with a dashed
human-level line at 90 and a color legend. The SVG is written directly so the
structure stays predictable: exactly one line element carries the
"human-level" class.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .harness import RunLedger
from .scaling import CanonicalScalingParams, FitResult, clamp_pct, fit_result_to_dict, predict
from .scenarios import HUMAN_LEVEL_PCT, ScenarioSpec, evaluate_scenario

SERIES_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _svg_header(width: int, height: int) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]


def render_scaling_svg(title: str, series: list[dict], threshold_pct: float = HUMAN_LEVEL_PCT,
                       width: int = 720, height: int = 520) -> str:
    """Render one chart.

    Each series dict carries: name, color, points (list of (i, accuracy)),
    and optionally params (CanonicalScalingParams) with curve_ppi, the
    resolution at which the fitted curve is traced.
    """
    margin_l, margin_r, margin_t, margin_b = 70, 30, 50, 55
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    all_i = [i for s in series for i, _ in s["points"]]
    if not all_i:
        raise ValueError("no points to plot")
    lo = math.floor(math.log10(min(all_i)))
    hi = math.ceil(math.log10(max(all_i)))
    if hi == lo:
        hi = lo + 1

    def x_of(i: float) -> float:
        return margin_l + (math.log10(i) - lo) / (hi - lo) * plot_w

    def y_of(acc: float) -> float:
        return margin_t + (100.0 - min(max(acc, 0.0), 100.0)) / 100.0 * plot_h

    parts = _svg_header(width, height)
    parts.append(f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="16">{title}</text>')
    parts.append(f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" '
                 f'fill="none" stroke="#333" stroke-width="1"/>')

    for decade in range(lo, hi + 1):
        x = x_of(10.0**decade)
        parts.append(f'<line x1="{x:.1f}" y1="{margin_t}" x2="{x:.1f}" '
                     f'y2="{margin_t + plot_h}" stroke="#ddd" stroke-width="1"/>')
        parts.append(f'<text x="{x:.1f}" y="{margin_t + plot_h + 18}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">10^{decade}</text>')
    for acc in range(0, 101, 20):
        y = y_of(acc)
        parts.append(f'<line x1="{margin_l}" y1="{y:.1f}" x2="{margin_l + plot_w}" '
                     f'y2="{y:.1f}" stroke="#eee" stroke-width="1"/>')
        parts.append(f'<text x="{margin_l - 8}" y="{y + 4:.1f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{acc}</text>')
    parts.append(f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 12}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12">data amount (thousands of images, log scale)</text>')
    parts.append(f'<text x="18" y="{margin_t + plot_h / 2:.1f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12" '
                 f'transform="rotate(-90 18 {margin_t + plot_h / 2:.1f})">validation accuracy (%)</text>')

    y_threshold = y_of(threshold_pct)
    parts.append(f'<line class="human-level" x1="{margin_l}" y1="{y_threshold:.1f}" '
                 f'x2="{margin_l + plot_w}" y2="{y_threshold:.1f}" stroke="#444" '
                 f'stroke-width="1.5" stroke-dasharray="7,5"/>')
    parts.append(f'<text x="{margin_l + 6}" y="{y_threshold - 6:.1f}" '
                 f'font-family="sans-serif" font-size="11" fill="#444">human level</text>')

    for s in series:
        color = s["color"]
        params: CanonicalScalingParams | None = s.get("params")
        if params is not None:
            curve_ppi = s["curve_ppi"]
            xs = np.logspace(lo, hi, 120)
            coords = " ".join(
                f"{x_of(float(x)):.1f},{y_of(predict(params, float(x), curve_ppi)):.1f}"
                for x in xs
            )
            parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                         f'stroke-width="1.6"/>')
        for i, acc in s["points"]:
            parts.append(f'<circle cx="{x_of(i):.1f}" cy="{y_of(acc):.1f}" r="3.5" '
                         f'fill="{color}" fill-opacity="0.8"/>')

    legend_x = margin_l + plot_w - 130
    legend_y = margin_t + 12
    for idx, s in enumerate(series):
        y = legend_y + idx * 18
        parts.append(f'<rect x="{legend_x}" y="{y - 9}" width="12" height="12" fill="{s["color"]}"/>')
        parts.append(f'<text x="{legend_x + 18}" y="{y + 1}" font-family="sans-serif" '
                     f'font-size="12">{s["name"]}</text>')

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_fits_json(path: str | Path, fits: dict[tuple[str, str], FitResult]) -> None:
    payload = {
        "fits": [
            {"model_name": model, "protocol": protocol, **fit_result_to_dict(result)}
            for (model, protocol), result in sorted(fits.items())
        ]
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_fits_json(path: str | Path) -> dict[tuple[str, str], FitResult]:
    from .scaling import fit_result_from_dict

    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    fits = {}
    for entry in payload["fits"]:
        fits[(entry["model_name"], entry["protocol"])] = fit_result_from_dict(entry)
    return fits


POINTS_CSV_HEADER = ["model_name", "protocol", "fraction", "repeat_index", "resolution",
                     "i_thousands", "accuracy_pct", "final_train_loss"]


def write_points_csv(path: str | Path, ledger: RunLedger) -> int:
    rows = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(POINTS_CSV_HEADER)
        for r in ledger.ok_results():
            writer.writerow([r.cell.model_name, r.cell.protocol.value, repr(r.cell.fraction),
                             r.cell.repeat_index, r.cell.resolution, repr(r.i_thousands),
                             repr(r.accuracy_pct), repr(r.final_train_loss)])
            rows += 1
    return rows


SCENARIO_REPORT_HEADER = ["label", "i_thousands", "ppi", "param_count", "expected_pct",
                          "model_name", "protocol", "predicted_pct", "clamped_pct",
                          "human_level", "residual_vs_expected"]


def write_scenario_report(path: str | Path, fits: dict[tuple[str, str], FitResult],
                          scenarios: list[ScenarioSpec]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCENARIO_REPORT_HEADER)
        for (model, protocol), result in sorted(fits.items()):
            for spec in scenarios:
                outcome = evaluate_scenario(result.params, spec)
                residual = "" if outcome.residual_vs_expected is None else repr(outcome.residual_vs_expected)
                expected = "" if spec.expected_precision_pct is None else repr(spec.expected_precision_pct)
                writer.writerow([spec.label, repr(spec.i), repr(spec.ppi), repr(spec.param_count),
                                 expected, model, protocol, repr(outcome.predicted_pct),
                                 repr(outcome.clamped_pct), str(outcome.human_level).lower(),
                                 residual])


def emit_report(ledger: RunLedger, fits: dict[tuple[str, str], FitResult],
                scenarios: list[ScenarioSpec], out_dir: str | Path) -> list[Path]:
    """Write points.csv, fits.json, one SVG per protocol, and scenarios.csv."""
    if not fits:
        raise ValueError("no fits to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    points_path = out / "points.csv"
    write_points_csv(points_path, ledger)
    written.append(points_path)

    fits_path = out / "fits.json"
    write_fits_json(fits_path, fits)
    written.append(fits_path)

    protocols = sorted({protocol for _, protocol in fits})
    for protocol in protocols:
        series = []
        models = sorted({model for model, proto in fits if proto == protocol})
        for idx, model in enumerate(models):
            result = fits[(model, protocol)]
            points = [
                (r.i_thousands, r.accuracy_pct)
                for r in ledger.ok_results()
                if r.cell.model_name == model and r.cell.protocol.value == protocol
            ]
            ppis = [float(r.cell.resolution) for r in ledger.ok_results()
                    if r.cell.model_name == model and r.cell.protocol.value == protocol]
            curve_ppi = float(np.exp(np.mean(np.log(ppis)))) if ppis else 1.0
            series.append({
                "name": model,
                "color": SERIES_COLORS[idx % len(SERIES_COLORS)],
                "points": points,
                "params": result.params,
                "curve_ppi": curve_ppi,
            })
        svg_path = out / f"accuracy_{protocol}.svg"
        svg_path.write_text(render_scaling_svg(f"accuracy vs data amount ({protocol})", series),
                            encoding="utf-8")
        written.append(svg_path)

    scenarios_path = out / "scenarios.csv"
    write_scenario_report(scenarios_path, fits, scenarios)
    written.append(scenarios_path)
    return written
