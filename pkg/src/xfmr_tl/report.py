"""Charts from ``results.csv``: four SVG line charts, each with a backing CSV.

* dynamics: validation R^2 per epoch at 1% target density (else the sparsest),
  one curve per source density (0 = no transfer), seed-averaged.
* ri_by_density: RI versus target density, one curve per source density.
* best_ri_matched: best RI versus target density, matched vs non-matched grid.
* r2_transfer: best-transfer vs non-transfer R^2_test versus target density.

Every chart has one panel per target grid. Output is a pure function of the
input files, so reruns are byte-identical.
"""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .harness.experiment import history_name, read_results, write_csv
from .harness.runner import read_history
from .harness.tables import best_ri, best_transfer_r2, compute_ri_table, mean_r2

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]
PANEL_W, PANEL_H = 320, 240
MARGIN = dict(left=52, right=12, top=28, bottom=40)


class ReportError(ValueError):
    pass


def _n(v: float) -> str:
    return f"{v:.2f}"


def _nice_range(lo, hi):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return 0.0, 1.0
    if hi - lo < 1e-12:
        return lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_chart(panels: list[dict], title: str, xlabel: str, ylabel: str,
               logx: bool = False) -> str:
    """Render panels of line series as one SVG document.

    A panel is {"title": str, "series": [(label, xs, ys), ...]}; ``None`` y
    values break a line.
    """
    ncol = min(2, max(1, len(panels)))
    nrow = max(1, math.ceil(len(panels) / ncol))
    legend_h = 24
    width, height = ncol * PANEL_W, nrow * PANEL_H + 30 + legend_h
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">'
           f'{escape(title)}</text>']
    labels = []
    for p in panels:
        for label, _, _ in p["series"]:
            if label not in labels:
                labels.append(label)
    color = {lab: PALETTE[i % len(PALETTE)] for i, lab in enumerate(labels)}

    fx = (lambda x: math.log10(x)) if logx else (lambda x: x)
    for k, p in enumerate(panels):
        ox, oy = (k % ncol) * PANEL_W, 30 + (k // ncol) * PANEL_H
        x0, x1 = ox + MARGIN["left"], ox + PANEL_W - MARGIN["right"]
        y0, y1 = oy + PANEL_H - MARGIN["bottom"], oy + MARGIN["top"]
        xs_all = [fx(x) for _, xs, _ in p["series"] for x in xs]
        ys_all = [y for _, _, ys in p["series"] for y in ys if y is not None]
        xlo, xhi = _nice_range(min(xs_all, default=0.0), max(xs_all, default=1.0))
        ylo, yhi = _nice_range(min(ys_all, default=0.0), max(ys_all, default=1.0))

        def px(x):
            return x0 + (fx(x) - xlo) / (xhi - xlo) * (x1 - x0)

        def py(y):
            return y0 - (y - ylo) / (yhi - ylo) * (y0 - y1)

        out.append(f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" '
                   f'fill="none" stroke="#444"/>')
        out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{oy + 16}" text-anchor="middle">'
                   f'{escape(p["title"])}</text>')
        for t in np.linspace(ylo, yhi, 5):
            out.append(f'<line x1="{x0}" x2="{x1}" y1="{_n(py(t))}" y2="{_n(py(t))}" '
                       f'stroke="#ddd"/>')
            out.append(f'<text x="{x0 - 4}" y="{_n(py(t) + 3)}" text-anchor="end">'
                       f'{t:.3g}</text>')
        ticks = sorted({x for _, xs, _ in p["series"] for x in xs})
        if len(ticks) > 8:
            ticks = ticks[:: math.ceil(len(ticks) / 8)]
        for t in ticks:
            out.append(f'<text x="{_n(px(t))}" y="{y0 + 12}" text-anchor="middle">{t:g}</text>')
        if ylo < 0 < yhi:
            out.append(f'<line x1="{x0}" x2="{x1}" y1="{_n(py(0))}" y2="{_n(py(0))}" '
                       f'stroke="#888" stroke-dasharray="3,3"/>')
        out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{y0 + 26}" text-anchor="middle">'
                   f'{escape(xlabel)}</text>')
        out.append(f'<text transform="translate({ox + 12},{(y0 + y1) / 2:.1f}) rotate(-90)" '
                   f'text-anchor="middle">{escape(ylabel)}</text>')
        for label, xs, ys in p["series"]:
            segs, cur = [], []
            for x, y in zip(xs, ys):
                if y is None:
                    if cur:
                        segs.append(cur)
                    cur = []
                else:
                    cur.append(f"{_n(px(x))},{_n(py(y))}")
            if cur:
                segs.append(cur)
            for seg in segs:
                out.append(f'<polyline fill="none" stroke="{color[label]}" stroke-width="1.5" '
                           f'points="{" ".join(seg)}"/>')
                if len(seg) < 20:
                    for pt in seg:
                        cx, cy = pt.split(",")
                        out.append(f'<circle cx="{cx}" cy="{cy}" r="2" fill="{color[label]}"/>')
    ly = height - legend_h + 14
    for i, lab in enumerate(labels):
        lx = 10 + i * 110
        out.append(f'<line x1="{lx}" x2="{lx + 18}" y1="{ly - 3}" y2="{ly - 3}" '
                   f'stroke="{color[lab]}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 22}" y="{ly}">{escape(lab)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _src_label(sd: float) -> str:
    return "no transfer" if sd == 0 else f"source {sd:g}"


def _grids(records):
    return sorted({r.grid for r in records})


def dynamics_data(records, hist_dir: Path):
    """Seed-mean validation curves at 1% target density (non-matched)."""
    rows, panels = [], []
    ok = [r for r in records if not r.matched and r.status == "ok"]
    for grid in _grids(ok):
        tds = sorted({r.target_density for r in ok if r.grid == grid and r.source_density > 0})
        if not tds:
            continue
        td = 0.01 if 0.01 in tds else tds[0]
        series = []
        for sd in sorted({r.source_density for r in ok if r.grid == grid}):
            curves = []
            for r in ok:
                if (r.grid, r.target_density, r.source_density) != (grid, td, sd):
                    continue
                path = hist_dir / history_name(grid, False, td, sd, r.seed)
                if path.exists():
                    curves.append([h["val_r2"] for h in read_history(path)])
            if not curves:
                continue
            n = min(len(c) for c in curves)
            mean = np.mean([c[:n] for c in curves], axis=0)
            epochs = list(range(n))
            ys = [float(m) if math.isfinite(m) else None for m in mean]
            series.append((_src_label(sd), epochs, ys))
            rows += [{"grid": grid, "target_density": td, "source_density": sd, "epoch": e,
                      "val_r2_mean": y, "n_seeds": len(curves)} for e, y in zip(epochs, ys)]
        panels.append({"title": f"{grid} @ {td:g}", "series": series})
    return panels, rows


def ri_data(records):
    table = [r for r in compute_ri_table(records) if not r["matched"]]
    panels = []
    for grid in _grids(records):
        series = []
        for sd in sorted({r["source_density"] for r in table if r["grid"] == grid}):
            pts = sorted((r["target_density"], r["ri_mean"]) for r in table
                         if r["grid"] == grid and r["source_density"] == sd)
            series.append((_src_label(sd), [p[0] for p in pts], [p[1] for p in pts]))
        if series:
            panels.append({"title": grid, "series": series})
    return panels, table


def best_ri_data(records):
    table = best_ri(records)
    panels = []
    for grid in _grids(records):
        series = []
        for matched in (False, True):
            pts = sorted((r["target_density"], r["best_ri"]) for r in table
                         if r["grid"] == grid and r["matched"] == matched)
            if pts:
                series.append(("matched grid" if matched else "non-matched",
                               [p[0] for p in pts], [p[1] for p in pts]))
        if series:
            panels.append({"title": grid, "series": series})
    return panels, table


def r2_data(records):
    means = mean_r2(records)
    rows, panels = [], []
    for grid in _grids(records):
        tds = sorted({k[2] for k in means if k[0] == grid and not k[1] and k[3] > 0})
        base, best = [], []
        for td in tds:
            b = means.get((grid, False, td, 0.0))
            t, sd = best_transfer_r2(records, grid, td, False)
            base.append(b)
            best.append(t)
            rows.append({"grid": grid, "target_density": td, "r2_non_transfer": b,
                         "r2_best_transfer": t, "best_source_density": sd})
        if tds:
            panels.append({"title": grid, "series": [("no transfer", tds, base),
                                                     ("best transfer", tds, best)]})
    return panels, rows


def write_report(results_path, out_dir) -> list[Path]:
    """Write the four charts and their CSVs; returns the paths written."""
    results_path = Path(results_path)
    records = read_results(results_path)
    if not records:
        raise ReportError(f"no records in {results_path}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hist_dir = results_path.parent / "histories"
    written = []

    def emit(stem, panels, rows, columns, title, xlabel, ylabel, logx):
        svg = out / f"{stem}.svg"
        svg.write_text(line_chart(panels, title, xlabel, ylabel, logx))
        write_csv(out / f"{stem}.csv", rows, columns)
        written.extend([svg, out / f"{stem}.csv"])

    emit("dynamics", *dynamics_data(records, hist_dir),
         ["grid", "target_density", "source_density", "epoch", "val_r2_mean", "n_seeds"],
         "Training dynamics (validation R^2)", "epoch", "R^2 val", False)
    emit("ri_by_density", *ri_data(records),
         ["grid", "matched", "target_density", "source_density", "ri_mean", "ri_min",
          "ri_max", "n_seeds", "n_defined"],
         "Relative improvement by source density", "target density", "RI %", True)
    emit("best_ri_matched", *best_ri_data(records),
         ["grid", "matched", "target_density", "best_ri", "best_source_density"],
         "Best RI: matched vs non-matched grid", "target density", "best RI %", True)
    emit("r2_transfer", *r2_data(records),
         ["grid", "target_density", "r2_non_transfer", "r2_best_transfer",
          "best_source_density"],
         "Target R^2 with and without transfer", "target density", "R^2 test", True)
    return written

