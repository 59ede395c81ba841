"""Tidy plot-data CSVs and a minimal static SVG renderer.

Every emitter produces one row per (x, series, y, ci_lo, ci_hi) with
dataset-level facts (trend slopes, sample sizes) in `# key=value` header
lines, so the CSVs are directly consumable by external plotting tools.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _stats

from .errors import ConfigError
from .glm import FitResult
from .report import format_percent, truncate_decimal

PLOT_KINDS = ("trajectories", "movement_prob", "engagement_by_rank",
              "cut_points", "next_rank_variance")

CSV_HEADER = "x,series,y,ci_lo,ci_hi"


@dataclass
class PlotData:
    kind: str
    rows: list[tuple]  # (x, series, y, ci_lo, ci_hi)
    metadata: dict = field(default_factory=dict)

    def to_csv_text(self) -> str:
        lines = [f"# {k}={v}" for k, v in self.metadata.items()]
        lines.append(CSV_HEADER)
        for x, series, y, lo, hi in self.rows:
            lo_s = "" if lo is None else f"{lo:.6g}"
            hi_s = "" if hi is None else f"{hi:.6g}"
            lines.append(f"{x:.6g},{series},{y:.6g},{lo_s},{hi_s}")
        return "\n".join(lines) + "\n"

    def series_names(self) -> list[str]:
        seen = []
        for _, s, *_ in self.rows:
            if s not in seen:
                seen.append(s)
        return seen


def plot_trajectories(snapshots, n_posts: int = 10, min_obs: int = 5) -> PlotData:
    """Rank paths of the first posts to enter the feed, hours from entry."""
    first_seen: dict[str, int] = {}
    series: dict[str, list[tuple[int, int]]] = {}
    for snap in snapshots:
        for p in snap.posts:
            if p.post_id not in first_seen:
                first_seen[p.post_id] = snap.captured_at
            series.setdefault(p.post_id, []).append((snap.captured_at, p.rank))
    eligible = sorted(
        (pid for pid, obs in series.items() if len(obs) >= min_obs),
        key=lambda pid: (first_seen[pid], pid))
    rows = []
    for pid in eligible[:n_posts]:
        t0 = first_seen[pid]
        for t, rank in series[pid]:
            rows.append(((t - t0) / 3_600_000.0, pid, float(rank), None, None))
    if not rows:
        raise ConfigError("no posts with enough observations for trajectories")
    return PlotData("trajectories", rows, {"n_posts": len(eligible[:n_posts])})


def _linear_predictor(fit: FitResult, prefix: str, scaled_means: dict) -> float:
    total = 0.0
    for nm, mean in scaled_means.items():
        total += fit.coefficients.get(prefix + nm, 0.0) * mean
    return total


def plot_movement_prob(fit: FitResult) -> PlotData:
    """Up/down movement probabilities by rank for a reference post.

    Needs a movement fit whose extras carry `ranks` and `scaled_means`.
    """
    if fit.model != "multinomial" or "ranks" not in fit.extra:
        raise ConfigError("movement_prob needs the rank-profiled movement fit")
    ranks = fit.extra["ranks"]
    means = fit.extra["scaled_means"]
    rows = []
    for r in ranks:
        etas = {}
        for cat in ("up", "down"):
            eta = fit.coefficients.get(f"{cat}:intercept", 0.0)
            eta += fit.coefficients.get(f"{cat}:rank_{r}", 0.0)
            eta += _linear_predictor(fit, f"{cat}:", means)
            etas[cat] = eta
        denom = 1.0 + math.exp(etas["up"]) + math.exp(etas["down"])
        for cat in ("up", "down"):
            rows.append((float(r), cat, math.exp(etas[cat]) / denom, None, None))
    return PlotData("movement_prob", rows, {"n_obs": fit.n_obs})


def plot_engagement_by_rank(fit: FitResult, tick_minutes: float = 2.0) -> PlotData:
    """Per-rank expected comment gains and the undesired ratio.

    Series `non_undesired` is the expected non-undesired comments gained in
    one tick window at each rank for a post with average scaled features;
    `undesired_ratio` is the expected undesired : non-undesired ratio. The
    header carries the linear trend of the ratio (percent per rank).
    """
    if fit.model != "negbin" or "ranks" not in fit.extra:
        raise ConfigError("engagement_by_rank needs the rank-profiled negbin fit")
    ranks = fit.extra["ranks"]
    means = fit.extra["scaled_means"]
    base = _linear_predictor(fit, "", means) + math.log(tick_minutes)
    ratio_base = _linear_predictor(fit, "und_x_", means)
    rows = []
    ratio_pct = []
    for r in ranks:
        b = fit.coefficients.get(f"rank_{r}")
        se = fit.standard_errors.get(f"rank_{r}", 0.0)
        if b is None:
            continue
        y = math.exp(b + base)
        rows.append((float(r), "non_undesired", y,
                     math.exp(b - 1.96 * se + base),
                     math.exp(b + 1.96 * se + base)))
    for r in ranks:
        b = fit.coefficients.get(f"und_x_rank_{r}")
        se = fit.standard_errors.get(f"und_x_rank_{r}", 0.0)
        if b is None:
            continue
        ratio = math.exp(b + ratio_base)
        ratio_pct.append((r, ratio * 100.0))
        rows.append((float(r), "undesired_ratio", ratio,
                     math.exp(b - 1.96 * se + ratio_base),
                     math.exp(b + 1.96 * se + ratio_base)))
    meta = {}
    if len(ratio_pct) >= 3:
        xs = np.array([r for r, _ in ratio_pct], dtype=float)
        ys = np.array([v for _, v in ratio_pct], dtype=float)
        trend = _stats.linregress(xs, ys)
        meta["trend_slope_pct_per_rank"] = f"{truncate_decimal(trend.slope, 4):g}"
        meta["trend_p_value"] = f"{trend.pvalue:.4g}"
        meta["trend_label"] = (
            f"{format_percent(abs(trend.slope), 3)} per rank")
    return PlotData("engagement_by_rank", rows, meta)


def plot_cut_points(posterior) -> PlotData:
    """Posterior cut-point means with 95% bands plus adjacent-rank gaps."""
    means = posterior.cut_point_means()
    lo, hi = posterior.cut_point_ci()
    rows = []
    for k in range(len(means)):
        rows.append((float(k + 1), "cut_point", float(means[k]),
                     float(lo[k]), float(hi[k])))
    for k in range(1, len(means)):
        rows.append((float(k + 1), "gap", float(means[k] - means[k - 1]),
                     None, None))
    return PlotData("cut_points", rows, {"n_ranks": len(means)})


def plot_next_rank_variance(rows, outcomes) -> PlotData:
    """Empirical variance of the observed next rank, by current rank."""
    groups: dict[int, list[int]] = {}
    for row, out in zip(rows, outcomes):
        if out.next_rank is not None:
            groups.setdefault(row.rank, []).append(out.next_rank)
    out_rows = []
    for rank in sorted(groups):
        vals = groups[rank]
        if len(vals) >= 2:
            out_rows.append((float(rank), "variance",
                             float(np.var(vals, ddof=1)), None, None))
    if not out_rows:
        raise ConfigError("no ranks with enough next-rank observations")
    return PlotData("next_rank_variance", out_rows, {})


def emit_plot_data(kind: str, out_path, svg_path=None, **sources) -> PlotData:
    """Build one plot kind from its source objects and write CSV (+SVG)."""
    if kind == "trajectories":
        data = plot_trajectories(sources["snapshots"],
                                 n_posts=sources.get("n_posts", 10))
    elif kind == "movement_prob":
        data = plot_movement_prob(sources["fit"])
    elif kind == "engagement_by_rank":
        data = plot_engagement_by_rank(
            sources["fit"], tick_minutes=sources.get("tick_minutes", 2.0))
    elif kind == "cut_points":
        data = plot_cut_points(sources["posterior"])
    elif kind == "next_rank_variance":
        data = plot_next_rank_variance(sources["rows"], sources["outcomes"])
    else:
        raise ConfigError(f"unknown plot kind {kind!r}; expected {PLOT_KINDS}")
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(data.to_csv_text())
    if svg_path is not None:
        invert = kind == "trajectories"
        with open(svg_path, "w", encoding="utf-8") as fh:
            fh.write(render_svg(data, invert_y=invert))
    return data


# ---------------------------------------------------------------------------
# minimal SVG line plotter


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    for mult in (1, 2, 2.5, 5, 10):
        if mag * mult >= raw:
            step = mag * mult
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9:
        ticks.append(round(t, 10))
        t += step
    return ticks


def render_svg(data: PlotData, width: int = 720, height: int = 440,
               invert_y: bool = False) -> str:
    """Static SVG: one polyline per series, optional error bars, axes, legend."""
    margin_l, margin_r, margin_t, margin_b = 60, 150, 30, 45
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b
    xs = [r[0] for r in data.rows]
    ys = [r[2] for r in data.rows]
    ylo = [r[3] for r in data.rows if r[3] is not None]
    yhi = [r[4] for r in data.rows if r[4] is not None]
    x_min, x_max = min(xs), max(xs)
    y_min = min(ys + ylo) if ylo else min(ys)
    y_max = max(ys + yhi) if yhi else max(ys)
    if x_max == x_min:
        x_max = x_min + 1.0
    if y_max == y_min:
        y_max = y_min + 1.0
    pad = 0.05 * (y_max - y_min)
    y_min -= pad
    y_max += pad

    def sx(x: float) -> float:
        return margin_l + (x - x_min) / (x_max - x_min) * plot_w

    def sy(y: float) -> float:
        frac = (y - y_min) / (y_max - y_min)
        if invert_y:
            frac = 1.0 - frac
        return margin_t + (1.0 - frac) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#333"/>',
    ]
    for t in _ticks(x_min, x_max):
        if x_min <= t <= x_max:
            px = sx(t)
            parts.append(f'<line x1="{px:.1f}" y1="{margin_t + plot_h}" '
                         f'x2="{px:.1f}" y2="{margin_t + plot_h + 5}" stroke="#333"/>')
            parts.append(f'<text x="{px:.1f}" y="{margin_t + plot_h + 18}" '
                         f'font-size="11" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y_min, y_max):
        if y_min <= t <= y_max:
            py = sy(t)
            parts.append(f'<line x1="{margin_l - 5}" y1="{py:.1f}" '
                         f'x2="{margin_l}" y2="{py:.1f}" stroke="#333"/>')
            parts.append(f'<text x="{margin_l - 8}" y="{py + 4:.1f}" '
                         f'font-size="11" text-anchor="end">{t:g}</text>')

    for si, series in enumerate(data.series_names()):
        color = _PALETTE[si % len(_PALETTE)]
        pts = [(r[0], r[2], r[3], r[4]) for r in data.rows if r[1] == series]
        pts.sort(key=lambda p: p[0])
        path = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y, _, _ in pts)
        parts.append(f'<polyline points="{path}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        for x, y, lo, hi in pts:
            if lo is not None and hi is not None:
                parts.append(
                    f'<line x1="{sx(x):.1f}" y1="{sy(lo):.1f}" '
                    f'x2="{sx(x):.1f}" y2="{sy(hi):.1f}" '
                    f'stroke="{color}" stroke-width="0.8" opacity="0.6"/>')
            parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2" '
                         f'fill="{color}"/>')
        ly = margin_t + 14 + 16 * si
        lx = margin_l + plot_w + 10
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 22}" y="{ly}" font-size="11">'
                     f'{series[:18]}</text>')
    title = data.metadata.get("trend_label", data.kind)
    parts.append(f'<text x="{margin_l}" y="{margin_t - 10}" font-size="12" '
                 f'font-weight="bold">{data.kind}: {title}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
