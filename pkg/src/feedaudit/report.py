"""Paper-style tables and number formatting.

Percent cells render the stored full-precision coefficient as
(e^b - 1) * 100, truncated toward zero at the displayed precision; files
always carry full precision, so no rounding ever feeds back into analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .bayes.summary import PosteriorSummary
from .errors import ConfigError
from .glm import FitResult

TABLE_STYLES = ("table1", "table2", "table3", "table4", "table5", "table6")

FEATURE_DISPLAY = [
    ("content_link", "Link (vs. image)"),
    ("content_text", "Text (vs. image)"),
    ("content_video", "Video (vs. image)"),
    ("age_hours", "Age"),
    ("num_comments", "Num. Comments"),
    ("recent_comments", "Rec. Comments"),
    ("prop_undesired", "Prop. Undesired"),
    ("prop_recent_undesired", "Prop. Rec. Undesired"),
    ("score", "Score"),
    ("recent_votes", "Rec. Votes"),
    ("prop_upvotes", "Prop. Upvotes"),
    ("num_subscribers", "Num. Subscribers"),
]

STAT_DISPLAY = [
    ("age_hours", "Age (hours)"),
    ("num_comments", "Num. Comments"),
    ("recent_comments", "Rec. Comments"),
    ("prop_undesired", "Prop. Undesired"),
    ("prop_recent_undesired", "Rec. Prop. Undesired"),
    ("score", "Score"),
    ("recent_votes", "Rec. Votes"),
    ("prop_upvotes", "Prop. Upvotes"),
    ("num_subscribers", "Num. Subscribers"),
]

VARIABLE_DISPLAY = {
    "recent_comments": "Rec. Comments",
    "recent_prop_undesired": "Prop. Und.",
    "rank_movement": "Rank Movement",
}


def truncate_decimal(value: float, decimals: int = 2) -> float:
    """Truncate toward zero at `decimals`, with a tiny guard against float
    representation error (so 100.00000000000003 stays 100.0)."""
    scale = 10 ** decimals
    shifted = value * scale
    eps = 1e-9 * max(1.0, abs(shifted))
    adjusted = shifted + eps if shifted >= 0 else shifted - eps
    return math.trunc(adjusted) / scale


def format_percent(value: float, decimals: int = 2, explicit_plus: bool = False) -> str:
    v = truncate_decimal(value, decimals)
    text = f"{v:.{decimals}f}%"
    if explicit_plus and v > 0:
        text = "+" + text
    return text


def percent_from_coef(beta: float) -> float:
    return (math.exp(beta) - 1.0) * 100.0


def format_coef_percent(beta: float, significant: bool = False,
                        decimals: int = 2, explicit_plus: bool = False) -> str:
    text = format_percent(percent_from_coef(beta), decimals, explicit_plus)
    return text + ("*" if significant else "")


def format_compact(value: float, decimals: int = 3) -> str:
    """Table-style magnitudes: 3411000 -> 3.411M, 13697 -> 13.697K, 864 -> 864."""
    if value >= 1e6:
        return f"{value / 1e6:.{decimals}f}M"
    if value >= 1e4:
        return f"{value / 1e3:.{decimals}f}K"
    if value == int(value):
        return str(int(value))
    return f"{value:.{decimals}f}"


def format_effect_sentence(summary: PosteriorSummary) -> str:
    m = format_percent(summary.effect_mean)
    lo = format_percent(summary.ci95[0])
    hi = format_percent(summary.ci95[1])
    return f"mean={m}, CI[{lo}, {hi}]"


def format_rope_sentence(summary: PosteriorSummary) -> str:
    return f"({format_percent(summary.rope_prob * 100.0)} in ROPE)"


def format_pd(summary: PosteriorSummary) -> str:
    if summary.pd > 0.9998:
        return ">99.98%"
    return format_percent(summary.pd * 100.0)


@dataclass
class ReportTable:
    title: str
    columns: list[str]
    rows: list[list[str]]
    legend: str = ""
    metadata: dict = field(default_factory=dict)

    def to_csv_text(self) -> str:
        def esc(cell: str) -> str:
            if any(ch in cell for ch in ",\"\n"):
                return '"' + cell.replace('"', '""') + '"'
            return cell

        lines = [",".join(esc(c) for c in self.columns)]
        lines.extend(",".join(esc(c) for c in row) for row in self.rows)
        if self.legend:
            lines.append(esc(f"# {self.legend}"))
        return "\n".join(lines) + "\n"

    def to_aligned_text(self) -> str:
        widths = [len(c) for c in self.columns]
        for row in self.rows:
            for i, cell in enumerate(row):
                widths[i] = max(widths[i], len(cell))
        def fmt(cells):
            return "  ".join(c.ljust(widths[i]) if i == 0 else c.rjust(widths[i])
                             for i, c in enumerate(cells))
        lines = [self.title, fmt(self.columns), "-" * (sum(widths) + 2 * len(widths))]
        lines.extend(fmt(r) for r in self.rows)
        if self.legend:
            lines.append(self.legend)
        return "\n".join(lines) + "\n"


def _coef_cell(fit: FitResult, key: str, decimals: int = 2,
               explicit_plus: bool = False) -> str:
    if key not in fit.coefficients:
        return ""
    sig = fit.p_values_bonferroni.get(key, 1.0) < 0.05
    return format_coef_percent(fit.coefficients[key], sig, decimals,
                               explicit_plus)


def render_table1(unit_table) -> ReportTable:
    if not unit_table.stats:
        raise ConfigError("unit table carries no statistics to render")
    rows = []
    for key, label in STAT_DISPLAY:
        s = unit_table.stats.get(key)
        if s is None:
            continue
        unit = unit_table.units[key]
        unit_label = f"{unit:g}x"
        rows.append([label, unit_label, format_compact(s.geo_mean),
                     f"{s.geo_sd:.3f}", format_compact(s.median)])
    return ReportTable(
        title="Descriptive feature statistics",
        columns=["Feature", "Unit", "GeoMean", "GeoSD", "Median"],
        rows=rows,
    )


def render_table2(fits: dict[str, FitResult],
                  extra_counts: dict[str, dict] | None = None) -> ReportTable:
    order = [k for k in ("top50", "top25", "top10") if k in fits]
    if not order:
        raise ConfigError("table2 needs at least one tenure fit")
    header = {"top50": "M50", "top25": "M25", "top10": "M10"}
    rows = []
    for key, label in FEATURE_DISPLAY:
        cells = [_coef_cell(fits[k], key) for k in order]
        if any(cells):
            rows.append([label] + cells)
    counts = extra_counts or {}
    rows.append(["Num. Posts"] + [
        str(counts.get(k, {}).get("n_posts", "")) for k in order])
    rows.append(["Num. Snapshots"] + [f"{fits[k].n_obs:,}" for k in order])
    rows.append(["R2 (McFadden)"]
                + [f"{fits[k].pseudo_r2['mcfadden']:.3f}" for k in order])
    return ReportTable(
        title="Odds of staying in the top N at the next snapshot",
        columns=["Feature"] + [header[k] for k in order],
        rows=rows,
        legend="* p<0.05, Bonferroni-adjusted; percent change in odds per unit step",
    )


def render_table3(fit: FitResult) -> ReportTable:
    if fit.model != "multinomial":
        raise ConfigError("table3 requires a multinomial movement fit")
    rows = []
    for key, label in FEATURE_DISPLAY:
        up = _coef_cell(fit, f"up:{key}")
        down = _coef_cell(fit, f"down:{key}")
        if up or down:
            rows.append([label, up, down])
    rows.append(["Num. Observations", f"{fit.n_obs:,}", ""])
    rows.append(["Nagelkerke R2", f"{fit.pseudo_r2['nagelkerke']:.3f}", ""])
    return ReportTable(
        title="Odds of moving up or down vs. staying",
        columns=["Feature", "Up", "Down"],
        rows=rows,
        legend="* p<0.05, Bonferroni-adjusted; percent change in odds per unit step",
    )


def render_table4(coefficients: list[dict]) -> ReportTable:
    """Ordinal latent-shift table from coefficient_table() entries."""
    if not coefficients:
        raise ConfigError("table4 needs ordinal coefficients")
    display = dict(FEATURE_DISPLAY)
    rows = []
    for entry in coefficients:
        stars = ""
        if entry["pd"] > 0.999:
            stars = "**"
        elif entry["pd"] > 0.95:
            stars = "*"
        label = display.get(entry["feature"], entry["feature"])
        rows.append([label, f"{entry['delta_z']:.3f}{stars}"])
    return ReportTable(
        title="Expected latent rank shift per unit step",
        columns=["Feature", "Delta z"],
        rows=rows,
        legend="* pd>0.95, ** pd>0.999",
    )


def render_table5(fit: FitResult) -> ReportTable:
    if fit.model != "negbin":
        raise ConfigError("table5 requires the engagement negbin fit")
    rows = []
    for key, label in FEATURE_DISPLAY:
        if key not in fit.coefficients:
            continue
        ikey = f"und_x_{key}"
        main = _coef_cell(fit, key)
        inter = _coef_cell(fit, ikey, explicit_plus=True)
        net = ""
        if ikey in fit.coefficients:
            combined = (math.exp(fit.coefficients[key])
                        * math.exp(fit.coefficients[ikey]) - 1.0) * 100.0
            net = format_percent(combined)
        rows.append([label, main, inter, net])
    if not rows:
        raise ConfigError("fit carries no engagement feature coefficients")
    rows.append(["Pseudo R2", f"{fit.pseudo_r2['mcfadden']:.2f}", "", ""])
    return ReportTable(
        title="Expected change in comment gain rates per unit step",
        columns=["Feature", "NonUnd.", "Und:NonUnd.", "Net Und."],
        rows=rows,
        legend="* p<0.05, Bonferroni-adjusted",
    )


def render_table6(reports: list[dict]) -> ReportTable:
    if not reports:
        raise ConfigError("table6 needs at least one strata report")
    rq_of = {"recent_comments": "1 & 2", "recent_prop_undesired": "1 & 2",
             "rank_movement": "3"}
    rows = []
    for rep in reports:
        rows.append([
            rq_of.get(rep["variable"], ""),
            VARIABLE_DISPLAY.get(rep["variable"], rep["variable"]),
            rep["strength"].capitalize(),
            rep["cutoff_label"],
            str(rep["pre_filter"]),
            str(rep["post_filter"]),
            f"{rep['per_stratum']:,}",
            f"{rep['total_samples']:,}",
        ])
    return ReportTable(
        title="Stratified matching summary",
        columns=["RQ", "Variable", "Strength", "Cutoff (Control, Treatment)",
                 "Pre-Filter", "Post", "Per Stratum", "Total"],
        rows=rows,
    )


def render_table(data, style: str, **kwargs) -> ReportTable:
    """Style dispatcher; raises ConfigError on a style/input mismatch."""
    if style not in TABLE_STYLES:
        raise ConfigError(f"unknown table style {style!r}")
    try:
        if style == "table1":
            return render_table1(data)
        if style == "table2":
            return render_table2(data, kwargs.get("extra_counts"))
        if style == "table3":
            return render_table3(data)
        if style == "table4":
            return render_table4(data)
        if style == "table5":
            return render_table5(data)
        return render_table6(data)
    except (KeyError, AttributeError, TypeError) as exc:
        raise ConfigError(f"input does not match style {style!r}: {exc}") from exc
