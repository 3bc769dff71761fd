"""Standalone SVG bar charts for experiment summaries.

Charts are written by hand rather than through a plotting library so that
identical inputs produce byte-identical files; every coordinate is emitted
at fixed precision and nothing (ids, timestamps) varies between runs.
"""

from palmforge.errors import ValidationError

PALETTE = ["#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2", "#b279a2"]

_BAR_W = 34
_BAR_GAP = 6
_GROUP_GAP = 30
_MARGIN_L = 58
_MARGIN_R = 16
_PLOT_H = 220
_TOP = 46
_BOTTOM = 58


def _fmt(x):
    return f"{x:.2f}"


def bar_chart_svg(title, groups, y_max=1.0):
    """Grouped bar chart: groups is [(group_label, [(bar_label, value)])].

    Values must lie in [0, y_max]; a None value renders as an "n/a" slot so
    incomplete repetitions stay visible.
    """
    if not groups:
        raise ValidationError("cannot chart an empty summary")
    parts = []
    x = _MARGIN_L
    group_spans = []
    for label, bars in groups:
        width = len(bars) * _BAR_W + max(0, len(bars) - 1) * _BAR_GAP
        group_spans.append((x, width, label, bars))
        x += width + _GROUP_GAP
    total_w = x - _GROUP_GAP + _MARGIN_R
    total_h = _TOP + _PLOT_H + _BOTTOM
    base_y = _TOP + _PLOT_H

    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" '
        f'height="{total_h}" viewBox="0 0 {total_w} {total_h}" '
        f'font-family="Helvetica, Arial, sans-serif">'
    )
    parts.append(f'<rect width="{total_w}" height="{total_h}" fill="#ffffff"/>')
    parts.append(f'<text x="{_fmt(total_w / 2)}" y="24" font-size="15" '
                 f'text-anchor="middle">{_escape(title)}</text>')

    for k in range(5):
        v = y_max * k / 4
        y = base_y - _PLOT_H * k / 4
        parts.append(f'<line x1="{_MARGIN_L}" y1="{_fmt(y)}" x2="{total_w - _MARGIN_R}" '
                     f'y2="{_fmt(y)}" stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{_MARGIN_L - 6}" y="{_fmt(y + 4)}" font-size="10" '
                     f'text-anchor="end">{v:.2f}</text>')
    parts.append(f'<line x1="{_MARGIN_L}" y1="{base_y}" x2="{total_w - _MARGIN_R}" '
                 f'y2="{base_y}" stroke="#333333" stroke-width="1"/>')

    for gx, gwidth, label, bars in group_spans:
        bx = gx
        for i, (bar_label, value) in enumerate(bars):
            color = PALETTE[i % len(PALETTE)]
            if value is None:
                parts.append(f'<text x="{_fmt(bx + _BAR_W / 2)}" y="{_fmt(base_y - 6)}" '
                             f'font-size="9" text-anchor="middle" fill="#999999">n/a</text>')
            else:
                if not 0.0 <= value <= y_max:
                    raise ValidationError(f"bar value {value} outside [0, {y_max}]")
                bh = _PLOT_H * value / y_max
                parts.append(f'<rect x="{bx}" y="{_fmt(base_y - bh)}" width="{_BAR_W}" '
                             f'height="{_fmt(bh)}" fill="{color}"/>')
                parts.append(f'<text x="{_fmt(bx + _BAR_W / 2)}" y="{_fmt(base_y - bh - 4)}" '
                             f'font-size="9" text-anchor="middle">{value:.3f}</text>')
            parts.append(f'<text x="{_fmt(bx + _BAR_W / 2)}" y="{base_y + 14}" '
                         f'font-size="9" text-anchor="middle">{_escape(bar_label)}</text>')
            bx += _BAR_W + _BAR_GAP
        parts.append(f'<text x="{_fmt(gx + gwidth / 2)}" y="{base_y + 32}" '
                     f'font-size="11" text-anchor="middle">{_escape(label)}</text>')

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text):
    return (str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))


def render_charts(summary):
    """Charts for an experiment summary dict; returns {filename: svg text}.

    Always emits the per-variant mAP chart; adds a per-tag-group chart when
    grouped results are present.
    """
    rows = summary.get("rows", [])
    if not rows:
        raise ValidationError("summary has no rows to chart")
    tau = summary.get("iou_threshold", 0.5)
    by_variant = []
    for row in rows:
        reps = {r["rep"]: r["map"] for r in row["reps"]}
        n_reps = summary.get("repetitions", max(reps, default=0))
        bars = [(f"rep{k}", reps.get(k)) for k in range(1, n_reps + 1)]
        by_variant.append((row["variant"], bars))
    out = {"map_by_variant.svg": bar_chart_svg(f"mAP@{tau:g} per variant", by_variant)}

    key = summary.get("group_by")
    if key:
        values = sorted({v for row in rows for r in row["reps"]
                         for v in r.get("group_maps", {})})
        if values:
            groups = []
            for value in values:
                bars = []
                for row in rows:
                    maps = [r["group_maps"][value] for r in row["reps"]
                            if r.get("group_maps", {}).get(value) is not None]
                    bars.append((row["variant"], sum(maps) / len(maps) if maps else None))
                groups.append((value, bars))
            out[f"map_by_{key}.svg"] = bar_chart_svg(
                f"mAP@{tau:g} by {key} (mean over repetitions)", groups)
    return out
