import os
import re

import pytest

from palmforge.charts import bar_chart_svg, render_charts
from palmforge.errors import ValidationError

GOLDEN = os.path.join(os.path.dirname(__file__), "data", "golden_equal_bars.svg")


def summary_stub(n_variants=3, n_reps=3, group_maps=None):
    rows = []
    for v in range(n_variants):
        reps = []
        for k in range(1, n_reps + 1):
            entry = {"rep": k, "map": 0.5 + 0.1 * v + 0.01 * k}
            if group_maps:
                entry["group_maps"] = group_maps
            reps.append(entry)
        rows.append({"variant": f"v{v}", "reps": reps})
    return {"iou_threshold": 0.5, "repetitions": n_reps, "group_by": None, "rows": rows}


def bar_heights(svg):
    # data bars carry a palette fill; the background rect does not
    return re.findall(r'<rect x="[\d.]+" y="[\d.]+" width="\d+" height="([\d.]+)"', svg)


def test_three_by_three_gives_nine_bars():
    svg = render_charts(summary_stub())["map_by_variant.svg"]
    assert len(bar_heights(svg)) == 9
    assert svg.count("</svg>") == 1


def test_single_variant_single_group():
    svg = render_charts(summary_stub(n_variants=1))["map_by_variant.svg"]
    assert len(bar_heights(svg)) == 3
    assert svg.count(">v0<") == 1


def test_equal_values_render_equal_bars_and_match_golden():
    groups = [("red-bg", [(f"rep{k}", 0.7) for k in (1, 2, 3)]),
              ("green-bg", [(f"rep{k}", 0.7) for k in (1, 2, 3)])]
    svg = bar_chart_svg("mAP@0.5 per variant", groups)
    heights = bar_heights(svg)
    assert len(set(heights)) == 1 and len(heights) == 6
    with open(GOLDEN, "r", encoding="ascii") as f:
        assert svg == f.read()


def test_incomplete_rep_renders_a_placeholder():
    summary = summary_stub(n_variants=1, n_reps=3)
    summary["rows"][0]["reps"] = summary["rows"][0]["reps"][:2]  # rep3 missing
    svg = render_charts(summary)["map_by_variant.svg"]
    assert len(bar_heights(svg)) == 2
    assert ">n/a<" in svg


def test_grouped_chart_emitted_when_group_maps_present():
    summary = summary_stub(group_maps={"25m": 0.8, "70m": 0.6})
    summary["group_by"] = "altitude"
    charts = render_charts(summary)
    assert sorted(charts) == ["map_by_altitude.svg", "map_by_variant.svg"]
    assert ">25m<" in charts["map_by_altitude.svg"]


def test_chart_is_deterministic():
    assert render_charts(summary_stub()) == render_charts(summary_stub())


def test_empty_summary_rejected():
    with pytest.raises(ValidationError):
        render_charts({"rows": []})
    with pytest.raises(ValidationError):
        bar_chart_svg("t", [])


def test_out_of_range_value_rejected():
    with pytest.raises(ValidationError):
        bar_chart_svg("t", [("g", [("b", 1.5)])])


def test_labels_are_xml_escaped():
    svg = bar_chart_svg("a & b", [("g<1>", [("b", 0.5)])])
    assert "a &amp; b" in svg and "g&lt;1&gt;" in svg
