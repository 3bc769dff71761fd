import json
import os
import shutil

import pytest

from palmforge.errors import ConfigError
from palmforge.experiment import (
    load_experiment_spec,
    run_evaluation_phase,
    run_generation_phase,
    summary_csv,
    variant_config,
)
from palmforge.fixtures import copy_fixture, data_path, write_demo_pools
from tests.conftest import tree_digest


@pytest.fixture()
def bundle(tmp_path):
    """The packaged experiment fixture (spec + gt + detections), no pools."""
    copy_fixture("experiment", tmp_path / "exp")
    return tmp_path / "exp"


def test_load_spec(bundle):
    spec = load_experiment_spec(str(bundle / "spec.toml"))
    assert [v.name for v in spec.variants] == ["red-bg", "green-bg", "mixed-bg"]
    assert spec.repetitions == 3
    assert spec.iou_threshold == 0.5
    assert spec.test_gt == str(bundle / "test_gt")
    assert spec.variants[2].freeze == "0-10"


def test_variant_seeds_derive_from_names(bundle):
    spec = load_experiment_spec(str(bundle / "spec.toml"))
    seeds = {variant_config(spec, v).seed for v in spec.variants}
    assert len(seeds) == 3


def test_spec_without_test_gt_rejected(tmp_path):
    (tmp_path / "spec.toml").write_text("master_seed = 1\n")
    with pytest.raises(ConfigError):
        load_experiment_spec(str(tmp_path / "spec.toml"))


# --- evaluation phase -------------------------------------------------------


def test_evaluation_phase_baseline_echo(bundle):
    spec = load_experiment_spec(str(bundle / "spec.toml"))
    rows = run_evaluation_phase(spec)
    by_name = {r.variant: r for r in rows}
    red = by_name["red-bg"]
    assert red.maps == pytest.approx([0.65, 0.65, 0.65], abs=1e-9)
    assert red.min_map == red.max_map == red.mean_map == pytest.approx(0.65, abs=1e-9)
    green = by_name["green-bg"]
    assert green.min_map == pytest.approx(0.75, abs=1e-9)
    assert green.max_map == pytest.approx(0.80, abs=1e-9)
    assert (bundle / "runs" / "summary.csv").is_file()
    assert (bundle / "runs" / "summary.json").is_file()
    assert (bundle / "runs" / "charts" / "map_by_variant.svg").is_file()
    assert (bundle / "runs" / "red-bg" / "report" / "rep1" / "report.json").is_file()


def test_summary_row_aggregates_are_consistent(bundle):
    spec = load_experiment_spec(str(bundle / "spec.toml"))
    for row in run_evaluation_phase(spec):
        assert row.min_map == min(row.maps)
        assert row.max_map == max(row.maps)
        assert row.mean_map == pytest.approx(sum(row.maps) / len(row.maps))
        assert row.min_map <= row.mean_map <= row.max_map
        assert len(row.maps) == 3 and not row.incomplete


def test_missing_repetition_marks_row_incomplete(bundle):
    shutil.rmtree(bundle / "detections" / "mixed-bg" / "rep3")
    spec = load_experiment_spec(str(bundle / "spec.toml"))
    rows = run_evaluation_phase(spec)
    by_name = {r.variant: r for r in rows}
    assert by_name["mixed-bg"].incomplete
    assert by_name["mixed-bg"].missing_reps == [3]
    assert len(by_name["mixed-bg"].maps) == 2
    assert not by_name["red-bg"].incomplete  # the run continued


def test_identical_repetitions_collapse_min_max(bundle, tmp_path):
    for rep in ("rep2", "rep3"):
        shutil.rmtree(bundle / "detections" / "red-bg" / rep)
        shutil.copytree(bundle / "detections" / "red-bg" / "rep1",
                        bundle / "detections" / "red-bg" / rep)
    spec = load_experiment_spec(str(bundle / "spec.toml"))
    row = {r.variant: r for r in run_evaluation_phase(spec)}["red-bg"]
    assert row.min_map == row.max_map == row.mean_map


def test_rerunning_evaluation_is_byte_identical(bundle):
    spec = load_experiment_spec(str(bundle / "spec.toml"))
    run_evaluation_phase(spec)
    first = tree_digest(bundle / "runs")
    run_evaluation_phase(spec)
    assert tree_digest(bundle / "runs") == first


def test_summary_csv_shape(bundle):
    spec = load_experiment_spec(str(bundle / "spec.toml"))
    rows = run_evaluation_phase(spec)
    text = summary_csv(rows)
    lines = text.splitlines()
    assert lines[0] == "variant,rep,mAP,ap_palm,tp,fp,fn"
    assert len(lines) == 1 + 9  # 3 variants x 3 repetitions
    assert "red-bg,1,0.650000,0.650000," in lines[1]


def test_empty_variant_list_is_a_noop(tmp_path):
    (tmp_path / "gt").mkdir()
    (tmp_path / "gt" / "a.txt").write_text("0 0.5 0.5 0.1 0.1\n")
    (tmp_path / "spec.toml").write_text('test_gt = "gt"\nout_dir = "runs"\n')
    spec = load_experiment_spec(str(tmp_path / "spec.toml"))
    assert run_generation_phase(spec) == {}
    rows = run_evaluation_phase(spec)
    assert rows == []
    assert (tmp_path / "runs" / "summary.csv").read_text().startswith("variant,rep,mAP")


# --- generation phase -------------------------------------------------------


MINI_SPEC = """\
master_seed = 77
test_gt = "test_gt"
out_dir = "runs"

[generator]
output_size = [320, 180]
train_count = {train}
val_count = {val}
sprite_pool = "pools/sprites"
classes = ["palm"]
scale_range = [{slo}, {shi}]

[generator.counts.palm]
train = [{tlo}, {thi}]
val = [{vlo}, {vhi}]

[variants.green-bg]
bg_pool_train = "pools/backgrounds/green/train"
bg_pool_val = "pools/backgrounds/green/val"

[variants.red-bg]
bg_pool_train = "pools/backgrounds/red/train"
bg_pool_val = "pools/backgrounds/red/val"

[variants.mixed-bg]
bg_pool_train = "pools/backgrounds/mixed/train"
bg_pool_val = "pools/backgrounds/mixed/val"
"""


def write_mini_spec(root, train=2, val=1, tlo=2, thi=4, vlo=2, vhi=4,
                    slo=0.5, shi=0.8, size=(320, 180)):
    write_demo_pools(root, n_train=2, n_val=1, size=size)
    (root / "test_gt").mkdir(exist_ok=True)
    (root / "test_gt" / "a.txt").write_text("0 0.5 0.5 0.1 0.1\n")
    (root / "spec.toml").write_text(MINI_SPEC.format(
        train=train, val=val, tlo=tlo, thi=thi, vlo=vlo, vhi=vhi, slo=slo, shi=shi))
    return root / "spec.toml"


def test_generation_phase_builds_one_dataset_per_variant(tmp_path):
    spec = load_experiment_spec(str(write_mini_spec(tmp_path)))
    manifests = run_generation_phase(spec)
    assert sorted(manifests) == ["green-bg", "mixed-bg", "red-bg"]
    for name in manifests:
        root = tmp_path / "runs" / name / "dataset"
        assert (root / "manifest.json").is_file()
        assert (root / "dataset.yaml").is_file()
    # variants differ only in background pool, so their label trees differ
    # while the class list stays identical
    assert {tuple(m["class_names"]) for m in manifests.values()} == {("palm",)}
    digests = {tree_digest(tmp_path / "runs" / n / "dataset") for n in manifests}
    assert len(digests) == 3


def test_generation_phase_asymmetric_ranges_hit_expected_totals(tmp_path):
    # train 5-15, val 15-25 averages 10 and 20 objects per image
    spec_path = write_mini_spec(tmp_path, train=150, val=60, tlo=5, thi=15,
                                vlo=15, vhi=25, slo=0.3, shi=0.5, size=(640, 360))
    spec = load_experiment_spec(str(spec_path))
    spec.variants = spec.variants[:1]
    manifest = run_generation_phase(spec)["green-bg"]
    totals = {"train": 0, "val": 0}
    for image in manifest["images"]:
        totals[image["split"]] += image["object_counts_per_class"]["palm"]
    assert manifest["skips"] == []
    assert abs(totals["train"] - 1500) <= 75   # 5% of the uniform-range mean
    assert abs(totals["val"] - 1200) <= 60
