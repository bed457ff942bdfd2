import pytest

from crashwitness.equivalence import TestCase
from crashwitness.generate import GenConfig, generate
from crashwitness.pipeline import (ConfigError, PipelineConfig, cache_line_from_env,
                                   exhaustive_validate, run_pipeline, write_artifacts)
from crashwitness.subjects import get_subject


def test_empty_test_case():
    r = run_pipeline(get_subject("mini-level-hash-buggy"), TestCase())
    assert r.clusters == [] and r.stats.images == 0
    assert r.report_text().startswith("0 bugs")


def test_stats_csv_columns():
    r = run_pipeline(get_subject("mini-level-hash-buggy"), generate(GenConfig(num_ops=20, seed=1)),
                     PipelineConfig(baselines=True))
    header, row = r.stats.to_csv().splitlines()
    assert header.split(",") == ["invariants_ordering", "invariants_atomicity", "images", "divergent",
                                 "clusters", "yat_count", "pmreorder_count"]
    assert len(row.split(",")) == 7
    plain = run_pipeline(get_subject("kv-log"), generate(GenConfig(num_ops=5, seed=1)))
    assert plain.stats.to_csv().splitlines()[0].count(",") == 4


def test_reports_are_a_subset_of_exhaustive_divergences():
    subj = get_subject("mini-level-hash-buggy")
    case = generate(GenConfig(num_ops=25, seed=3))
    r = run_pipeline(subj, case)
    assert r.reports
    exhaustive = {(d.plan.op_index, d.observed) for d in exhaustive_validate(subj, case)}
    for rep in r.reports:
        assert rep.reverified
        assert (rep.plan.op_index, rep.observed) in exhaustive


def test_artifacts(tmp_path):
    r = run_pipeline(get_subject("mini-level-hash-buggy"), generate(GenConfig(num_ops=30, seed=1)))
    write_artifacts(r, tmp_path)
    for name in ("trace.txt", "invariants.txt", "report.json", "report.txt", "stats.csv"):
        assert (tmp_path / name).is_file()
    imgs = sorted((tmp_path / "images").glob("*.img"))
    assert len(imgs) == len(r.images)
    assert len(list((tmp_path / "images").glob("*.meta"))) == len(imgs)


@pytest.mark.parametrize("raw, ok", [("64", 64), ("128", 128), ("", 64), ("48", None), ("x", None), ("0", None)])
def test_cache_line_env(monkeypatch, raw, ok):
    monkeypatch.setenv("CRASHWITNESS_CACHE_LINE", raw)
    if ok is None:
        with pytest.raises(ConfigError):
            cache_line_from_env()
    else:
        assert cache_line_from_env() == ok


def test_wider_cache_line_still_finds_bugs():
    r = run_pipeline(get_subject("mini-level-hash-buggy"), generate(GenConfig(num_ops=60, seed=1)),
                     PipelineConfig(cache_line=128))
    assert r.trace.cache_line == 128 and r.clusters
