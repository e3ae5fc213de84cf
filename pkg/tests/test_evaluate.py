import dataclasses
import json

import pytest

from archevo.arch import build_graph
from archevo.evaluate import (
    ExternalResults,
    ObjectiveVector,
    SchemaMismatchError,
    StaticEvaluator,
    surrogate_accuracy,
    surrogate_scores,
)
from archevo.genome import genome_fingerprint


def test_static_evaluate_matches_arch(yolov3):
    outcome = StaticEvaluator().evaluate(yolov3)
    assert outcome.is_valid
    assert outcome.vector.params == 103_754_144
    assert outcome.vector.cost > 0
    assert 0 < outcome.vector.precision < 1
    assert 0 < outcome.vector.recall < 1


def test_static_evaluate_unknown_module(yolov3_text):
    bad = yolov3_text.replace("Bottleneck", "Mystery")
    outcome = StaticEvaluator().evaluate_text(bad)
    assert outcome.status == "invalid"
    assert outcome.diagnostics[0].code == "UNKNOWN_MODULE"


def test_static_evaluate_parse_error():
    outcome = StaticEvaluator().evaluate_text(":\n::not yaml::\n")
    assert outcome.status == "invalid"
    assert outcome.diagnostics[0].code == "YAML_SYNTAX"


def test_static_evaluate_deterministic(yolov3):
    ev = StaticEvaluator()
    assert ev.evaluate(yolov3) == ev.evaluate(yolov3)


def test_surrogate_monotone_in_params():
    p1, r1 = surrogate_scores(1_000_000, 3)
    p2, r2 = surrogate_scores(2_000_000, 3)
    assert p2 > p1 and r2 > r1


def test_surrogate_monotone_in_stride_coverage():
    p1, r1 = surrogate_scores(5_000_000, 1)
    p3, r3 = surrogate_scores(5_000_000, 3)
    assert r3 > r1
    assert p3 >= p1


def test_surrogate_bounded():
    for params in (0, 10, 10**9):
        for cov in (1, 2, 3):
            p, r = surrogate_scores(params, cov)
            assert 0.0 < p < 1.0 and 0.0 < r < 1.0


def test_surrogate_width_doubling_does_not_decrease_precision(yolov3):
    wider = dataclasses.replace(
        yolov3, params=dataclasses.replace(yolov3.params, width_multiple=2.0)
    )
    p_base, _ = surrogate_accuracy(build_graph(yolov3))
    p_wide, _ = surrogate_accuracy(build_graph(wider))
    assert p_wide >= p_base


def test_surrogate_identical_graphs_identical_scores(yolov3):
    assert surrogate_accuracy(build_graph(yolov3)) == surrogate_accuracy(build_graph(yolov3))


def _results_row(fp, **overrides):
    row = {
        "fingerprint": fp,
        "params": 1000,
        "latency_ms": 8.5,
        "precision": 0.91,
        "recall": 0.84,
        "map50": 0.9,
        "map50_95": 0.7,
    }
    row.update(overrides)
    return row


def test_external_results_pass_through(tmp_path, yolov3):
    fp = genome_fingerprint(yolov3)
    path = tmp_path / "results.jsonl"
    path.write_text(json.dumps(_results_row(fp)) + "\n")
    outcome = ExternalResults(path).evaluate(yolov3)
    assert outcome.is_valid
    assert outcome.vector == ObjectiveVector(
        params=1000,
        cost=8.5,
        precision=0.91,
        recall=0.84,
        aux=(("map50", 0.9), ("map50_95", 0.7)),
    )


def test_external_results_absent_row_is_pending(tmp_path, yolov3):
    path = tmp_path / "results.jsonl"
    path.write_text(json.dumps(_results_row("someone-else")) + "\n")
    assert ExternalResults(path).evaluate(yolov3).status == "pending"


def test_external_results_missing_file_is_pending(tmp_path, yolov3):
    assert ExternalResults(tmp_path / "nope.jsonl").evaluate(yolov3).status == "pending"


def test_external_results_range_check(tmp_path):
    path = tmp_path / "results.jsonl"
    path.write_text(json.dumps(_results_row("f", precision=1.2)) + "\n")
    with pytest.raises(SchemaMismatchError):
        ExternalResults(path)


def test_external_results_missing_field(tmp_path):
    row = _results_row("f")
    del row["latency_ms"]
    path = tmp_path / "results.jsonl"
    path.write_text(json.dumps(row) + "\n")
    with pytest.raises(SchemaMismatchError):
        ExternalResults(path)


def test_objective_vector_validation():
    with pytest.raises(ValueError):
        ObjectiveVector(params=-1, cost=0, precision=0.5, recall=0.5)
    with pytest.raises(ValueError):
        ObjectiveVector(params=1, cost=0, precision=1.5, recall=0.5)
