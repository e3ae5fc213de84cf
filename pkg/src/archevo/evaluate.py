"""Objective evaluation backends.

The static evaluator scores a genome deterministically: parameter count and
MAC cost from the layer graph, precision/recall from a synthetic surrogate.
The surrogate exists only to exercise the optimizer; it is a documented
fixture, not a detection-accuracy claim, and every output that contains it is
labeled "static".  The external backend reads results produced by a real
training pipeline, keyed by genome fingerprint.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .arch import ArchGraph, Diagnostic, DEFAULT_INPUT_HW, build_graph, cost_report
from .genome import GenomeError, GenomeMode, genome_fingerprint, parse_genome
from .arch import GraphError, PARSE_CODES

VALID = "valid"
INVALID = "invalid"
PENDING = "pending"


class SchemaMismatchError(Exception):
    pass


@dataclass(frozen=True)
class ObjectiveVector:
    """The four objectives plus optional detection-metric extras."""

    params: int
    cost: float
    precision: float
    recall: float
    aux: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.params < 0 or self.cost < 0:
            raise ValueError("params and cost must be non-negative")
        if not (0.0 <= self.precision <= 1.0 and 0.0 <= self.recall <= 1.0):
            raise ValueError("precision and recall must be in [0, 1]")

    def to_dict(self) -> dict:
        out = {
            "params": self.params,
            "cost": self.cost,
            "precision": self.precision,
            "recall": self.recall,
        }
        if self.aux:
            out["aux"] = dict(self.aux)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectiveVector":
        aux = tuple(sorted(d.get("aux", {}).items()))
        return cls(
            params=int(d["params"]),
            cost=float(d["cost"]),
            precision=float(d["precision"]),
            recall=float(d["recall"]),
            aux=aux,
        )


@dataclass(frozen=True)
class EvalOutcome:
    """Exactly one of: a valid objective vector, diagnostics, or pending."""

    status: str
    vector: ObjectiveVector | None = None
    diagnostics: tuple[Diagnostic, ...] = ()

    @classmethod
    def ok(cls, vector: ObjectiveVector) -> "EvalOutcome":
        return cls(VALID, vector=vector)

    @classmethod
    def bad(cls, diagnostics) -> "EvalOutcome":
        return cls(INVALID, diagnostics=tuple(diagnostics))

    @classmethod
    def wait(cls) -> "EvalOutcome":
        return cls(PENDING)

    @property
    def is_valid(self) -> bool:
        return self.status == VALID

    def to_dict(self) -> dict:
        out = {"status": self.status}
        if self.vector is not None:
            out["vector"] = self.vector.to_dict()
        if self.diagnostics:
            out["diagnostics"] = [d.to_dict() for d in self.diagnostics]
        return out


def surrogate_scores(params: int, stride_coverage: int) -> tuple[float, float]:
    """Synthetic precision/recall: saturating, strictly increasing in
    log-params and in the number of distinct strides feeding the head."""
    x = math.log10(max(params, 1) + 1)
    p_drive = 0.35 * x + 0.25 * stride_coverage
    r_drive = 0.30 * x + 0.45 * stride_coverage
    return p_drive / (p_drive + 3.0), r_drive / (r_drive + 3.0)


def surrogate_accuracy(graph: ArchGraph) -> tuple[float, float]:
    """Precision/recall surrogate evaluated on a built graph."""
    params = cost_report(graph).total_params
    return surrogate_scores(params, graph.detect_stride_coverage)


@dataclass
class StaticEvaluator:
    """Deterministic desk-scale evaluator; pure function of the genome."""

    mode: GenomeMode | str = GenomeMode.SPLIT
    scale: str | None = None
    input_hw: tuple[int, int] = DEFAULT_INPUT_HW

    def evaluate_text(self, text: str) -> EvalOutcome:
        try:
            genome = parse_genome(text, self.mode)
        except GenomeError as exc:
            code = PARSE_CODES.get(type(exc), "YAML_SYNTAX")
            return EvalOutcome.bad([Diagnostic(code, str(exc), exc.line)])
        return self.evaluate(genome)

    def evaluate(self, genome) -> EvalOutcome:
        try:
            graph = build_graph(genome, scale=self.scale)
        except GraphError as exc:
            return EvalOutcome.bad([Diagnostic(exc.code, str(exc), exc.layer)])
        report = cost_report(graph, input_hw=self.input_hw)
        precision, recall = surrogate_scores(report.total_params, graph.detect_stride_coverage)
        return EvalOutcome.ok(
            ObjectiveVector(
                params=report.total_params,
                cost=report.cost_units,
                precision=precision,
                recall=recall,
            )
        )


_RESULT_FIELDS = ("fingerprint", "params", "latency_ms", "precision", "recall", "map50", "map50_95")


@dataclass
class ExternalResults:
    """Objective vectors recorded by an external trainer, keyed by fingerprint.

    The results file is JSON lines; each row carries the fields
    fingerprint, params, latency_ms, precision, recall, map50, map50_95.
    A genome with no row yet is pending, not invalid.
    """

    path: str | Path
    mode: GenomeMode | str = GenomeMode.SPLIT
    _rows: dict[str, dict] = field(default_factory=dict, init=False)

    def __post_init__(self):
        self.reload()

    def reload(self) -> None:
        self._rows = {}
        path = Path(self.path)
        if not path.exists():
            return
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaMismatchError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            missing = [k for k in _RESULT_FIELDS if k not in row]
            if missing:
                raise SchemaMismatchError(f"{path}:{lineno}: missing fields {missing}")
            for key in ("precision", "recall", "map50", "map50_95"):
                v = row[key]
                if not isinstance(v, (int, float)) or not 0.0 <= float(v) <= 1.0:
                    raise SchemaMismatchError(f"{path}:{lineno}: {key}={v!r} outside [0, 1]")
            if row["params"] < 0 or row["latency_ms"] < 0:
                raise SchemaMismatchError(f"{path}:{lineno}: negative params or latency")
            self._rows[row["fingerprint"]] = row

    def evaluate(self, genome) -> EvalOutcome:
        row = self._rows.get(genome_fingerprint(genome))
        if row is None:
            return EvalOutcome.wait()
        return EvalOutcome.ok(
            ObjectiveVector(
                params=int(row["params"]),
                cost=float(row["latency_ms"]),
                precision=float(row["precision"]),
                recall=float(row["recall"]),
                aux=(("map50", float(row["map50"])), ("map50_95", float(row["map50_95"]))),
            )
        )

    def evaluate_text(self, text: str) -> EvalOutcome:
        try:
            genome = parse_genome(text, self.mode)
        except GenomeError as exc:
            code = PARSE_CODES.get(type(exc), "YAML_SYNTAX")
            return EvalOutcome.bad([Diagnostic(code, str(exc), exc.line)])
        return self.evaluate(genome)
