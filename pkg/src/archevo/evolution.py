"""The generational loop: seeding, operators, selection, archive, accounting.

Selection is non-dominated sorting with crowding-distance truncation and
binary tournaments.  Every operator invocation yields at most one child;
children that re-use an already-seen fingerprint are skipped before
evaluation, invalid children are counted and dropped, and operator failures
count as failed variants rather than aborting the generation.  The run
directory persists every individual (genome text plus operator transcript),
a per-generation accounting record, and a resumable state snapshot.
"""
from __future__ import annotations

import dataclasses
import json
import os
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .arch import Diagnostic
from .evaluate import EvalOutcome, ObjectiveVector, StaticEvaluator, ExternalResults
from .genome import GenomeError, GenomeMode, ModelGenome, genome_fingerprint, parse_genome
from .llm import ChatClient, LlmError, RetryPolicy
from .moo import (
    ArchiveEntry,
    ParetoArchive,
    crowding_distance,
    non_dominated_sort,
    to_min_vector,
)
from .operators import (
    LlmOperators,
    MockOperators,
    OperatorFeedback,
    OperatorResult,
    PromptBuilder,
    TARGETS,
)

OPERATOR_ERROR = "OPERATOR_ERROR"


class SeedInvalidError(Exception):
    def __init__(self, path, diagnostics):
        self.path = str(path)
        self.diagnostics = diagnostics
        details = "; ".join(str(d.message) for d in diagnostics)
        super().__init__(f"seed {path} is invalid: {details}")


@dataclass(frozen=True)
class Individual:
    genome: ModelGenome
    fingerprint: str
    vector: ObjectiveVector
    generation: int
    parents: tuple[str, ...] = ()
    operator: str = "seed"
    feedback: OperatorFeedback | None = None

    def min_vector(self) -> tuple:
        return to_min_vector(
            self.vector.params, self.vector.cost, self.vector.precision, self.vector.recall
        )


@dataclass
class RunConfig:
    mode: str = "split"
    seeds: list[str] = field(default_factory=list)
    population_size: int = 20
    generations: int = 10
    mutation_rate: float = 0.7
    offspring_per_generation: int | None = None
    evaluator: str = "static"
    results_path: str | None = None
    rng_seed: int = 0
    normalization: str = "whole-run"
    scale: str | None = None
    input_hw: tuple[int, int] = (640, 640)
    llm: dict | None = None  # None = mock operators

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must be in [0, 1]")
        if not self.seeds:
            raise ValueError("at least one seed genome is required")
        self.mode = GenomeMode(self.mode).value
        self.input_hw = tuple(self.input_hw)

    @property
    def offspring_count(self) -> int:
        return self.offspring_per_generation or self.population_size

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "RunConfig":
        path = Path(path)
        data = yaml.safe_load(path.read_text()) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: run config must be a mapping")
        data.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        cfg = cls(**data)
        # seed paths are relative to the config file
        cfg.seeds = [str((path.parent / s).resolve()) if not os.path.isabs(s) else s for s in cfg.seeds]
        return cfg

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["input_hw"] = list(self.input_hw)
        return out


@dataclass
class GenerationRecord:
    generation: int
    produced: int
    invalid: int
    archive: list[dict]  # [{"fingerprint": ..., "params": ..., ...}]
    elapsed_s: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationRecord":
        return cls(**d)


@dataclass
class RunLog:
    config: dict
    records: list[GenerationRecord]
    report: dict


def _build_operators(cfg: RunConfig):
    if cfg.llm is None:
        return MockAdapter(MockOperators(cfg.mode))
    llm = dict(cfg.llm)
    client = ChatClient(
        endpoint=llm["endpoint"],
        api_key=llm.get("api_key"),
        concurrency=int(llm.get("concurrency", 4)),
        timeout=float(llm.get("timeout", 120.0)),
    )
    prompts = PromptBuilder(
        mode=cfg.mode,
        model=llm.get("model", "local"),
        temperature=float(llm.get("temperature", 0.7)),
        max_tokens=int(llm.get("max_tokens", 4096)),
        templates_dir=llm.get("templates_dir"),
    )
    policy = RetryPolicy(
        max_attempts=int(llm.get("max_attempts", 3)),
        base_delay=float(llm.get("base_delay", 0.5)),
    )
    return LlmAdapter(LlmOperators(client, prompts, policy))


@dataclass
class MockAdapter:
    """Engine-facing adapter over the seeded mock operators."""

    ops: MockOperators

    def make_child(self, kind, parents, seed, target, feedback) -> OperatorResult:
        if kind == "mutate":
            return self.ops.mutate(parents[0].genome, seed, feedback)
        return self.ops.crossover(parents[0].genome, parents[1].genome, seed, feedback)


@dataclass
class LlmAdapter:
    ops: LlmOperators

    def make_child(self, kind, parents, seed, target, feedback) -> OperatorResult:
        if kind == "mutate":
            return self.ops.mutate(parents[0].genome, target, feedback)
        return self.ops.crossover(parents[0].genome, parents[1].genome, target, feedback)


def _build_evaluator(cfg: RunConfig):
    if cfg.evaluator == "static":
        return StaticEvaluator(mode=cfg.mode, scale=cfg.scale, input_hw=cfg.input_hw)
    if cfg.evaluator == "external":
        if not cfg.results_path:
            raise ValueError("external evaluator needs results_path")
        return ExternalResults(cfg.results_path, mode=cfg.mode)
    raise ValueError(f"unknown evaluator {cfg.evaluator!r}")


class EvolutionEngine:
    """Single-writer loop over population, archive, and run log."""

    def __init__(self, cfg: RunConfig, out_dir: str | Path, operators=None, evaluator=None):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.operators = operators if operators is not None else _build_operators(cfg)
        self.evaluator = evaluator if evaluator is not None else _build_evaluator(cfg)
        self.rng = random.Random(cfg.rng_seed)
        self.population: list[Individual] = []
        self.archive = ParetoArchive()
        self.seen: set[str] = set()
        self.records: list[GenerationRecord] = []
        self.produced_total = 0
        self.invalid_total = 0
        self._by_fp: dict[str, Individual] = {}

    # --- persistence ---------------------------------------------------------

    def _prepare_dirs(self):
        for sub in ("individuals", "transcripts", "failed"):
            (self.out / sub).mkdir(parents=True, exist_ok=True)
        (self.out / "config.json").write_text(json.dumps(self.cfg.to_dict(), indent=2) + "\n")

    def _persist_individual(self, ind: Individual, child_text: str, transcript: str):
        (self.out / "individuals" / f"{ind.fingerprint}.yaml").write_text(child_text)
        (self.out / "transcripts" / f"{ind.fingerprint}.txt").write_text(transcript)
        row = {
            "fingerprint": ind.fingerprint,
            "generation": ind.generation,
            "parents": list(ind.parents),
            "operator": ind.operator,
            "vector": ind.vector.to_dict(),
        }
        with (self.out / "individuals.jsonl").open("a") as fh:
            fh.write(json.dumps(row) + "\n")

    def _persist_failure(self, gen: int, seq: int, text: str, transcript: str, diagnostics):
        stem = f"{gen:04d}-{seq:03d}"
        (self.out / "failed" / f"{stem}.yaml").write_text(text)
        notes = transcript + "\ndiagnostics: " + json.dumps([d.to_dict() for d in diagnostics])
        (self.out / "failed" / f"{stem}.txt").write_text(notes + "\n")

    def _write_state(self, generation: int):
        state = {
            "generation": generation,
            "rng_state": _rng_state_to_json(self.rng.getstate()),
            "population": [i.fingerprint for i in self.population],
            "archive": [m.fingerprint for m in self.archive.members],
            "seen": sorted(self.seen),
            "produced_total": self.produced_total,
            "invalid_total": self.invalid_total,
        }
        tmp = self.out / "state.json.tmp"
        tmp.write_text(json.dumps(state) + "\n")
        os.replace(tmp, self.out / "state.json")

    def _append_record(self, record: GenerationRecord):
        with (self.out / "generations.jsonl").open("a") as fh:
            fh.write(json.dumps(record.to_dict()) + "\n")

    def _write_report(self):
        report = {
            "mode": self.cfg.mode,
            "evaluator": self.cfg.evaluator,
            "generations": len(self.records),
            "population_size": self.cfg.population_size,
            "variants": self.produced_total,
            "invalid_variants": self.invalid_total,
            "invalid_fraction": (
                self.invalid_total / self.produced_total if self.produced_total else 0.0
            ),
            "final_front_size": len(self.archive),
        }
        (self.out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
        return report

    # --- evaluation helpers ---------------------------------------------------

    def _evaluate_text(self, text: str) -> tuple[ModelGenome | None, str | None, EvalOutcome]:
        try:
            genome = parse_genome(text, self.cfg.mode)
        except GenomeError:
            outcome = self.evaluator.evaluate_text(text)
            return None, None, outcome
        fp = genome_fingerprint(genome)
        outcome = self.evaluator.evaluate(genome)
        if outcome.status == "pending":
            raise ValueError(
                "the evolution loop needs a non-pending evaluator; "
                "external results are for post-hoc scoring"
            )
        return genome, fp, outcome

    def _register(self, ind: Individual, child_text: str, transcript: str):
        self.seen.add(ind.fingerprint)
        self._by_fp[ind.fingerprint] = ind
        self.archive.insert(ArchiveEntry(ind.fingerprint, ind.min_vector(), payload=ind.vector))
        self._persist_individual(ind, child_text, transcript)

    # --- seeding ---------------------------------------------------------------

    def seed_population(self) -> list[Individual]:
        """Seeds first, then seeded mock mutations of them until full."""
        self._prepare_dirs()
        seeds: list[Individual] = []
        for path in self.cfg.seeds:
            text = Path(path).read_text()
            try:
                genome = parse_genome(text, self.cfg.mode)
            except GenomeError as exc:
                raise SeedInvalidError(path, [Diagnostic("PARSE", str(exc), exc.line)]) from exc
            outcome = self.evaluator.evaluate(genome)
            if not outcome.is_valid:
                raise SeedInvalidError(path, list(outcome.diagnostics))
            fp = genome_fingerprint(genome)
            if fp in self.seen:
                continue
            ind = Individual(genome, fp, outcome.vector, generation=0, operator="seed")
            self._register(ind, text, f"seed from {path}\n")
            seeds.append(ind)

        filler = MockOperators(self.cfg.mode)
        attempts = 0
        population = list(seeds)
        while len(population) < self.cfg.population_size:
            attempts += 1
            if attempts > 200 + 50 * self.cfg.population_size:
                raise RuntimeError("could not fill the initial population with distinct variants")
            base = population[self.rng.randrange(len(seeds))]
            result = filler.mutate(base.genome, self.rng.getrandbits(32))
            genome, fp, outcome = self._evaluate_text(result.child_text)
            if genome is None or fp in self.seen or not outcome.is_valid:
                continue
            ind = Individual(
                genome,
                fp,
                outcome.vector,
                generation=0,
                parents=(base.fingerprint,),
                operator="mutate",
                feedback=self._feedback_for(outcome.vector, base, "mutate"),
            )
            self._register(ind, result.child_text, result.transcript)
            population.append(ind)
        self.population = population[: self.cfg.population_size]
        return self.population

    def _feedback_for(self, child_vec: ObjectiveVector, parent: Individual, kind: str):
        return OperatorFeedback(
            operator=kind,
            valid=True,
            params_delta=child_vec.params - parent.vector.params,
            cost_delta=child_vec.cost - parent.vector.cost,
            precision_delta=child_vec.precision - parent.vector.precision,
            recall_delta=child_vec.recall - parent.vector.recall,
        )

    # --- selection --------------------------------------------------------------

    def _rank_population(self, pop: list[Individual]):
        vectors = [ind.min_vector() for ind in pop]
        fronts = non_dominated_sort(vectors)
        rank = [0] * len(pop)
        crowd = [0.0] * len(pop)
        for r, front in enumerate(fronts):
            dists = crowding_distance([vectors[i] for i in front])
            for i, d in zip(front, dists):
                rank[i] = r
                crowd[i] = d
        return rank, crowd

    def _tournament(self, pop, rank, crowd) -> Individual:
        if len(pop) == 1:
            return pop[0]
        i, j = self.rng.sample(range(len(pop)), 2)
        if (rank[i], -crowd[i]) <= (rank[j], -crowd[j]):
            return pop[i]
        return pop[j]

    def _truncate(self, candidates: list[Individual]) -> list[Individual]:
        rank, crowd = self._rank_population(candidates)
        order = sorted(range(len(candidates)), key=lambda i: (rank[i], -crowd[i], i))
        return [candidates[i] for i in order[: self.cfg.population_size]]

    # --- the loop -----------------------------------------------------------------

    def evolve_generation(self, gen: int) -> GenerationRecord:
        t0 = time.perf_counter()
        produced = invalid = 0
        rank, crowd = self._rank_population(self.population)
        offspring: list[Individual] = []

        for seq in range(self.cfg.offspring_count):
            kind = "mutate" if self.rng.random() < self.cfg.mutation_rate else "crossover"
            if kind == "crossover" and len(self.population) < 2:
                kind = "mutate"
            if kind == "mutate":
                parents = [self._tournament(self.population, rank, crowd)]
            else:
                parents = [
                    self._tournament(self.population, rank, crowd),
                    self._tournament(self.population, rank, crowd),
                ]
            seed = self.rng.getrandbits(32)
            target = self.rng.choice(TARGETS)
            feedback = parents[0].feedback
            try:
                result = self.operators.make_child(kind, parents, seed, target, feedback)
            except LlmError as exc:
                produced += 1
                invalid += 1
                self._persist_failure(
                    gen, seq, "", f"operator failure: {exc}\n", [Diagnostic(OPERATOR_ERROR, str(exc))]
                )
                continue

            genome, fp, outcome = self._evaluate_text(result.child_text)
            if fp is not None and fp in self.seen:
                continue  # duplicate: not produced, not re-evaluated
            produced += 1
            if not outcome.is_valid:
                invalid += 1
                self._persist_failure(gen, seq, result.child_text, result.transcript, outcome.diagnostics)
                continue
            ind = Individual(
                genome,
                fp,
                outcome.vector,
                generation=gen,
                parents=result.parent_fingerprints,
                operator=result.kind,
                feedback=self._feedback_for(outcome.vector, parents[0], result.kind),
            )
            self._register(ind, result.child_text, result.transcript)
            offspring.append(ind)

        self.population = self._truncate(self.population + offspring)
        self.produced_total += produced
        self.invalid_total += invalid
        snapshot = [
            {"fingerprint": m.fingerprint, **m.payload.to_dict()} for m in self.archive.members
        ]
        return GenerationRecord(
            generation=gen,
            produced=produced,
            invalid=invalid,
            archive=snapshot,
            elapsed_s=time.perf_counter() - t0,
        )

    def run(self, resume: bool = False) -> RunLog:
        start_gen = 0
        if resume and (self.out / "state.json").exists():
            start_gen = self._load_state()
        else:
            # a fresh run must not inherit stale logs from the directory
            self._prepare_dirs()
            for name in ("generations.jsonl", "individuals.jsonl", "report.json", "state.json"):
                path = self.out / name
                if path.exists():
                    path.unlink()
            self.seed_population()
            self._write_state(0)
        for gen in range(start_gen + 1, self.cfg.generations + 1):
            record = self.evolve_generation(gen)
            self.records.append(record)
            self._append_record(record)
            self._write_state(gen)
        report = self._write_report()
        return RunLog(config=self.cfg.to_dict(), records=list(self.records), report=report)

    # --- resume -----------------------------------------------------------------

    def _load_state(self) -> int:
        state = json.loads((self.out / "state.json").read_text())
        rows = {}
        jsonl = self.out / "individuals.jsonl"
        if jsonl.exists():
            for line in jsonl.read_text().splitlines():
                if line.strip():
                    row = json.loads(line)
                    rows.setdefault(row["fingerprint"], row)

        def load_individual(fp: str) -> Individual:
            row = rows[fp]
            text = (self.out / "individuals" / f"{fp}.yaml").read_text()
            genome = parse_genome(text, self.cfg.mode)
            vector = ObjectiveVector.from_dict(row["vector"])
            parents = tuple(row["parents"])
            feedback = None
            if parents and parents[0] in rows and row["operator"] in ("mutate", "crossover"):
                parent_vec = ObjectiveVector.from_dict(rows[parents[0]]["vector"])
                feedback = OperatorFeedback(
                    operator=row["operator"],
                    valid=True,
                    params_delta=vector.params - parent_vec.params,
                    cost_delta=vector.cost - parent_vec.cost,
                    precision_delta=vector.precision - parent_vec.precision,
                    recall_delta=vector.recall - parent_vec.recall,
                )
            return Individual(
                genome,
                fp,
                vector,
                generation=row["generation"],
                parents=parents,
                operator=row["operator"],
                feedback=feedback,
            )

        self.seen = set(state["seen"])
        self._by_fp = {fp: load_individual(fp) for fp in state["seen"] if fp in rows}
        self.population = [self._by_fp[fp] for fp in state["population"]]
        self.archive = ParetoArchive()
        for fp in state["archive"]:
            ind = self._by_fp[fp]
            self.archive.insert(ArchiveEntry(fp, ind.min_vector(), payload=ind.vector))
        self.rng.setstate(_rng_state_from_json(state["rng_state"]))
        self.produced_total = state["produced_total"]
        self.invalid_total = state["invalid_total"]

        # truncate any record lines from a torn generation
        gen = int(state["generation"])
        log = self.out / "generations.jsonl"
        self.records = []
        if log.exists():
            lines = [l for l in log.read_text().splitlines() if l.strip()][:gen]
            log.write_text("".join(line + "\n" for line in lines))
            self.records = [GenerationRecord.from_dict(json.loads(l)) for l in lines]
        return gen


def _rng_state_to_json(state) -> list:
    version, internal, gauss = state
    return [version, list(internal), gauss]


def _rng_state_from_json(data) -> tuple:
    version, internal, gauss = data
    return (version, tuple(internal), gauss)


def run_evolution(
    cfg: RunConfig, out_dir: str | Path, resume: bool = False, operators=None, evaluator=None
) -> RunLog:
    """Execute a full run into out_dir; resumable from the last generation."""
    engine = EvolutionEngine(cfg, out_dir, operators=operators, evaluator=evaluator)
    return engine.run(resume=resume)


def load_run(out_dir: str | Path) -> RunLog:
    """Read a persisted run directory back into a RunLog."""
    out = Path(out_dir)
    config = json.loads((out / "config.json").read_text())
    records = []
    log = out / "generations.jsonl"
    if log.exists():
        for lineno, line in enumerate(log.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                records.append(GenerationRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, TypeError) as exc:
                raise LogCorruptError(f"{log}:{lineno}: {exc}") from exc
    report_path = out / "report.json"
    report = json.loads(report_path.read_text()) if report_path.exists() else {}
    return RunLog(config=config, records=records, report=report)


class LogCorruptError(Exception):
    pass
