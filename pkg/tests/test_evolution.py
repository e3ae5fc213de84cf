import json
import random
from pathlib import Path

import pytest

from archevo.evolution import (
    EvolutionEngine,
    GenerationRecord,
    RunConfig,
    SeedInvalidError,
    load_run,
    run_evolution,
)
from archevo.genome import genome_fingerprint, serialize_genome
from archevo.moo import dominates, to_min_vector
from archevo.operators import MockOperators, OperatorResult
from conftest import CONFIGS


def make_cfg(tmp_path=None, **kw):
    base = dict(
        seeds=[str(CONFIGS / "yolov3.yaml")],
        population_size=8,
        generations=3,
        rng_seed=11,
    )
    base.update(kw)
    return RunConfig(**base)


def records_of(path) -> list[dict]:
    return [json.loads(l) for l in (Path(path) / "generations.jsonl").read_text().splitlines()]


def test_seed_fill_rule(tmp_path):
    cfg = make_cfg(population_size=8)
    engine = EvolutionEngine(cfg, tmp_path / "run")
    pop = engine.seed_population()
    assert len(pop) == 8
    assert sum(1 for i in pop if i.operator == "seed") == 1
    assert sum(1 for i in pop if i.operator == "mutate") == 7
    assert len({i.fingerprint for i in pop}) == 8


def test_seed_exact_population(tmp_path, corpus_genomes):
    seeds = [
        str(CONFIGS / "yolov3.yaml"),
        str(CONFIGS / "evolved_deep_spp.yaml"),
    ]
    cfg = make_cfg(seeds=seeds, population_size=2)
    pop = EvolutionEngine(cfg, tmp_path / "run").seed_population()
    assert len(pop) == 2
    assert all(i.operator == "seed" for i in pop)


def test_seed_invalid_aborts(tmp_path):
    bad = tmp_path / "bad_seed.yaml"
    bad.write_text(
        (CONFIGS / "yolov3.yaml").read_text().replace("Bottleneck", "Wat")
    )
    cfg = make_cfg(seeds=[str(bad)])
    with pytest.raises(SeedInvalidError) as err:
        EvolutionEngine(cfg, tmp_path / "run").seed_population()
    assert any(d.code == "UNKNOWN_MODULE" for d in err.value.diagnostics)


def test_single_generation_single_record(tmp_path):
    cfg = make_cfg(generations=1)
    log = run_evolution(cfg, tmp_path / "run")
    assert len(log.records) == 1
    assert log.records[0].generation == 1


def test_accounting_identity(tmp_path):
    cfg = make_cfg(population_size=10, generations=6, rng_seed=3)
    log = run_evolution(cfg, tmp_path / "run")
    assert sum(r.produced for r in log.records) == log.report["variants"]
    assert sum(r.invalid for r in log.records) == log.report["invalid_variants"]
    for record in log.records:
        assert record.produced >= record.invalid >= 0


def test_archive_mutually_non_dominated_every_generation(tmp_path):
    cfg = make_cfg(population_size=10, generations=5, rng_seed=5)
    log = run_evolution(cfg, tmp_path / "run")
    for record in log.records:
        vecs = [
            to_min_vector(m["params"], m["cost"], m["precision"], m["recall"])
            for m in record.archive
        ]
        for i, a in enumerate(vecs):
            for j, b in enumerate(vecs):
                if i != j:
                    assert not dominates(a, b)


def test_population_size_and_elitism(tmp_path):
    from archevo.moo import non_dominated_sort

    cfg = make_cfg(population_size=8, generations=4)
    engine = EvolutionEngine(cfg, tmp_path / "run")
    engine.seed_population()
    engine._write_state(0)
    for gen in range(1, 5):
        before = list(engine.population)
        engine.evolve_generation(gen)
        assert len(engine.population) == 8
        # front-first truncation: when the combined pool's rank-0 front fits,
        # every member of it survives
        offspring = [i for i in engine._by_fp.values() if i.generation == gen]
        combined = before + offspring
        fronts = non_dominated_sort([i.min_vector() for i in combined])
        rank0 = {combined[i].fingerprint for i in fronts[0]}
        survivors = {i.fingerprint for i in engine.population}
        if len(rank0) <= 8:
            assert rank0 <= survivors


def test_duplicates_not_reproduced(tmp_path, yolov3):
    class EchoOperators:
        """Always returns the parent text: every child is a duplicate."""

        def make_child(self, kind, parents, seed, target, feedback):
            text = serialize_genome(parents[0].genome)
            return OperatorResult(
                child_text=text,
                transcript="echo\n",
                parent_fingerprints=tuple(p.fingerprint for p in parents),
                kind=kind,
            )

    cfg = make_cfg(generations=2)
    engine = EvolutionEngine(cfg, tmp_path / "run", operators=EchoOperators())
    log = engine.run()
    assert log.report["variants"] == 0
    assert log.report["invalid_variants"] == 0
    pop_fps = {i.fingerprint for i in engine.population}
    assert genome_fingerprint(yolov3) in pop_fps


def test_all_invalid_offspring_keeps_population(tmp_path):
    class GarbageOperators:
        def make_child(self, kind, parents, seed, target, feedback):
            return OperatorResult(
                child_text=f"backbone: [broken {seed}\n",
                transcript="garbage\n",
                parent_fingerprints=tuple(p.fingerprint for p in parents),
                kind=kind,
            )

    cfg = make_cfg(population_size=6, generations=2)
    engine = EvolutionEngine(cfg, tmp_path / "run", operators=GarbageOperators())
    log = engine.run()
    for record in log.records:
        assert record.invalid == record.produced > 0
    assert len(engine.population) == 6
    # seeds survive untouched (elitism floor)
    assert all(i.generation == 0 for i in engine.population)


def test_fault_injection_accounting(tmp_path):
    class FaultyOperators:
        """Mock edits, but emits garbage with probability 0.4."""

        def __init__(self, mode):
            self.inner = MockOperators(mode)

        def make_child(self, kind, parents, seed, target, feedback):
            rng = random.Random(seed ^ 0xFA17)
            if rng.random() < 0.4:
                return OperatorResult(
                    child_text=f"nc: : broken {seed}\n",
                    transcript="fault\n",
                    parent_fingerprints=tuple(p.fingerprint for p in parents),
                    kind=kind,
                )
            if kind == "mutate" or len(parents) < 2:
                return self.inner.mutate(parents[0].genome, seed, feedback)
            return self.inner.crossover(parents[0].genome, parents[1].genome, seed, feedback)

    cfg = make_cfg(population_size=10, generations=8, rng_seed=23)
    engine = EvolutionEngine(cfg, tmp_path / "run", operators=FaultyOperators("split"))
    log = engine.run()
    produced = sum(r.produced for r in log.records)
    invalid = sum(r.invalid for r in log.records)
    assert produced > 0 and invalid > 0
    assert log.report["invalid_fraction"] == invalid / produced


def test_resume_matches_uninterrupted(tmp_path):
    kw = dict(population_size=8, rng_seed=17)
    full_dir, resumed_dir = tmp_path / "full", tmp_path / "resumed"
    run_evolution(make_cfg(generations=6, **kw), full_dir)
    run_evolution(make_cfg(generations=2, **kw), resumed_dir)  # interrupted early
    run_evolution(make_cfg(generations=6, **kw), resumed_dir, resume=True)

    strip = lambda rows: [{k: v for k, v in r.items() if k != "elapsed_s"} for r in rows]
    assert strip(records_of(full_dir)) == strip(records_of(resumed_dir))
    full_report = json.loads((full_dir / "report.json").read_text())
    resumed_report = json.loads((resumed_dir / "report.json").read_text())
    assert full_report == resumed_report


def test_mock_mode_determinism(tmp_path):
    cfg_a = make_cfg(generations=4, rng_seed=29)
    cfg_b = make_cfg(generations=4, rng_seed=29)
    log_a = run_evolution(cfg_a, tmp_path / "a")
    log_b = run_evolution(cfg_b, tmp_path / "b")
    strip = lambda rows: [{k: v for k, v in r.items() if k != "elapsed_s"} for r in rows]
    assert strip([r.to_dict() for r in log_a.records]) == strip([r.to_dict() for r in log_b.records])
    assert log_a.report == log_b.report


def test_run_directory_layout(tmp_path):
    out = tmp_path / "run"
    cfg = make_cfg(generations=2)
    run_evolution(cfg, out)
    assert (out / "config.json").exists()
    assert (out / "generations.jsonl").exists()
    assert (out / "individuals.jsonl").exists()
    assert (out / "report.json").exists()
    assert (out / "state.json").exists()
    individuals = list((out / "individuals").glob("*.yaml"))
    transcripts = list((out / "transcripts").glob("*.txt"))
    assert individuals and len(individuals) == len(transcripts)
    cfg_json = json.loads((out / "config.json").read_text())
    assert cfg_json["population_size"] == cfg.population_size


def test_individuals_reparse_to_their_fingerprint(tmp_path):
    from archevo.genome import parse_genome

    out = tmp_path / "run"
    run_evolution(make_cfg(generations=2), out)
    for path in (out / "individuals").glob("*.yaml"):
        g = parse_genome(path.read_text(), "split")
        assert genome_fingerprint(g) == path.stem


def test_load_run_roundtrip(tmp_path):
    out = tmp_path / "run"
    log = run_evolution(make_cfg(generations=3), out)
    loaded = load_run(out)
    assert [r.to_dict() for r in loaded.records] == [r.to_dict() for r in log.records]
    assert loaded.report == log.report


def test_config_from_file(tmp_path):
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(
        "mode: split\nseeds:\n  - {}\npopulation_size: 4\ngenerations: 2\nrng_seed: 1\n".format(
            CONFIGS / "yolov3.yaml"
        )
    )
    cfg = RunConfig.from_file(cfg_path)
    assert cfg.population_size == 4
    cfg2 = RunConfig.from_file(cfg_path, generations=9)
    assert cfg2.generations == 9


def test_config_rejects_unknown_keys(tmp_path):
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text("seeds: [x.yaml]\nflux_capacitor: 1\n")
    with pytest.raises(ValueError):
        RunConfig.from_file(cfg_path)


def test_config_invariants():
    with pytest.raises(ValueError):
        make_cfg(population_size=1)
    with pytest.raises(ValueError):
        make_cfg(generations=0)
    with pytest.raises(ValueError):
        make_cfg(mutation_rate=1.5)
