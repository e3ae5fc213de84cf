"""Evolution of YOLO-style model-config genomes with Pareto selection.

LLM-driven (or mock) mutation and crossover over YAML architecture files,
static analysis for parameter count and inference cost, detection metrics,
and multi-objective run analytics.
"""
from ._kernels import BACKEND as KERNEL_BACKEND
from .arch import build_graph, cost_report, count_parameters, estimate_inference_cost, validate_genome, validate_text
from .evaluate import EvalOutcome, ObjectiveVector, StaticEvaluator
from .evolution import EvolutionEngine, RunConfig, run_evolution
from .genome import (
    GenomeMode,
    ModelGenome,
    genome_fingerprint,
    merge_blocks,
    parse_genome,
    serialize_genome,
    split_blocks,
)
from .moo import (
    HvResult,
    Normalizer,
    ParetoArchive,
    crowding_distance,
    dominates,
    fit_normalizer,
    hypervolume,
    non_dominated_sort,
)

__version__ = "0.1.0"
