"""Mutation and crossover operators.

LLM operators build deterministic prompts from plain-text templates (persona
framing plus optional outcome feedback from the previous operation on the
lineage), extract the YAML payload from the response, and splice it against
the untouched parent material.  Mock operators apply seeded structural edits
without any LLM, for deterministic desk-scale runs and tests.
"""
from __future__ import annotations

import dataclasses
import random
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .arch import build_graph
from .genome import (
    BlockKind,
    GenomeMode,
    LayerSpec,
    ModelGenome,
    ParamsTable,
    assemble_document,
    genome_fingerprint,
    render_backbone_block,
    render_head_block,
    render_params_block,
    serialize_genome,
)
from .layers import REPEAT_SCALABLE
from .llm import ChatClient, CompletionRequest, LlmError, RetryPolicy

TARGETS = ("parameters", "backbone", "head")


class EmptyResponseError(Exception):
    pass


class ModeMismatchError(Exception):
    pass


@dataclass(frozen=True)
class Persona:
    name: str
    system_text: str

    def __post_init__(self):
        if not self.system_text.strip():
            raise ValueError("persona text must be non-empty")


@dataclass(frozen=True)
class OperatorFeedback:
    """Outcome of the previous operation on the parent's lineage."""

    operator: str
    valid: bool
    params_delta: float = 0.0
    cost_delta: float = 0.0
    precision_delta: float = 0.0
    recall_delta: float = 0.0

    def fields(self) -> dict:
        return {
            "operator": self.operator,
            "validity": "valid" if self.valid else "invalid",
            "params_delta": f"{self.params_delta:+g}",
            "cost_delta": f"{self.cost_delta:+.6g}",
            "precision_delta": f"{self.precision_delta:+.4f}",
            "recall_delta": f"{self.recall_delta:+.4f}",
        }


@dataclass(frozen=True)
class OperatorResult:
    child_text: str
    transcript: str
    parent_fingerprints: tuple[str, ...]
    kind: str  # "mutate" or "crossover"
    notes: str = ""


def extract_yaml_payload(response: str) -> str:
    """First fenced code block if any, else the whole trimmed response."""
    if not response or not response.strip():
        raise EmptyResponseError("empty completion")
    match = re.search(r"```[^\n]*\n(.*?)```", response, re.DOTALL)
    if match:
        return match.group(1).strip("\n")
    return response.strip()


def _render_target(genome: ModelGenome, target: str) -> str:
    if target == "parameters":
        return render_params_block(genome)
    if target == "backbone":
        return render_backbone_block(genome)
    if target == "head":
        return render_head_block(genome)
    raise ValueError(f"target must be one of {TARGETS}, got {target!r}")


def splice_block(parent: ModelGenome, target: str, payload: str) -> str:
    """Child document text: the target block replaced, the rest untouched."""
    parts = {t: _render_target(parent, t) for t in TARGETS}
    parts[target] = payload.strip("\n")
    return assemble_document(parts["parameters"], parts["backbone"], parts["head"], parent.mode)


def default_persona() -> Persona:
    return Persona("architect", _load_default_template("persona.txt"))


def _load_default_template(name: str) -> str:
    return (resources.files("archevo") / "templates" / name).read_text()


@dataclass
class PromptBuilder:
    """Deterministic prompt construction from template files."""

    mode: GenomeMode | str = GenomeMode.SPLIT
    persona: Persona | None = None
    templates_dir: str | Path | None = None
    model: str = "local"
    temperature: float = 0.7
    max_tokens: int = 4096

    def __post_init__(self):
        self.mode = GenomeMode(self.mode)
        if self.persona is None:
            self.persona = default_persona()

    def _template(self, name: str) -> str:
        if self.templates_dir is not None:
            path = Path(self.templates_dir) / name
            if path.exists():
                return path.read_text()
        return _load_default_template(name)

    def _feedback_text(self, feedback: OperatorFeedback | None) -> str:
        if feedback is None:
            return ""
        return self._template("feedback.txt").format(**feedback.fields())

    def _request(self, user_text: str) -> CompletionRequest:
        return CompletionRequest(
            model=self.model,
            messages=(
                {"role": "system", "content": self.persona.system_text},
                {"role": "user", "content": user_text},
            ),
            temperature=self.temperature,
            max_tokens=self.max_tokens,
        )

    def build_mutation(
        self, parent: ModelGenome, target: str, feedback: OperatorFeedback | None = None
    ) -> CompletionRequest:
        fields = {
            "feedback": self._feedback_text(feedback),
            "target_part": target,
            "format_rules": self._template("format_rules.txt").strip(),
        }
        if self.mode is GenomeMode.SPLIT:
            fields["block"] = _render_target(parent, target)
            text = self._template("mutate_block.txt").format(**fields)
        else:
            fields["whole_file"] = serialize_genome(parent)
            text = self._template("mutate_whole.txt").format(**fields)
        return self._request(text)

    def build_crossover(
        self,
        parent_a: ModelGenome,
        parent_b: ModelGenome,
        target: str,
        feedback: OperatorFeedback | None = None,
    ) -> CompletionRequest:
        fields = {
            "feedback": self._feedback_text(feedback),
            "target_part": target,
            "format_rules": self._template("format_rules.txt").strip(),
        }
        if self.mode is GenomeMode.SPLIT:
            fields["block"] = _render_target(parent_a, target)
            fields["block_b"] = _render_target(parent_b, target)
            text = self._template("crossover_block.txt").format(**fields)
        else:
            fields["whole_file"] = serialize_genome(parent_a)
            fields["whole_file_b"] = serialize_genome(parent_b)
            text = self._template("crossover_whole.txt").format(**fields)
        return self._request(text)


def render_transcript(req: CompletionRequest, response: str, notes: str) -> str:
    lines = ["=== request ==="]
    for msg in req.messages:
        lines.append(f"[{msg['role']}]")
        lines.append(msg["content"])
    lines += ["=== response ===", response, "=== notes ===", notes]
    return "\n".join(lines) + "\n"


@dataclass
class LlmOperators:
    """Operators backed by a chat-completions client."""

    client: ChatClient
    prompts: PromptBuilder
    policy: RetryPolicy | None = None

    def mutate(
        self, parent: ModelGenome, target: str, feedback: OperatorFeedback | None = None
    ) -> OperatorResult:
        req = self.prompts.build_mutation(parent, target, feedback)
        return self._run(req, (parent,), target, "mutate")

    def crossover(
        self,
        parent_a: ModelGenome,
        parent_b: ModelGenome,
        target: str,
        feedback: OperatorFeedback | None = None,
    ) -> OperatorResult:
        req = self.prompts.build_crossover(parent_a, parent_b, target, feedback)
        return self._run(req, (parent_a, parent_b), target, "crossover")

    def _run(self, req, parents, target, kind) -> OperatorResult:
        completion = self.client.complete(req, self.policy)
        try:
            payload = extract_yaml_payload(completion.text)
            note = "extraction: ok"
        except EmptyResponseError:
            payload = ""
            note = "extraction: empty response"
        if self.prompts.mode is GenomeMode.SPLIT:
            child_text = splice_block(parents[0], target, payload)
        else:
            child_text = payload
        notes = f"target={target}; {note}; attempts={completion.attempts}"
        return OperatorResult(
            child_text=child_text,
            transcript=render_transcript(req, completion.text, notes),
            parent_fingerprints=tuple(genome_fingerprint(p) for p in parents),
            kind=kind,
            notes=notes,
        )


# --- mock operators -----------------------------------------------------------


def _scaled_params(params: ParamsTable, which: str, factor: float) -> ParamsTable:
    if params.scales is not None:
        letter, row = params.scales[0]
        idx = 0 if which == "depth" else 1
        new_row = tuple(
            round(v * factor, 6) if i == idx else v for i, v in enumerate(row)
        )
        return dataclasses.replace(params, scales=((letter, new_row),) + params.scales[1:])
    if which == "depth":
        base = params.depth_multiple if params.depth_multiple is not None else 1.0
        return dataclasses.replace(params, depth_multiple=round(base * factor, 6))
    base = params.width_multiple if params.width_multiple is not None else 1.0
    return dataclasses.replace(params, width_multiple=round(base * factor, 6))


def _replace_layer(genome: ModelGenome, index: int, layer: LayerSpec) -> ModelGenome:
    nb = len(genome.backbone)
    if index < nb:
        backbone = genome.backbone[:index] + (layer,) + genome.backbone[index + 1 :]
        return dataclasses.replace(genome, backbone=backbone)
    j = index - nb
    head = genome.head[:j] + (layer,) + genome.head[j + 1 :]
    return dataclasses.replace(genome, head=head)


def _shift_absolute_refs(layers: tuple[LayerSpec, ...], inserted_at: int) -> tuple[LayerSpec, ...]:
    """Bump absolute `from` indices that point at or past the insertion."""
    out = []
    for layer in layers:
        new_from = tuple(f + 1 if f >= inserted_at else f for f in layer.from_)
        out.append(dataclasses.replace(layer, from_=new_from) if new_from != layer.from_ else layer)
    return tuple(out)


def _duplicate_layer(genome: ModelGenome, index: int) -> ModelGenome:
    flat = list(genome.layers)
    copy = dataclasses.replace(flat[index], from_=(-1,))
    shifted = _shift_absolute_refs(tuple(flat), inserted_at=index + 1)
    flat = list(shifted[: index + 1]) + [copy] + list(shifted[index + 1 :])
    cut = len(genome.backbone) + (1 if index < len(genome.backbone) else 0)
    return dataclasses.replace(genome, backbone=tuple(flat[:cut]), head=tuple(flat[cut:]))


@dataclass
class MockOperators:
    """Seed-deterministic structural edits; no LLM involved.

    Mutation draws one edit from: scale width multiple by 0.75/1.25, scale
    depth multiple by 0.75/1.25, bump a repeat count by +-1, shift one Conv
    channel arg by +-8, or duplicate an in-place Bottleneck line (absolute
    indices are re-pointed).  Crossover swaps whole blocks by coin in split
    mode and single-point splices the layer list in whole mode.
    """

    mode: GenomeMode | str = GenomeMode.SPLIT

    def __post_init__(self):
        self.mode = GenomeMode(self.mode)

    def mutate(self, parent: ModelGenome, seed: int, feedback=None) -> OperatorResult:
        rng = random.Random(seed)
        kind = rng.choice(["width", "depth", "repeats", "channel", "dup_bottleneck"])
        child, notes = self._apply_edit(parent, kind, rng)
        child_text = serialize_genome(child)
        return OperatorResult(
            child_text=child_text,
            transcript=f"mock mutate seed={seed}: {notes}\n",
            parent_fingerprints=(genome_fingerprint(parent),),
            kind="mutate",
            notes=notes,
        )

    def _apply_edit(self, parent: ModelGenome, kind: str, rng: random.Random):
        if kind in ("width", "depth"):
            factor = rng.choice([0.75, 1.25])
            return (
                dataclasses.replace(parent, params=_scaled_params(parent.params, kind, factor)),
                f"scale {kind} multiple by {factor}",
            )
        if kind == "repeats":
            increments = [i for i, l in enumerate(parent.layers) if l.module in REPEAT_SCALABLE]
            decrements = [i for i in increments if parent.layers[i].repeats >= 2]
            down = rng.random() < 0.5
            pool = decrements if (down and decrements) else increments
            if not pool:
                return self._apply_edit(parent, "width", rng)
            idx = rng.choice(pool)
            delta = -1 if (down and decrements) else 1
            layer = parent.layers[idx]
            new = dataclasses.replace(layer, repeats=max(1, layer.repeats + delta))
            return _replace_layer(parent, idx, new), f"repeats {layer.repeats}->{new.repeats} at layer {idx}"
        if kind == "channel":
            convs = [
                i
                for i, l in enumerate(parent.layers)
                if l.module == "Conv" and l.args and isinstance(l.args[0], int)
            ]
            if not convs:
                return self._apply_edit(parent, "width", rng)
            idx = rng.choice(convs)
            layer = parent.layers[idx]
            delta = rng.choice([-8, 8])
            new_ch = max(8, layer.args[0] + delta)
            new = dataclasses.replace(layer, args=(new_ch,) + layer.args[1:])
            return _replace_layer(parent, idx, new), f"channels {layer.args[0]}->{new_ch} at layer {idx}"
        # duplicate an in-place bottleneck; needs channel-preserving candidates
        try:
            graph = build_graph(parent)
        except Exception:
            return self._apply_edit(parent, "width", rng)
        candidates = [
            n.index
            for n in graph.nodes
            if n.module == "Bottleneck" and len(n.in_channels) == 1 and n.in_channels[0] == n.out_channels
        ]
        if not candidates:
            return self._apply_edit(parent, "width", rng)
        idx = rng.choice(candidates)
        return _duplicate_layer(parent, idx), f"duplicate Bottleneck at layer {idx}"

    def crossover(self, a: ModelGenome, b: ModelGenome, seed: int, feedback=None) -> OperatorResult:
        if a.mode != b.mode:
            raise ModeMismatchError(f"cannot cross {a.mode.value} with {b.mode.value} genomes")
        rng = random.Random(seed)
        if a.mode is GenomeMode.SPLIT:
            picks = {t: rng.choice(["a", "b"]) for t in TARGETS}
            src = {t: (a if picks[t] == "a" else b) for t in TARGETS}
            child = ModelGenome(
                mode=a.mode,
                params=src["parameters"].params,
                backbone=src["backbone"].backbone,
                head=src["head"].head,
                comments=a.comments,
            )
            notes = "blocks " + ",".join(f"{t}={picks[t]}" for t in TARGETS)
        else:
            n = min(len(a.layers), len(b.layers))
            if n < 2:
                child, notes = a, "parents too short, child = parent A"
            else:
                k = rng.randrange(1, n)
                flat = a.layers[:k] + b.layers[k:]
                cut = min(len(b.backbone), len(flat))
                child = ModelGenome(
                    mode=a.mode,
                    params=a.params,
                    backbone=flat[:cut],
                    head=flat[cut:],
                    comments=a.comments,
                )
                notes = f"splice at layer {k}"
        return OperatorResult(
            child_text=serialize_genome(child),
            transcript=f"mock crossover seed={seed}: {notes}\n",
            parent_fingerprints=(genome_fingerprint(a), genome_fingerprint(b)),
            kind="crossover",
            notes=notes,
        )


__all__ = [
    "EmptyResponseError",
    "LlmError",
    "LlmOperators",
    "MockOperators",
    "ModeMismatchError",
    "OperatorFeedback",
    "OperatorResult",
    "Persona",
    "PromptBuilder",
    "extract_yaml_payload",
    "splice_block",
]
