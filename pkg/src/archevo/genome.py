"""Parse, segment, serialize, and fingerprint model-config genomes.

The dialect is the Ultralytics-style model YAML: top-level parameters
(``nc`` plus ``depth_multiple``/``width_multiple`` or ``scales``) and two
layer lists, ``backbone`` and ``head``, whose entries are
``[from, repeats, module, args]`` tuples.  Documents are treated as genetic
material: they can be split into blocks (parameters / backbone / head, or a
single whole-file block), reassembled, and fingerprinted by semantic content
so that comment or formatting edits do not change identity.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from enum import Enum

import yaml


class GenomeMode(str, Enum):
    """How a document is segmented into genetic units."""

    SPLIT = "split"  # three blocks: parameters, backbone, head
    WHOLE = "whole"  # one block carrying the entire document


class BlockKind(str, Enum):
    PARAMETERS = "parameters"
    BACKBONE = "backbone"
    HEAD = "head"
    WHOLE = "whole"


class GenomeError(Exception):
    """Base class for genome parse errors; carries optional line context."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)


class YamlSyntaxError(GenomeError):
    pass


class MissingSectionError(GenomeError):
    def __init__(self, section: str, line: int | None = None):
        self.section = section
        super().__init__(f"missing or malformed section: {section}", line)


class MalformedLayerError(GenomeError):
    pass


class MalformedParamsError(GenomeError):
    pass


_SECTION_KEYS = ("backbone", "head")
_BLOCK_MARKER_RE = re.compile(r"^#\s*--Block--\s*$")


def _norm_arg(value):
    """Normalize one layer arg: the bare token ``None`` means Python None."""
    if isinstance(value, str) and value == "None":
        return None
    if isinstance(value, list):
        return tuple(_norm_arg(v) for v in value)
    return value


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


@dataclass(frozen=True)
class LayerSpec:
    """One ``[from, repeats, module, args]`` layer tuple.

    ``from_`` holds one or more producer indices; negative values are offsets
    back from the layer's own position and stay symbolic until graph build.
    """

    from_: tuple[int, ...]
    repeats: int
    module: str
    args: tuple

    def canonical(self) -> list:
        def unroll(v):
            if isinstance(v, tuple):
                return [unroll(x) for x in v]
            return v

        return [list(self.from_), self.repeats, self.module, unroll(self.args)]


@dataclass(frozen=True)
class ParamsTable:
    """Top-level parameters: class count, scaling multiples, extra keys."""

    nc: int
    depth_multiple: float | None = None
    width_multiple: float | None = None
    scales: tuple[tuple[str, tuple[float, ...]], ...] | None = None
    extra: tuple[tuple[str, object], ...] = ()

    def canonical(self) -> dict:
        out: dict = {"nc": self.nc}
        if self.depth_multiple is not None:
            out["depth_multiple"] = self.depth_multiple
        if self.width_multiple is not None:
            out["width_multiple"] = self.width_multiple
        if self.scales is not None:
            out["scales"] = {k: list(v) for k, v in self.scales}
        if self.extra:
            out["extra"] = {k: v for k, v in self.extra}
        return out

    def scale_row(self, scale: str | None = None) -> tuple[float, float, float]:
        """Resolve (depth, width, max_channels) for graph building."""
        if self.scales:
            keys = [k for k, _ in self.scales]
            key = scale if scale is not None else keys[0]
            row = dict(self.scales).get(key)
            if row is None:
                raise KeyError(f"scale {key!r} not defined (have {keys})")
            depth, width = float(row[0]), float(row[1])
            max_ch = float(row[2]) if len(row) > 2 else float("inf")
            return depth, width, max_ch
        return (
            float(self.depth_multiple if self.depth_multiple is not None else 1.0),
            float(self.width_multiple if self.width_multiple is not None else 1.0),
            float("inf"),
        )


@dataclass(frozen=True)
class Block:
    """A genetic unit: parameters, backbone, head, or the whole document.

    ``head_offset`` is only set for WHOLE blocks and marks where the head
    layers start inside ``layers``.
    """

    kind: BlockKind
    layers: tuple[LayerSpec, ...] = ()
    params: ParamsTable | None = None
    raw_comments: tuple[str, ...] = ()
    head_offset: int | None = None


@dataclass(frozen=True)
class ModelGenome:
    """A parsed architecture document.

    Equality and fingerprints depend only on semantic content (parameters and
    layer tuples); comments, formatting, and segmentation mode do not count.
    """

    mode: GenomeMode
    params: ParamsTable
    backbone: tuple[LayerSpec, ...]
    head: tuple[LayerSpec, ...]
    comments: tuple[tuple[str, tuple[str, ...]], ...] = ()
    source_text: str = field(default="", compare=False)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelGenome):
            return NotImplemented
        return (
            self.params == other.params
            and self.backbone == other.backbone
            and self.head == other.head
        )

    def __hash__(self):
        return hash(genome_fingerprint(self))

    @property
    def layers(self) -> tuple[LayerSpec, ...]:
        """All layers in global index order: backbone first, then head."""
        return self.backbone + self.head

    def region_comments(self, region: str) -> tuple[str, ...]:
        return dict(self.comments).get(region, ())

    @property
    def blocks(self) -> list[Block]:
        return split_blocks(self)


def _compose_layer_line(text: str, section: str, idx: int) -> int | None:
    """Best-effort 1-based source line of the idx-th entry of a section."""
    try:
        node = yaml.compose(text)
        for key_node, value_node in node.value:
            if key_node.value == section:
                entry = value_node.value[idx]
                return entry.start_mark.line + 1
    except Exception:
        return None
    return None


def _parse_layer(entry, text: str, section: str, idx: int) -> LayerSpec:
    def fail(msg: str):
        raise MalformedLayerError(
            f"{section}[{idx}]: {msg}", _compose_layer_line(text, section, idx)
        )

    if not isinstance(entry, list) or len(entry) != 4:
        fail(f"layer entry must be a 4-element tuple, got {entry!r}")
    raw_from, repeats, module, args = entry
    if _is_int(raw_from):
        from_ = (raw_from,)
    elif isinstance(raw_from, list) and raw_from and all(_is_int(v) for v in raw_from):
        from_ = tuple(raw_from)
    else:
        fail(f"'from' must be an integer or list of integers, got {raw_from!r}")
    if not _is_int(repeats) or repeats < 1:
        fail(f"repeats must be a positive integer, got {repeats!r}")
    if not isinstance(module, str) or not module:
        fail(f"module must be a name token, got {module!r}")
    if not isinstance(args, list):
        fail(f"args must be a list, got {args!r}")
    return LayerSpec(from_=from_, repeats=repeats, module=module, args=tuple(_norm_arg(a) for a in args))


def _parse_params(data: dict) -> ParamsTable:
    nc = data.get("nc")
    if not _is_int(nc) or nc <= 0:
        raise MalformedParamsError(f"nc must be a positive integer, got {nc!r}")

    def positive_real(key):
        v = data.get(key)
        if v is None:
            return None
        if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
            raise MalformedParamsError(f"{key} must be a positive number, got {v!r}")
        return float(v)

    depth = positive_real("depth_multiple")
    width = positive_real("width_multiple")

    scales = None
    if "scales" in data:
        raw = data["scales"]
        if not isinstance(raw, dict) or not raw:
            raise MalformedParamsError(f"scales must be a non-empty mapping, got {raw!r}")
        rows = []
        for letter, row in raw.items():
            if (
                not isinstance(row, list)
                or len(row) < 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in row)
                or row[0] <= 0
                or row[1] <= 0
                or (len(row) > 2 and (not _is_int(row[2]) or row[2] <= 0))
            ):
                raise MalformedParamsError(
                    f"scale {letter!r} must be [depth, width, max_channels], got {row!r}"
                )
            rows.append((str(letter), tuple(row)))
        scales = tuple(rows)

    if depth is None and width is None and scales is None:
        raise MalformedParamsError(
            "need depth_multiple/width_multiple or a scales table"
        )

    reserved = {"nc", "depth_multiple", "width_multiple", "scales", "backbone", "head"}
    extra = tuple((k, v) for k, v in data.items() if k not in reserved)
    return ParamsTable(nc=nc, depth_multiple=depth, width_multiple=width, scales=scales, extra=extra)


def _scan_comments(text: str) -> dict[str, tuple[str, ...]]:
    """Collect comment-only lines per region (parameters/backbone/head).

    The contiguous comment run directly above a section key belongs to that
    section, matching where serialization re-emits it; remaining comments go
    to the region whose key precedes them (or to parameters).
    """
    lines = text.splitlines()
    positions: dict[str, int] = {}
    for i, line in enumerate(lines):
        key = line.split(":", 1)[0].strip()
        if line and not line[0].isspace() and ":" in line and key in _SECTION_KEYS:
            positions.setdefault(key, i)
    owner_of: dict[int, str] = {}
    for key, idx in positions.items():
        j = idx - 1
        while j >= 0 and lines[j].strip().startswith("#"):
            owner_of[j] = key
            j -= 1
    by_position = sorted(positions.items(), key=lambda kv: kv[1])
    regions: dict[str, list[str]] = {"parameters": [], "backbone": [], "head": []}
    for i, line in enumerate(lines):
        if not line.strip().startswith("#"):
            continue
        region = owner_of.get(i)
        if region is None:
            region = "parameters"
            for key, idx in by_position:
                if i > idx:
                    region = key
        regions[region].append(line)
    return {k: tuple(v) for k, v in regions.items()}


def parse_genome(text: str, mode: GenomeMode | str = GenomeMode.SPLIT) -> ModelGenome:
    """Parse a model-config document into a genome.

    Raises YamlSyntaxError, MissingSectionError, MalformedLayerError, or
    MalformedParamsError; each carries line context where it is recoverable.
    """
    mode = GenomeMode(mode)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        line = None
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            line = mark.line + 1
        raise YamlSyntaxError(f"invalid YAML: {exc}", line) from exc
    if not isinstance(data, dict):
        raise YamlSyntaxError("document is empty or not a mapping")

    sections = {}
    for key in _SECTION_KEYS:
        if key not in data:
            raise MissingSectionError(key)
        value = data[key] if data[key] is not None else []
        if not isinstance(value, list):
            raise MissingSectionError(key)
        sections[key] = value

    params = _parse_params(data)
    backbone = tuple(
        _parse_layer(e, text, "backbone", i) for i, e in enumerate(sections["backbone"])
    )
    head = tuple(_parse_layer(e, text, "head", i) for i, e in enumerate(sections["head"]))
    comments = tuple(sorted(_scan_comments(text).items()))
    return ModelGenome(
        mode=mode,
        params=params,
        backbone=backbone,
        head=head,
        comments=comments,
        source_text=text,
    )


# --- serialization ----------------------------------------------------------


def _emit_scalar(value) -> str:
    if value is None:
        return "None"
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_emit_scalar(v) for v in value) + "]"
    s = str(value)
    # keep plain tokens (module names, `nc`, `nearest`) bare when YAML would
    # read them back as the same string
    try:
        if yaml.safe_load(s) == s and "\n" not in s:
            return s
    except yaml.YAMLError:
        pass
    return json.dumps(s)


def _emit_layer(spec: LayerSpec) -> str:
    from_ = spec.from_[0] if len(spec.from_) == 1 else list(spec.from_)
    parts = [
        _emit_scalar(from_),
        str(spec.repeats),
        spec.module,
        _emit_scalar(list(spec.args)),
    ]
    return "  - [" + ", ".join(parts) + "]"


def _filtered_comments(genome: ModelGenome, region: str) -> list[str]:
    return [c for c in genome.region_comments(region) if not _BLOCK_MARKER_RE.match(c.strip())]


def render_params_block(genome: ModelGenome) -> str:
    lines = _filtered_comments(genome, "parameters")
    p = genome.params
    lines.append(f"nc: {p.nc}")
    if p.depth_multiple is not None:
        lines.append(f"depth_multiple: {_emit_scalar(p.depth_multiple)}")
    if p.width_multiple is not None:
        lines.append(f"width_multiple: {_emit_scalar(p.width_multiple)}")
    if p.scales is not None:
        lines.append("scales:")
        for letter, row in p.scales:
            lines.append(f"  {letter}: {_emit_scalar(list(row))}")
    for key, value in p.extra:
        dumped = yaml.safe_dump({key: value}, default_flow_style=True, sort_keys=False).strip()
        lines.append(dumped)
    return "\n".join(lines)


def _render_section(genome: ModelGenome, region: str, layers: tuple[LayerSpec, ...]) -> str:
    lines = _filtered_comments(genome, region)
    if layers:
        lines.append(f"{region}:")
        lines.extend(_emit_layer(l) for l in layers)
    else:
        lines.append(f"{region}: []")
    return "\n".join(lines)


def render_backbone_block(genome: ModelGenome) -> str:
    return _render_section(genome, "backbone", genome.backbone)


def render_head_block(genome: ModelGenome) -> str:
    return _render_section(genome, "head", genome.head)


def assemble_document(
    params_text: str, backbone_text: str, head_text: str, mode: GenomeMode | str
) -> str:
    """Join block texts into one document; SPLIT mode gets block markers."""
    marker = "# --Block--\n" if GenomeMode(mode) is GenomeMode.SPLIT else ""
    parts = [marker + params_text, marker + backbone_text, marker + head_text]
    return "\n\n".join(p.strip("\n") for p in parts) + "\n"


def serialize_genome(genome: ModelGenome) -> str:
    """Emit the genome in the canonical dialect (flow-style layer tuples)."""
    return assemble_document(
        render_params_block(genome),
        render_backbone_block(genome),
        render_head_block(genome),
        genome.mode,
    )


# --- blocks ------------------------------------------------------------------


def split_blocks(genome: ModelGenome) -> list[Block]:
    """SPLIT mode yields [parameters, backbone, head]; WHOLE one block."""
    if genome.mode is GenomeMode.WHOLE:
        return [
            Block(
                kind=BlockKind.WHOLE,
                layers=genome.layers,
                params=genome.params,
                raw_comments=tuple(
                    c for _, region in sorted(dict(genome.comments).items()) for c in region
                ),
                head_offset=len(genome.backbone),
            )
        ]
    return [
        Block(
            kind=BlockKind.PARAMETERS,
            params=genome.params,
            raw_comments=genome.region_comments("parameters"),
        ),
        Block(
            kind=BlockKind.BACKBONE,
            layers=genome.backbone,
            raw_comments=genome.region_comments("backbone"),
        ),
        Block(
            kind=BlockKind.HEAD,
            layers=genome.head,
            raw_comments=genome.region_comments("head"),
        ),
    ]


def merge_blocks(blocks: list[Block]) -> ModelGenome:
    """Inverse of split_blocks: rebuild a genome from its blocks."""
    kinds = [b.kind for b in blocks]
    if kinds == [BlockKind.WHOLE]:
        whole = blocks[0]
        cut = whole.head_offset if whole.head_offset is not None else len(whole.layers)
        return ModelGenome(
            mode=GenomeMode.WHOLE,
            params=whole.params,
            backbone=whole.layers[:cut],
            head=whole.layers[cut:],
            comments=(("parameters", whole.raw_comments), ("backbone", ()), ("head", ())),
        )
    if kinds != [BlockKind.PARAMETERS, BlockKind.BACKBONE, BlockKind.HEAD]:
        raise GenomeError(f"cannot merge block sequence {[k.value for k in kinds]}")
    params_b, backbone_b, head_b = blocks
    return ModelGenome(
        mode=GenomeMode.SPLIT,
        params=params_b.params,
        backbone=backbone_b.layers,
        head=head_b.layers,
        comments=(
            ("backbone", backbone_b.raw_comments),
            ("head", head_b.raw_comments),
            ("parameters", params_b.raw_comments),
        ),
    )


def genome_fingerprint(genome: ModelGenome) -> str:
    """Content digest: stable under comment/formatting edits and mode."""
    payload = {
        "params": genome.params.canonical(),
        "backbone": [l.canonical() for l in genome.backbone],
        "head": [l.canonical() for l in genome.head],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()
