"""Layer-graph construction, validity checking, and static cost analysis.

Builds the DAG implied by the ``from`` fields, resolves depth/width scaling,
propagates channel counts and stride products, and derives the two
deterministic objectives: trainable-parameter count and a multiply-accumulate
inference-cost proxy at a reference input resolution.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .genome import (
    GenomeError,
    GenomeMode,
    MalformedLayerError,
    MalformedParamsError,
    MissingSectionError,
    ModelGenome,
    YamlSyntaxError,
    parse_genome,
)
from .layers import (
    BadArgsError,
    CHANNEL_ARG,
    DETECT_MODULES,
    INTERNAL_REPEAT,
    REPEAT_SCALABLE,
    expand_detect,
    expand_module,
    is_known_module,
    make_divisible,
    module_stride,
)

DEFAULT_INPUT_HW = (640, 640)

# diagnostic codes for graph construction
INDEX_OUT_OF_RANGE = "INDEX_OUT_OF_RANGE"
UNKNOWN_MODULE = "UNKNOWN_MODULE"
BAD_ARGS = "BAD_ARGS"
NO_DETECT_HEAD = "NO_DETECT_HEAD"
MULTIPLE_DETECT_HEADS = "MULTIPLE_DETECT_HEADS"
STRIDE_MISMATCH = "STRIDE_MISMATCH"
CHANNEL_MISMATCH = "CHANNEL_MISMATCH"

# diagnostic codes for parse failures, used by validate_text
PARSE_CODES = {
    YamlSyntaxError: "YAML_SYNTAX",
    MissingSectionError: "MISSING_SECTION",
    MalformedLayerError: "MALFORMED_LAYER",
    MalformedParamsError: "MALFORMED_PARAMS",
}


class GraphError(Exception):
    """Graph construction failure with a machine-readable diagnostic code."""

    def __init__(self, code: str, message: str, layer: int | None = None):
        self.code = code
        self.layer = layer
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    layer: int | None = None

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "layer": self.layer}


@dataclass(frozen=True)
class ValidityVerdict:
    valid: bool
    diagnostics: tuple[Diagnostic, ...] = ()

    def to_dict(self) -> dict:
        return {"valid": self.valid, "diagnostics": [d.to_dict() for d in self.diagnostics]}


@dataclass(frozen=True)
class ArchNode:
    index: int
    module: str
    inputs: tuple[int, ...]  # -1 denotes the raw image
    args: tuple
    seq_repeats: int  # sequential copies of the module
    internal_n: int  # inner repeat count for C2f-style modules
    in_channels: tuple[int, ...]
    out_channels: int
    input_stride: float
    stride: float  # cumulative downsample factor of the node output


@dataclass(frozen=True)
class ArchGraph:
    nodes: tuple[ArchNode, ...]
    nc: int
    detect_nc: int
    detect_index: int
    detect_inputs: tuple[int, ...]
    detect_input_strides: tuple[float, ...]
    depth: float
    width: float
    max_channels: float
    in_channels: int = 3

    @property
    def detect_stride_coverage(self) -> int:
        """Number of distinct strides feeding the detection head."""
        return len(set(self.detect_input_strides))


@dataclass(frozen=True)
class LayerCost:
    index: int
    module: str
    repeats: int
    out_channels: int
    stride: float
    params: int
    macs: float

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "module": self.module,
            "repeats": self.repeats,
            "out_channels": self.out_channels,
            "stride": self.stride,
            "params": self.params,
            "macs": self.macs,
        }


@dataclass(frozen=True)
class CostReport:
    total_params: int
    cost_units: float
    per_layer: tuple[LayerCost, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "total_params": self.total_params,
            "cost_units": self.cost_units,
            "per_layer": [l.to_dict() for l in self.per_layer],
        }


def _effective_repeats(module: str, raw: int, depth: float, layer: int) -> int:
    if raw == 1:
        return 1
    if module not in REPEAT_SCALABLE:
        raise GraphError(BAD_ARGS, f"{module} cannot be repeated (repeats={raw})", layer)
    # round half up, floor 1
    return max(1, int(raw * depth + 0.5))


def _resolve_channel_arg(spec_args: tuple, nc: int, width: float, max_ch: float, layer: int) -> int:
    if not spec_args:
        raise GraphError(BAD_ARGS, "missing output-channel arg", layer)
    raw = spec_args[0]
    if raw == "nc":
        return nc
    if not isinstance(raw, int) or isinstance(raw, bool) or raw <= 0:
        raise GraphError(BAD_ARGS, f"output channels must be a positive integer, got {raw!r}", layer)
    if raw == nc:
        return nc
    return make_divisible(min(raw, max_ch) * width, 8)


def build_graph(genome: ModelGenome, scale: str | None = None, in_channels: int = 3) -> ArchGraph:
    """Resolve indices, scaling, channels, and strides into an ArchGraph.

    Raises GraphError with one of the module's diagnostic codes on the first
    defect found.
    """
    try:
        depth, width, max_ch = genome.params.scale_row(scale)
    except KeyError as exc:
        raise GraphError(BAD_ARGS, str(exc)) from exc
    nc = genome.params.nc
    layers = genome.layers
    nodes: list[ArchNode] = []
    detect_indices: list[int] = []
    detect_nc = nc

    for i, spec in enumerate(layers):
        module = spec.module
        if not is_known_module(module):
            raise GraphError(UNKNOWN_MODULE, f"unsupported module {module!r}", i)

        inputs = []
        for f in spec.from_:
            resolved = i + f if f < 0 else f
            if resolved == -1 and i == 0:
                inputs.append(-1)
                continue
            if resolved < 0 or resolved >= i:
                raise GraphError(
                    INDEX_OUT_OF_RANGE,
                    f"'from' {f} resolves to {resolved}, outside 0..{i - 1}",
                    i,
                )
            inputs.append(resolved)
        if module not in DETECT_MODULES and module != "Concat" and len(inputs) != 1:
            raise GraphError(BAD_ARGS, f"{module} takes exactly one input, got {len(inputs)}", i)

        in_ch = tuple(in_channels if r == -1 else nodes[r].out_channels for r in inputs)
        in_strides = tuple(1.0 if r == -1 else nodes[r].stride for r in inputs)
        if any(r != -1 and nodes[r].module in DETECT_MODULES for r in inputs):
            raise GraphError(BAD_ARGS, "cannot consume the output of a detection head", i)

        eff = _effective_repeats(module, spec.repeats, depth, i)
        internal_n = eff if module in INTERNAL_REPEAT else 1
        seq = 1 if module in INTERNAL_REPEAT else eff

        try:
            if module in DETECT_MODULES:
                detect_indices.append(i)
                arg0 = spec.args[0] if spec.args else "nc"
                if arg0 == "nc":
                    detect_nc = nc
                elif isinstance(arg0, int) and not isinstance(arg0, bool) and arg0 > 0:
                    detect_nc = arg0
                else:
                    raise BadArgsError(f"class-count arg must be `nc` or a positive integer, got {arg0!r}")
                out_ch = 0
                stride = 0.0
                input_stride = in_strides[0] if in_strides else 1.0
            elif module == "Concat":
                if spec.args and spec.args[0] != 1:
                    raise BadArgsError(f"only channel-axis concat is supported, got axis {spec.args[0]!r}")
                if len(set(in_strides)) > 1:
                    raise GraphError(
                        STRIDE_MISMATCH,
                        f"concat inputs have different strides {sorted(set(in_strides))}",
                        i,
                    )
                out_ch = sum(in_ch)
                input_stride = in_strides[0]
                stride = input_stride
            elif module == "nn.Upsample":
                out_ch = in_ch[0]
                input_stride = in_strides[0]
                stride = input_stride * module_stride(module, spec.args)
            else:
                out_ch = _resolve_channel_arg(spec.args, nc, width, max_ch, i)
                if seq > 1 and in_ch[0] != out_ch:
                    raise GraphError(
                        CHANNEL_MISMATCH,
                        f"repeated {module} needs matching in/out channels ({in_ch[0]} != {out_ch})",
                        i,
                    )
                # verify the expansion accepts the args (arity / value checks)
                expand_module(module, in_ch[0], out_ch, spec.args, nc, internal_n)
                input_stride = in_strides[0]
                per_instance = module_stride(module, spec.args)
                stride = input_stride * (per_instance**seq)
        except BadArgsError as exc:
            raise GraphError(BAD_ARGS, str(exc), i) from exc

        nodes.append(
            ArchNode(
                index=i,
                module=module,
                inputs=tuple(inputs),
                args=spec.args,
                seq_repeats=seq,
                internal_n=internal_n,
                in_channels=in_ch,
                out_channels=out_ch,
                input_stride=input_stride,
                stride=stride,
            )
        )

    if not detect_indices:
        raise GraphError(NO_DETECT_HEAD, "no Detect-family layer present")
    if len(detect_indices) > 1:
        raise GraphError(MULTIPLE_DETECT_HEADS, f"detection heads at {detect_indices}")
    detect_index = detect_indices[0]
    if detect_index != len(nodes) - 1:
        raise GraphError(NO_DETECT_HEAD, "detection head must be the terminal layer", detect_index)

    detect_node = nodes[detect_index]
    return ArchGraph(
        nodes=tuple(nodes),
        nc=nc,
        detect_nc=detect_nc,
        detect_index=detect_index,
        detect_inputs=detect_node.inputs,
        detect_input_strides=tuple(
            1.0 if r == -1 else nodes[r].stride for r in detect_node.inputs
        ),
        depth=depth,
        width=width,
        max_channels=max_ch,
        in_channels=in_channels,
    )


def cost_report(
    graph: ArchGraph,
    input_hw: tuple[int, int] = DEFAULT_INPUT_HW,
    nc: int | None = None,
) -> CostReport:
    """Per-layer parameter and MAC breakdown at the given input resolution."""
    h0, w0 = input_hw
    if h0 <= 0 or w0 <= 0:
        raise ValueError(f"input resolution must be positive, got {input_hw}")
    nc = graph.detect_nc if nc is None else nc
    per_layer = []
    for node in graph.nodes:
        if node.module in DETECT_MODULES:
            branches = expand_detect(node.module, list(node.in_channels), nc)
            params = sum(p.params for br in branches for p in br)
            macs = 0.0
            for branch, stride in zip(branches, graph.detect_input_strides):
                bh, bw = h0 / stride, w0 / stride
                macs += sum(p.macs(bh * p.rel_res, bw * p.rel_res) for p in branch)
        elif node.module in ("Concat", "nn.Upsample"):
            params, macs = 0, 0.0
        else:
            prims = expand_module(
                node.module, node.in_channels[0], node.out_channels, node.args, nc, node.internal_n
            )
            params = sum(p.params for p in prims) * node.seq_repeats
            macs = 0.0
            inst_h, inst_w = h0 / node.input_stride, w0 / node.input_stride
            per_instance = module_stride(node.module, node.args)
            for _ in range(node.seq_repeats):
                macs += sum(p.macs(inst_h * p.rel_res, inst_w * p.rel_res) for p in prims)
                inst_h /= per_instance
                inst_w /= per_instance
        per_layer.append(
            LayerCost(
                index=node.index,
                module=node.module,
                repeats=node.internal_n if node.module in INTERNAL_REPEAT else node.seq_repeats,
                out_channels=node.out_channels,
                stride=node.stride,
                params=params,
                macs=macs,
            )
        )
    return CostReport(
        total_params=sum(l.params for l in per_layer),
        cost_units=float(sum(l.macs for l in per_layer)),
        per_layer=tuple(per_layer),
    )


def count_parameters(graph: ArchGraph, nc: int | None = None) -> int:
    """Total trainable parameters under the documented expansion table."""
    return cost_report(graph, nc=nc).total_params


def estimate_inference_cost(
    graph: ArchGraph, input_hw: tuple[int, int] = DEFAULT_INPUT_HW
) -> float:
    """Multiply-accumulate estimate at the reference resolution."""
    return cost_report(graph, input_hw=input_hw).cost_units


def validate_genome(genome: ModelGenome, scale: str | None = None) -> ValidityVerdict:
    """Valid iff the layer graph builds; diagnostics carry the failure."""
    try:
        build_graph(genome, scale=scale)
    except GraphError as exc:
        return ValidityVerdict(False, (Diagnostic(exc.code, str(exc), exc.layer),))
    return ValidityVerdict(True)


def validate_text(
    text: str, mode: GenomeMode | str = GenomeMode.SPLIT, scale: str | None = None
) -> ValidityVerdict:
    """Total validity check on raw document text (parse + graph build)."""
    try:
        genome = parse_genome(text, mode)
    except GenomeError as exc:
        code = PARSE_CODES.get(type(exc), "YAML_SYNTAX")
        return ValidityVerdict(False, (Diagnostic(code, str(exc), exc.line),))
    return validate_genome(genome, scale=scale)
