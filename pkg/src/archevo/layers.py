"""Supported layer modules and their expansion into conv primitives.

Every supported module token maps to one ModuleSig describing arity, channel
propagation, spatial stride, repeat semantics, and an expansion into
convolution primitives from which parameter counts and multiply-accumulate
estimates are derived.  The expansion follows the Ultralytics block
definitions:

=============  =============================================================
Conv           k x k conv (no bias) + batchnorm (2*c_out learnable terms)
Bottleneck     Conv(c1, c2/2, 3) -> Conv(c2/2, c2, 3); residual add when
               shortcut and c1 == c2
SPP            Conv(c1, c1/2, 1) -> 3 maxpools -> Conv(4*(c1/2), c2, 1)
SPPF           Conv(c1, c1/2, 1) -> 3 chained maxpools -> Conv(4*(c1/2), c2, 1)
C2f            Conv(c1, c2, 1) split in two -> n inner bottlenecks
               (two 3x3 convs at c2/2) -> Conv((2+n)*c2/2, c2, 1); the layer
               tuple's repeat count becomes n (internal repeats)
SCDown         Conv(c1, c2, 1) -> depthwise k x k stride-s Conv(c2, c2)
PSA            Conv(c1, c1, 1) split -> attention (1x1 qkv/proj convs +
               3x3 depthwise positional conv) + 1x1 feed-forward pair ->
               Conv(c1, c1, 1); requires c1 == c2
Concat         parameter-free; output channels = sum of input channels
nn.Upsample    parameter-free; multiplies spatial resolution by the factor
Detect         per input: box branch Conv(x, c2d, 3) -> Conv(c2d, c2d, 3) ->
               biased 1x1 conv to 4*reg_max; class branch Conv(x, c3d, 3) ->
               Conv(c3d, c3d, 3) -> biased 1x1 conv to nc; plus the 16-weight
               distribution-integral conv.  c2d = max(16, ch0/4, 64),
               c3d = max(ch0, min(nc, 100)), reg_max = 16
v10Detect      Detect's box branch; class branch uses depthwise 3x3 +
               pointwise 1x1 pairs; both branches duplicated for the
               one-to-one head
=============  =============================================================

Attention matmuls and pooling are excluded from the MAC estimate; only conv
primitives count.  These formulas are the contract for the whole package:
the static analyzer, the CLI `analyze` report, and the oracle tests all rely
on this table.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

REG_MAX = 16

DETECT_MODULES = frozenset({"Detect", "v10Detect"})

# modules whose repeat count participates in depth scaling
REPEAT_SCALABLE = frozenset({"Conv", "Bottleneck", "SPP", "SPPF", "C2f", "SCDown", "PSA"})

# modules where the (scaled) repeat count moves inside the block
INTERNAL_REPEAT = frozenset({"C2f"})

# modules taking their output channel count from args[0]
CHANNEL_ARG = frozenset({"Conv", "Bottleneck", "SPP", "SPPF", "C2f", "SCDown", "PSA"})


def make_divisible(x: float, divisor: int = 8) -> int:
    """Round channel counts up to the nearest multiple of divisor."""
    return int(math.ceil(x / divisor) * divisor)


@dataclass(frozen=True)
class ConvPrim:
    """One convolution primitive inside a module expansion.

    ``rel_res`` is the primitive's output resolution relative to the module
    input (1.0 = same, 0.5 = after one stride-2 step).
    """

    c_in: int
    c_out: int
    k: int = 1
    groups: int = 1
    bias: bool = False
    norm: bool = True
    rel_res: float = 1.0

    @property
    def params(self) -> int:
        p = self.k * self.k * self.c_in * self.c_out // self.groups
        if self.norm:
            p += 2 * self.c_out
        if self.bias:
            p += self.c_out
        return p

    def macs(self, out_h: float, out_w: float) -> float:
        return (self.k * self.k * self.c_in * self.c_out / self.groups) * out_h * out_w


class BadArgsError(ValueError):
    """Module args violate the signature's arity or value constraints."""


def _int_arg(args, idx, name, default=None, minimum=1):
    if idx >= len(args):
        if default is None:
            raise BadArgsError(f"missing arg {idx} ({name})")
        return default
    v = args[idx]
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        raise BadArgsError(f"arg {idx} ({name}) must be an integer >= {minimum}, got {v!r}")
    return v


def _conv_expand(c1, c2, args, nc, n_internal):
    k = _int_arg(args, 1, "kernel", default=1)
    s = _int_arg(args, 2, "stride", default=1)
    return [ConvPrim(c1, c2, k=k, rel_res=1.0 / s)]


def _bottleneck_expand(c1, c2, args, nc, n_internal):
    if len(args) > 1 and not isinstance(args[1], bool):
        raise BadArgsError(f"shortcut flag must be a boolean, got {args[1]!r}")
    c_hidden = int(c2 * 0.5)
    return [ConvPrim(c1, c_hidden, k=3), ConvPrim(c_hidden, c2, k=3)]


def _spp_expand(c1, c2, args, nc, n_internal):
    if len(args) < 2 or not isinstance(args[1], tuple) or not args[1]:
        raise BadArgsError("SPP needs a pool-size list as second arg")
    n_pools = len(args[1])
    c_hidden = c1 // 2
    return [ConvPrim(c1, c_hidden, k=1), ConvPrim(c_hidden * (n_pools + 1), c2, k=1)]


def _sppf_expand(c1, c2, args, nc, n_internal):
    _int_arg(args, 1, "pool size", default=5)
    c_hidden = c1 // 2
    return [ConvPrim(c1, c_hidden, k=1), ConvPrim(c_hidden * 4, c2, k=1)]


def _c2f_expand(c1, c2, args, nc, n_internal):
    if len(args) > 1 and not isinstance(args[1], bool):
        raise BadArgsError(f"shortcut flag must be a boolean, got {args[1]!r}")
    c = int(c2 * 0.5)
    prims = [ConvPrim(c1, 2 * c, k=1), ConvPrim((2 + n_internal) * c, c2, k=1)]
    for _ in range(n_internal):
        prims += [ConvPrim(c, c, k=3), ConvPrim(c, c, k=3)]
    return prims


def _scdown_expand(c1, c2, args, nc, n_internal):
    k = _int_arg(args, 1, "kernel")
    s = _int_arg(args, 2, "stride")
    return [
        ConvPrim(c1, c2, k=1),
        ConvPrim(c2, c2, k=k, groups=c2, rel_res=1.0 / s),
    ]


def _psa_expand(c1, c2, args, nc, n_internal):
    if c1 != c2:
        raise BadArgsError(f"PSA requires matching in/out channels, got {c1} -> {c2}")
    c = int(c1 * 0.5)
    # attention with 64-wide heads and half-width keys; qkv packs q, k, v
    num_heads = max(1, c // 64)
    head_dim = c // num_heads
    key_dim = head_dim // 2
    qkv_out = c + 2 * key_dim * num_heads
    return [
        ConvPrim(c1, 2 * c, k=1),  # entry split
        ConvPrim(c, qkv_out, k=1),  # attention qkv
        ConvPrim(c, c, k=1),  # attention projection
        ConvPrim(c, c, k=3, groups=c),  # positional depthwise
        ConvPrim(c, 2 * c, k=1),  # feed-forward expand
        ConvPrim(2 * c, c, k=1),  # feed-forward project
        ConvPrim(2 * c, c1, k=1),  # exit fuse
    ]


_EXPANDERS: dict[str, Callable] = {
    "Conv": _conv_expand,
    "Bottleneck": _bottleneck_expand,
    "SPP": _spp_expand,
    "SPPF": _sppf_expand,
    "C2f": _c2f_expand,
    "SCDown": _scdown_expand,
    "PSA": _psa_expand,
}


def module_stride(module: str, args: tuple) -> float:
    """Factor by which the module multiplies the cumulative stride (<1 upsamples)."""
    if module == "Conv":
        return float(_int_arg(args, 2, "stride", default=1))
    if module == "SCDown":
        return float(_int_arg(args, 2, "stride"))
    if module == "nn.Upsample":
        factor = args[1] if len(args) > 1 else None
        if not isinstance(factor, (int, float)) or isinstance(factor, bool) or factor <= 0:
            raise BadArgsError(f"upsample factor must be a positive number, got {factor!r}")
        return 1.0 / float(factor)
    return 1.0


def expand_module(module: str, c1: int, c2: int, args: tuple, nc: int, n_internal: int = 1) -> list[ConvPrim]:
    """Conv primitives for a single instance of a single-input module."""
    if module in ("Concat", "nn.Upsample"):
        return []
    expander = _EXPANDERS.get(module)
    if expander is None:
        raise KeyError(module)
    return expander(c1, c2, args, nc, n_internal)


def detect_branch_channels(ch: list[int], nc: int) -> tuple[int, int]:
    c2d = max(16, ch[0] // 4, REG_MAX * 4)
    c3d = max(ch[0], min(nc, 100))
    return c2d, c3d


def expand_detect(module: str, ch: list[int], nc: int) -> list[list[ConvPrim]]:
    """Per-input-branch conv primitives for a detection head.

    Returns one primitive list per input; the 16-weight distribution conv is
    appended to the first branch so totals stay additive per layer.
    """
    c2d, c3d = detect_branch_channels(ch, nc)
    branches = []
    for x in ch:
        box = [
            ConvPrim(x, c2d, k=3),
            ConvPrim(c2d, c2d, k=3),
            ConvPrim(c2d, 4 * REG_MAX, k=1, bias=True, norm=False),
        ]
        if module == "v10Detect":
            cls = [
                ConvPrim(x, x, k=3, groups=x),
                ConvPrim(x, c3d, k=1),
                ConvPrim(c3d, c3d, k=3, groups=c3d),
                ConvPrim(c3d, c3d, k=1),
                ConvPrim(c3d, nc, k=1, bias=True, norm=False),
            ]
        else:
            cls = [
                ConvPrim(x, c3d, k=3),
                ConvPrim(c3d, c3d, k=3),
                ConvPrim(c3d, nc, k=1, bias=True, norm=False),
            ]
        branch = box + cls
        if module == "v10Detect":
            # one-to-one head duplicates both branches
            branch = branch + list(branch)
        branches.append(branch)
    # distribution-integral conv: reg_max weights, no norm/bias, negligible MACs
    branches[0] = branches[0] + [ConvPrim(REG_MAX, 1, k=1, norm=False, rel_res=0.0)]
    return branches


def is_known_module(module: str) -> bool:
    return module in _EXPANDERS or module in DETECT_MODULES or module in ("Concat", "nn.Upsample")
