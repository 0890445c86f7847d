"""Builders translating a ModelConfig into a computation graph.

The network has four stages, reflected in node-name prefixes used by the cost
report: ``backbone/`` (tailored MobileNet-Multi-Hardware trunk, output stride
16), ``encoder/`` (spatial-pyramid context encoder with multi-kernel group
convolutions), ``decoder/`` (hybrid concat/sum merge blocks over lateral
skips), and ``head/`` (linear classifier + final upsample).

Every convolution is followed by a folded-affine (inference-time batch norm)
and ReLU unless built linear: bottleneck projections and sum-merge skip
projections carry affine only, the classifier carries bias only.
"""

from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .graph import Graph, NodeSpec, infer_shapes
from .tensor import ConvParams, TensorShape

AGGREGATION_MODES = ("EncoderWidth", "DecoderWidth")
MERGE_STYLES = {"C": "concat", "S": "sum"}


@dataclass(frozen=True)
class BackboneRow:
    operator: str            # "conv" or "bneck"
    kernel: int
    exp_size: int | None
    out_c: int | None        # None = endpoint width m
    stride: int
    tap: str | None = None   # output-stride tap registered at this row's output


# Tailored MobileNet-Multi-Hardware trunk, 18 rows, strides multiply to 16.
# Row indices are 1-based everywhere they are exposed (dilation_rows config).
BACKBONE_ROWS: tuple[BackboneRow, ...] = (
    BackboneRow("conv", 3, None, 32, 2, "os2"),
    BackboneRow("bneck", 3, 96, 32, 2),
    BackboneRow("bneck", 3, 64, 32, 1, "os4"),
    BackboneRow("bneck", 5, 160, 64, 2),
    BackboneRow("bneck", 3, 192, 64, 1),
    BackboneRow("bneck", 3, 128, 64, 1),
    BackboneRow("bneck", 3, 192, 64, 1, "os8"),
    BackboneRow("bneck", 5, 384, 128, 2),
    BackboneRow("bneck", 3, 384, 128, 1),
    BackboneRow("bneck", 3, 384, 128, 1),
    BackboneRow("bneck", 3, 384, 128, 1),
    BackboneRow("bneck", 3, 768, 160, 1),
    BackboneRow("bneck", 3, 640, 160, 1),
    BackboneRow("bneck", 3, 960, 192, 1),
    BackboneRow("bneck", 5, 384, 96, 1),
    BackboneRow("bneck", 5, 384, 96, 1),
    BackboneRow("bneck", 5, 384, 96, 1),
    BackboneRow("conv", 1, None, None, 1, "os16"),
)

DEFAULT_DILATION_ROWS = (15, 16, 17)


@dataclass(frozen=True)
class EncoderConfig:
    pyramid_bins: tuple[int, ...] = (4, 8, 16)
    use_group_conv: bool = True
    group_kernels: tuple[int, ...] = (3, 5)
    enc_filters: int = 32

    def validate(self):
        if not self.pyramid_bins:
            raise ConfigError("pyramid_bins must be nonempty")
        if any(g < 1 for g in self.pyramid_bins):
            raise ConfigError(f"pyramid_bins entries must be >= 1, got {self.pyramid_bins}")
        if list(self.pyramid_bins) != sorted(set(self.pyramid_bins)):
            raise ConfigError(f"pyramid_bins must be strictly increasing, got {self.pyramid_bins}")
        if not self.group_kernels:
            raise ConfigError("group_kernels must be nonempty")
        if self.enc_filters < 1:
            raise ConfigError("enc_filters must be positive")
        if self.enc_filters % len(self.group_kernels) != 0:
            raise ConfigError(
                f"enc_filters={self.enc_filters} must be divisible by the "
                f"{len(self.group_kernels)} kernel branches"
            )


@dataclass(frozen=True)
class SkipSpec:
    output_stride: int
    merge: str  # "concat" | "sum"

    def validate(self):
        if self.output_stride not in (2, 4, 8):
            raise ConfigError(f"skip output_stride must be 2, 4 or 8, got {self.output_stride}")
        if self.merge not in ("concat", "sum"):
            raise ConfigError(f"skip merge must be 'concat' or 'sum', got {self.merge!r}")

    def token(self) -> str:
        return f"{self.output_stride}-{'C' if self.merge == 'concat' else 'S'}"


def parse_skip(token: str) -> SkipSpec:
    parts = token.strip().split("-")
    if len(parts) != 2 or parts[1] not in MERGE_STYLES:
        raise ConfigError(f"bad skip token {token!r}, expected e.g. '8-C' or '4-S'")
    try:
        stride = int(parts[0])
    except ValueError:
        raise ConfigError(f"bad skip token {token!r}") from None
    spec = SkipSpec(stride, MERGE_STYLES[parts[1]])
    spec.validate()
    return spec


@dataclass(frozen=True)
class DecoderConfig:
    skips: tuple[SkipSpec, ...] = (SkipSpec(8, "concat"), SkipSpec(4, "sum"))
    dec_filters: int = 64

    def validate(self):
        for s in self.skips:
            s.validate()
        strides = [s.output_stride for s in self.skips]
        if any(a <= b for a, b in zip(strides, strides[1:])):
            raise ConfigError(f"skip output strides must be strictly decreasing, got {strides}")
        if self.dec_filters < 1:
            raise ConfigError("dec_filters must be positive")


@dataclass(frozen=True)
class ModelConfig:
    m: int = 480
    num_classes: int = 19
    input_h: int = 1024
    input_w: int = 2048
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    aggregation_width_mode: str = "EncoderWidth"
    dilation_rows: tuple[int, ...] = DEFAULT_DILATION_ROWS

    def validate(self):
        if self.m <= 0:
            raise ConfigError(f"m must be positive, got {self.m}")
        if self.num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.input_h % 16 != 0 or self.input_w % 16 != 0:
            raise ConfigError(
                f"input_h/input_w must be divisible by 16, got {self.input_h}x{self.input_w}"
            )
        if self.aggregation_width_mode not in AGGREGATION_MODES:
            raise ConfigError(
                f"aggregation_width_mode must be one of {AGGREGATION_MODES}, "
                f"got {self.aggregation_width_mode!r}"
            )
        for row in self.dilation_rows:
            if not 1 <= row <= len(BACKBONE_ROWS):
                raise ConfigError(f"dilation_rows entry {row} outside 1..{len(BACKBONE_ROWS)}")
            if BACKBONE_ROWS[row - 1].operator != "bneck":
                raise ConfigError(f"dilation_rows entry {row} is not a bottleneck row")
        self.encoder.validate()
        self.decoder.validate()

    @property
    def aggregation_width(self) -> int:
        if self.aggregation_width_mode == "EncoderWidth":
            return self.encoder.enc_filters
        return self.decoder.dec_filters


@dataclass
class Model:
    cfg: ModelConfig
    graph: Graph
    taps: dict[str, str]
    logits: str
    shapes: dict[str, TensorShape]


def _conv_unit(graph, inp, name, conv: ConvParams, *, relu=True, affine=True, bias=False):
    """Conv followed by optional folded affine and ReLU; returns the last node."""
    ref = graph.add_node(NodeSpec(name, "Conv", {"conv": conv, "bias": bias}), (inp,))
    if affine:
        ref = graph.add_node(
            NodeSpec(f"{name}/bn", "Affine", {"channels": conv.out_c}), (ref,)
        )
    if relu:
        ref = graph.add_node(NodeSpec(f"{name}/relu", "Relu"), (ref,))
    return ref


def _depthwise_unit(graph, inp, name, channels, kernel, stride, dilation, *, relu=True):
    conv = ConvParams(kernel, kernel, stride, dilation, channels, channels, channels)
    ref = graph.add_node(NodeSpec(name, "DepthwiseConv", {"conv": conv}), (inp,))
    ref = graph.add_node(NodeSpec(f"{name}/bn", "Affine", {"channels": channels}), (ref,))
    if relu:
        ref = graph.add_node(NodeSpec(f"{name}/relu", "Relu"), (ref,))
    return ref


def build_bneck(graph, inp, name, in_c, exp_size, out_c, kernel, stride, dilation=1):
    """Inverted bottleneck: expand 1x1 -> depthwise kxk -> linear project 1x1,
    residual add when stride is 1 and channel counts match."""
    if stride not in (1, 2):
        raise ConfigError(f"{name}: bottleneck stride must be 1 or 2, got {stride}")
    if kernel not in (3, 5):
        raise ConfigError(f"{name}: bottleneck kernel must be 3 or 5, got {kernel}")
    ref = _conv_unit(graph, inp, f"{name}/expand", ConvParams(1, 1, 1, 1, 1, in_c, exp_size))
    ref = _depthwise_unit(graph, ref, f"{name}/dw", exp_size, kernel, stride, dilation)
    ref = _conv_unit(
        graph, ref, f"{name}/project", ConvParams(1, 1, 1, 1, 1, exp_size, out_c), relu=False
    )
    if stride == 1 and in_c == out_c:
        ref = graph.add_node(NodeSpec(f"{name}/add", "Add"), (inp, ref))
    return ref


def build_backbone(graph, m, dilation_rows=DEFAULT_DILATION_ROWS):
    """Instantiate all backbone rows; registers os2/os4/os8/os16 taps."""
    if m <= 0:
        raise ConfigError(f"endpoint width m must be positive, got {m}")
    ref = graph.source
    in_c = 3
    for row_idx, row in enumerate(BACKBONE_ROWS, start=1):
        out_c = row.out_c if row.out_c is not None else m
        dilation = 2 if row_idx in dilation_rows else 1
        if row.operator == "conv":
            name = "backbone/stem" if row_idx == 1 else "backbone/feature"
            conv = ConvParams(row.kernel, row.kernel, row.stride, 1, 1, in_c, out_c)
            ref = _conv_unit(graph, ref, name, conv)
        else:
            ref = build_bneck(
                graph, ref, f"backbone/bneck{row_idx:02d}",
                in_c, row.exp_size, out_c, row.kernel, row.stride, dilation,
            )
        if row.tap:
            graph.add_tap(row.tap, ref)
        in_c = out_c
    return dict(graph.taps)


def build_multi_kernel_group_conv(graph, inp, name, in_c, cfg: EncoderConfig):
    """Parallel separable-conv branches with per-branch kernel sizes.

    Grouped: channels split equally, one group per kernel size. Ungrouped:
    each kernel size runs over all channels. Either way every branch emits
    enc_filters/len(kernels) channels and the branches are concatenated.
    """
    n = len(cfg.group_kernels)
    branch_c = cfg.enc_filters // n
    outs = []
    for i, kernel in enumerate(cfg.group_kernels):
        branch = f"{name}/group{i}"
        if cfg.use_group_conv:
            if in_c % n != 0:
                raise ConfigError(
                    f"{name}: {in_c} channels cannot split into {n} equal groups"
                )
            gc = in_c // n
            ref = graph.add_node(
                NodeSpec(f"{branch}/slice", "Slice", {"start": i * gc, "stop": (i + 1) * gc}),
                (inp,),
            )
            width = gc
        else:
            ref = inp
            width = in_c
        ref = _depthwise_unit(graph, ref, f"{branch}/dw", width, kernel, 1, 1)
        ref = _conv_unit(graph, ref, f"{branch}/pw", ConvParams(1, 1, 1, 1, 1, width, branch_c))
        outs.append(ref)
    if len(outs) == 1:
        return outs[0]
    return graph.add_node(NodeSpec(f"{name}/concat", "ConcatChannels"), tuple(outs))


def build_context_encoder(graph, os16, name, in_c, os16_hw, cfg: EncoderConfig, out_width):
    """Pyramid levels (pool -> multi-kernel conv -> resize back) concatenated
    with the raw feature, then a 1x1 aggregation conv to out_width."""
    h16, w16 = os16_hw
    for g in cfg.pyramid_bins:
        if g > min(h16, w16):
            raise ConfigError(
                f"pyramid grid {g}x{g} exceeds the {h16}x{w16} encoder input"
            )
    levels = [os16]
    for g in cfg.pyramid_bins:
        level = f"{name}/level{g:02d}"
        if g == 1:
            ref = graph.add_node(NodeSpec(f"{level}/pool", "GlobalPool"), (os16,))
        else:
            ref = graph.add_node(
                NodeSpec(f"{level}/pool", "AvgPoolGrid", {"grid_h": g, "grid_w": g}), (os16,)
            )
        ref = build_multi_kernel_group_conv(graph, ref, level, in_c, cfg)
        ref = graph.add_node(
            NodeSpec(f"{level}/resize", "BilinearResize", {"out_h": h16, "out_w": w16}), (ref,)
        )
        levels.append(ref)
    cat = graph.add_node(NodeSpec(f"{name}/concat", "ConcatChannels"), tuple(levels))
    cat_width = in_c + len(cfg.pyramid_bins) * cfg.enc_filters
    return _conv_unit(
        graph, cat, f"{name}/aggregate", ConvParams(1, 1, 1, 1, 1, cat_width, out_width)
    )


def build_concat_merge(graph, semantic, skip, name, sem_c, skip_c, dec_filters):
    """concat -> 1x1 conv -> 3x3 depthwise -> 1x1 conv, all to dec_filters."""
    ref = graph.add_node(NodeSpec(f"{name}/concat", "ConcatChannels"), (semantic, skip))
    ref = _conv_unit(
        graph, ref, f"{name}/conv_in", ConvParams(1, 1, 1, 1, 1, sem_c + skip_c, dec_filters)
    )
    ref = _depthwise_unit(graph, ref, f"{name}/dw", dec_filters, 3, 1, 1)
    ref = _conv_unit(
        graph, ref, f"{name}/conv_out", ConvParams(1, 1, 1, 1, 1, dec_filters, dec_filters)
    )
    return ref


def build_sum_merge(graph, semantic, skip, name, width, skip_c):
    """semantic + linear 1x1 projection of the skip to the semantic width."""
    proj = _conv_unit(
        graph, skip, f"{name}/skip_proj", ConvParams(1, 1, 1, 1, 1, skip_c, width), relu=False
    )
    return graph.add_node(NodeSpec(f"{name}/add", "Add"), (semantic, proj))


def build_decoder(graph, encoded, taps, cfg: ModelConfig, tap_widths):
    """Walk the skip list coarse-to-fine, then classify and upsample."""
    dec = cfg.decoder
    width = cfg.aggregation_width
    ref = encoded
    for skip in dec.skips:
        tap = f"os{skip.output_stride}"
        if tap not in taps:
            raise ConfigError(f"decoder requests missing backbone tap {tap!r}")
        sh = cfg.input_h // skip.output_stride
        sw = cfg.input_w // skip.output_stride
        ref = graph.add_node(
            NodeSpec(f"decoder/to_{tap}", "BilinearResize", {"out_h": sh, "out_w": sw}), (ref,)
        )
        merge = f"decoder/merge_{tap}"
        if skip.merge == "concat":
            ref = build_concat_merge(
                graph, ref, taps[tap], merge, width, tap_widths[tap], dec.dec_filters
            )
            width = dec.dec_filters
        else:
            ref = build_sum_merge(graph, ref, taps[tap], merge, width, tap_widths[tap])
    ref = graph.add_node(
        NodeSpec(
            "head/classifier",
            "Conv",
            {"conv": ConvParams(1, 1, 1, 1, 1, width, cfg.num_classes), "bias": True},
        ),
        (ref,),
    )
    return graph.add_node(
        NodeSpec("head/upsample", "BilinearResize", {"out_h": cfg.input_h, "out_w": cfg.input_w}),
        (ref,),
    )


def tap_widths_for(m: int) -> dict[str, int]:
    widths = {}
    c = 3
    for row in BACKBONE_ROWS:
        c = row.out_c if row.out_c is not None else m
        if row.tap:
            widths[row.tap] = c
    return widths


def build_model(cfg: ModelConfig) -> Model:
    """source -> backbone -> context encoder -> decoder -> logits,
    shape-checked at the configured resolution."""
    cfg.validate()
    graph = Graph()
    taps = build_backbone(graph, cfg.m, cfg.dilation_rows)
    os16_hw = (cfg.input_h // 16, cfg.input_w // 16)
    encoded = build_context_encoder(
        graph, taps["os16"], "encoder", cfg.m, os16_hw, cfg.encoder, cfg.aggregation_width
    )
    logits = build_decoder(graph, encoded, taps, cfg, tap_widths_for(cfg.m))
    graph.outputs = [logits]
    shapes = infer_shapes(graph, TensorShape(cfg.input_h, cfg.input_w, 3))
    return Model(cfg, graph, dict(taps), logits, shapes)


# --- flat key=value config files -------------------------------------------

_CONFIG_KEYS = (
    "m", "num_classes", "input_h", "input_w", "enc_filters", "dec_filters",
    "pyramid_bins", "use_group_conv", "group_kernels", "skips",
    "aggregation_width_mode", "dilation_rows",
)


def _parse_int(key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"config key {key}: expected integer, got {value!r}") from None


def _parse_int_list(key, value):
    if not value.strip():
        return ()
    return tuple(_parse_int(key, v) for v in value.split(","))


def _parse_bool(key, value):
    lowered = value.strip().lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    raise ConfigError(f"config key {key}: expected true/false, got {value!r}")


def parse_config(text: str) -> ModelConfig:
    """Parse flat key=value lines; omitted keys take the default configuration,
    unknown keys are rejected. '#' starts a comment."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        raw[key] = value

    enc = EncoderConfig(
        pyramid_bins=_parse_int_list("pyramid_bins", raw["pyramid_bins"])
        if "pyramid_bins" in raw else EncoderConfig.pyramid_bins,
        use_group_conv=_parse_bool("use_group_conv", raw["use_group_conv"])
        if "use_group_conv" in raw else EncoderConfig.use_group_conv,
        group_kernels=_parse_int_list("group_kernels", raw["group_kernels"])
        if "group_kernels" in raw else EncoderConfig.group_kernels,
        enc_filters=_parse_int("enc_filters", raw["enc_filters"])
        if "enc_filters" in raw else EncoderConfig.enc_filters,
    )
    if "skips" in raw:
        tokens = [t for t in raw["skips"].split(",") if t.strip()]
        skips = tuple(parse_skip(t) for t in tokens)
    else:
        skips = DecoderConfig.skips
    dec = DecoderConfig(
        skips=skips,
        dec_filters=_parse_int("dec_filters", raw["dec_filters"])
        if "dec_filters" in raw else DecoderConfig.dec_filters,
    )
    cfg = ModelConfig(
        m=_parse_int("m", raw["m"]) if "m" in raw else ModelConfig.m,
        num_classes=_parse_int("num_classes", raw["num_classes"])
        if "num_classes" in raw else ModelConfig.num_classes,
        input_h=_parse_int("input_h", raw["input_h"]) if "input_h" in raw else ModelConfig.input_h,
        input_w=_parse_int("input_w", raw["input_w"]) if "input_w" in raw else ModelConfig.input_w,
        encoder=enc,
        decoder=dec,
        aggregation_width_mode=raw.get("aggregation_width_mode", ModelConfig.aggregation_width_mode),
        dilation_rows=_parse_int_list("dilation_rows", raw["dilation_rows"])
        if "dilation_rows" in raw else DEFAULT_DILATION_ROWS,
    )
    cfg.validate()
    return cfg


def load_config(path) -> ModelConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: ModelConfig) -> str:
    lines = [
        f"m={cfg.m}",
        f"num_classes={cfg.num_classes}",
        f"input_h={cfg.input_h}",
        f"input_w={cfg.input_w}",
        f"enc_filters={cfg.encoder.enc_filters}",
        f"dec_filters={cfg.decoder.dec_filters}",
        "pyramid_bins=" + ",".join(str(g) for g in cfg.encoder.pyramid_bins),
        f"use_group_conv={'true' if cfg.encoder.use_group_conv else 'false'}",
        "group_kernels=" + ",".join(str(k) for k in cfg.encoder.group_kernels),
        "skips=" + ",".join(s.token() for s in cfg.decoder.skips),
        f"aggregation_width_mode={cfg.aggregation_width_mode}",
        "dilation_rows=" + ",".join(str(r) for r in cfg.dilation_rows),
    ]
    return "\n".join(lines) + "\n"


def cityscapes_config() -> ModelConfig:
    """Default configuration: 19 classes at 1024x2048, filters (32, 64)."""
    return ModelConfig()


def ade20k_config() -> ModelConfig:
    """32 classes at 512x512 with m=448 and filters (64, 64)."""
    return ModelConfig(
        m=448, num_classes=32, input_h=512, input_w=512,
        encoder=EncoderConfig(enc_filters=64),
        decoder=DecoderConfig(dec_filters=64),
    )


def with_skips(cfg: ModelConfig, skips: tuple[SkipSpec, ...]) -> ModelConfig:
    return replace(cfg, decoder=replace(cfg.decoder, skips=skips))
