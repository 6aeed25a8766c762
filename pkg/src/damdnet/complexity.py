"""Parameter and FLOP accounting over symbolic network specs.

Counting conventions (documented because published tables mix them):

* Parameters: weight tensors of convolutions, depthwise convolutions, fully
  connected layers (with biases), squeeze-excitation bottlenecks and the
  per-group gating affines.  Batch-norm affine terms and running statistics
  are excluded.
* FLOPs: one fused multiply-add counts as one FLOP, so convolutions cost
  k^2 * Cin/groups * Cout * Hout * Wout, depthwise k^2 * C * Hout * Wout and
  fully connected Cin * Cout.  Normalization costs two ops per element,
  activations / pooling / elementwise gates one op per element produced.
  Reported in GFLOPs (1e9).

The baseline encodings (ResNeXt50 32x4d, MobileNetV2, DenseNet121) exist for
the analyzer only; they are not executable networks here.
"""

from .errors import ConfigError
from .network import OUTPUT_DIM, LayerDesc, NetworkSpec, build_variant


def _layer_params(l: LayerDesc):
    if l.kind == "conv":
        p = l.k * l.k * (l.cin // l.groups) * l.cout
        return p + (l.cout if l.bias else 0)
    if l.kind == "depthwise":
        return l.k * l.k * l.cin
    if l.kind == "linear":
        return l.cin * l.cout + (l.cout if l.bias else 0)
    if l.kind == "se":
        hidden = l.groups
        return l.cin * hidden + hidden + hidden * l.cin + l.cin
    if l.kind == "sge":
        return 2 * l.groups
    # bn (excluded by convention), act, pool, gap, add, mul, concat
    return 0


def _layer_flops(l: LayerDesc):
    hw_out = l.hout * l.hout
    hw_in = l.hin * l.hin
    if l.kind == "conv":
        macs = l.k * l.k * (l.cin // l.groups) * l.cout * hw_out
        return macs + (l.cout * hw_out if l.bias else 0)
    if l.kind == "depthwise":
        return l.k * l.k * l.cin * hw_out
    if l.kind == "linear":
        return l.cin * l.cout + (l.cout if l.bias else 0)
    if l.kind == "bn":
        return 2 * l.cout * hw_out
    if l.kind in ("act", "sigmoid", "mul", "add"):
        return l.cout * hw_out
    if l.kind == "pool":
        return l.k * l.k * l.cout * hw_out
    if l.kind == "gap":
        return l.cin * hw_in
    if l.kind == "se":
        hidden = l.groups
        return l.cin * hw_in + 2 * l.cin * hidden + l.cin + l.cin * hw_in
    if l.kind == "sge":
        return 3 * l.cin * hw_in + 5 * l.groups * hw_in
    return 0


def count_params(spec: NetworkSpec):
    """Exact trainable weight element count for a spec."""
    if not spec.layers:
        raise ConfigError(f"spec '{spec.name}' has no layers")
    return sum(_layer_params(l) for l in spec.layers)


def count_flops(spec: NetworkSpec, input_res=None):
    """Forward cost in GFLOPs at the spec's resolution.

    The spec embeds resolved spatial dimensions, so a different resolution
    requires rebuilding the spec rather than rescaling counts.
    """
    if not spec.layers:
        raise ConfigError(f"spec '{spec.name}' has no layers")
    if input_res is not None and input_res != spec.input_size:
        raise ConfigError(
            f"spec '{spec.name}' was built for {spec.input_size}x{spec.input_size}; "
            f"rebuild it for {input_res}"
        )
    return sum(_layer_flops(l) for l in spec.layers) / 1e9


# -- baseline encodings ----------------------------------------------------------


def _conv_out(size, k, stride, padding):
    return (size + 2 * padding - k) // stride + 1


def _conv_bn_act(layers, cin, cout, k, stride, padding, size, groups=1, act=True, note=""):
    out = _conv_out(size, k, stride, padding)
    layers.append(LayerDesc("conv", cin, cout, k=k, stride=stride, padding=padding,
                            groups=groups, hin=size, hout=out, note=note))
    layers.append(LayerDesc("bn", cout, cout, hin=out, hout=out))
    if act:
        layers.append(LayerDesc("act", cout, cout, hin=out, hout=out))
    return out


def build_mobilenet_v2(input_size=120):
    """Standard MobileNetV2 (width 1.0) with a 62-dim regression head."""
    layers = []
    size = _conv_bn_act(layers, 3, 32, 3, 2, 1, input_size, note="stem")
    c = 32
    settings = [
        (1, 16, 1, 1),
        (6, 24, 2, 2),
        (6, 32, 3, 2),
        (6, 64, 4, 2),
        (6, 96, 3, 1),
        (6, 160, 3, 2),
        (6, 320, 1, 1),
    ]
    for t, cout, n, s in settings:
        for i in range(n):
            stride = s if i == 0 else 1
            cexp = c * t
            if t != 1:
                _conv_bn_act(layers, c, cexp, 1, 1, 0, size, note="expand")
            dsize = _conv_out(size, 3, stride, 1)
            layers.append(LayerDesc("depthwise", cexp, cexp, k=3, stride=stride,
                                    padding=1, groups=cexp, hin=size, hout=dsize))
            layers.append(LayerDesc("bn", cexp, cexp, hin=dsize, hout=dsize))
            layers.append(LayerDesc("act", cexp, cexp, hin=dsize, hout=dsize))
            _conv_bn_act(layers, cexp, cout, 1, 1, 0, dsize, act=False, note="project")
            if stride == 1 and c == cout:
                layers.append(LayerDesc("add", cout, cout, hin=dsize, hout=dsize))
            layers.append(LayerDesc("concat", 0, cout, hin=dsize, hout=dsize))
            c = cout
            size = dsize
    size = _conv_bn_act(layers, c, 1280, 1, 1, 0, size, note="features")
    layers.append(LayerDesc("gap", 1280, 1280, hin=size, hout=1))
    layers.append(LayerDesc("linear", 1280, OUTPUT_DIM, bias=True, hin=1, hout=1))
    return NetworkSpec("MobileNetV2", input_size, 3, OUTPUT_DIM, 1.0, layers).validate()


def build_densenet121(input_size=120):
    """DenseNet-121 (growth 32, bottleneck 4) with a 62-dim head."""
    layers = []
    size = _conv_bn_act(layers, 3, 64, 7, 2, 3, input_size, note="stem")
    psize = _conv_out(size, 3, 2, 1)
    layers.append(LayerDesc("pool", 64, 64, k=3, stride=2, padding=1, hin=size, hout=psize))
    size = psize
    c = 64
    growth = 32
    for bi, n_layers in enumerate((6, 12, 24, 16)):
        for _ in range(n_layers):
            layers.append(LayerDesc("bn", c, c, hin=size, hout=size))
            layers.append(LayerDesc("act", c, c, hin=size, hout=size))
            layers.append(LayerDesc("conv", c, 4 * growth, k=1, hin=size, hout=size))
            layers.append(LayerDesc("bn", 4 * growth, 4 * growth, hin=size, hout=size))
            layers.append(LayerDesc("act", 4 * growth, 4 * growth, hin=size, hout=size))
            layers.append(LayerDesc("conv", 4 * growth, growth, k=3, padding=1,
                                    hin=size, hout=size))
            layers.append(LayerDesc("concat", 0, c + growth, hin=size, hout=size))
            c += growth
        if bi < 3:
            layers.append(LayerDesc("bn", c, c, hin=size, hout=size))
            layers.append(LayerDesc("act", c, c, hin=size, hout=size))
            layers.append(LayerDesc("conv", c, c // 2, k=1, hin=size, hout=size))
            c //= 2
            psize = _conv_out(size, 2, 2, 0)
            layers.append(LayerDesc("pool", c, c, k=2, stride=2, hin=size, hout=psize))
            size = psize
    layers.append(LayerDesc("bn", c, c, hin=size, hout=size))
    layers.append(LayerDesc("act", c, c, hin=size, hout=size))
    layers.append(LayerDesc("gap", c, c, hin=size, hout=1))
    layers.append(LayerDesc("linear", c, OUTPUT_DIM, bias=True, hin=1, hout=1))
    return NetworkSpec("DenseNet121", input_size, 3, OUTPUT_DIM, 1.0, layers).validate()


def build_resnext50(input_size=120):
    """ResNeXt-50 (32x4d) with a 62-dim head."""
    layers = []
    size = _conv_bn_act(layers, 3, 64, 7, 2, 3, input_size, note="stem")
    psize = _conv_out(size, 3, 2, 1)
    layers.append(LayerDesc("pool", 64, 64, k=3, stride=2, padding=1, hin=size, hout=psize))
    size = psize
    c = 64
    stages = [(128, 256, 3, 1), (256, 512, 4, 2), (512, 1024, 6, 2), (1024, 2048, 3, 2)]
    for width, cout, blocks, stage_stride in stages:
        for b in range(blocks):
            stride = stage_stride if b == 0 else 1
            _conv_bn_act(layers, c, width, 1, 1, 0, size)
            gsize = _conv_out(size, 3, stride, 1)
            layers.append(LayerDesc("conv", width, width, k=3, stride=stride, padding=1,
                                    groups=32, hin=size, hout=gsize))
            layers.append(LayerDesc("bn", width, width, hin=gsize, hout=gsize))
            layers.append(LayerDesc("act", width, width, hin=gsize, hout=gsize))
            _conv_bn_act(layers, width, cout, 1, 1, 0, gsize, act=False)
            if b == 0:
                layers.append(LayerDesc("conv", c, cout, k=1, stride=stride,
                                        hin=size, hout=gsize, note="downsample"))
                layers.append(LayerDesc("bn", cout, cout, hin=gsize, hout=gsize))
            layers.append(LayerDesc("add", cout, cout, hin=gsize, hout=gsize))
            layers.append(LayerDesc("act", cout, cout, hin=gsize, hout=gsize))
            layers.append(LayerDesc("concat", 0, cout, hin=gsize, hout=gsize))
            c = cout
            size = gsize
    layers.append(LayerDesc("gap", c, c, hin=size, hout=1))
    layers.append(LayerDesc("linear", c, OUTPUT_DIM, bias=True, hin=1, hout=1))
    return NetworkSpec("ResNeXt50", input_size, 3, OUTPUT_DIM, 1.0, layers).validate()


BASELINES = {
    "ResNeXt50": build_resnext50,
    "MobileNetV2": build_mobilenet_v2,
    "DenseNet121": build_densenet121,
}

TABLE_ROWS = ("ResNeXt50", "MobileNetV2", "DenseNet121", "MDNet", "AMDNet", "DAMDNet")


def analysis_table(input_size=120):
    """Params/GFLOPs rows for the six architectures of the comparison table."""
    rows = []
    for name in TABLE_ROWS:
        if name in BASELINES:
            spec = BASELINES[name](input_size)
        else:
            spec = build_variant(name.lower(), width=1.0, input_size=input_size)
        rows.append(
            {
                "name": name,
                "params": count_params(spec),
                "params_m": count_params(spec) / 1e6,
                "gflops": count_flops(spec),
            }
        )
    return rows
