"""Dual-attention parameter regressor and its building blocks.

The runtime model and the complexity analyzer share one symbolic description
(`NetworkSpec`, a flat list of primitive layer descriptors): the model is
constructed from the same channel schedule that emits the spec, and a test
cross-checks the analyzer's parameter count against the instantiated weight
tensors.

Channel schedule (width 1.0): stem 3x3/s2 to 32 maps, then seven dense
blocks of three mobile units each.  Each unit expands 1x1 by a factor of 2,
filters 3x3 depthwise, projects 1x1 back, and (in the full variant) applies
spatial group-wise gating; a 1x1 transition follows each unit and is
concatenated onto the running feature map.  Blocks 1, 2, 3, 5 and 7
downsample; a squeeze-excitation gate sits after every block.  Per-block
growths are tuned so the analyzer lands near 2.76M parameters and 0.125
GFLOPs at 120x120 input.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .rng import stream

OUTPUT_DIM = 62
SE_REDUCTION = 16
SGE_GROUPS = 8
EXPANSION = 2
STEM_CHANNELS = 32
BLOCK_STRIDES = (2, 2, 2, 1, 2, 1, 2)
BLOCK_GROWTHS = (24, 32, 48, 48, 48, 80, 104)
UNITS_PER_BLOCK = 3

VARIANTS = ("mdnet", "amdnet", "damdnet")


# -- symbolic description -------------------------------------------------------


@dataclass
class LayerDesc:
    """One primitive layer with resolved channel and spatial dimensions."""

    kind: str  # conv | depthwise | linear | bn | act | sigmoid | pool | gap | se | sge | mul | add | concat
    cin: int = 0
    cout: int = 0
    k: int = 1
    stride: int = 1
    padding: int = 0
    groups: int = 1
    hin: int = 0
    hout: int = 0
    bias: bool = False
    note: str = ""


@dataclass
class NetworkSpec:
    """Flat, fully resolved layer list used for execution bookkeeping and
    parameter/FLOP accounting."""

    name: str
    input_size: int
    in_channels: int
    output_dim: int
    width: float
    layers: list = field(default_factory=list)

    def validate(self):
        if self.output_dim != OUTPUT_DIM:
            raise ConfigError(f"output dim must be {OUTPUT_DIM}, got {self.output_dim}")
        prev_out = self.in_channels
        for i, l in enumerate(self.layers):
            if (
                l.kind in ("conv", "depthwise", "linear")
                and l.note != "downsample"  # residual branch, fed from the block input
                and l.cin != prev_out
            ):
                raise ConfigError(
                    f"layer {i} ({l.kind}) expects {l.cin} channels but receives {prev_out}"
                )
            if l.kind != "concat":
                prev_out = l.cout or prev_out
            else:
                prev_out = l.cout
        return self

    def to_json(self):
        import json

        return json.dumps(
            {
                "name": self.name,
                "input_size": self.input_size,
                "in_channels": self.in_channels,
                "output_dim": self.output_dim,
                "width": self.width,
                "layers": [vars(l) for l in self.layers],
            },
            sort_keys=True,
            separators=(",", ":"),
        )


# -- attention configs -----------------------------------------------------------


@dataclass
class SEConfig:
    channels: int
    reduction: int = SE_REDUCTION

    @property
    def hidden(self):
        return max(1, self.channels // self.reduction)


@dataclass
class SGEConfig:
    # The variance guard trades off two verification regimes: small enough
    # that the normalized map keeps unit variance to 1e-4 for healthy
    # similarity spreads, large enough that finite differences stay valid
    # near degenerate (tiny-variance) sites.
    groups: int = SGE_GROUPS
    eps: float = 1e-5


def se_module(x, cfg: SEConfig, weights):
    """Squeeze-excitation channel gate: x * sigmoid(FC2(relu(FC1(GAP(x))))).

    `weights` holds fc1_w [hidden, C], fc1_b, fc2_w [C, hidden], fc2_b.
    """
    n, c = x.shape[0], x.shape[1]
    if c != cfg.channels:
        raise DimensionError(f"se_module: input has {c} channels, config says {cfg.channels}")
    pooled = T.global_avg_pool(x)
    h = T.relu(T.linear(pooled, weights["fc1_w"], weights["fc1_b"]))
    gate = T.sigmoid(T.linear(h, weights["fc2_w"], weights["fc2_b"]))
    return T.mul(x, T.reshape(gate, (n, c, 1, 1)))


def sge_module(x, cfg: SGEConfig, gamma, beta):
    """Spatial group-wise gate.

    Each channel group is compared with its own global-average descriptor to
    get a similarity map, which is normalized to zero mean / unit variance
    over spatial positions, passed through a per-group affine and a sigmoid,
    and multiplied back onto the group.
    """
    n, c, h, w = x.shape
    g = cfg.groups
    if c % g != 0:
        raise ConfigError(f"sge_module: {c} channels not divisible by {g} groups")
    xg = T.reshape(x, (n * g, c // g, h, w))
    pooled = T.global_avg_pool(xg)
    sim = T.sum_(T.mul(xg, T.reshape(pooled, (n * g, c // g, 1, 1))), axis=1, keepdims=True)
    mu = T.mean(sim, axis=(2, 3), keepdims=True)
    cent = T.sub(sim, mu)
    var = T.mean(T.mul(cent, cent), axis=(2, 3), keepdims=True)
    norm = T.div(cent, T.sqrt(T.add(var, cfg.eps)))
    normg = T.reshape(norm, (n, g, h, w))
    scaled = T.add(T.mul(normg, T.reshape(gamma, (1, g, 1, 1))), T.reshape(beta, (1, g, 1, 1)))
    mask = T.sigmoid(scaled)
    out = T.mul(xg, T.reshape(mask, (n * g, 1, h, w)))
    return T.reshape(out, (n, c, h, w))


def sge_normalized_map(x, cfg: SGEConfig):
    """Pre-affine normalized similarity map [N, g, H, W] (for verification)."""
    n, c, h, w = x.shape
    g = cfg.groups
    xg = T.reshape(x, (n * g, c // g, h, w))
    pooled = T.global_avg_pool(xg)
    sim = T.sum_(T.mul(xg, T.reshape(pooled, (n * g, c // g, 1, 1))), axis=1, keepdims=True)
    mu = T.mean(sim, axis=(2, 3), keepdims=True)
    cent = T.sub(sim, mu)
    var = T.mean(T.mul(cent, cent), axis=(2, 3), keepdims=True)
    norm = T.div(cent, T.sqrt(T.add(var, cfg.eps)))
    return T.reshape(norm, (n, g, h, w))


# -- runtime layers ---------------------------------------------------------------


def _kaiming(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(dtype)


class _ParamStore:
    """Ordered name -> Tensor registry shared by all layers of one model."""

    def __init__(self, dtype):
        self.dtype = dtype
        self.params = {}
        self.buffers = {}

    def add(self, name, data):
        t = T.Tensor(np.asarray(data, dtype=self.dtype), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def add_buffer(self, name, data):
        arr = np.asarray(data, dtype=self.dtype)
        self.buffers[name] = arr
        return arr


class Conv:
    def __init__(self, store, rng, name, cin, cout, k=1, stride=1, padding=0, bias=False):
        self.stride = stride
        self.padding = padding
        fan_in = k * k * cin
        self.w = store.add(f"{name}.w", _kaiming(rng, (cout, cin, k, k), fan_in, store.dtype))
        self.b = store.add(f"{name}.b", np.zeros(cout)) if bias else None

    def __call__(self, x):
        return T.conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class DepthwiseConv:
    def __init__(self, store, rng, name, channels, k=3, stride=1, padding=1):
        self.stride = stride
        self.padding = padding
        self.w = store.add(
            f"{name}.w", _kaiming(rng, (channels, 1, k, k), k * k, store.dtype)
        )

    def __call__(self, x):
        return T.depthwise_conv2d(x, self.w, stride=self.stride, padding=self.padding)


class BatchNorm:
    def __init__(self, store, name, channels, momentum=0.9, eps=1e-5):
        self.momentum = momentum
        self.eps = eps
        self.gamma = store.add(f"{name}.gamma", np.ones(channels))
        self.beta = store.add(f"{name}.beta", np.zeros(channels))
        self.running_mean = store.add_buffer(f"{name}.running_mean", np.zeros(channels))
        self.running_var = store.add_buffer(f"{name}.running_var", np.ones(channels))

    def __call__(self, x, training):
        return T.batch_norm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            training,
            momentum=self.momentum,
            eps=self.eps,
        )


class Linear:
    def __init__(self, store, rng, name, cin, cout, gain="relu"):
        scale = math.sqrt(2.0 / cin) if gain == "relu" else 1.0 / math.sqrt(cin)
        self.w = store.add(f"{name}.w", (rng.standard_normal((cout, cin)) * scale).astype(store.dtype))
        self.b = store.add(f"{name}.b", np.zeros(cout))

    def __call__(self, x):
        return T.linear(x, self.w, self.b)


class SEModule:
    def __init__(self, store, rng, name, channels, reduction=SE_REDUCTION):
        self.cfg = SEConfig(channels=channels, reduction=reduction)
        h = self.cfg.hidden
        self.weights = {
            "fc1_w": store.add(f"{name}.fc1.w", _kaiming(rng, (h, channels), channels, store.dtype)),
            "fc1_b": store.add(f"{name}.fc1.b", np.zeros(h)),
            "fc2_w": store.add(f"{name}.fc2.w", _kaiming(rng, (channels, h), h, store.dtype)),
            "fc2_b": store.add(f"{name}.fc2.b", np.zeros(channels)),
        }

    def __call__(self, x):
        return se_module(x, self.cfg, self.weights)


class SGEModule:
    def __init__(self, store, name, groups):
        self.cfg = SGEConfig(groups=groups)
        self.gamma = store.add(f"{name}.gamma", np.ones(groups))
        self.beta = store.add(f"{name}.beta", np.zeros(groups))

    def __call__(self, x):
        return sge_module(x, self.cfg, self.gamma, self.beta)


class MobileUnit:
    """Expand 1x1 -> depthwise 3x3 (stride s) -> project 1x1, then SGE."""

    def __init__(self, store, rng, name, cin, stride, sge_groups):
        cexp = EXPANSION * cin
        self.expand = Conv(store, rng, f"{name}.expand", cin, cexp, k=1)
        self.bn1 = BatchNorm(store, f"{name}.bn1", cexp)
        self.dw = DepthwiseConv(store, rng, f"{name}.dw", cexp, k=3, stride=stride, padding=1)
        self.bn2 = BatchNorm(store, f"{name}.bn2", cexp)
        self.project = Conv(store, rng, f"{name}.project", cexp, cin, k=1)
        self.bn3 = BatchNorm(store, f"{name}.bn3", cin)
        self.sge = SGEModule(store, f"{name}.sge", sge_groups) if sge_groups else None
        self.cin = cin
        self.cout = cin
        self.stride = stride

    def __call__(self, x, training):
        y = T.relu(self.bn1(self.expand(x), training))
        y = T.relu(self.bn2(self.dw(y), training))
        y = self.bn3(self.project(y), training)
        if self.sge is not None:
            y = self.sge(y)
        return y


class DenseBlock:
    """Units whose transition outputs are concatenated onto the running map.

    The first unit may downsample; the concat chain restarts there because
    features at the old resolution cannot be stacked with the new one.
    """

    def __init__(self, store, rng, name, cin, growth, stride, sge_groups_fn, concat=True):
        self.concat = concat
        self.units = []
        self.transitions = []
        c = cin
        for u in range(UNITS_PER_BLOCK):
            s = stride if u == 0 else 1
            unit = MobileUnit(store, rng, f"{name}.unit{u}", c, s, sge_groups_fn(c))
            trans = Conv(store, rng, f"{name}.trans{u}", c, growth, k=1)
            tbn = BatchNorm(store, f"{name}.transbn{u}", growth)
            self.units.append(unit)
            self.transitions.append((trans, tbn))
            if s == 1 and concat:
                c = c + growth
            else:
                c = growth
        self.cout = c

    def __call__(self, x, training):
        for unit, (trans, tbn) in zip(self.units, self.transitions):
            y = unit(x, training)
            t = tbn(trans(y), training)
            if unit.stride == 1 and self.concat:
                x = T.concat_channels([x, t])
            else:
                x = t
        return x


def _scale_channels(c, width):
    return max(1, int(round(c * width)))


def _sge_groups_for(channels):
    return math.gcd(SGE_GROUPS, channels)


class DamdNet:
    """Full regressor: stem conv, seven dense blocks with SE gates, head."""

    def __init__(self, variant="damdnet", width=1.0, input_size=120, seed=0,
                 dtype=np.float32, dense_concat=True):
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant '{variant}', expected one of {VARIANTS}")
        self.variant = variant
        self.width = width
        self.input_size = input_size
        self.dense_concat = dense_concat
        self.store = _ParamStore(dtype)
        rng = stream(seed, "weight-init")

        use_se = variant in ("amdnet", "damdnet")
        use_sge = variant == "damdnet"
        sge_fn = (lambda c: _sge_groups_for(c)) if use_sge else (lambda c: 0)

        stem_out = _scale_channels(STEM_CHANNELS, width)
        self.stem = Conv(self.store, rng, "stem.conv", 3, stem_out, k=3, stride=2, padding=1)
        self.stem_bn = BatchNorm(self.store, "stem.bn", stem_out)

        self.blocks = []
        self.se_modules = []
        c = stem_out
        for i, (g, s) in enumerate(zip(BLOCK_GROWTHS, BLOCK_STRIDES)):
            growth = _scale_channels(g, width)
            block = DenseBlock(
                self.store, rng, f"block{i}", c, growth, s, sge_fn, concat=dense_concat
            )
            c = block.cout
            self.blocks.append(block)
            self.se_modules.append(
                SEModule(self.store, rng, f"block{i}.se", c) if use_se else None
            )
        self.head = Linear(self.store, rng, "head", c, OUTPUT_DIM, gain="linear")
        self.feature_dim = c

    # -- parameter access --------------------------------------------------
    def named_params(self):
        return list(self.store.params.items())

    def params(self):
        return list(self.store.params.values())

    def buffers(self):
        return self.store.buffers

    def trainable_count(self, exclude_bn=True):
        total = 0
        for name, p in self.store.params.items():
            if exclude_bn and (".bn" in name or "transbn" in name):
                continue
            total += p.size
        return total

    def astype_(self, dtype):
        """Convert all parameters and buffers in place (for 64-bit checking)."""
        self.store.dtype = dtype
        for p in self.store.params.values():
            p.data = p.data.astype(dtype)
            p.grad = None
        for name in list(self.store.buffers):
            arr = self.store.buffers[name].astype(dtype)
            self.store.buffers[name] = arr
        # Re-point batch-norm buffer references.
        def fix_bn(bn, prefix):
            bn.running_mean = self.store.buffers[f"{prefix}.running_mean"]
            bn.running_var = self.store.buffers[f"{prefix}.running_var"]

        fix_bn(self.stem_bn, "stem.bn")
        for i, block in enumerate(self.blocks):
            for u, unit in enumerate(block.units):
                fix_bn(unit.bn1, f"block{i}.unit{u}.bn1")
                fix_bn(unit.bn2, f"block{i}.unit{u}.bn2")
                fix_bn(unit.bn3, f"block{i}.unit{u}.bn3")
            for u, (_, tbn) in enumerate(block.transitions):
                fix_bn(tbn, f"block{i}.transbn{u}")
        return self

    # -- forward -----------------------------------------------------------
    def __call__(self, x, training=False):
        return self.forward(x, training)

    def forward(self, x, training=False):
        if not isinstance(x, T.Tensor):
            x = T.Tensor(np.asarray(x, dtype=self.store.dtype))
        if x.data.ndim != 4 or x.shape[1] != 3:
            raise DimensionError(f"expected input [N,3,H,W], got {tuple(x.shape)}")
        if x.shape[2] != self.input_size or x.shape[3] != self.input_size:
            raise DimensionError(
                f"input resolution {x.shape[2]}x{x.shape[3]} does not match "
                f"network input size {self.input_size}"
            )
        y = T.relu(self.stem_bn(self.stem(x), training))
        for block, se in zip(self.blocks, self.se_modules):
            y = block(y, training)
            if se is not None:
                y = se(y)
        pooled = T.global_avg_pool(y)
        return self.head(pooled)

    def spec(self):
        return build_variant(self.variant, self.width, self.input_size,
                             dense_concat=self.dense_concat)


# -- symbolic builder --------------------------------------------------------------


def _conv_out(size, k, stride, padding):
    return (size + 2 * padding - k) // stride + 1


def build_variant(kind, width=1.0, input_size=120, dense_concat=True):
    """Symbolic NetworkSpec for mdnet / amdnet / damdnet at a given width."""
    if kind not in VARIANTS:
        raise ConfigError(f"unknown variant '{kind}', expected one of {VARIANTS}")
    use_se = kind in ("amdnet", "damdnet")
    use_sge = kind == "damdnet"

    layers = []
    size = input_size
    stem_out = _scale_channels(STEM_CHANNELS, width)
    out_size = _conv_out(size, 3, 2, 1)
    layers.append(LayerDesc("conv", 3, stem_out, k=3, stride=2, padding=1,
                            hin=size, hout=out_size, note="stem"))
    layers.append(LayerDesc("bn", stem_out, stem_out, hin=out_size, hout=out_size))
    layers.append(LayerDesc("act", stem_out, stem_out, hin=out_size, hout=out_size))
    size = out_size

    c = stem_out
    for i, (g, s) in enumerate(zip(BLOCK_GROWTHS, BLOCK_STRIDES)):
        growth = _scale_channels(g, width)
        for u in range(UNITS_PER_BLOCK):
            stride = s if u == 0 else 1
            cexp = EXPANSION * c
            usize = _conv_out(size, 3, stride, 1)
            layers.append(LayerDesc("conv", c, cexp, k=1, hin=size, hout=size,
                                    note=f"block{i}.unit{u}.expand"))
            layers.append(LayerDesc("bn", cexp, cexp, hin=size, hout=size))
            layers.append(LayerDesc("act", cexp, cexp, hin=size, hout=size))
            layers.append(LayerDesc("depthwise", cexp, cexp, k=3, stride=stride,
                                    padding=1, groups=cexp, hin=size, hout=usize,
                                    note=f"block{i}.unit{u}.dw"))
            layers.append(LayerDesc("bn", cexp, cexp, hin=usize, hout=usize))
            layers.append(LayerDesc("act", cexp, cexp, hin=usize, hout=usize))
            layers.append(LayerDesc("conv", cexp, c, k=1, hin=usize, hout=usize,
                                    note=f"block{i}.unit{u}.project"))
            layers.append(LayerDesc("bn", c, c, hin=usize, hout=usize))
            if use_sge:
                layers.append(LayerDesc("sge", c, c, groups=_sge_groups_for(c),
                                        hin=usize, hout=usize,
                                        note=f"block{i}.unit{u}.sge"))
            layers.append(LayerDesc("conv", c, growth, k=1, hin=usize, hout=usize,
                                    note=f"block{i}.trans{u}"))
            layers.append(LayerDesc("bn", growth, growth, hin=usize, hout=usize))
            if stride == 1 and dense_concat:
                newc = c + growth
            else:
                newc = growth
            layers.append(LayerDesc("concat", 0, newc, hin=usize, hout=usize))
            c = newc
            size = usize
        if use_se:
            hidden = SEConfig(channels=c).hidden
            layers.append(LayerDesc("se", c, c, groups=hidden, hin=size, hout=size,
                                    note=f"block{i}.se"))
    layers.append(LayerDesc("gap", c, c, hin=size, hout=1))
    layers.append(LayerDesc("linear", c, OUTPUT_DIM, bias=True, hin=1, hout=1, note="head"))
    spec = NetworkSpec(
        name=kind, input_size=input_size, in_channels=3,
        output_dim=OUTPUT_DIM, width=width, layers=layers,
    )
    return spec.validate()
