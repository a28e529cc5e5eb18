"""Residual convolutional network over the autodiff tape.

The layout is stem conv -> BN -> ReLU -> maxpool -> four block groups ->
global average pool -> dense head -> softmax. Group i holds ``n_i + 1``
blocks (one explicit downsampling block plus n_i repeats), so block counts
{2,3,5,2} give the familiar 50 weighted layers and {2,3,22,2} give 101.
``skip_connections=False`` builds the plain twin: the same main-path
convolutions with every shortcut removed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, DimensionError

BOTTLENECK_EXPANSION = 4


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description; defaults are the desk-scale configuration."""

    block_counts: tuple = (1, 1, 1, 1)
    stage_widths: tuple = (8, 16, 32, 64)
    block_kind: str = "basic"          # "basic" | "bottleneck"
    skip_connections: bool = True
    input_size: int = 32               # square side
    num_labels: int = 5
    stem_kernel: int = 3
    stem_stride: int = 1
    stem_pool_window: int = 2
    stem_pool_stride: int = 2
    stem_pool_pad: int = 0

    def __post_init__(self):
        object.__setattr__(self, "block_counts", tuple(int(n) for n in self.block_counts))
        object.__setattr__(self, "stage_widths", tuple(int(w) for w in self.stage_widths))
        if len(self.block_counts) != 4 or len(self.stage_widths) != 4:
            raise ConfigurationError("block_counts and stage_widths must each have 4 entries")
        if any(n < 1 for n in self.block_counts):
            raise ConfigurationError(f"block counts must be >= 1, got {self.block_counts}")
        if any(w < 1 for w in self.stage_widths):
            raise ConfigurationError(f"stage widths must be >= 1, got {self.stage_widths}")
        if self.block_kind not in ("basic", "bottleneck"):
            raise ConfigurationError(f"block_kind must be 'basic' or 'bottleneck', got {self.block_kind!r}")
        if self.num_labels < 1:
            raise ConfigurationError(f"num_labels must be >= 1, got {self.num_labels}")
        if self.input_size < 1:
            raise ConfigurationError(f"input_size must be >= 1, got {self.input_size}")

    @property
    def expansion(self):
        return BOTTLENECK_EXPANSION if self.block_kind == "bottleneck" else 1

    def weighted_layer_count(self):
        """Main-path conv layers plus stem conv plus the dense head."""
        per_block = 3 if self.block_kind == "bottleneck" else 2
        return 1 + per_block * sum(n + 1 for n in self.block_counts) + 1


def full_scale_spec(depth=50):
    """The full-scale configuration: bottleneck blocks on 224x224 inputs."""
    counts = {50: (2, 3, 5, 2), 101: (2, 3, 22, 2)}
    if depth not in counts:
        raise ConfigurationError(f"full_scale_spec supports depths 50 and 101, got {depth}")
    return NetworkSpec(
        block_counts=counts[depth],
        stage_widths=(64, 128, 256, 512),
        block_kind="bottleneck",
        input_size=224,
        stem_kernel=7,
        stem_stride=2,
        stem_pool_window=3,
        stem_pool_stride=2,
        stem_pool_pad=1,
    )


def stage_spatial_sizes(spec):
    """Spatial side after the stem and after each block group.

    Raises a configuration error naming the first stage whose feature map
    collapses to zero.
    """
    size = spec.input_size
    size = (size + 2 * (spec.stem_kernel // 2) - spec.stem_kernel) // spec.stem_stride + 1
    if size < 1:
        raise ConfigurationError(f"stem conv collapses the input to {size} pixels")
    padded = size + 2 * spec.stem_pool_pad
    if spec.stem_pool_window > padded:
        raise ConfigurationError(
            f"stem pool window {spec.stem_pool_window} exceeds feature map {padded}")
    size = (padded - spec.stem_pool_window) // spec.stem_pool_stride + 1
    sizes = []
    for i in range(4):
        if i > 0:
            size = (size - 1) // 2 + 1
        if size < 1:
            raise ConfigurationError(f"stage {i + 1} spatial size collapsed to {size}")
        sizes.append(size)
    return sizes


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

class ConvUnit:
    def __init__(self, in_ch, out_ch, kernel, stride=1, pad=None, dtype=np.float32):
        self.stride = stride
        self.pad = kernel // 2 if pad is None else pad
        self.weight = ad.Tensor(
            np.zeros((out_ch, in_ch, kernel, kernel), dtype=dtype), requires_grad=True, op="param")

    def forward(self, x):
        return ad.conv2d(x, self.weight, stride=self.stride, pad=self.pad)


class NormUnit:
    def __init__(self, channels, dtype=np.float32):
        self.gamma = ad.Tensor(np.ones(channels, dtype=dtype), requires_grad=True, op="param")
        self.beta = ad.Tensor(np.zeros(channels, dtype=dtype), requires_grad=True, op="param")
        self.stats = ad.RunningStats(channels, dtype=dtype)

    def forward(self, x, mode):
        return ad.batch_norm(x, self.gamma, self.beta, mode=mode, stats=self.stats)


class DenseUnit:
    def __init__(self, in_features, out_features, dtype=np.float32):
        self.weight = ad.Tensor(
            np.zeros((in_features, out_features), dtype=dtype), requires_grad=True, op="param")
        self.bias = ad.Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True, op="param")

    def forward(self, x):
        return ad.dense(x, self.weight, self.bias)


class ResidualBlock:
    """One basic (3x3-3x3) or bottleneck (1x1-3x3-1x1) unit.

    With skips enabled, a 1x1 projection shortcut (conv + BN) bridges any
    stride or channel change; without skips the same main path stands alone.
    """

    def __init__(self, kind, in_ch, base_width, stride, skip, dtype=np.float32):
        self.kind = kind
        self.skip = skip
        out_ch = base_width * (BOTTLENECK_EXPANSION if kind == "bottleneck" else 1)
        self.out_channels = out_ch
        if kind == "basic":
            self.conv1 = ConvUnit(in_ch, base_width, 3, stride, dtype=dtype)
            self.bn1 = NormUnit(base_width, dtype=dtype)
            self.conv2 = ConvUnit(base_width, base_width, 3, 1, dtype=dtype)
            self.bn2 = NormUnit(base_width, dtype=dtype)
            self.conv3 = None
            self.bn3 = None
        else:
            self.conv1 = ConvUnit(in_ch, base_width, 1, 1, pad=0, dtype=dtype)
            self.bn1 = NormUnit(base_width, dtype=dtype)
            self.conv2 = ConvUnit(base_width, base_width, 3, stride, dtype=dtype)
            self.bn2 = NormUnit(base_width, dtype=dtype)
            self.conv3 = ConvUnit(base_width, out_ch, 1, 1, pad=0, dtype=dtype)
            self.bn3 = NormUnit(out_ch, dtype=dtype)
        if skip and (stride != 1 or in_ch != out_ch):
            self.proj_conv = ConvUnit(in_ch, out_ch, 1, stride, pad=0, dtype=dtype)
            self.proj_bn = NormUnit(out_ch, dtype=dtype)
        else:
            self.proj_conv = None
            self.proj_bn = None

    def main_convs(self):
        convs = [self.conv1, self.conv2]
        if self.conv3 is not None:
            convs.append(self.conv3)
        return convs

    def forward(self, x, mode):
        out = ad.relu(self.bn1.forward(self.conv1.forward(x), mode))
        if self.kind == "basic":
            out = self.bn2.forward(self.conv2.forward(out), mode)
        else:
            out = ad.relu(self.bn2.forward(self.conv2.forward(out), mode))
            out = self.bn3.forward(self.conv3.forward(out), mode)
        if self.skip:
            shortcut = x
            if self.proj_conv is not None:
                shortcut = self.proj_bn.forward(self.proj_conv.forward(x), mode)
            out = ad.add(out, shortcut)
        return ad.relu(out)


@dataclass
class NetworkOutput:
    logits: ad.Tensor
    distribution: ad.Tensor          # None for the scalar-head (num_labels=1) variant
    features: ad.Tensor


@dataclass
class ParamRecord:
    name: str
    tensor: ad.Tensor
    kind: str          # "weight" | "bias" | "bn_gamma" | "bn_beta"
    last_layer: bool = False


class Network:
    """A built network: parameters, running stats, and the forward graph."""

    def __init__(self, spec, dtype=np.float32):
        self.spec = spec
        self.dtype = dtype
        self.stage_sizes = stage_spatial_sizes(spec)

        widths = spec.stage_widths
        self.stem_conv = ConvUnit(3, widths[0], spec.stem_kernel, spec.stem_stride, dtype=dtype)
        self.stem_bn = NormUnit(widths[0], dtype=dtype)

        self.stages = []
        in_ch = widths[0]
        for i in range(4):
            blocks = []
            for j in range(spec.block_counts[i] + 1):
                stride = 2 if (i > 0 and j == 0) else 1
                block = ResidualBlock(spec.block_kind, in_ch, widths[i], stride,
                                      spec.skip_connections, dtype=dtype)
                in_ch = block.out_channels
                blocks.append(block)
            self.stages.append(blocks)

        self.feature_dim = in_ch
        self.fc = DenseUnit(in_ch, spec.num_labels, dtype=dtype)

        self._records = []
        self._stat_entries = []
        self._register()

    # -- registry ----------------------------------------------------------

    def _add_norm(self, name, norm):
        self._records.append(ParamRecord(f"{name}.gamma", norm.gamma, "bn_gamma"))
        self._records.append(ParamRecord(f"{name}.beta", norm.beta, "bn_beta"))
        self._stat_entries.append((name, norm.stats))

    def _register(self):
        self._records.append(ParamRecord("stem.conv.weight", self.stem_conv.weight, "weight"))
        self._add_norm("stem.bn", self.stem_bn)
        for i, blocks in enumerate(self.stages):
            for j, blk in enumerate(blocks):
                base = f"stage{i + 1}.block{j}"
                for ci, conv in enumerate(blk.main_convs(), start=1):
                    self._records.append(
                        ParamRecord(f"{base}.conv{ci}.weight", conv.weight, "weight"))
                    self._add_norm(f"{base}.bn{ci}", [blk.bn1, blk.bn2, blk.bn3][ci - 1])
                if blk.proj_conv is not None:
                    self._records.append(
                        ParamRecord(f"{base}.proj.weight", blk.proj_conv.weight, "weight"))
                    self._add_norm(f"{base}.proj.bn", blk.proj_bn)
        self._records.append(ParamRecord("fc.weight", self.fc.weight, "weight", last_layer=True))
        self._records.append(ParamRecord("fc.bias", self.fc.bias, "bias", last_layer=True))

    def param_records(self):
        return list(self._records)

    def named_parameters(self):
        return [(r.name, r.tensor) for r in self._records]

    def parameter_count(self):
        return sum(r.tensor.data.size for r in self._records)

    def weighted_layer_count(self):
        """Stem conv + main-path convs + dense head, by inspection of the built graph."""
        n = 1  # stem
        for blocks in self.stages:
            for blk in blocks:
                n += len(blk.main_convs())
        return n + 1  # dense head

    # -- forward -----------------------------------------------------------

    def forward(self, batch, mode="train"):
        """Run a (N,3,H,W) batch through the network.

        Returns logits, the softmax distribution (None when num_labels == 1),
        and the post-avgpool feature vector.
        """
        if mode not in ("train", "eval"):
            raise ConfigurationError(f"mode must be 'train' or 'eval', got {mode!r}")
        data = batch.data if isinstance(batch, ad.Tensor) else np.asarray(batch)
        s = self.spec.input_size
        if data.ndim != 4 or data.shape[1] != 3 or data.shape[2] != s or data.shape[3] != s:
            raise DimensionError(
                f"batch shape {data.shape} does not match expected (N,3,{s},{s})")
        x = batch if isinstance(batch, ad.Tensor) else ad.Tensor(data.astype(self.dtype, copy=False))

        x = ad.relu(self.stem_bn.forward(self.stem_conv.forward(x), mode))
        x = ad.pad2d(x, self.spec.stem_pool_pad)
        x = ad.pool(x, "max", self.spec.stem_pool_window, self.spec.stem_pool_stride)
        for blocks in self.stages:
            for blk in blocks:
                x = blk.forward(x, mode)
        side = x.shape[2]
        x = ad.pool(x, "avg", side)
        features = ad.reshape(x, (x.shape[0], self.feature_dim))
        logits = self.fc.forward(features)
        dist = ad.softmax(logits) if self.spec.num_labels >= 2 else None
        return NetworkOutput(logits=logits, distribution=dist, features=features)

    # -- state -------------------------------------------------------------

    def state_dict(self):
        state = {r.name: r.tensor.data.copy() for r in self._records}
        for name, stats in self._stat_entries:
            state[f"{name}.running_mean"] = stats.mean.copy()
            state[f"{name}.running_var"] = stats.var.copy()
        return state

    def load_state_dict(self, state):
        expected = {r.name: r.tensor.data.shape for r in self._records}
        for name, stats in self._stat_entries:
            expected[f"{name}.running_mean"] = stats.mean.shape
            expected[f"{name}.running_var"] = stats.var.shape
        missing = sorted(set(expected) - set(state))
        extra = sorted(set(state) - set(expected))
        if missing or extra:
            raise ConfigurationError(
                f"state does not match the architecture (missing {missing}, unexpected {extra})")
        for name, shape in expected.items():
            if tuple(state[name].shape) != tuple(shape):
                raise DimensionError(
                    f"parameter {name}: checkpoint shape {state[name].shape} vs network {shape}")
        for r in self._records:
            r.tensor.data = np.asarray(state[r.name], dtype=self.dtype).copy()
        for name, stats in self._stat_entries:
            stats.mean = np.asarray(state[f"{name}.running_mean"], dtype=self.dtype).copy()
            stats.var = np.asarray(state[f"{name}.running_var"], dtype=self.dtype).copy()


def init_weights(network, seed):
    """He-normal conv/dense weights, zero biases, identity batch norm.

    Fully reproducible: parameters are drawn in registry order from a single
    generator seeded with ``seed``.
    """
    rng = np.random.default_rng(seed)
    for rec in network.param_records():
        t = rec.tensor
        if rec.kind == "weight":
            shape = t.data.shape
            fan_in = shape[0] if t.data.ndim == 2 else int(np.prod(shape[1:]))
            t.data = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape).astype(network.dtype)
        elif rec.kind in ("bias", "bn_beta"):
            t.data = np.zeros_like(t.data)
        elif rec.kind == "bn_gamma":
            t.data = np.ones_like(t.data)
    for _, stats in network._stat_entries:
        stats.reset()
