"""Network building blocks.

Every conv and linear in both block kinds consumes the output of a spiking
neuron layer (or, under the SEW shortcut, an integer spike sum), so the
multiply side of each synaptic op is weight-by-{0,1}: sparse addition. The
only exception is the stage-1 encoding conv, which reads raw pixels.

The depthwise 7x7 and the pointwise conv that follows it form one fused
spike-driven unit (no neuron between them); instrumentation and the energy
model treat the pair at that granularity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .attention import SDSAConfig
from .autodiff import Var
from .errors import FoldError, KindError, ShapeError
from .kernels import ConvKernel
from .neuron import LIFParams
from .tensors import DenseTensor, IntTensor, SpikeTensor

__all__ = [
    "ForwardContext",
    "BlockSpec",
    "SN",
    "ConvBN",
    "RepConv",
    "SepConv",
    "ChannelConv",
    "ChannelMLP",
    "ConvBlock",
    "TransformerBlock",
    "Downsample",
    "repconv_fold",
    "apply_shortcut",
    "fold_bn",
]

SHORTCUTS = ("MS", "SEW", "VS")
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass
class ForwardContext:
    """Per-forward options threaded through the layer stack."""

    tape: object | None = None
    probe: object | None = None
    training: bool = False
    smooth: bool = False
    bn_frozen: bool = False

    def observe(self, layer: str, x: Var | np.ndarray, kind: str | None = None,
                rate: float | None = None):
        if self.probe is not None:
            a = x.data if isinstance(x, Var) else np.asarray(x)
            self.probe.observe(layer, a, kind=kind, rate=rate)


@dataclass(frozen=True)
class BlockSpec:
    kind: str  # conv_block | transformer_block | downsample
    dim: int
    mlp_ratio: int = 4
    sdsa: SDSAConfig | None = None
    shortcut: str = "MS"

    def __post_init__(self):
        if self.kind not in ("conv_block", "transformer_block", "downsample"):
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.dim <= 0 or self.mlp_ratio <= 0:
            raise ValueError("dims and ratios must be positive")
        if self.shortcut not in SHORTCUTS:
            raise ValueError(f"shortcut must be one of {SHORTCUTS}")


class SN:
    """Stateful spiking neuron layer over arbitrary feature shapes."""

    def __init__(self, params: LIFParams, name: str = "sn", learnable: bool = False):
        self.params = params
        self.name = name
        self.threshold = Var(np.asarray(params.threshold), name=f"{name}.threshold") \
            if learnable else None
        self.state: Var | None = None

    def named_params(self):
        if self.threshold is not None:
            yield self.threshold.name, self.threshold

    def reset_state(self):
        self.state = None

    def step(self, x: Var, ctx: ForwardContext) -> Var:
        tape = ctx.tape
        if self.state is None:
            self.state = Var(np.full(x.shape, self.params.v_reset))
        if self.state.shape != x.shape:
            raise ShapeError(f"{self.name}: state {self.state.shape} vs input {x.shape}")
        u = ad.add(tape, self.state, x)
        if self.threshold is not None:
            pre = ad.sub(tape, u, self.threshold)
        else:
            pre = ad.shift(tape, u, -self.params.threshold)
        s = ad.spike(tape, pre, self.params.window, smooth=ctx.smooth)
        silent = ad.shift(tape, ad.scale(tape, s, -1.0), 1.0)
        h = ad.add(tape, ad.scale(tape, s, self.params.v_reset),
                   ad.mul(tape, ad.scale(tape, u, self.params.beta), silent))
        self.state = h
        return s


class ConvBN:
    """Bias-free convolution followed by per-channel normalization."""

    def __init__(self, rng, cin, cout, k, stride=1, groups=1, name="conv"):
        fan_in = (cin // groups) * k * k
        self.w = Var(rng.normal(0.0, np.sqrt(2.0 / fan_in), (cout, cin // groups, k, k)),
                     name=f"{name}.w")
        self.gamma = Var(np.ones(cout), name=f"{name}.gamma")
        self.beta = Var(np.zeros(cout), name=f"{name}.beta")
        self.run_mean = np.zeros(cout)
        self.run_var = np.ones(cout)
        self.stride, self.groups, self.k, self.name = stride, groups, k, name
        self.padding = k // 2

    def named_params(self):
        yield self.w.name, self.w
        yield self.gamma.name, self.gamma
        yield self.beta.name, self.beta

    def named_buffers(self):
        yield f"{self.name}.run_mean", self.run_mean
        yield f"{self.name}.run_var", self.run_var

    def forward(self, x: Var, ctx: ForwardContext) -> Var:
        y = ad.conv2d(ctx.tape, x, self.w, None, self.stride, self.padding, self.groups)
        if ctx.training and not ctx.bn_frozen:
            mu = y.data.mean(axis=(0, 2, 3))
            var = y.data.var(axis=(0, 2, 3))
            self.run_mean[...] = (1 - BN_MOMENTUM) * self.run_mean + BN_MOMENTUM * mu
            self.run_var[...] = (1 - BN_MOMENTUM) * self.run_var + BN_MOMENTUM * var
            return ad.batch_norm(ctx.tape, y, self.gamma, self.beta, eps=BN_EPS)
        return ad.normalize_affine(ctx.tape, y, self.gamma, self.beta,
                                   self.run_mean, self.run_var, eps=BN_EPS)

    def folded_kernel(self) -> ConvKernel:
        """Inference kernel with the normalization folded into weights."""
        return fold_bn(self.w.data, self.gamma.data, self.beta.data,
                       self.run_mean, self.run_var, self.stride, self.padding, self.groups)


def fold_bn(w, gamma, beta, mean, var, stride=1, padding=None, groups=1,
            eps=BN_EPS) -> ConvKernel:
    a = gamma / np.sqrt(var + eps)
    return ConvKernel(weights=w * a[:, None, None, None], bias=beta - mean * a,
                      stride=stride, padding=padding, groups=groups)


class RepConv:
    """Re-parameterizable 3x3 unit: pointwise, depthwise 3x3, pointwise.

    Deploys as one dense 3x3 kernel (see :meth:`fold`); the training form
    costs ~2*D^2 parameters instead of the dense 9*D^2.
    """

    def __init__(self, rng, dim, name="repconv"):
        self.pw1 = Var(rng.normal(0.0, np.sqrt(2.0 / dim), (dim, dim, 1, 1)),
                       name=f"{name}.pw1.w")
        self.dw = ConvBN(rng, dim, dim, 3, groups=dim, name=f"{name}.dw")
        self.pw2 = ConvBN(rng, dim, dim, 1, name=f"{name}.pw2")
        self.dim, self.name = dim, name

    def named_params(self):
        yield self.pw1.name, self.pw1
        yield from self.dw.named_params()
        yield from self.pw2.named_params()

    def named_buffers(self):
        yield from self.dw.named_buffers()
        yield from self.pw2.named_buffers()

    def forward(self, x: Var, ctx: ForwardContext) -> Var:
        y = ad.conv2d(ctx.tape, x, self.pw1, None, 1, 0)
        y = self.dw.forward(y, ctx)
        return self.pw2.forward(y, ctx)

    def fold(self) -> ConvKernel:
        """Collapse pw1 -> dw3x3+BN -> pw2+BN into a single dense 3x3 kernel.

        Exact on every input (boundaries included) because only the depthwise
        stage has spatial support; uses the running normalization statistics.
        """
        kd = self.dw.folded_kernel()      # (D, 1, 3, 3) + bias
        kp = self.pw2.folded_kernel()     # (D, D, 1, 1) + bias
        w1 = self.pw1.data[:, :, 0, 0]    # (D, D)
        p2 = kp.weights[:, :, 0, 0]       # (D, D)
        chain = p2[:, :, None, None] * kd.weights[None, :, 0]   # (D_out, D_mid, 3, 3)
        weights = np.einsum("omuv,mi->oiuv", chain, w1)
        bias = p2 @ kd.bias + kp.bias
        return ConvKernel(weights=weights, bias=bias, stride=1, padding=1)


class SepConv:
    """Inverted separable token mixer: expand 1x1, depthwise 7x7, project 1x1."""

    RATIO = 2

    def __init__(self, rng, dim, lif: LIFParams, name="sepconv"):
        mid = self.RATIO * dim
        self.sn1 = SN(lif, name=f"{name}.sn1")
        self.pw1 = ConvBN(rng, dim, mid, 1, name=f"{name}.pw1")
        self.sn2 = SN(lif, name=f"{name}.sn2")
        self.dw = ConvBN(rng, mid, mid, 7, groups=mid, name=f"{name}.dw")
        self.pw2 = ConvBN(rng, mid, dim, 1, name=f"{name}.pw2")
        self.name = name

    def named_params(self):
        for m in (self.sn1, self.pw1, self.sn2, self.dw, self.pw2):
            yield from m.named_params()

    def named_buffers(self):
        for m in (self.pw1, self.dw, self.pw2):
            yield from m.named_buffers()

    def reset_state(self):
        self.sn1.reset_state()
        self.sn2.reset_state()

    def forward(self, x: Var, ctx: ForwardContext) -> Var:
        s = self.sn1.step(x, ctx)
        ctx.observe(f"{self.name}.pw1", s)
        y = self.pw1.forward(s, ctx)
        s = self.sn2.step(y, ctx)
        ctx.observe(f"{self.name}.dwpw2", s)
        y = self.dw.forward(s, ctx)
        return self.pw2.forward(y, ctx)

    def apply(self, u: DenseTensor) -> DenseTensor:
        return _apply_typed(self, u)


class ChannelConv:
    """Channel mixer for conv stages: two 3x3 convs around an expansion."""

    RATIO = 4

    def __init__(self, rng, dim, lif: LIFParams, name="chconv"):
        mid = self.RATIO * dim
        self.sn1 = SN(lif, name=f"{name}.sn1")
        self.conv1 = ConvBN(rng, dim, mid, 3, name=f"{name}.conv1")
        self.sn2 = SN(lif, name=f"{name}.sn2")
        self.conv2 = ConvBN(rng, mid, dim, 3, name=f"{name}.conv2")
        self.name = name

    def named_params(self):
        for m in (self.sn1, self.conv1, self.sn2, self.conv2):
            yield from m.named_params()

    def named_buffers(self):
        for m in (self.conv1, self.conv2):
            yield from m.named_buffers()

    def reset_state(self):
        self.sn1.reset_state()
        self.sn2.reset_state()

    def forward(self, x: Var, ctx: ForwardContext) -> Var:
        s = self.sn1.step(x, ctx)
        ctx.observe(f"{self.name}.conv1", s)
        y = self.conv1.forward(s, ctx)
        s = self.sn2.step(y, ctx)
        ctx.observe(f"{self.name}.conv2", s)
        return self.conv2.forward(s, ctx)

    def apply(self, u: DenseTensor) -> DenseTensor:
        return _apply_typed(self, u)


class ChannelMLP:
    """Token-wise two-layer MLP, realized as 1x1 convs on the spatial layout."""

    RATIO = 4

    def __init__(self, rng, dim, lif: LIFParams, name="mlp"):
        mid = self.RATIO * dim
        self.sn1 = SN(lif, name=f"{name}.sn1")
        self.fc1 = ConvBN(rng, dim, mid, 1, name=f"{name}.fc1")
        self.sn2 = SN(lif, name=f"{name}.sn2")
        self.fc2 = ConvBN(rng, mid, dim, 1, name=f"{name}.fc2")
        self.name = name

    def named_params(self):
        for m in (self.sn1, self.fc1, self.sn2, self.fc2):
            yield from m.named_params()

    def named_buffers(self):
        for m in (self.fc1, self.fc2):
            yield from m.named_buffers()

    def reset_state(self):
        self.sn1.reset_state()
        self.sn2.reset_state()

    def forward(self, x: Var, ctx: ForwardContext) -> Var:
        s = self.sn1.step(x, ctx)
        ctx.observe(f"{self.name}.fc1", s)
        y = self.fc1.forward(s, ctx)
        s = self.sn2.step(y, ctx)
        ctx.observe(f"{self.name}.fc2", s)
        return self.fc2.forward(s, ctx)

    def apply(self, u: DenseTensor) -> DenseTensor:
        """Token-layout (N, D) convenience entry."""
        a = np.asarray(u.data, dtype=np.float64)
        if a.ndim != 2:
            raise ShapeError(f"expected (N, D) tokens, got {a.shape}")
        n, d = a.shape
        spatial = DenseTensor(a.T.reshape(d, n, 1))
        out = _apply_typed(self, spatial)
        return DenseTensor(out.data.reshape(d, n).T)


def _apply_typed(layer, u: DenseTensor) -> DenseTensor:
    """Single-step eval-mode pass for the typed functional surface."""
    a = np.asarray(u.data, dtype=np.float64)
    squeeze = a.ndim == 3
    if squeeze:
        a = a[None]
    if a.ndim != 4:
        raise ShapeError(f"expected (C, H, W) or (B, C, H, W), got {u.shape}")
    layer.reset_state()
    out = layer.forward(Var(a), ForwardContext()).data
    layer.reset_state()
    return DenseTensor(out[0] if squeeze else out)


class ConvBlock:
    """Stage-1/2 block: separable token mixer plus channel convs, with the
    configured residual style."""

    def __init__(self, rng, dim, lif: LIFParams, shortcut="MS", name="convblock"):
        if shortcut not in SHORTCUTS:
            raise ValueError(f"shortcut must be one of {SHORTCUTS}")
        self.token = SepConv(rng, dim, lif, name=f"{name}.sepconv")
        self.channel = ChannelConv(rng, dim, lif, name=f"{name}.chconv")
        self.shortcut = shortcut
        self.name = name
        self.out_sn1 = SN(lif, name=f"{name}.out_sn1") if shortcut != "MS" else None
        self.out_sn2 = SN(lif, name=f"{name}.out_sn2") if shortcut != "MS" else None

    def named_params(self):
        for m in (self.token, self.channel):
            yield from m.named_params()

    def named_buffers(self):
        for m in (self.token, self.channel):
            yield from m.named_buffers()

    def reset_state(self):
        for m in (self.token, self.channel, self.out_sn1, self.out_sn2):
            if m is not None:
                m.reset_state()

    def forward(self, x: Var, ctx: ForwardContext) -> Var:
        tape = ctx.tape
        if self.shortcut == "MS":
            u1 = ad.add(tape, x, self.token.forward(x, ctx))
            return ad.add(tape, u1, self.channel.forward(u1, ctx))
        if self.shortcut == "SEW":
            s1 = self.out_sn1.step(self.token.forward(x, ctx), ctx)
            y1 = ad.add(tape, s1, x)
            s2 = self.out_sn2.step(self.channel.forward(y1, ctx), ctx)
            return ad.add(tape, s2, y1)
        # VS: membrane-plus-spike sum, fired at the block boundary
        s1 = self.out_sn1.step(ad.add(tape, self.token.forward(x, ctx), x), ctx)
        return self.out_sn2.step(ad.add(tape, self.channel.forward(s1, ctx), s1), ctx)

    def apply(self, u: DenseTensor) -> DenseTensor:
        return _apply_typed(self, u)


class TransformerBlock:
    """Stage-3/4 block: spike Q/K/V generation, the configured spike-driven
    attention operator, an output RepConv, and a channel MLP."""

    def __init__(self, rng, dim, lif: LIFParams, sdsa: SDSAConfig, shortcut="MS",
                 name="block"):
        if sdsa.variant in (3, 4) and dim % sdsa.heads:
            raise ValueError(f"dim {dim} not divisible by {sdsa.heads} heads")
        self.sdsa = sdsa
        self.lif = lif
        self.sn_in = SN(lif, name=f"{name}.sn_in")
        self.rep_q = RepConv(rng, dim, name=f"{name}.rep_q")
        self.rep_k = RepConv(rng, dim, name=f"{name}.rep_k") if sdsa.variant != 2 else None
        self.rep_v = RepConv(rng, dim, name=f"{name}.rep_v")
        self.sn_q = SN(lif, name=f"{name}.sn_q")
        self.sn_k = SN(lif, name=f"{name}.sn_k") if sdsa.variant != 2 else None
        self.sn_v = SN(lif, name=f"{name}.sn_v")
        if sdsa.variant in (1, 2):
            self.sn_gate = SN(lif, name=f"{name}.sn_gate")
            self.sn_attn = None
        else:
            scaled = lif.scaled(sdsa.threshold_scale)
            self.sn_gate = None
            self.sn_attn = SN(scaled, name=f"{name}.sn_attn",
                              learnable=(sdsa.variant == 4))
        self.rep4 = RepConv(rng, dim, name=f"{name}.rep4")
        self.mlp = ChannelMLP(rng, dim, lif, name=f"{name}.mlp")
        self.shortcut = shortcut
        self.out_sn1 = SN(lif, name=f"{name}.out_sn1") if shortcut != "MS" else None
        self.out_sn2 = SN(lif, name=f"{name}.out_sn2") if shortcut != "MS" else None
        self.dim, self.name = dim, name

    def _members(self):
        return [m for m in (self.sn_in, self.rep_q, self.rep_k, self.rep_v, self.sn_q,
                            self.sn_k, self.sn_v, self.sn_gate, self.sn_attn, self.rep4,
                            self.mlp, self.out_sn1, self.out_sn2) if m is not None]

    def named_params(self):
        for m in self._members():
            yield from m.named_params()

    def named_buffers(self):
        for m in self._members():
            if hasattr(m, "named_buffers"):
                yield from m.named_buffers()

    def reset_state(self):
        for m in self._members():
            if hasattr(m, "reset_state"):
                m.reset_state()

    def _attend(self, x: Var, ctx: ForwardContext) -> Var:
        tape = ctx.tape
        b, c, h, w = x.shape
        s_in = self.sn_in.step(x, ctx)
        ctx.observe(f"{self.name}.qkv", s_in)
        q = self.sn_q.step(self.rep_q.forward(s_in, ctx), ctx)
        ctx.observe(f"{self.name}.q", q)
        v = self.sn_v.step(self.rep_v.forward(s_in, ctx), ctx)
        ctx.observe(f"{self.name}.v", v)
        k = None
        if self.sdsa.variant != 2:
            k = self.sn_k.step(self.rep_k.forward(s_in, ctx), ctx)
            ctx.observe(f"{self.name}.k", k)

        def tokens(z):  # (B, C, H, W) -> (B, N, D)
            return ad.transpose(tape, ad.reshape(tape, z, (b, c, h * w)), (0, 2, 1))

        qt, vt = tokens(q), tokens(v)
        if self.sdsa.variant == 1:
            col = ad.sum_axes(tape, ad.mul(tape, tokens(k), vt), (1,))
            gate = self.sn_gate.step(col, ctx)
            attn = ad.mul(tape, qt, gate)
        elif self.sdsa.variant == 2:
            gate = self.sn_gate.step(ad.sum_axes(tape, qt, (1,)), ctx)
            attn = ad.mul(tape, gate, vt)
        else:
            heads = self.sdsa.heads
            dh = c // heads

            def headed(z):  # (B, N, D) -> (B, heads, N, dh)
                return ad.transpose(tape, ad.reshape(tape, z, (b, h * w, heads, dh)),
                                    (0, 2, 1, 3))

            qh, kh, vh = headed(qt), headed(tokens(k)), headed(vt)
            kv = ad.matmul(tape, ad.transpose(tape, kh, (0, 1, 3, 2)), vh)
            ctx.observe(f"{self.name}.ktv", kv)
            qkv = ad.matmul(tape, qh, kv)
            ctx.observe(f"{self.name}.qktv", qkv)
            merged = ad.reshape(tape, ad.transpose(tape, qkv, (0, 2, 1, 3)),
                                (b, h * w, c))
            attn = self.sn_attn.step(merged, ctx)
        spatial = ad.reshape(tape, ad.transpose(tape, attn, (0, 2, 1)), (b, c, h, w))
        ctx.observe(f"{self.name}.repconv4", spatial)
        return self.rep4.forward(spatial, ctx)

    def forward(self, x: Var, ctx: ForwardContext) -> Var:
        tape = ctx.tape
        if self.shortcut == "MS":
            u1 = ad.add(tape, x, self._attend(x, ctx))
            return ad.add(tape, u1, self.mlp.forward(u1, ctx))
        if self.shortcut == "SEW":
            s1 = self.out_sn1.step(self._attend(x, ctx), ctx)
            y1 = ad.add(tape, s1, x)
            s2 = self.out_sn2.step(self.mlp.forward(y1, ctx), ctx)
            return ad.add(tape, s2, y1)
        s1 = self.out_sn1.step(ad.add(tape, self._attend(x, ctx), x), ctx)
        return self.out_sn2.step(ad.add(tape, self.mlp.forward(s1, ctx), s1), ctx)

    def apply(self, u: DenseTensor) -> DenseTensor:
        return _apply_typed(self, u)


class Downsample:
    """Strided conv stage entry; fires the input first except for the raw-pixel
    encoding layer."""

    def __init__(self, rng, cin, cout, k, stride, lif: LIFParams, first=False,
                 name="ds"):
        self.sn = None if first else SN(lif, name=f"{name}.sn")
        self.conv = ConvBN(rng, cin, cout, k, stride=stride, name=f"{name}.conv")
        self.first = first
        self.name = name

    def named_params(self):
        if self.sn is not None:
            yield from self.sn.named_params()
        yield from self.conv.named_params()

    def named_buffers(self):
        yield from self.conv.named_buffers()

    def reset_state(self):
        if self.sn is not None:
            self.sn.reset_state()

    def forward(self, x: Var, ctx: ForwardContext) -> Var:
        if self.first:
            # raw-pixel encoding: charged as dense MAC at rate 1
            ctx.observe(self.name, x, kind="dense", rate=1.0)
            return self.conv.forward(x, ctx)
        s = self.sn.step(x, ctx)
        ctx.observe(self.name, s)
        return self.conv.forward(s, ctx)

    def apply(self, u: DenseTensor) -> DenseTensor:
        return _apply_typed(self, u)


def repconv_fold(branch3x3: ConvKernel | None, branch1x1: ConvKernel | None,
                 identity_flag: bool = False,
                 per_branch_scales: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> ConvKernel:
    """Fold parallel {3x3, 1x1, identity} conv branches into one 3x3 kernel.

    The 1x1 branch embeds at the kernel center; the identity branch becomes a
    center-tap delta. Branches must share stride 1 and channel counts.
    """
    branches = [b for b in (branch3x3, branch1x1) if b is not None]
    if not branches and not identity_flag:
        raise FoldError("nothing to fold")
    s3, s1, sid = per_branch_scales
    if branch3x3 is not None:
        c_out, c_in = branch3x3.c_out, branch3x3.c_in
    elif branch1x1 is not None:
        c_out, c_in = branch1x1.c_out, branch1x1.c_in
    else:
        raise FoldError("identity-only fold needs explicit channels; pass a zero 1x1 branch")
    for b in branches:
        if b.stride != 1:
            raise FoldError("folding requires stride-1 branches")
        if b.groups != 1:
            raise FoldError("folding requires ungrouped branches")
        if (b.c_out, b.c_in) != (c_out, c_in):
            raise FoldError(f"branch channels {(b.c_out, b.c_in)} != {(c_out, c_in)}")
    if branch3x3 is not None and branch3x3.k != 3:
        raise FoldError(f"3x3 branch has kernel size {branch3x3.k}")
    if branch1x1 is not None and branch1x1.k != 1:
        raise FoldError(f"1x1 branch has kernel size {branch1x1.k}")
    if identity_flag and c_out != c_in:
        raise FoldError(f"identity branch needs square channels, got {c_out}x{c_in}")

    weights = np.zeros((c_out, c_in, 3, 3))
    bias = np.zeros(c_out)
    if branch3x3 is not None:
        weights += s3 * branch3x3.weights
        bias += s3 * branch3x3.bias
    if branch1x1 is not None:
        weights[:, :, 1, 1] += s1 * branch1x1.weights[:, :, 0, 0]
        bias += s1 * branch1x1.bias
    if identity_flag:
        weights[np.arange(c_out), np.arange(c_in), 1, 1] += sid
    return ConvKernel(weights=weights, bias=bias, stride=1, padding=1)


def apply_shortcut(kind: str, x, branch_out):
    """Residual combination of a block input with its branch output.

    MS sums two membrane potentials, SEW sums spike/integer tensors into an
    integer tensor, VS sums a potential with a spike tensor.
    """
    if kind not in SHORTCUTS:
        raise KindError(f"unknown shortcut kind {kind!r}")
    if x.shape != branch_out.shape:
        raise ShapeError(f"shortcut operands differ: {x.shape} vs {branch_out.shape}")
    if kind == "MS":
        if isinstance(x, SpikeTensor) or isinstance(branch_out, SpikeTensor):
            raise KindError("membrane shortcut does not apply to spike tensors")
        if not isinstance(x, DenseTensor) or not isinstance(branch_out, DenseTensor):
            raise KindError("membrane shortcut needs two potential tensors")
        return DenseTensor(x.data + branch_out.data)
    if kind == "SEW":
        if not isinstance(x, (SpikeTensor, IntTensor)) or \
                not isinstance(branch_out, (SpikeTensor, IntTensor)):
            raise KindError("SEW shortcut needs spike or integer operands")
        return IntTensor(x.data.astype(np.int64) + branch_out.data.astype(np.int64))
    # VS: membrane potential + spike, in either argument order
    pair = (x, branch_out)
    dense = [p for p in pair if isinstance(p, DenseTensor)]
    spikes = [p for p in pair if isinstance(p, SpikeTensor)]
    if len(dense) != 1 or len(spikes) != 1:
        raise KindError("VS shortcut needs one potential and one spike tensor")
    return DenseTensor(dense[0].data + spikes[0].data.astype(np.float64))
