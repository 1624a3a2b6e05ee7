"""Model assembly: pyramid of conv stages feeding transformer stages, with a
fired time-averaged readout, plus parameter counting and checkpoint I/O."""

from __future__ import annotations

import struct
import zlib

import numpy as np

from . import autodiff as ad
from .attention import SDSAConfig
from .autodiff import Tape, Var
from .blocks import SN, ConvBlock, Downsample, ForwardContext, TransformerBlock
from .config import ModelConfig, TrainConfig, config_to_text
from .errors import CheckpointError, ConfigError, ShapeError
from .instrument import Probe
from .kernels import conv_output_size
from .tensors import DenseTensor

__all__ = ["Model", "build_model", "count_params", "forward",
           "save_checkpoint", "load_checkpoint"]

CHECKPOINT_MAGIC = b"MSF2"
CHECKPOINT_VERSION = 1


class Linear:
    def __init__(self, rng, cin, cout, name="fc"):
        self.w = Var(rng.normal(0.0, 1.0 / np.sqrt(cin), (cin, cout)), name=f"{name}.w")
        self.b = Var(np.zeros(cout), name=f"{name}.b")
        self.name = name

    def named_params(self):
        yield self.w.name, self.w
        yield self.b.name, self.b

    def forward(self, x: Var, ctx: ForwardContext) -> Var:
        return ad.add(ctx.tape, ad.matmul(ctx.tape, x, self.w), self.b)


class Model:
    """The assembled network. Construction is deterministic given the config
    seed; parameters are float64 throughout."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        d = cfg.dims
        lif = cfg.lif
        sc = cfg.shortcut
        sdsa3 = SDSAConfig(variant=cfg.sdsa_variant, heads=cfg.heads, dim=d[3],
                           threshold_scale=cfg.threshold_scale)
        sdsa4 = SDSAConfig(variant=cfg.sdsa_variant, heads=cfg.heads, dim=d[4],
                           threshold_scale=cfg.threshold_scale)

        self.ds1 = Downsample(rng, cfg.in_channels, d[0], 7, 2, lif, first=True,
                              name="stage1.ds1")
        self.stem_sn = SN(lif, name="stem.sn") if sc != "MS" else None
        blk = 0
        self.stage1a = []
        for _ in range(cfg.depths[0]):
            blk += 1
            self.stage1a.append(ConvBlock(rng, d[0], lif, sc, name=f"stage1.block{blk}"))
        self.ds2 = Downsample(rng, d[0], d[1], 3, 2, lif, name="stage1.ds2")
        self.stage1b = []
        for _ in range(cfg.depths[1]):
            blk += 1
            self.stage1b.append(ConvBlock(rng, d[1], lif, sc, name=f"stage1.block{blk}"))
        self.ds3 = Downsample(rng, d[1], d[2], 3, 2, lif, name="stage2.ds")
        self.stage2 = [ConvBlock(rng, d[2], lif, sc, name=f"stage2.block{i+1}")
                       for i in range(cfg.depths[2])]
        self.ds4 = Downsample(rng, d[2], d[3], 3, 2, lif, name="stage3.ds")
        self.stage3 = [TransformerBlock(rng, d[3], lif, sdsa3, sc, name=f"stage3.block{i+1}")
                       for i in range(cfg.depths[3])]
        self.ds5 = Downsample(rng, d[3], d[4], 3, 1, lif, name="stage4.ds")
        self.stage4 = [TransformerBlock(rng, d[4], lif, sdsa4, sc, name=f"stage4.block{i+1}")
                       for i in range(cfg.depths[4])]
        self.head_sn = SN(lif, name="head.sn")
        self.head = Linear(rng, d[4], cfg.num_classes, name="head.fc")
        self._check_resolution()

    def _check_resolution(self):
        h = self.cfg.resolution
        for k, s in ((7, 2), (3, 2), (3, 2), (3, 2), (3, 1)):
            h = conv_output_size(h, k, s, k // 2)
            if h < 1:
                raise ConfigError(f"resolution {self.cfg.resolution} too small for the pyramid")

    def _layers(self):
        yield self.ds1
        if self.stem_sn is not None:
            yield self.stem_sn
        yield from self.stage1a
        yield self.ds2
        yield from self.stage1b
        yield self.ds3
        yield from self.stage2
        yield self.ds4
        yield from self.stage3
        yield self.ds5
        yield from self.stage4
        yield self.head_sn
        yield self.head

    def named_params(self):
        for layer in self._layers():
            yield from layer.named_params()

    def parameters(self):
        return [v for _, v in self.named_params()]

    def named_buffers(self):
        for layer in self._layers():
            if hasattr(layer, "named_buffers"):
                yield from layer.named_buffers()

    def reset_state(self):
        for layer in self._layers():
            if hasattr(layer, "reset_state"):
                layer.reset_state()

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def forward(self, x, timesteps: int | None = None, tape: Tape | None = None,
                probe: Probe | None = None, training: bool = False,
                smooth: bool = False, bn_frozen: bool = False) -> Var:
        """Run the network over T timesteps and average the per-step logits.

        ``x`` is either a static (B, C, H, W) batch, replicated along T, or a
        pre-binned (T, B, C, H, W) event tensor.
        """
        a = x.data if isinstance(x, (DenseTensor, Var)) else np.asarray(x, dtype=np.float64)
        if a.ndim == 4:
            t_len = timesteps or self.cfg.timesteps
            seq = [a] * t_len
        elif a.ndim == 5:
            t_len = a.shape[0]
            seq = [a[t] for t in range(t_len)]
        else:
            raise ShapeError(f"expected (B, C, H, W) or (T, B, C, H, W), got {a.shape}")
        if seq[0].shape[1] != self.cfg.in_channels:
            raise ShapeError(f"expected {self.cfg.in_channels} input channels, "
                             f"got {seq[0].shape[1]}")
        ctx = ForwardContext(tape=tape, probe=probe, training=training,
                             smooth=smooth, bn_frozen=bn_frozen)
        self.reset_state()
        logits = None
        for t, frame in enumerate(seq):
            if probe is not None:
                probe.t = t + 1
            z = Var(np.asarray(frame, dtype=np.float64))
            z = self.ds1.forward(z, ctx)
            if self.stem_sn is not None:
                z = self.stem_sn.step(z, ctx)
            for b in self.stage1a:
                z = b.forward(z, ctx)
            z = self.ds2.forward(z, ctx)
            for b in self.stage1b:
                z = b.forward(z, ctx)
            z = self.ds3.forward(z, ctx)
            for b in self.stage2:
                z = b.forward(z, ctx)
            z = self.ds4.forward(z, ctx)
            for b in self.stage3:
                z = b.forward(z, ctx)
            z = self.ds5.forward(z, ctx)
            for b in self.stage4:
                z = b.forward(z, ctx)
            s = self.head_sn.step(z, ctx)
            ctx.observe("head.fc", s)
            pooled = ad.mean_axes(tape, s, (2, 3))
            step_logits = self.head.forward(pooled, ctx)
            logits = step_logits if logits is None else ad.add(tape, logits, step_logits)
        return ad.scale(tape, logits, 1.0 / t_len)


def build_model(cfg: ModelConfig) -> Model:
    return Model(cfg)


def count_params(model: Model) -> int:
    """Number of trainable scalars (normalization affine included, running
    statistics excluded)."""
    return int(sum(v.data.size for _, v in model.named_params()))


def forward(model: Model, x, timesteps: int | None = None) -> DenseTensor:
    """Inference-mode logits for a static batch or an event tensor."""
    return DenseTensor(model.forward(x, timesteps=timesteps).data)


_DTYPES = {0: np.float64, 1: np.float32, 2: np.int64, 3: np.uint8}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


def save_checkpoint(model: Model, path, train_cfg: TrainConfig | None = None):
    """Binary checkpoint: magic, version, config text, tensor table, CRC32."""
    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<I", CHECKPOINT_VERSION)
    cfg_text = config_to_text(model.cfg, train_cfg).encode("utf-8")
    buf += struct.pack("<I", len(cfg_text))
    buf += cfg_text
    tensors = list(model.named_params()) + [(n, b) for n, b in model.named_buffers()]
    buf += struct.pack("<I", len(tensors))
    for name, t in tensors:
        data = t.data if isinstance(t, Var) else np.asarray(t)
        nb = name.encode("utf-8")
        buf += struct.pack("<H", len(nb)) + nb
        buf += struct.pack("<BB", _DTYPE_CODES[np.dtype(data.dtype)], data.ndim)
        buf += struct.pack(f"<{data.ndim}I", *data.shape)
        buf += np.ascontiguousarray(data).astype(data.dtype, copy=False).tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


def _read(buf, offset, fmt):
    size = struct.calcsize(fmt)
    if offset + size > len(buf):
        raise CheckpointError("truncated checkpoint")
    return struct.unpack_from(fmt, buf, offset), offset + size


def load_checkpoint(model: Model, path) -> Model:
    """Restore every parameter and buffer bit-exactly into ``model``.

    The checkpoint must cover exactly the model's tensor table; any name or
    shape mismatch (a different config) fails.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 12 or buf[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic; not a checkpoint file")
    (stored_crc,), _ = _read(buf, len(buf) - 4, "<I")
    if zlib.crc32(buf[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError("checksum mismatch; file corrupt")
    off = 4
    (version,), off = _read(buf, off, "<I")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (cfg_len,), off = _read(buf, off, "<I")
    off += cfg_len  # config text; retained for inspection, not re-parsed here
    (n_tensors,), off = _read(buf, off, "<I")
    loaded = {}
    for _ in range(n_tensors):
        (name_len,), off = _read(buf, off, "<H")
        name = buf[off:off + name_len].decode("utf-8")
        off += name_len
        (code, ndim), off = _read(buf, off, "<BB")
        shape, off = _read(buf, off, f"<{ndim}I")
        dtype = np.dtype(_DTYPES.get(code))
        if code not in _DTYPES:
            raise CheckpointError(f"unknown dtype code {code}")
        nbytes = int(np.prod(shape)) * dtype.itemsize if ndim else dtype.itemsize
        raw = buf[off:off + nbytes]
        if len(raw) != nbytes:
            raise CheckpointError("truncated tensor data")
        off += nbytes
        loaded[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()

    expected = {n: (t.data if isinstance(t, Var) else np.asarray(t))
                for n, t in list(model.named_params()) + list(model.named_buffers())}
    if set(loaded) != set(expected):
        missing = set(expected) - set(loaded)
        extra = set(loaded) - set(expected)
        raise CheckpointError(f"tensor table mismatch (missing={sorted(missing)[:3]}, "
                              f"extra={sorted(extra)[:3]})")
    for name, t in model.named_params():
        if loaded[name].shape != t.data.shape:
            raise CheckpointError(f"{name}: shape {loaded[name].shape} != {t.data.shape}")
        t.data = loaded[name].astype(np.float64)
    for name, arr in model.named_buffers():
        if loaded[name].shape != arr.shape:
            raise CheckpointError(f"{name}: shape mismatch")
        arr[...] = loaded[name]  # the yielded array is the live buffer
    return model
