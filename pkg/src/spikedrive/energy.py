"""FLOPs accounting, firing-rate reports, and the theoretical energy model.

Costing rules:

* spike-driven conv / linear layers cost E_AC * (sum of per-timestep input
  firing rates) * FLOPs, with FLOPs computed at the layer's deployed form
  (re-parameterized convs count as their folded dense 3x3);
* the stage-1 encoding conv reads raw pixels, so it is charged per timestep
  at E_MAC with rate 1;
* the attention operator costs E_AC * T * R_hat * N * D (mask variants) or
  * N * D^2 (matmul variants), where R_hat sums the measured firing rates of
  every matrix participating in the operator;
* Hadamard masks and the neuron updates themselves are charged nothing.

Energies are the standard 45nm per-op figures: 0.9 pJ per accumulate and
4.6 pJ per multiply-accumulate.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources

from .config import ModelConfig
from .errors import ArgError, ParseError, ReportError
from .instrument import Probe
from .kernels import conv_output_size

__all__ = [
    "E_AC_PJ",
    "E_MAC_PJ",
    "FiringRateReport",
    "EnergyReport",
    "ChargedOp",
    "flops_conv",
    "flops_mlp",
    "flops_conv_dw",
    "sdsa_flops",
    "vsa_flops",
    "charged_ops",
    "record_rates",
    "estimate_energy",
    "load_rate_fixture",
    "packaged_fixture_path",
]

E_AC_PJ = 0.9
E_MAC_PJ = 4.6


def flops_conv(k: int, h: int, w: int, c_in: int, c_out: int) -> int:
    """Multiply-accumulates of a dense conv layer: k^2 * h * w * c_in * c_out
    with (h, w) the output feature map size."""
    if min(k, h, w, c_in, c_out) <= 0:
        raise ArgError("conv FLOPs need positive dimensions")
    return k * k * h * w * c_in * c_out


def flops_conv_dw(k: int, h: int, w: int, c: int) -> int:
    """Depthwise conv: one input channel per output channel."""
    if min(k, h, w, c) <= 0:
        raise ArgError("conv FLOPs need positive dimensions")
    return k * k * h * w * c


def flops_mlp(i: int, o: int) -> int:
    if i <= 0 or o <= 0:
        raise ArgError("mlp FLOPs need positive dimensions")
    return i * o


def sdsa_flops(variant: int, n: int, d: int, timesteps: int, rates) -> int:
    """Operator cost per Table-of-operators row: T * R_hat * N * D for the
    mask variants, T * R_hat * N * D^2 for the matmul variants. ``rates`` is
    the measured firing rate(s) whose sum forms R_hat."""
    if variant not in (1, 2, 3, 4):
        raise ArgError(f"unknown SDSA variant {variant}")
    if n < 0 or d < 0 or timesteps < 1:
        raise ArgError("bad dimensions")
    r_hat = float(sum(rates)) if hasattr(rates, "__iter__") else float(rates)
    base = n * d if variant in (1, 2) else n * d * d
    return int(round(timesteps * r_hat * base))


def vsa_flops(n: int, d: int) -> int:
    """Float attention baseline: QKV projections, two matmuls, scale, softmax."""
    if n < 0 or d < 0:
        raise ArgError("bad dimensions")
    if n == 0:
        return 0
    return 3 * n * d * d + 2 * n * n * d + 3 * n * n


@dataclass(frozen=True)
class RateEntry:
    layer: str
    t: int
    rate: float


@dataclass
class FiringRateReport:
    """Per-(layer, timestep) spike densities, ordered as recorded."""

    entries: list[RateEntry] = field(default_factory=list)

    def __post_init__(self):
        for e in self.entries:
            if not 0.0 <= e.rate <= 1.0:
                raise ReportError(f"rate out of [0,1] for {e.layer} t={e.t}: {e.rate}")

    def add(self, layer: str, t: int, rate: float):
        if not 0.0 <= rate <= 1.0:
            raise ReportError(f"rate out of [0,1] for {layer} t={t}: {rate}")
        self.entries.append(RateEntry(layer, t, rate))

    def get(self, layer: str, t: int) -> float:
        for e in self.entries:
            if e.layer == layer and e.t == t:
                return e.rate
        raise ReportError(f"no firing rate recorded for {layer} at t={t}")

    def series(self, layer: str, timesteps: int) -> list[float]:
        index = {(e.layer, e.t): e.rate for e in self.entries}
        try:
            return [index[(layer, t)] for t in range(1, timesteps + 1)]
        except KeyError as exc:
            raise ReportError(f"missing firing rate for {layer} at t={exc.args[0][1]}") from None

    def layers(self) -> list[str]:
        seen = dict.fromkeys(e.layer for e in self.entries)
        return list(seen)


@dataclass(frozen=True)
class EnergyRow:
    layer: str
    flops: int
    rate: float  # mean over timesteps
    op_kind: str  # AC | MAC
    energy_pj: float


@dataclass
class EnergyReport:
    rows: list[EnergyRow]

    @property
    def total_pj(self) -> float:
        return sum(r.energy_pj for r in self.rows)

    @property
    def total_mj(self) -> float:
        return self.total_pj / 1e9

    def to_text(self) -> str:
        out = ["# layer flops rate op_kind energy_pj"]
        for r in self.rows:
            out.append(f"{r.layer} {r.flops} {r.rate:.6f} {r.op_kind} {r.energy_pj:.3f}")
        out.append(f"total_mj {self.total_mj:.3f}")
        return "\n".join(out) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["layer", "flops", "rate", "op_kind", "energy_pj"])
        for r in self.rows:
            w.writerow([r.layer, r.flops, f"{r.rate:.6f}", r.op_kind, f"{r.energy_pj:.3f}"])
        w.writerow(["total_mj", f"{self.total_mj:.3f}", "", "", ""])
        return buf.getvalue()


@dataclass(frozen=True)
class ChargedOp:
    """One energy-bearing op: a conv/linear with a single input-rate key, the
    raw-pixel encoding conv, or an attention operator with its matrix keys."""

    layer: str
    kind: str  # encoding | conv | mlp | sdsa
    flops: int  # per-pass FLOPs (conv/mlp); N*D base handled via sdsa_flops
    rate_keys: tuple[str, ...]
    n: int = 0
    d: int = 0
    variant: int = 0


def _stage_sizes(cfg: ModelConfig):
    h = cfg.resolution
    h1 = conv_output_size(h, 7, 2, 3)
    h2 = conv_output_size(h1, 3, 2, 1)
    h3 = conv_output_size(h2, 3, 2, 1)
    h4 = conv_output_size(h3, 3, 2, 1)
    h5 = conv_output_size(h4, 3, 1, 1)
    return h1, h2, h3, h4, h5


def _conv_block_ops(name: str, h: int, dim: int):
    mid = 2 * dim
    yield ChargedOp(f"{name}.sepconv.pw1", "conv",
                    flops_conv(1, h, h, dim, mid), (f"{name}.sepconv.pw1",))
    yield ChargedOp(f"{name}.sepconv.dwpw2", "conv",
                    flops_conv_dw(7, h, h, mid) + flops_conv(1, h, h, mid, dim),
                    (f"{name}.sepconv.dwpw2",))
    yield ChargedOp(f"{name}.chconv.conv1", "conv",
                    flops_conv(3, h, h, dim, 4 * dim), (f"{name}.chconv.conv1",))
    yield ChargedOp(f"{name}.chconv.conv2", "conv",
                    flops_conv(3, h, h, 4 * dim, dim), (f"{name}.chconv.conv2",))


def _transformer_ops(name: str, h: int, dim: int, variant: int):
    n = h * h
    rep = flops_conv(3, h, h, dim, dim)  # folded deployed form
    n_qkv = 2 if variant == 2 else 3
    yield ChargedOp(f"{name}.qkv", "conv", n_qkv * rep, (f"{name}.qkv",))
    if variant == 1:
        keys = (f"{name}.k", f"{name}.v")
    elif variant == 2:
        keys = (f"{name}.q",)
    else:
        keys = tuple(f"{name}.{m}" for m in ("q", "k", "v", "ktv", "qktv"))
    yield ChargedOp(f"{name}.sdsa", "sdsa", 0, keys, n=n, d=dim, variant=variant)
    yield ChargedOp(f"{name}.repconv4", "conv", rep, (f"{name}.repconv4",))
    yield ChargedOp(f"{name}.mlp.fc1", "mlp", n * flops_mlp(dim, 4 * dim),
                    (f"{name}.mlp.fc1",))
    yield ChargedOp(f"{name}.mlp.fc2", "mlp", n * flops_mlp(4 * dim, dim),
                    (f"{name}.mlp.fc2",))


def charged_ops(cfg: ModelConfig) -> list[ChargedOp]:
    """Enumerate every energy-bearing op of a model config, in forward order.

    Layer ids match the names the forward pass reports to its probe, so a
    measured report and this enumeration join directly on the id.
    """
    d = cfg.dims
    h1, h2, h3, h4, h5 = _stage_sizes(cfg)
    ops: list[ChargedOp] = []
    ops.append(ChargedOp("stage1.ds1", "encoding",
                         flops_conv(7, h1, h1, cfg.in_channels, d[0]), ("stage1.ds1",)))
    blk = 0
    for _ in range(cfg.depths[0]):
        blk += 1
        ops.extend(_conv_block_ops(f"stage1.block{blk}", h1, d[0]))
    ops.append(ChargedOp("stage1.ds2", "conv", flops_conv(3, h2, h2, d[0], d[1]),
                         ("stage1.ds2",)))
    for _ in range(cfg.depths[1]):
        blk += 1
        ops.extend(_conv_block_ops(f"stage1.block{blk}", h2, d[1]))
    ops.append(ChargedOp("stage2.ds", "conv", flops_conv(3, h3, h3, d[1], d[2]),
                         ("stage2.ds",)))
    for i in range(cfg.depths[2]):
        ops.extend(_conv_block_ops(f"stage2.block{i+1}", h3, d[2]))
    ops.append(ChargedOp("stage3.ds", "conv", flops_conv(3, h4, h4, d[2], d[3]),
                         ("stage3.ds",)))
    for i in range(cfg.depths[3]):
        ops.extend(_transformer_ops(f"stage3.block{i+1}", h4, d[3], cfg.sdsa_variant))
    ops.append(ChargedOp("stage4.ds", "conv", flops_conv(3, h5, h5, d[3], d[4]),
                         ("stage4.ds",)))
    for i in range(cfg.depths[4]):
        ops.extend(_transformer_ops(f"stage4.block{i+1}", h5, d[4], cfg.sdsa_variant))
    ops.append(ChargedOp("head.fc", "mlp", flops_mlp(d[4], cfg.num_classes), ("head.fc",)))
    return ops


def record_rates(model, x, timesteps: int | None = None) -> FiringRateReport:
    """Measure per-layer, per-timestep input firing rates over one forward."""
    probe = Probe()
    model.forward(x, timesteps=timesteps, probe=probe)
    report = FiringRateReport()
    for e in probe.entries:
        report.add(e.layer, e.t, min(1.0, e.rate))
    return report


def estimate_energy(model_cfg: ModelConfig, rates: FiringRateReport, timesteps: int,
                    e_ac: float = E_AC_PJ, e_mac: float = E_MAC_PJ) -> EnergyReport:
    """Theoretical energy of one inference at the given timestep count.

    Spike-driven layers are charged from the measured rates; missing rates
    raise. The encoding conv ignores the report and charges dense MACs.
    """
    rows = []
    for op in charged_ops(model_cfg):
        if op.kind == "encoding":
            energy = e_mac * timesteps * op.flops
            rows.append(EnergyRow(op.layer, op.flops, 1.0, "MAC", energy))
            continue
        if op.kind == "sdsa":
            means = [sum(rates.series(k, timesteps)) / timesteps for k in op.rate_keys]
            fl = sdsa_flops(op.variant, op.n, op.d, timesteps, means)
            rows.append(EnergyRow(op.layer, fl, sum(means), "AC", e_ac * fl))
            continue
        series = rates.series(op.rate_keys[0], timesteps)
        energy = e_ac * op.flops * sum(series)
        rows.append(EnergyRow(op.layer, op.flops, sum(series) / timesteps, "AC", energy))
    return EnergyReport(rows=rows)


def packaged_fixture_path():
    """The firing-rate table shipped with the library (31M-scale model, T=4)."""
    return resources.files("spikedrive.data") / "firing_rates_31m_t4.txt"


def load_rate_fixture(path=None) -> FiringRateReport:
    """Parse a structured firing-rate table keyed by (stage, block, layer, t).

    Lines are ``stage block layer t rate``; '#' starts a comment. ``block``
    is a block label or a downsampling label; stage ``head`` carries the
    classifier row.
    """
    source = packaged_fixture_path() if path is None else path
    report = FiringRateReport()
    with open(source, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 5:
                raise ParseError(f"expected 5 fields, got {len(parts)}", lineno)
            stage, block, layer, t_str, rate_str = parts
            try:
                t = int(t_str)
                rate = float(rate_str)
            except ValueError:
                raise ParseError(f"bad numeric field in {line!r}", lineno) from None
            if stage == "head":
                layer_id = f"head.{layer}"
            elif block.startswith("ds"):
                layer_id = f"stage{stage}.{block}"
            else:
                layer_id = f"stage{stage}.{block}.{layer}"
            try:
                report.add(layer_id, t, rate)
            except ReportError as exc:
                raise ParseError(str(exc), lineno) from None
    return report
