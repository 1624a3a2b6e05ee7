"""Leaky Integrate-and-Fire neuron layer.

Dynamics per timestep: the membrane integrates the input current on top of
the carried state, fires wherever it reaches the (scaled) threshold, resets
fired positions and decays the rest:

    U[t] = H[t-1] + X[t]
    S[t] = Hea(U[t] - s * u_th)          (Hea(x) = 1 for x >= 0)
    H[t] = v_reset * S[t] + beta * U[t] * (1 - S[t])

The Heaviside is non-differentiable; training uses a rectangular surrogate
window of half-width ``w`` around the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ShapeError
from .tensors import DenseTensor, SpikeTensor

__all__ = ["LIFParams", "LIFState", "lif_step", "sn_forward", "surrogate_grad", "heaviside"]


@dataclass(frozen=True)
class LIFParams:
    u_th: float = 1.0
    beta: float = 0.5
    v_reset: float = 0.0
    surrogate_window: float | None = None  # defaults to 0.5 * u_th
    threshold_scale: float = 1.0
    threshold_learnable: bool = False

    def __post_init__(self):
        if not self.u_th > 0:
            raise ValueError(f"u_th must be > 0, got {self.u_th}")
        if not 0 < self.beta < 1:
            raise ValueError(f"decay factor beta must be in (0, 1), got {self.beta}")
        if self.threshold_scale <= 0:
            raise ValueError(f"threshold_scale must be > 0, got {self.threshold_scale}")
        if self.surrogate_window is not None and self.surrogate_window <= 0:
            raise ValueError("surrogate_window must be > 0")

    @property
    def window(self) -> float:
        return self.surrogate_window if self.surrogate_window is not None else 0.5 * self.u_th

    @property
    def threshold(self) -> float:
        return self.threshold_scale * self.u_th

    def scaled(self, s: float) -> "LIFParams":
        return replace(self, threshold_scale=s)


@dataclass
class LIFState:
    """Carried membrane state H[t-1], shaped like the layer's features."""

    h: DenseTensor

    @classmethod
    def initial(cls, shape, params: LIFParams) -> "LIFState":
        return cls(h=DenseTensor(np.full(shape, params.v_reset, dtype=np.float64)))


def heaviside(x: np.ndarray) -> np.ndarray:
    """Step function with Hea(0) = 1."""
    return (x >= 0).astype(np.float64)


def lif_step(params: LIFParams, state: LIFState, x: DenseTensor):
    """Advance the neuron one timestep.

    Returns ``(spike, new_state)``. Firing resets the membrane to v_reset;
    silent positions decay by beta.
    """
    if state.h.shape != x.shape:
        raise ShapeError(f"state shape {state.h.shape} != input shape {x.shape}")
    u = state.h.data + x.data
    s = heaviside(u - params.threshold)
    h_new = params.v_reset * s + params.beta * u * (1.0 - s)
    return SpikeTensor(s.astype(np.uint8)), LIFState(h=DenseTensor(h_new))


def sn_forward(params: LIFParams, x_seq: DenseTensor) -> SpikeTensor:
    """Run the neuron over a (T, ...) input sequence from the reset state."""
    if x_seq.data.ndim < 1 or x_seq.data.shape[0] < 1:
        raise ShapeError("x_seq must have a leading time axis with T >= 1")
    state = LIFState.initial(x_seq.data.shape[1:], params)
    out = np.empty(x_seq.data.shape, dtype=np.uint8)
    for t in range(x_seq.data.shape[0]):
        spike, state = lif_step(params, state, DenseTensor(x_seq.data[t]))
        out[t] = spike.data
    return SpikeTensor(out)


def surrogate_grad(params: LIFParams, u) -> np.ndarray | float:
    """Rectangular surrogate derivative of the firing nonlinearity.

    Returns 1/(2w) where |u - s*u_th| < w and 0 elsewhere.
    """
    u = np.asarray(u, dtype=np.float64)
    w = params.window
    g = np.where(np.abs(u - params.threshold) < w, 1.0 / (2.0 * w), 0.0)
    return float(g) if g.ndim == 0 else g
