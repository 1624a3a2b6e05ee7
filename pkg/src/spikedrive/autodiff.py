"""Reverse-mode differentiation over an explicit op tape.

The forward pass appends one record per op; ``backward`` replays the records
in exact reverse order and accumulates vector-Jacobian products into each
``Var``'s ``grad``. The firing nonlinearity is the only non-smooth op: its
backward uses the rectangular surrogate window, either as a straight-through
estimator (spike mode) or as the true derivative of a clamped-linear
relaxation (smooth-check mode, used for finite-difference validation).
"""

from __future__ import annotations

import numpy as np

from .errors import TapeError

__all__ = ["Var", "Tape", "backward"]


class Var:
    """A float64 array node in the computation graph."""

    __slots__ = ("data", "grad", "name")

    def __init__(self, data, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Var(shape={self.data.shape}, name={self.name!r})"


class Tape:
    """Ordered op records; one backward pass consumes the tape."""

    def __init__(self):
        self.records: list[tuple[Var, tuple[Var, ...], callable]] = []
        self.consumed = False

    def push(self, out: Var, inputs: tuple[Var, ...], vjp):
        self.records.append((out, inputs, vjp))

    def __len__(self):
        return len(self.records)


def _accum(var: Var, g: np.ndarray):
    if g is None:
        return
    if g.shape != var.data.shape:  # undo numpy broadcasting
        extra = g.ndim - var.data.ndim
        if extra > 0:
            g = g.sum(axis=tuple(range(extra)))
        keep = tuple(i for i, n in enumerate(var.data.shape) if n == 1 and g.shape[i] != 1)
        if keep:
            g = g.sum(axis=keep, keepdims=True)
    var.grad = g if var.grad is None else var.grad + g


def backward(tape: Tape, loss: Var, params=None) -> dict[Var, np.ndarray]:
    """Propagate d(loss)/d(everything) through the tape, newest record first.

    Returns a mapping for ``params`` (every listed parameter gets a slot,
    zero-filled if the loss does not depend on it) and leaves ``grad`` set on
    all touched Vars.
    """
    if tape.consumed:
        raise TapeError("tape already consumed by a previous backward pass")
    if loss.data.size != 1:
        raise TapeError(f"loss must be scalar, got shape {loss.data.shape}")
    tape.consumed = True
    loss.grad = np.ones_like(loss.data)
    for out, inputs, vjp in reversed(tape.records):
        if out.grad is None:
            continue
        for var, g in zip(inputs, vjp(out.grad)):
            _accum(var, g)
    grads: dict[Var, np.ndarray] = {}
    for p in params or ():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        grads[p] = p.grad
    return grads


# ---------------------------------------------------------------------------
# ops: each computes forward and, when a tape is supplied, records its vjp


def _push(tape, out, inputs, vjp):
    if tape is not None:
        tape.push(out, inputs, vjp)
    return out


def add(tape, a: Var, b: Var) -> Var:
    out = Var(a.data + b.data)
    return _push(tape, out, (a, b), lambda g: (g, g))


def sub(tape, a: Var, b: Var) -> Var:
    out = Var(a.data - b.data)
    return _push(tape, out, (a, b), lambda g: (g, -g))


def mul(tape, a: Var, b: Var) -> Var:
    out = Var(a.data * b.data)
    return _push(tape, out, (a, b), lambda g: (g * b.data, g * a.data))


def scale(tape, a: Var, c: float) -> Var:
    out = Var(a.data * c)
    return _push(tape, out, (a,), lambda g: (g * c,))


def shift(tape, a: Var, c: float) -> Var:
    out = Var(a.data + c)
    return _push(tape, out, (a,), lambda g: (g,))


def reshape(tape, a: Var, shape) -> Var:
    old = a.data.shape
    out = Var(a.data.reshape(shape))
    return _push(tape, out, (a,), lambda g: (g.reshape(old),))


def transpose(tape, a: Var, axes) -> Var:
    inv = np.argsort(axes)
    out = Var(a.data.transpose(axes))
    return _push(tape, out, (a,), lambda g: (g.transpose(inv),))


def matmul(tape, a: Var, b: Var) -> Var:
    out = Var(a.data @ b.data)

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return _push(tape, out, (a, b), vjp)


def mean_axes(tape, a: Var, axes: tuple[int, ...]) -> Var:
    n = int(np.prod([a.data.shape[i] for i in axes]))
    out = Var(a.data.mean(axis=axes))

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, axes), a.data.shape) / n,)

    return _push(tape, out, (a,), vjp)


def sum_axes(tape, a: Var, axes: tuple[int, ...], keepdims: bool = True) -> Var:
    out = Var(a.data.sum(axis=axes, keepdims=keepdims))

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.data.shape),)

    return _push(tape, out, (a,), vjp)


def spike(tape, x: Var, window: float, smooth: bool = False) -> Var:
    """Fire where x >= 0. Backward is the rectangular window 1/(2w) on
    |x| < w. In smooth mode the forward is the clamped-linear relaxation
    whose true derivative equals that window."""
    if smooth:
        out = Var(np.clip(x.data / (2.0 * window) + 0.5, 0.0, 1.0))
    else:
        out = Var((x.data >= 0).astype(np.float64))
    mask = (np.abs(x.data) < window) / (2.0 * window)
    return _push(tape, out, (x,), lambda g: (g * mask,))


def conv2d(tape, x: Var, w: Var, b: Var | None, stride: int, padding: int,
           groups: int = 1) -> Var:
    """Batched (B, C, H, W) convolution via im2col; exact adjoints."""
    bsz, c, h, wd = x.data.shape
    c_out, c_in_g, k, _ = w.data.shape
    ho = (h + 2 * padding - k) // stride + 1
    wo = (wd + 2 * padding - k) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((bsz, c, k, k, ho, wo), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    og = c_out // groups
    out = np.empty((bsz, c_out, ho, wo), dtype=np.float64)
    for g_i in range(groups):
        cg = cols[:, g_i * c_in_g:(g_i + 1) * c_in_g].reshape(bsz, c_in_g * k * k, ho * wo)
        wg = w.data[g_i * og:(g_i + 1) * og].reshape(og, c_in_g * k * k)
        out[:, g_i * og:(g_i + 1) * og] = (wg @ cg).reshape(bsz, og, ho, wo)
    if b is not None:
        out += b.data[None, :, None, None]
    ov = Var(out)

    def vjp(g):
        gw = np.empty_like(w.data)
        gcols = np.empty_like(cols)
        for gi in range(groups):
            cg = cols[:, gi * c_in_g:(gi + 1) * c_in_g].reshape(bsz, c_in_g * k * k, ho * wo)
            gg = g[:, gi * og:(gi + 1) * og].reshape(bsz, og, ho * wo)
            gw[gi * og:(gi + 1) * og] = np.einsum("bol,bil->oi", gg, cg).reshape(og, c_in_g, k, k)
            wg = w.data[gi * og:(gi + 1) * og].reshape(og, c_in_g * k * k)
            gcols[:, gi * c_in_g:(gi + 1) * c_in_g] = (
                wg.T @ gg).reshape(bsz, c_in_g, k, k, ho, wo)
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, :, i, j]
        gx = gxp[:, :, padding:padding + h, padding:padding + wd] if padding else gxp
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        return (gx, gw, gb) if b is not None else (gx, gw)

    return _push(tape, ov, (x, w, b) if b is not None else (x, w), vjp)


def batch_norm(tape, x: Var, gamma: Var, beta: Var, eps: float = 1e-5) -> Var:
    """Per-channel normalization over (B, H, W) using batch statistics."""
    axes = (0, 2, 3)
    m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
    mu = x.data.mean(axis=axes, keepdims=True)
    var = x.data.var(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    gm = gamma.data[None, :, None, None]
    out = Var(gm * xhat + beta.data[None, :, None, None])

    def vjp(g):
        gbeta = g.sum(axis=axes)
        ggamma = (g * xhat).sum(axis=axes)
        gxhat = g * gm
        gx = (inv / m) * (m * gxhat - gxhat.sum(axis=axes, keepdims=True)
                          - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True))
        return gx, ggamma, gbeta

    return _push(tape, out, (x, gamma, beta), vjp)


def normalize_affine(tape, x: Var, gamma: Var, beta: Var,
                     mu: np.ndarray, var: np.ndarray, eps: float = 1e-5) -> Var:
    """Affine normalization with frozen statistics (finetune / inference)."""
    inv = 1.0 / np.sqrt(var + eps)
    xhat_scale = (gamma.data * inv)[None, :, None, None]
    out = Var((x.data - mu[None, :, None, None]) * xhat_scale + beta.data[None, :, None, None])

    def vjp(g):
        xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
        return (g * xhat_scale,
                (g * xhat).sum(axis=(0, 2, 3)),
                g.sum(axis=(0, 2, 3)))

    return _push(tape, out, (x, gamma, beta), vjp)


def cross_entropy(tape, logits: Var, labels: np.ndarray, smoothing: float = 0.0) -> Var:
    """Mean label-smoothed cross-entropy over a (B, K) logit batch."""
    z = logits.data
    bsz, k = z.shape
    zmax = z.max(axis=1, keepdims=True)
    logsumexp = zmax + np.log(np.exp(z - zmax).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    q = np.full((bsz, k), smoothing / k)
    q[np.arange(bsz), labels] += 1.0 - smoothing
    out = Var(-(q * logp).sum() / bsz)

    def vjp(g):
        p = np.exp(logp)
        return (g * (p - q) / bsz,)

    return _push(tape, out, (logits,), vjp)
