"""Single-stream convolutional encoder with hand-written forward/backward.

One set of parameters maps any (3, S, S) input tensor, face or spectrogram
alike, to a fixed-dimension embedding: repeated [3x3 conv, stride 2, pad 1,
relu] stages, global average pooling, and a final fully-connected layer.
Everything is float64 so finite-difference gradient checks are meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .preprocess import InputTensor

KERNEL = 3
STRIDE = 2
PAD = 1


@dataclass
class EncoderConfig:
    input_size: int = 32
    channels_per_stage: tuple = (16, 32, 64)
    embed_dim: int = 128
    activation: str = "relu"

    def __post_init__(self):
        self.channels_per_stage = tuple(int(c) for c in self.channels_per_stage)
        if self.embed_dim < 2:
            raise ValueError("embed_dim must be >= 2")
        if not self.channels_per_stage:
            raise ValueError("need at least one conv stage")
        if self.activation != "relu":
            raise ValueError("only relu is supported")

    def stage_sizes(self) -> list:
        """Spatial side length after each conv stage."""
        sizes = []
        s = self.input_size
        for _ in self.channels_per_stage:
            s = (s + 2 * PAD - KERNEL) // STRIDE + 1
            sizes.append(s)
        return sizes


@dataclass
class EncoderParams:
    """Per-layer weight/bias arrays; also used as the gradient container.

    Declaration order (conv w/b per stage, then fc w/b) is the canonical
    order for flattening and for the checkpoint format.
    """

    conv_w: list = field(default_factory=list)   # each (C_out, C_in, 3, 3)
    conv_b: list = field(default_factory=list)   # each (C_out,)
    fc_w: np.ndarray = None                      # (embed_dim, C_last)
    fc_b: np.ndarray = None                      # (embed_dim,)

    def arrays(self) -> list:
        out = []
        for w, b in zip(self.conv_w, self.conv_b):
            out.extend([w, b])
        out.extend([self.fc_w, self.fc_b])
        return out

    @classmethod
    def from_arrays(cls, arrays: list) -> "EncoderParams":
        conv_w = [a for a in arrays[:-2:2]]
        conv_b = [a for a in arrays[1:-2:2]]
        return cls(conv_w=conv_w, conv_b=conv_b, fc_w=arrays[-2], fc_b=arrays[-1])

    @property
    def param_count(self) -> int:
        return sum(a.size for a in self.arrays())

    def copy(self) -> "EncoderParams":
        return EncoderParams.from_arrays([a.copy() for a in self.arrays()])


EncoderGrads = EncoderParams


@dataclass
class ForwardTrace:
    """Intermediate activations retained for the backward pass."""

    x: np.ndarray              # (B, 3, S, S)
    patches: list              # per stage: (B*Ho*Wo, C_in*9)
    pre_act: list              # per stage: (B, C_out, Ho, Wo)
    act: list                  # per stage: relu(pre_act)
    pooled: np.ndarray         # (B, C_last)


def init_params(cfg: EncoderConfig, seed: int) -> EncoderParams:
    """Glorot-uniform weights, zero biases, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    params = EncoderParams()
    c_in = 3
    for c_out in cfg.channels_per_stage:
        fan_in = c_in * KERNEL * KERNEL
        fan_out = c_out * KERNEL * KERNEL
        a = np.sqrt(6.0 / (fan_in + fan_out))
        params.conv_w.append(rng.uniform(-a, a, size=(c_out, c_in, KERNEL, KERNEL)))
        params.conv_b.append(np.zeros(c_out))
        c_in = c_out
    a = np.sqrt(6.0 / (c_in + cfg.embed_dim))
    params.fc_w = rng.uniform(-a, a, size=(cfg.embed_dim, c_in))
    params.fc_b = np.zeros(cfg.embed_dim)
    return params


def _im2col(x: np.ndarray) -> tuple:
    """Extract strided 3x3 patches of a padded batch.

    Returns the patch matrix (B*Ho*Wo, C*9) and the output spatial size.
    """
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (PAD, PAD), (PAD, PAD)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (KERNEL, KERNEL), axis=(2, 3))
    win = win[:, :, ::STRIDE, ::STRIDE, :, :]          # (B, C, Ho, Wo, 3, 3)
    ho, wo = win.shape[2], win.shape[3]
    patches = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * KERNEL * KERNEL)
    return np.ascontiguousarray(patches), ho, wo


def _col2im(dpatches: np.ndarray, b: int, c: int, h: int, w: int,
            ho: int, wo: int) -> np.ndarray:
    """Scatter patch gradients back to the (unpadded) input."""
    dxp = np.zeros((b, c, h + 2 * PAD, w + 2 * PAD))
    dp = dpatches.reshape(b, ho, wo, c, KERNEL, KERNEL).transpose(0, 3, 1, 2, 4, 5)
    for ki in range(KERNEL):
        for kj in range(KERNEL):
            dxp[:, :, ki:ki + STRIDE * ho:STRIDE, kj:kj + STRIDE * wo:STRIDE] \
                += dp[:, :, :, :, ki, kj]
    return dxp[:, :, PAD:PAD + h, PAD:PAD + w]


def forward_batch(params: EncoderParams, x: np.ndarray) -> tuple:
    """Encode a batch (B, 3, S, S) -> embeddings (B, D) plus the trace."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[1] != 3:
        raise ValueError("expected input of shape (B, 3, S, S)")
    trace = ForwardTrace(x=x, patches=[], pre_act=[], act=[], pooled=None)
    a = x
    for w, bvec in zip(params.conv_w, params.conv_b):
        c_out = w.shape[0]
        patches, ho, wo = _im2col(a)
        z = patches @ w.reshape(c_out, -1).T + bvec
        z = z.reshape(a.shape[0], ho, wo, c_out).transpose(0, 3, 1, 2)
        trace.patches.append(patches)
        trace.pre_act.append(z)
        a = np.maximum(z, 0.0)
        trace.act.append(a)
    pooled = a.mean(axis=(2, 3))
    trace.pooled = pooled
    emb = pooled @ params.fc_w.T + params.fc_b
    return emb, trace


def backward_batch(params: EncoderParams, trace: ForwardTrace,
                   grad_out: np.ndarray) -> tuple:
    """Gradients of sum_i(grad_out_i . f_i) w.r.t. parameters and the input."""
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != (trace.x.shape[0], params.fc_w.shape[0]):
        raise ValueError("grad_out shape does not match the trace")
    grads = EncoderParams(
        conv_w=[np.zeros_like(w) for w in params.conv_w],
        conv_b=[np.zeros_like(b) for b in params.conv_b],
        fc_w=g.T @ trace.pooled,
        fc_b=g.sum(axis=0),
    )
    da = (g @ params.fc_w)[:, :, None, None]
    last = trace.act[-1]
    da = np.broadcast_to(da / (last.shape[2] * last.shape[3]), last.shape)
    for s in range(len(params.conv_w) - 1, -1, -1):
        z = trace.pre_act[s]
        dz = da * (z > 0)
        b, c_out, ho, wo = dz.shape
        dz_mat = dz.transpose(0, 2, 3, 1).reshape(-1, c_out)
        grads.conv_w[s] = (dz_mat.T @ trace.patches[s]).reshape(params.conv_w[s].shape)
        grads.conv_b[s] = dz_mat.sum(axis=0)
        prev = trace.x if s == 0 else trace.act[s - 1]
        dpatches = dz_mat @ params.conv_w[s].reshape(c_out, -1)
        da = _col2im(dpatches, b, prev.shape[1], prev.shape[2], prev.shape[3], ho, wo)
    return grads, da


def forward(params: EncoderParams, x: InputTensor) -> tuple:
    """Single-sample wrapper around the batched forward pass."""
    values = x.values if isinstance(x, InputTensor) else np.asarray(x)
    emb, trace = forward_batch(params, values[None])
    return emb[0], trace


def backward(params: EncoderParams, trace: ForwardTrace,
             grad_out: np.ndarray) -> tuple:
    """Single-sample wrapper; ``grad_out`` is a (D,) vector."""
    g = np.asarray(grad_out, dtype=np.float64)
    if g.ndim == 1:
        g = g[None]
    grads, dx = backward_batch(params, trace, g)
    return grads, dx[0] if trace.x.shape[0] == 1 else dx
