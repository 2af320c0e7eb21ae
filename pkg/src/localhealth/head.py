"""The tiny convolutional regression head with optional deprivation-index fusion.

Architecture: a single-channel 1-D convolution (kernel 16, stride 4, relu)
over the aggregated embedding, a fully connected layer to one scalar, and —
when fusion is on — a final linear layer over (scalar, ADI/100).  Gradients
are analytic; there is no autograd anywhere in the package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KERNEL = 16
STRIDE = 4


def conv_output_len(dim: int) -> int:
    if dim < KERNEL:
        raise ValueError(f"dim {dim} smaller than kernel {KERNEL}")
    return (dim - KERNEL) // STRIDE + 1


def param_count(dim: int) -> int:
    """Total trainable parameters: conv (16+1) + fc (L+1) + fusion (2+1)."""
    return KERNEL + 1 + conv_output_len(dim) + 1 + 2 + 1


def _window_index(dim: int) -> np.ndarray:
    length = conv_output_len(dim)
    return np.arange(length)[:, None] * STRIDE + np.arange(KERNEL)[None, :]


@dataclass
class HeadParams:
    conv_w: np.ndarray  # (16,)
    conv_b: float
    fc_w: np.ndarray  # (L,)
    fc_b: float
    fuse_w: np.ndarray  # (2,)
    fuse_b: float
    dim: int

    def __post_init__(self) -> None:
        if self.conv_w.shape != (KERNEL,):
            raise ValueError(f"conv_w must be ({KERNEL},), got {self.conv_w.shape}")
        if self.fc_w.shape != (conv_output_len(self.dim),):
            raise ValueError(
                f"fc_w must be ({conv_output_len(self.dim)},), got {self.fc_w.shape}"
            )
        if self.fuse_w.shape != (2,):
            raise ValueError(f"fuse_w must be (2,), got {self.fuse_w.shape}")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.conv_w, [self.conv_b], self.fc_w, [self.fc_b], self.fuse_w, [self.fuse_b],
        ])

    @classmethod
    def from_vector(cls, vec: np.ndarray, dim: int) -> "HeadParams":
        length = conv_output_len(dim)
        if vec.shape != (param_count(dim),):
            raise ValueError(f"expected {param_count(dim)} params for dim {dim}, got {vec.shape}")
        i = 0
        conv_w = vec[i : i + KERNEL].copy(); i += KERNEL
        conv_b = float(vec[i]); i += 1
        fc_w = vec[i : i + length].copy(); i += length
        fc_b = float(vec[i]); i += 1
        fuse_w = vec[i : i + 2].copy(); i += 2
        fuse_b = float(vec[i])
        return cls(conv_w, conv_b, fc_w, fc_b, fuse_w, fuse_b, dim)

    def n_params(self) -> int:
        """Live enumeration of every stored scalar."""
        return self.conv_w.size + 1 + self.fc_w.size + 1 + self.fuse_w.size + 1


def init_params(dim: int, rng: np.random.Generator) -> HeadParams:
    """Weights per-layer uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.

    The fusion layer starts as a pass-through on the text scalar (weights
    (1, 0)): a randomly signed fusion gate can silence the conv/fc gradient
    for a large share of seeds, and a random conv bias larger than the
    windowed dot products leaves every relu dead from the first step.
    fc_w is oriented to a non-negative sum so the early mean-fitting
    residual pushes the shared relu gate toward the active side; with the
    opposite orientation the gate collapses and cannot recover.
    """
    length = conv_output_len(dim)
    conv_bound = 1.0 / np.sqrt(KERNEL)
    fc_bound = 1.0 / np.sqrt(length)
    conv_w = rng.uniform(-conv_bound, conv_bound, KERNEL)
    fc_w = rng.uniform(-fc_bound, fc_bound, length)
    if fc_w.sum() < 0:
        fc_w = -fc_w
    return HeadParams(
        conv_w=conv_w,
        conv_b=0.0,
        fc_w=fc_w,
        fc_b=0.0,
        fuse_w=np.array([1.0, 0.0]),
        fuse_b=0.0,
        dim=dim,
    )


def head_forward(
    v_bar: np.ndarray, adi_norm: float, params: HeadParams, use_adi: bool = True
) -> float:
    """Predicted outcome for one aggregated embedding."""
    v_bar = np.asarray(v_bar, dtype=float)
    if v_bar.shape != (params.dim,):
        raise ValueError(f"v_bar must be ({params.dim},), got {v_bar.shape}")
    if use_adi and not 0.0 < adi_norm <= 1.0:
        raise ValueError(f"adi_norm {adi_norm} outside (0, 1]")
    windows = v_bar[_window_index(params.dim)]
    pre = windows @ params.conv_w + params.conv_b
    h = np.maximum(pre, 0.0)
    s = float(params.fc_w @ h + params.fc_b)
    if not use_adi:
        return s
    return float(params.fuse_w[0] * s + params.fuse_w[1] * adi_norm + params.fuse_b)


def head_backward(
    v_bar: np.ndarray,
    adi_norm: float,
    params: HeadParams,
    grad_out: float,
    use_adi: bool = True,
) -> HeadParams:
    """Analytic d(grad_out * ghat)/d(theta) for every parameter, as a HeadParams of gradients."""
    v_bar = np.asarray(v_bar, dtype=float)
    if v_bar.shape != (params.dim,):
        raise ValueError(f"v_bar must be ({params.dim},), got {v_bar.shape}")
    windows = v_bar[_window_index(params.dim)]
    pre = windows @ params.conv_w + params.conv_b
    h = np.maximum(pre, 0.0)
    s = float(params.fc_w @ h + params.fc_b)

    if use_adi:
        d_fuse_w = grad_out * np.array([s, adi_norm])
        d_fuse_b = grad_out
        d_s = grad_out * params.fuse_w[0]
    else:
        d_fuse_w = np.zeros(2)
        d_fuse_b = 0.0
        d_s = grad_out

    d_fc_w = d_s * h
    d_fc_b = d_s
    d_h = d_s * params.fc_w
    d_pre = d_h * (pre > 0.0)
    d_conv_w = d_pre @ windows
    d_conv_b = float(d_pre.sum())
    return HeadParams(
        conv_w=d_conv_w, conv_b=d_conv_b, fc_w=d_fc_w, fc_b=float(d_fc_b),
        fuse_w=d_fuse_w, fuse_b=float(d_fuse_b), dim=params.dim,
    )


def forward_batch(
    v_bars: np.ndarray, adi_norms: np.ndarray | None, params: HeadParams, use_adi: bool
) -> tuple[np.ndarray, tuple]:
    """Vectorized forward over (B, dim) inputs; returns predictions and a backward cache."""
    windows = v_bars[:, _window_index(params.dim)]  # (B, L, 16)
    pre = windows @ params.conv_w + params.conv_b  # (B, L)
    h = np.maximum(pre, 0.0)
    s = h @ params.fc_w + params.fc_b  # (B,)
    if use_adi:
        ghat = params.fuse_w[0] * s + params.fuse_w[1] * adi_norms + params.fuse_b
    else:
        ghat = s
    return ghat, (windows, pre, h, s)


def backward_batch(
    cache: tuple,
    adi_norms: np.ndarray | None,
    params: HeadParams,
    grad_out: np.ndarray,
    use_adi: bool,
) -> np.ndarray:
    """Summed parameter gradient over the batch, as a flat vector matching to_vector()."""
    windows, pre, h, s = cache
    if use_adi:
        d_fuse_w = np.array([grad_out @ s, grad_out @ adi_norms])
        d_fuse_b = float(grad_out.sum())
        d_s = grad_out * params.fuse_w[0]
    else:
        d_fuse_w = np.zeros(2)
        d_fuse_b = 0.0
        d_s = grad_out
    d_fc_w = d_s @ h
    d_fc_b = float(d_s.sum())
    d_pre = (d_s[:, None] * params.fc_w[None, :]) * (pre > 0.0)
    d_conv_w = np.einsum("bl,blk->k", d_pre, windows)
    d_conv_b = float(d_pre.sum())
    return np.concatenate([d_conv_w, [d_conv_b], d_fc_w, [d_fc_b], d_fuse_w, [d_fuse_b]])
