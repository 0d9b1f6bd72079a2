"""Deterministic forward pass of the multispectral strip fusion block.

Feature tensors are numpy arrays shaped (F, C, H, W): frames, channels,
height, width. Convolutions follow the deep-learning convention
(cross-correlation) with zero "same" padding, so every block preserves its
input shape. Weights are plain named arrays bundled in ``FusionWeights``;
nothing here trains, and two runs with the same inputs and weights produce
bit-identical outputs.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .containers import WEIGHTS_MAGIC, load_tensors, save_tensors

LAYER_NORM_EPS = 1e-5
GRN_EPS = 1e-6


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact Gaussian error linear unit."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along ``axis``."""
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(
    x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = LAYER_NORM_EPS
) -> np.ndarray:
    """Layer normalization over the last axis."""
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * gamma + beta


def _as_features(x: np.ndarray, name: str = "input") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"{name}: expected a (F, C, H, W) tensor, got shape {x.shape}")
    return x


def _check_odd(kh: int, kw: int, name: str) -> None:
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"{name}: kernel sides must be odd, got {(kh, kw)}")


def strip_conv(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Depthwise 2-D correlation with zero "same" padding.

    ``kernel`` is either (kh, kw), shared across channels, or (C, kh, kw)
    with one kernel per channel. Strip-shaped kernels such as 1x5 or 5x1
    mix along a single spatial axis.
    """
    x = _as_features(x)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim not in (2, 3):
        raise ValueError(f"strip kernel: expected rank 2 or 3, got shape {kernel.shape}")
    kh, kw = kernel.shape[-2:]
    _check_odd(kh, kw, "strip kernel")
    if kernel.ndim == 3 and kernel.shape[0] != x.shape[1]:
        raise ValueError(
            f"strip kernel: {kernel.shape[0]} channel kernels for "
            f"{x.shape[1]} input channels"
        )
    padded = np.pad(x, ((0, 0), (0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    if kernel.ndim == 2:
        return np.einsum("fchwuv,uv->fchw", windows, kernel)
    return np.einsum("fchwuv,cuv->fchw", windows, kernel)


def pointwise_affine(
    x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None
) -> np.ndarray:
    """1x1 convolution over channels: out[f, o] = sum_c w[o, c] x[f, c] + b[o]."""
    x = _as_features(x)
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise ValueError(
            f"pointwise weight: expected (C_out, {x.shape[1]}), got {weight.shape}"
        )
    out = np.einsum("fchw,oc->fohw", x, weight)
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (weight.shape[0],):
            raise ValueError(
                f"pointwise bias: expected ({weight.shape[0]},), got {bias.shape}"
            )
        out += bias[:, None, None]
    return out


def conv2d_same(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray | None = None,
    groups: int = 1,
) -> np.ndarray:
    """Grouped 2-D correlation with zero "same" padding.

    ``weight`` has shape (C_out, C_in / groups, kh, kw); groups == 1 is a
    full convolution, groups == C_in with unit fan-in is depthwise.
    """
    x = _as_features(x)
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim != 4:
        raise ValueError(f"conv weight: expected rank 4, got shape {weight.shape}")
    frames, c_in, height, width = x.shape
    c_out, fan_in, kh, kw = weight.shape
    _check_odd(kh, kw, "conv weight")
    if groups < 1 or c_in % groups or c_out % groups:
        raise ValueError(f"conv weight: {groups} groups do not divide {c_in}->{c_out}")
    if fan_in != c_in // groups:
        raise ValueError(
            f"conv weight: fan-in {fan_in} does not match {c_in} channels in "
            f"{groups} groups"
        )
    padded = np.pad(x, ((0, 0), (0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    out = np.empty((frames, c_out, height, width), dtype=np.float64)
    out_per_group = c_out // groups
    for g in range(groups):
        xg = windows[:, g * fan_in : (g + 1) * fan_in]
        wg = weight[g * out_per_group : (g + 1) * out_per_group]
        out[:, g * out_per_group : (g + 1) * out_per_group] = np.einsum(
            "fchwuv,ocuv->fohw", xg, wg
        )
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (c_out,):
            raise ValueError(f"conv bias: expected ({c_out},), got {bias.shape}")
        out += bias[:, None, None]
    return out


def _conv1d_frames(v: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    # v: (F, C_in); weight: (C_out, C_in, k); zero "same" padding over frames.
    k = weight.shape[2]
    if k % 2 == 0:
        raise ValueError(f"frame conv: kernel size must be odd, got {k}")
    padded = np.pad(v, ((k // 2, k // 2), (0, 0)))
    windows = sliding_window_view(padded, k, axis=0)
    return np.einsum("fcu,ocu->fo", windows, weight) + bias


def dws_conv(
    x: np.ndarray,
    depth_kernel: np.ndarray,
    point_weight: np.ndarray,
    point_bias: np.ndarray | None = None,
) -> np.ndarray:
    """Depthwise separable convolution: per-channel spatial correlation
    followed by a 1x1 pointwise mix over channels."""
    x = _as_features(x)
    depth_kernel = np.asarray(depth_kernel, dtype=np.float64)
    if depth_kernel.ndim != 3 or depth_kernel.shape[0] != x.shape[1]:
        raise ValueError(
            f"depthwise kernel: expected ({x.shape[1]}, kh, kw), "
            f"got {depth_kernel.shape}"
        )
    return pointwise_affine(strip_conv(x, depth_kernel), point_weight, point_bias)


def interleave_rows(vis: np.ndarray, ir: np.ndarray) -> np.ndarray:
    """Stack two equally shaped tensors row by row: output row 2i is the
    visible row i, row 2i+1 the thermal row i."""
    vis = _as_features(vis, "vis")
    ir = _as_features(ir, "ir")
    if vis.shape != ir.shape:
        raise ValueError(f"shape mismatch: vis {vis.shape} vs ir {ir.shape}")
    f, c, h, w = vis.shape
    out = np.empty((f, c, 2 * h, w), dtype=np.float64)
    out[:, :, 0::2] = vis
    out[:, :, 1::2] = ir
    return out


def deinterleave_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact inverse of :func:`interleave_rows`."""
    x = _as_features(x)
    if x.shape[2] % 2:
        raise ValueError(f"cannot deinterleave odd row count {x.shape[2]}")
    return x[:, :, 0::2].copy(), x[:, :, 1::2].copy()


def cascade_strip_mix(
    x: np.ndarray, row_kernels: np.ndarray, col_kernels: np.ndarray
) -> np.ndarray:
    """Long-range mixing by a cascade of per-group strip correlations.

    Channels split into equal groups, one per kernel pair; group g sees its
    slice plus the previous group's output (group 0 has no addend), then a
    row strip pass followed by a column strip pass. Groups are concatenated
    back in order.
    """
    x = _as_features(x)
    row_kernels = np.asarray(row_kernels, dtype=np.float64)
    col_kernels = np.asarray(col_kernels, dtype=np.float64)
    if row_kernels.ndim != 3 or col_kernels.ndim != 3:
        raise ValueError("cascade kernels: expected (groups, kh, kw) stacks")
    n_groups = row_kernels.shape[0]
    if col_kernels.shape[0] != n_groups:
        raise ValueError(
            f"cascade kernels: {n_groups} row kernels vs "
            f"{col_kernels.shape[0]} column kernels"
        )
    channels = x.shape[1]
    if n_groups < 1 or channels % n_groups:
        raise ValueError(
            f"cascade mix: {channels} channels not divisible by {n_groups} groups"
        )
    per_group = channels // n_groups
    outputs: list[np.ndarray] = []
    previous: np.ndarray | None = None
    for g in range(n_groups):
        xg = x[:, g * per_group : (g + 1) * per_group]
        if previous is not None:
            xg = xg + previous
        yg = strip_conv(strip_conv(xg, row_kernels[g]), col_kernels[g])
        outputs.append(yg)
        previous = yg
    return np.concatenate(outputs, axis=1)


def gated_strip_mix(
    x: np.ndarray,
    height_kernel: np.ndarray,
    width_kernel: np.ndarray,
    gate_w1: np.ndarray,
    gate_b1: np.ndarray,
    gate_w2: np.ndarray,
    gate_b2: np.ndarray,
    gate_proj_w: np.ndarray,
    gate_proj_b: np.ndarray,
) -> np.ndarray:
    """Local strip mixing with a three-way softmax gate per frame and channel.

    r and c are strip correlations of x along the two axes. A pointwise MLP
    over channels of (r + c), average pooled over space and mapped to three
    logits per channel, gates the convex combination g1*r + g2*c + g3*x.
    """
    x = _as_features(x)
    r = strip_conv(x, height_kernel)
    c = strip_conv(x, width_kernel)
    hidden = gelu(pointwise_affine(r + c, gate_w1, gate_b1))
    mixed = pointwise_affine(hidden, gate_w2, gate_b2)
    pooled = mixed.mean(axis=(2, 3))  # (F, C)
    gate_proj_w = np.asarray(gate_proj_w, dtype=np.float64)
    gate_proj_b = np.asarray(gate_proj_b, dtype=np.float64)
    if gate_proj_w.shape != (3,) or gate_proj_b.shape != (3,):
        raise ValueError("gate projection: expected three logit weights and biases")
    logits = pooled[:, :, None] * gate_proj_w + gate_proj_b  # (F, C, 3)
    gates = softmax(logits, axis=-1)
    g1 = gates[:, :, 0][:, :, None, None]
    g2 = gates[:, :, 1][:, :, None, None]
    g3 = gates[:, :, 2][:, :, None, None]
    return g1 * r + g2 * c + g3 * x


def global_response_norm(
    x: np.ndarray, gamma: np.ndarray, beta: np.ndarray
) -> np.ndarray:
    """Global response normalization.

    Per-channel L2 norm over spatial positions, divided by the cross-channel
    mean of those norms, then y = gamma * (x * n) + beta + x. A small
    epsilon in the division guards the all-zero signal.
    """
    x = _as_features(x)
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    norms = np.sqrt((x * x).sum(axis=(2, 3), keepdims=True))  # (F, C, 1, 1)
    scaled = norms / (norms.mean(axis=1, keepdims=True) + GRN_EPS)
    return gamma[:, None, None] * (x * scaled) + beta[:, None, None] + x


def channel_mix(
    x: np.ndarray,
    conv_weight: np.ndarray,
    conv_bias: np.ndarray,
    grn_gamma: np.ndarray,
    grn_beta: np.ndarray,
    mlp_w1: np.ndarray,
    mlp_b1: np.ndarray,
    mlp_w2: np.ndarray,
    mlp_b2: np.ndarray,
    groups: int | None = None,
) -> np.ndarray:
    """Channel interaction block with a residual connection.

    Grouped large-kernel correlation, global response normalization, then a
    two-layer pointwise MLP over channels with GELU activation; the block
    input is added back at the end. ``groups`` defaults to the channel
    count (depthwise).
    """
    x = _as_features(x)
    if groups is None:
        groups = x.shape[1]
    y = conv2d_same(x, conv_weight, conv_bias, groups=groups)
    y = global_response_norm(y, grn_gamma, grn_beta)
    y = pointwise_affine(gelu(pointwise_affine(y, mlp_w1, mlp_b1)), mlp_w2, mlp_b2)
    return x + y


def split_patches(x: np.ndarray, patch_size: int) -> np.ndarray:
    """Cut (F, C, H, W) into (F, P, C, S) patches, row-major, S = patch_size**2."""
    x = _as_features(x)
    f, c, h, w = x.shape
    s = int(patch_size)
    if s < 1 or h % s or w % s:
        raise ValueError(f"patch size {s} does not divide spatial dims {(h, w)}")
    tiles = x.reshape(f, c, h // s, s, w // s, s)
    tiles = tiles.transpose(0, 2, 4, 1, 3, 5)  # (F, H/s, W/s, C, s, s)
    return tiles.reshape(f, (h // s) * (w // s), c, s * s)


def merge_patches(x: np.ndarray, patch_size: int, height: int, width: int) -> np.ndarray:
    """Exact inverse of :func:`split_patches`."""
    f, p, c, ss = x.shape
    s = int(patch_size)
    if ss != s * s or p != (height // s) * (width // s):
        raise ValueError(f"patch grid mismatch: {x.shape} for {(height, width)} at s={s}")
    tiles = x.reshape(f, height // s, width // s, c, s, s)
    tiles = tiles.transpose(0, 3, 1, 4, 2, 5)
    return tiles.reshape(f, c, height, width)


def temporal_fuse(
    vis: np.ndarray,
    ir: np.ndarray,
    ln_gamma: np.ndarray,
    ln_beta: np.ndarray,
    mlp2_weight: np.ndarray,
    mlp2_bias: np.ndarray,
    patch_size: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Cross-time mixing of patched features with residual connections.

    Both modalities are cut into patches, concatenated along the patch
    feature axis (visible first), layer normalized over that axis,
    rearranged to (C, 2S, F*P), mixed by a single affine map over the merged
    frame/patch axis, inverted back, split per modality and added to the
    inputs.
    """
    vis = _as_features(vis, "vis")
    ir = _as_features(ir, "ir")
    if vis.shape != ir.shape:
        raise ValueError(f"shape mismatch: vis {vis.shape} vs ir {ir.shape}")
    f, c, h, w = vis.shape
    s = int(patch_size)
    pv = split_patches(vis, s)
    pi = split_patches(ir, s)
    z = np.concatenate([pv, pi], axis=-1)  # (F, P, C, 2S)
    z = layer_norm(z, np.asarray(ln_gamma, dtype=np.float64), np.asarray(ln_beta, dtype=np.float64))
    p = z.shape[1]
    two_s = z.shape[3]
    mlp2_weight = np.asarray(mlp2_weight, dtype=np.float64)
    mlp2_bias = np.asarray(mlp2_bias, dtype=np.float64)
    if mlp2_weight.shape != (f * p, f * p):
        raise ValueError(
            f"mlp2_weight: expected ({f * p}, {f * p}) for F={f}, P={p}, "
            f"got {mlp2_weight.shape}"
        )
    merged = z.transpose(2, 3, 0, 1).reshape(c, two_s, f * p)  # (C, 2S, FP)
    merged = merged @ mlp2_weight.T + mlp2_bias
    z = merged.reshape(c, two_s, f, p).transpose(2, 3, 0, 1)
    dv = merge_patches(z[..., : s * s], s, h, w)
    di = merge_patches(z[..., s * s :], s, h, w)
    return vis + dv, ir + di


def temporal_adaptive_conv(
    x: np.ndarray,
    base_weight: np.ndarray,
    base_bias: np.ndarray,
    conv1_w: np.ndarray,
    conv1_b: np.ndarray,
    conv2_w: np.ndarray,
    conv2_b: np.ndarray,
    fc_w: np.ndarray,
    fc_b: np.ndarray,
) -> np.ndarray:
    """Per-frame convolution with temporally calibrated kernels.

    A frame descriptor (global average pool over space) passes through two
    1-D correlations along the frame axis with a GELU in between, then a
    linear projection to one factor per output channel. The factors offset
    1.0, so zeroed calibration weights reproduce the plain base convolution;
    frame t is convolved with the base kernel scaled per output channel.
    """
    x = _as_features(x)
    base_weight = np.asarray(base_weight, dtype=np.float64)
    if base_weight.ndim != 4:
        raise ValueError(f"base weight: expected rank 4, got shape {base_weight.shape}")
    frames, _, height, width = x.shape
    c_out = base_weight.shape[0]
    fc_w = np.asarray(fc_w, dtype=np.float64)
    if fc_w.shape[0] != c_out:
        raise ValueError(
            f"calibration fc: expected ({c_out}, reduce), got {fc_w.shape}"
        )
    descriptor = x.mean(axis=(2, 3))  # (F, C_in)
    t = gelu(_conv1d_frames(descriptor, np.asarray(conv1_w, dtype=np.float64), np.asarray(conv1_b, dtype=np.float64)))
    t = _conv1d_frames(t, np.asarray(conv2_w, dtype=np.float64), np.asarray(conv2_b, dtype=np.float64))
    alpha = 1.0 + t @ fc_w.T + np.asarray(fc_b, dtype=np.float64)  # (F, C_out)
    out = np.empty((frames, c_out, height, width), dtype=np.float64)
    for frame in range(frames):
        scaled = base_weight * alpha[frame][:, None, None, None]
        out[frame] = conv2d_same(x[frame : frame + 1], scaled, base_bias)[0]
    return out


@dataclass(frozen=True)
class FusionConfig:
    """Static shape of one fusion block instance (one feature scale).

    Hidden widths default to values derived from the channel count;
    ``mix_groups`` None means depthwise for the channel-mixing convolution.
    """

    frames: int = 3
    channels: int = 8
    height: int = 16
    width: int = 16
    patch_size: int = 4
    cascade_groups: int = 4
    dws_kernel: int = 3
    cascade_kernel: int = 5
    local_kernel: tuple[int, int] = (5, 7)
    mix_kernel: int = 11
    mix_groups: int | None = None
    gate_hidden: int | None = None
    mix_hidden: int | None = None
    tada_kernel: int = 3
    tada_reduce: int | None = None

    def __post_init__(self) -> None:
        if self.channels % 2:
            raise ValueError(f"channels must be even, got {self.channels}")
        half = self.channels // 2
        if half % self.cascade_groups:
            raise ValueError(
                f"cascade_groups {self.cascade_groups} does not divide "
                f"{half} mixer channels"
            )
        if self.height % self.patch_size or self.width % self.patch_size:
            raise ValueError(
                f"patch_size {self.patch_size} does not divide "
                f"{(self.height, self.width)}"
            )
        groups = self.channels if self.mix_groups is None else self.mix_groups
        if self.channels % groups:
            raise ValueError(
                f"mix_groups {groups} does not divide {self.channels} channels"
            )

    @property
    def patches(self) -> int:
        return (self.height // self.patch_size) * (self.width // self.patch_size)


# Tensor names that fusion_forward requires; the TAdaConv bundle rides along
# in the same container but is consumed separately.
FORWARD_TENSORS = (
    "dws_depth_vis",
    "dws_point_vis",
    "dws_point_bias_vis",
    "dws_depth_ir",
    "dws_point_ir",
    "dws_point_bias_ir",
    "mlp1_weight",
    "mlp1_bias",
    "cascade_row_kernels",
    "cascade_col_kernels",
    "local_height_kernel",
    "local_width_kernel",
    "gate_w1",
    "gate_b1",
    "gate_w2",
    "gate_b2",
    "gate_proj_weight",
    "gate_proj_bias",
    "merge_weight",
    "merge_bias",
    "mix_conv_weight",
    "mix_conv_bias",
    "grn_gamma",
    "grn_beta",
    "mix_mlp_w1",
    "mix_mlp_b1",
    "mix_mlp_w2",
    "mix_mlp_b2",
    "temporal_ln_gamma",
    "temporal_ln_beta",
    "mlp2_weight",
    "mlp2_bias",
    "patch_size",
)

TADA_TENSORS = (
    "tada_base_weight",
    "tada_base_bias",
    "tada_conv1_weight",
    "tada_conv1_bias",
    "tada_conv2_weight",
    "tada_conv2_bias",
    "tada_fc_weight",
    "tada_fc_bias",
)


class FusionWeights:
    """Named-tensor bundle holding every learned parameter of the block."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self.tensors = {k: np.asarray(v, dtype=np.float64) for k, v in tensors.items()}

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def tensor(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise ValueError(f"missing weight tensor {name!r}") from None

    @property
    def patch_size(self) -> int:
        return int(round(float(self.tensor("patch_size"))))

    @classmethod
    def seeded(cls, config: FusionConfig | None = None, seed: int = 0) -> "FusionWeights":
        """Deterministic random weights for testing and demos."""
        cfg = config or FusionConfig()
        rng = np.random.default_rng(seed)
        c = cfg.channels
        half = c // 2
        gate_hidden = cfg.gate_hidden or half
        mix_hidden = cfg.mix_hidden or c
        reduce = cfg.tada_reduce or max(c // 4, 1)
        kh, kw = cfg.local_kernel
        two_s = 2 * cfg.patch_size**2
        fp = cfg.frames * cfg.patches
        mix_groups = cfg.mix_groups or c

        def w(*shape: int) -> np.ndarray:
            return rng.standard_normal(shape) * 0.1

        def b(*shape: int) -> np.ndarray:
            return rng.standard_normal(shape) * 0.01

        tensors: dict[str, np.ndarray] = {
            "dws_depth_vis": w(c, cfg.dws_kernel, cfg.dws_kernel),
            "dws_point_vis": w(c, c),
            "dws_point_bias_vis": b(c),
            "dws_depth_ir": w(c, cfg.dws_kernel, cfg.dws_kernel),
            "dws_point_ir": w(c, c),
            "dws_point_bias_ir": b(c),
            "mlp1_weight": w(c, c),
            "mlp1_bias": b(c),
            "cascade_row_kernels": w(cfg.cascade_groups, 1, cfg.cascade_kernel),
            "cascade_col_kernels": w(cfg.cascade_groups, cfg.cascade_kernel, 1),
            "local_height_kernel": w(kh, kw),
            "local_width_kernel": w(kw, kh),
            "gate_w1": w(gate_hidden, half),
            "gate_b1": b(gate_hidden),
            "gate_w2": w(half, gate_hidden),
            "gate_b2": b(half),
            "gate_proj_weight": w(3),
            "gate_proj_bias": b(3),
            "merge_weight": w(c, c),
            "merge_bias": b(c),
            "mix_conv_weight": w(c, c // mix_groups, cfg.mix_kernel, cfg.mix_kernel),
            "mix_conv_bias": b(c),
            "grn_gamma": w(c),
            "grn_beta": b(c),
            "mix_mlp_w1": w(mix_hidden, c),
            "mix_mlp_b1": b(mix_hidden),
            "mix_mlp_w2": w(c, mix_hidden),
            "mix_mlp_b2": b(c),
            "temporal_ln_gamma": 1.0 + b(two_s),
            "temporal_ln_beta": b(two_s),
            "mlp2_weight": w(fp, fp),
            "mlp2_bias": b(fp),
            "tada_base_weight": w(c, c, cfg.tada_kernel, cfg.tada_kernel),
            "tada_base_bias": b(c),
            "tada_conv1_weight": w(reduce, c, 3),
            "tada_conv1_bias": b(reduce),
            "tada_conv2_weight": w(reduce, reduce, 3),
            "tada_conv2_bias": b(reduce),
            "tada_fc_weight": w(c, reduce),
            "tada_fc_bias": b(c),
            "patch_size": np.float64(cfg.patch_size),
        }
        return cls(tensors)

    @classmethod
    def load(cls, path) -> "FusionWeights":
        return cls(load_tensors(path, WEIGHTS_MAGIC))

    def save(self, path) -> None:
        save_tensors(path, self.tensors, WEIGHTS_MAGIC)

    def mix_groups(self) -> int:
        conv = self.tensor("mix_conv_weight")
        channels = conv.shape[0]
        fan_in = conv.shape[1]
        if fan_in < 1 or channels % fan_in:
            raise ValueError(
                f"mix_conv_weight: fan-in {fan_in} does not divide {channels} channels"
            )
        return channels // fan_in

    def validate(self, frames: int, channels: int, height: int, width: int) -> None:
        """Check that every forward tensor is present with a shape consistent
        with a (frames, channels, height, width) input."""
        for name in FORWARD_TENSORS:
            self.tensor(name)
        c = channels
        half = c // 2
        if c % 2:
            raise ValueError(f"input channels must be even, got {c}")
        expect_exact = {
            "dws_point_vis": (c, c),
            "dws_point_bias_vis": (c,),
            "dws_point_ir": (c, c),
            "dws_point_bias_ir": (c,),
            "mlp1_weight": (c, c),
            "mlp1_bias": (c,),
            "gate_b2": (half,),
            "gate_proj_weight": (3,),
            "gate_proj_bias": (3,),
            "merge_weight": (c, c),
            "merge_bias": (c,),
            "mix_conv_bias": (c,),
            "grn_gamma": (c,),
            "grn_beta": (c,),
            "mix_mlp_b2": (c,),
        }
        for name, shape in expect_exact.items():
            actual = self.tensor(name).shape
            if actual != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {actual}")
        for name in ("dws_depth_vis", "dws_depth_ir"):
            shape = self.tensor(name).shape
            if len(shape) != 3 or shape[0] != c:
                raise ValueError(f"{name}: expected ({c}, kh, kw), got {shape}")
        rows = self.tensor("cascade_row_kernels")
        cols = self.tensor("cascade_col_kernels")
        if rows.ndim != 3 or cols.ndim != 3 or rows.shape[0] != cols.shape[0]:
            raise ValueError("cascade kernels: mismatched group stacks")
        if rows.shape[0] < 1 or half % rows.shape[0]:
            raise ValueError(
                f"cascade_row_kernels: {rows.shape[0]} groups do not divide "
                f"{half} mixer channels"
            )
        if self.tensor("gate_w1").shape[1] != half:
            raise ValueError(
                f"gate_w1: expected (hidden, {half}), "
                f"got {self.tensor('gate_w1').shape}"
            )
        if self.tensor("gate_w2").shape[0] != half:
            raise ValueError(
                f"gate_w2: expected ({half}, hidden), "
                f"got {self.tensor('gate_w2').shape}"
            )
        if self.tensor("mix_mlp_w1").shape[1] != c or self.tensor("mix_mlp_w2").shape[0] != c:
            raise ValueError("mix MLP weights do not match the channel count")
        self.mix_groups()
        s = self.patch_size
        if s < 1 or height % s or width % s:
            raise ValueError(f"patch_size {s} does not divide {(height, width)}")
        two_s = 2 * s * s
        for name in ("temporal_ln_gamma", "temporal_ln_beta"):
            if self.tensor(name).shape != (two_s,):
                raise ValueError(
                    f"{name}: expected ({two_s},), got {self.tensor(name).shape}"
                )
        fp = frames * (height // s) * (width // s)
        if self.tensor("mlp2_weight").shape != (fp, fp):
            raise ValueError(
                f"mlp2_weight: expected ({fp}, {fp}), "
                f"got {self.tensor('mlp2_weight').shape}"
            )
        if self.tensor("mlp2_bias").shape != (fp,):
            raise ValueError(
                f"mlp2_bias: expected ({fp},), got {self.tensor('mlp2_bias').shape}"
            )


@contextmanager
def _named_block(name: str):
    # Prefix sub-block failures with the block that raised them.
    try:
        yield
    except ValueError as err:
        raise ValueError(f"{name}: {err}") from err


def fusion_forward(
    vis: np.ndarray, ir: np.ndarray, weights: FusionWeights
) -> tuple[np.ndarray, np.ndarray]:
    """Full fusion block forward pass over one feature scale.

    Per-modality depthwise separable convolution and a shared pointwise
    affine produce the first residual taps; the taps are row-interleaved,
    split into channel halves for the cascade and gated strip mixers,
    merged by a pointwise affine, deinterleaved and added back to the taps;
    a shared channel-mixing block per modality yields the second taps, which
    feed the temporal fusion stage. Returns (vis_fused, ir_fused) with the
    input shape.
    """
    vis = _as_features(vis, "vis")
    ir = _as_features(ir, "ir")
    if vis.shape != ir.shape:
        raise ValueError(f"shape mismatch: vis {vis.shape} vs ir {ir.shape}")
    f, c, h, w = vis.shape
    weights.validate(f, c, h, w)
    t = weights.tensor

    with _named_block("dws"):
        vis_pre = dws_conv(
            vis, t("dws_depth_vis"), t("dws_point_vis"), t("dws_point_bias_vis")
        )
        ir_pre = dws_conv(
            ir, t("dws_depth_ir"), t("dws_point_ir"), t("dws_point_bias_ir")
        )
    with _named_block("mlp1"):
        vis1 = pointwise_affine(vis_pre, t("mlp1_weight"), t("mlp1_bias"))
        ir1 = pointwise_affine(ir_pre, t("mlp1_weight"), t("mlp1_bias"))

    stacked = interleave_rows(vis1, ir1)
    half = c // 2
    with _named_block("cascade mix"):
        long_range = cascade_strip_mix(
            stacked[:, :half], t("cascade_row_kernels"), t("cascade_col_kernels")
        )
    with _named_block("gated mix"):
        local = gated_strip_mix(
            stacked[:, half:],
            t("local_height_kernel"),
            t("local_width_kernel"),
            t("gate_w1"),
            t("gate_b1"),
            t("gate_w2"),
            t("gate_b2"),
            t("gate_proj_weight"),
            t("gate_proj_bias"),
        )
    with _named_block("merge"):
        merged = pointwise_affine(
            np.concatenate([long_range, local], axis=1),
            t("merge_weight"),
            t("merge_bias"),
        )
    vis_mid, ir_mid = deinterleave_rows(merged)
    vis_mid = vis_mid + vis1
    ir_mid = ir_mid + ir1

    groups = weights.mix_groups()
    with _named_block("channel mix"):
        vis2 = channel_mix(
            vis_mid,
            t("mix_conv_weight"),
            t("mix_conv_bias"),
            t("grn_gamma"),
            t("grn_beta"),
            t("mix_mlp_w1"),
            t("mix_mlp_b1"),
            t("mix_mlp_w2"),
            t("mix_mlp_b2"),
            groups=groups,
        )
        ir2 = channel_mix(
            ir_mid,
            t("mix_conv_weight"),
            t("mix_conv_bias"),
            t("grn_gamma"),
            t("grn_beta"),
            t("mix_mlp_w1"),
            t("mix_mlp_b1"),
            t("mix_mlp_w2"),
            t("mix_mlp_b2"),
            groups=groups,
        )
    with _named_block("temporal fuse"):
        return temporal_fuse(
            vis2,
            ir2,
            t("temporal_ln_gamma"),
            t("temporal_ln_beta"),
            t("mlp2_weight"),
            t("mlp2_bias"),
            weights.patch_size,
        )
