"""Reference numerical kernels over (h, w, c) float32 feature maps.

Conventions, fixed for every kernel here and relied on by the graph executor
and the cost model:

* SAME zero padding: out = ceil(in / stride) per spatial dim, pad split
  floor-left / ceil-right.
* Values are stored float32; reductions (conv, depthwise, pooling, bilinear
  blending) accumulate in float64 and cast once at the end.
* Bilinear resize defaults to corner-aligned sampling
  (src = dst * (in-1)/(out-1), a single output maps to coordinate 0);
  ``mode="half"`` selects half-pixel centers.
* Average-pool grids use floor-based bin edges floor(i*size/grid), which tile
  the input exactly for any size/grid combination.
* argmax breaks ties toward the lowest channel index.

All kernels are pure functions of their arguments and never mutate inputs.
"""

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import ConvParams, as_feature_map, require_finite

VALID_RESIZE_MODES = ("corner", "half")


def same_pad(size: int, kernel: int, stride: int, dilation: int) -> tuple[int, int, int]:
    """Return (out_size, pad_before, pad_after) for SAME padding."""
    out = -(-size // stride)
    effective = (kernel - 1) * dilation + 1
    total = max((out - 1) * stride + effective - size, 0)
    before = total // 2
    return out, before, total - before


def _pad_input(x: np.ndarray, params: ConvParams) -> tuple[np.ndarray, int, int]:
    h, w, _ = x.shape
    out_h, pad_t, pad_b = same_pad(h, params.kernel_h, params.stride, params.dilation)
    out_w, pad_l, pad_r = same_pad(w, params.kernel_w, params.stride, params.dilation)
    padded = np.pad(x, ((pad_t, pad_b), (pad_l, pad_r), (0, 0)))
    return padded, out_h, out_w


def _gather_windows(padded: np.ndarray, out_h: int, out_w: int, params: ConvParams) -> np.ndarray:
    """Rearrange to (out_h, out_w, kernel_h, kernel_w, c), float64."""
    s, d = params.stride, params.dilation
    rows = np.arange(out_h)[:, None] * s + np.arange(params.kernel_h)[None, :] * d
    cols = np.arange(out_w)[:, None] * s + np.arange(params.kernel_w)[None, :] * d
    win = padded.astype(np.float64)[rows][:, :, cols]  # (oh, kh, ow, kw, c)
    return win.transpose(0, 2, 1, 3, 4)


def conv2d(x, kernels, bias, params: ConvParams) -> np.ndarray:
    """Grouped 2-D convolution with SAME zero padding.

    ``kernels`` has layout (kernel_h, kernel_w, in_c/groups, out_c); group g
    reads input channels [g*ig, (g+1)*ig) and writes output channels
    [g*og, (g+1)*og). ``bias`` is a per-output-channel vector or None.
    """
    x = as_feature_map(x)
    if x.shape[2] != params.in_c:
        raise ShapeError(f"conv2d: input has {x.shape[2]} channels, params expect {params.in_c}")
    kernels = np.asarray(kernels, dtype=np.float32)
    if kernels.shape != params.kernel_shape():
        raise ShapeError(
            f"conv2d: kernel shape {kernels.shape} does not match expected {params.kernel_shape()}"
        )
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float32)
        if bias.shape != (params.out_c,):
            raise ShapeError(f"conv2d: bias length {bias.shape} != out_c {params.out_c}")

    if params.is_depthwise:
        out64 = _depthwise_f64(x, kernels.reshape(params.kernel_h, params.kernel_w, params.out_c), params)
    elif params.kernel_h == params.kernel_w == 1:
        out64 = _pointwise_f64(x, kernels, params)
    else:
        out64 = _general_conv_f64(x, kernels, params)

    if bias is not None:
        out64 = out64 + bias.astype(np.float64)
    return require_finite(out64.astype(np.float32), "conv2d")


def _pointwise_f64(x, kernels, params: ConvParams) -> np.ndarray:
    sub = x[:: params.stride, :: params.stride, :].astype(np.float64)
    oh, ow, _ = sub.shape
    flat = sub.reshape(oh * ow, params.in_c)
    out = np.empty((oh * ow, params.out_c), dtype=np.float64)
    ig = params.in_c // params.groups
    og = params.out_c // params.groups
    for g in range(params.groups):
        w = kernels[0, 0, :, g * og:(g + 1) * og].astype(np.float64)
        out[:, g * og:(g + 1) * og] = flat[:, g * ig:(g + 1) * ig] @ w
    return out.reshape(oh, ow, params.out_c)


def _general_conv_f64(x, kernels, params: ConvParams) -> np.ndarray:
    padded, out_h, out_w = _pad_input(x, params)
    win = _gather_windows(padded, out_h, out_w, params)
    ig = params.in_c // params.groups
    og = params.out_c // params.groups
    taps = params.kernel_h * params.kernel_w * ig
    out = np.empty((out_h * out_w, params.out_c), dtype=np.float64)
    for g in range(params.groups):
        block = win[:, :, :, :, g * ig:(g + 1) * ig].reshape(out_h * out_w, taps)
        w = kernels[:, :, :, g * og:(g + 1) * og].astype(np.float64).reshape(taps, og)
        out[:, g * og:(g + 1) * og] = block @ w
    return out.reshape(out_h, out_w, params.out_c)


def _depthwise_f64(x, kernels, params: ConvParams) -> np.ndarray:
    padded, out_h, out_w = _pad_input(x, params)
    padded = padded.astype(np.float64)
    s, d = params.stride, params.dilation
    out = np.zeros((out_h, out_w, params.out_c), dtype=np.float64)
    k64 = kernels.astype(np.float64)
    for ki in range(params.kernel_h):
        for kj in range(params.kernel_w):
            patch = padded[
                ki * d: ki * d + (out_h - 1) * s + 1: s,
                kj * d: kj * d + (out_w - 1) * s + 1: s,
                :,
            ]
            out += patch * k64[ki, kj, :]
    return out


def depthwise_conv2d(x, kernels, params: ConvParams) -> np.ndarray:
    """Per-channel convolution; channel i of the output depends only on channel i."""
    x = as_feature_map(x)
    if not params.is_depthwise:
        raise ConfigError("depthwise_conv2d requires groups == in_c == out_c")
    if x.shape[2] != params.in_c:
        raise ShapeError(f"depthwise_conv2d: input has {x.shape[2]} channels, expected {params.in_c}")
    kernels = np.asarray(kernels, dtype=np.float32)
    if kernels.ndim == 4:  # stored layout (kh, kw, 1, c)
        kernels = kernels.reshape(kernels.shape[0], kernels.shape[1], kernels.shape[3])
    if kernels.shape != (params.kernel_h, params.kernel_w, params.in_c):
        raise ShapeError(
            f"depthwise_conv2d: kernel shape {kernels.shape} != "
            f"{(params.kernel_h, params.kernel_w, params.in_c)}"
        )
    out = _depthwise_f64(x, kernels, params)
    return require_finite(out.astype(np.float32), "depthwise_conv2d")


def avg_pool_grid(x, grid_h: int, grid_w: int) -> np.ndarray:
    """Average-pool into a fixed grid; bin (i, j) covers rows
    floor(i*h/grid_h) .. floor((i+1)*h/grid_h)-1 and likewise for columns."""
    x = as_feature_map(x)
    h, w, c = x.shape
    if grid_h < 1 or grid_w < 1:
        raise ConfigError(f"pool grid must be positive, got {grid_h}x{grid_w}")
    if grid_h > h or grid_w > w:
        raise ConfigError(f"pool grid {grid_h}x{grid_w} exceeds input size {h}x{w}")
    x64 = x.astype(np.float64)
    out = np.empty((grid_h, grid_w, c), dtype=np.float64)
    row_edges = [i * h // grid_h for i in range(grid_h + 1)]
    col_edges = [j * w // grid_w for j in range(grid_w + 1)]
    for i in range(grid_h):
        for j in range(grid_w):
            cell = x64[row_edges[i]:row_edges[i + 1], col_edges[j]:col_edges[j + 1], :]
            out[i, j, :] = cell.mean(axis=(0, 1))
    return require_finite(out.astype(np.float32), "avg_pool_grid")


def global_avg_pool(x) -> np.ndarray:
    x = as_feature_map(x)
    out = x.astype(np.float64).mean(axis=(0, 1), keepdims=True)
    return require_finite(out.astype(np.float32), "global_avg_pool")


def _source_coords(n_out: int, n_in: int, mode: str) -> np.ndarray:
    if mode not in VALID_RESIZE_MODES:
        raise ConfigError(f"resize mode must be one of {VALID_RESIZE_MODES}, got {mode!r}")
    if mode == "corner":
        if n_out == 1:
            return np.zeros(1, dtype=np.float64)
        return np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)
    coords = (np.arange(n_out, dtype=np.float64) + 0.5) * n_in / n_out - 0.5
    return np.clip(coords, 0.0, n_in - 1)


def bilinear_resize(x, out_h: int, out_w: int, mode: str = "corner") -> np.ndarray:
    """Bilinear interpolation of the four nearest source samples."""
    x = as_feature_map(x)
    h, w, _ = x.shape
    if mode not in VALID_RESIZE_MODES:
        raise ConfigError(f"resize mode must be one of {VALID_RESIZE_MODES}, got {mode!r}")
    if out_h < 1 or out_w < 1:
        raise ConfigError(f"resize target must be positive, got {out_h}x{out_w}")
    if out_h == h and out_w == w:
        return x.copy()
    src_r = _source_coords(out_h, h, mode)
    src_c = _source_coords(out_w, w, mode)
    r0 = np.floor(src_r).astype(np.int64)
    c0 = np.floor(src_c).astype(np.int64)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (src_r - r0)[:, None, None]
    fc = (src_c - c0)[None, :, None]
    x64 = x.astype(np.float64)
    top = x64[r0][:, c0] * (1.0 - fc) + x64[r0][:, c1] * fc
    bot = x64[r1][:, c0] * (1.0 - fc) + x64[r1][:, c1] * fc
    out = top * (1.0 - fr) + bot * fr
    return require_finite(out.astype(np.float32), "bilinear_resize")


def concat_channels(xs) -> np.ndarray:
    if not xs:
        raise ShapeError("concat_channels needs at least one input")
    xs = [as_feature_map(x, f"concat input {i}") for i, x in enumerate(xs)]
    hw = xs[0].shape[:2]
    for i, x in enumerate(xs[1:], start=1):
        if x.shape[:2] != hw:
            raise ShapeError(
                f"concat_channels: input {i} spatial size {x.shape[:2]} != {hw}"
            )
    return np.concatenate(xs, axis=2)


def add_elementwise(a, b) -> np.ndarray:
    a = as_feature_map(a, "add lhs")
    b = as_feature_map(b, "add rhs")
    if a.shape != b.shape:
        raise ShapeError(f"add_elementwise: shape mismatch {a.shape} vs {b.shape}")
    return require_finite(a + b, "add_elementwise")


def relu(x) -> np.ndarray:
    x = as_feature_map(x)
    return np.maximum(x, np.float32(0.0))


def affine_channels(x, scale, bias) -> np.ndarray:
    """out[r, q, i] = scale[i] * x[r, q, i] + bias[i] (folded batch norm)."""
    x = as_feature_map(x)
    scale = np.asarray(scale, dtype=np.float32)
    bias = np.asarray(bias, dtype=np.float32)
    c = x.shape[2]
    if scale.shape != (c,) or bias.shape != (c,):
        raise ShapeError(
            f"affine_channels: scale/bias shapes {scale.shape}/{bias.shape} != ({c},)"
        )
    out = x.astype(np.float64) * scale.astype(np.float64) + bias.astype(np.float64)
    return require_finite(out.astype(np.float32), "affine_channels")


def argmax_channels(x) -> np.ndarray:
    """Per-pixel channel argmax; ties go to the lowest channel index."""
    x = as_feature_map(x)
    return np.argmax(x, axis=2).astype(np.int32)
