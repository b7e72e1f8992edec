"""
Shifted-window attention over spatiotemporal token grids

Token grids are laid out [N, T, H, W, D]. A 2D block folds T into the batch
so attention never crosses frames; a 3D block's windows span (wt, wh, ww).
Grids that are not multiples of the window are zero-padded, padded tokens
are masked out of attention and cropped after.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.autograd import functional as F
from src.autograd.tensor import Parameter, Tensor, get_default_dtype
from src.nn.blocks import BlockKind, BlockSpec, drop_path
from src.nn.layers import LayerNorm, Linear
from src.nn.module import Module
from src.utils.exceptions import ConfigurationError, ShapeError

Triple = Tuple[int, int, int]


@dataclass
class WindowMask:
    """
    Attention mask and geometry of one window partition

    Attributes:
        allowed: Boolean [num_windows, L, L]; True where query i may attend key j
        grid: Unpadded (T, H, W)
        padded: Padded (T, H, W)
        window: Window extents
        shift: Cyclic shift applied before partitioning
    """
    allowed: np.ndarray
    grid: Triple
    padded: Triple
    window: Triple
    shift: Triple

    @property
    def num_windows(self) -> int:
        return self.allowed.shape[0]

    @property
    def tokens_per_window(self) -> int:
        return self.allowed.shape[1]

    @property
    def all_pass(self) -> bool:
        return bool(self.allowed.all())


def _axis_regions(window: int, shift: int, extent: int) -> Sequence[slice]:
    if shift == 0:
        return (slice(None),)
    return (slice(0, extent - window), slice(extent - window, extent - shift), slice(extent - shift, None))


def _to_windows(array: np.ndarray, padded: Triple, window: Triple) -> np.ndarray:
    (tp, hp, wp), (wt, wh, ww) = padded, window
    cells = array.reshape(tp // wt, wt, hp // wh, wh, wp // ww, ww)
    return cells.transpose(0, 2, 4, 1, 3, 5).reshape(-1, wt * wh * ww)


def window_partition(tokens: Tensor, window: Sequence[int], shift: Sequence[int]) -> Tuple[Tensor, WindowMask]:
    """
    Split a token grid into (shifted) windows

    Args:
        tokens: Grid [N, T, H, W, D]
        window: (wt, wh, ww)
        shift: (st, sh, sw), each smaller than the window extent

    Returns:
        Windows [N * num_windows, wt*wh*ww, D] and the WindowMask
    """
    window = tuple(int(w) for w in window)
    shift = tuple(int(s) for s in shift)
    if tokens.ndim != 5:
        raise ShapeError(f"Token grid must be [N, T, H, W, D], got {tokens.shape}")
    if len(window) != 3 or len(shift) != 3 or min(window) < 1:
        raise ShapeError(f"Invalid window {window} / shift {shift}")
    if any(s < 0 or s >= w for s, w in zip(shift, window)):
        raise ShapeError(f"Shift {shift} must be non-negative and smaller than window {window}")

    n, t, h, w, d = tokens.shape
    grid = (t, h, w)
    padded = tuple(-(-extent // size) * size for extent, size in zip(grid, window))
    x = F.pad(tokens, [(0, 0)] + [(0, p - g) for p, g in zip(padded, grid)] + [(0, 0)])

    valid = np.zeros(padded, dtype=bool)
    valid[:t, :h, :w] = True
    regions = np.zeros(padded, dtype=np.int64)
    if any(shift):
        x = F.roll(x, [-s for s in shift], axes=(1, 2, 3))
        valid = np.roll(valid, [-s for s in shift], axis=(0, 1, 2))
        label = 0
        for ts in _axis_regions(window[0], shift[0], padded[0]):
            for hs in _axis_regions(window[1], shift[1], padded[1]):
                for ws in _axis_regions(window[2], shift[2], padded[2]):
                    regions[ts, hs, ws] = label
                    label += 1

    (tp, hp, wp), (wt, wh, ww) = padded, window
    tokens_per_window = wt * wh * ww
    x = x.reshape(n, tp // wt, wt, hp // wh, wh, wp // ww, ww, d)
    x = x.transpose(0, 1, 3, 5, 2, 4, 6, 7).reshape(-1, tokens_per_window, d)

    region_windows = _to_windows(regions, padded, window)
    valid_windows = _to_windows(valid, padded, window)
    allowed = region_windows[:, :, None] == region_windows[:, None, :]
    allowed &= valid_windows[:, None, :] | np.eye(tokens_per_window, dtype=bool)[None]
    return x, WindowMask(allowed, grid, padded, window, shift)


def window_reverse(windows: Tensor, mask: WindowMask, batch: int) -> Tensor:
    """
    Inverse of ``window_partition`` for the same geometry

    Args:
        windows: [batch * num_windows, L, D]
        mask: Geometry returned by ``window_partition``
        batch: Leading grid extent N

    Returns:
        Token grid [N, T, H, W, D]
    """
    (tp, hp, wp), (wt, wh, ww) = mask.padded, mask.window
    d = windows.shape[-1]
    x = windows.reshape(batch, tp // wt, hp // wh, wp // ww, wt, wh, ww, d)
    x = x.transpose(0, 1, 4, 2, 5, 3, 6, 7).reshape(batch, tp, hp, wp, d)
    x = F.roll(x, list(mask.shift), axes=(1, 2, 3))
    if mask.padded != mask.grid:
        t, h, w = mask.grid
        x = x[:, :t, :h, :w]
    return x


def relative_position_index(window: Triple) -> np.ndarray:
    """Index [L, L] into the relative-position bias table of a window"""
    wt, wh, ww = window
    coords = np.stack(np.meshgrid(np.arange(wt), np.arange(wh), np.arange(ww), indexing='ij')).reshape(3, -1)
    relative = (coords[:, :, None] - coords[:, None, :]).transpose(1, 2, 0)
    relative = relative + np.array([wt - 1, wh - 1, ww - 1])
    return relative[..., 0] * (2 * wh - 1) * (2 * ww - 1) + relative[..., 1] * (2 * ww - 1) + relative[..., 2]


def window_attention(
    windows: Tensor,
    mask: Optional[Union[WindowMask, np.ndarray]],
    qkv_weight: Tensor,
    qkv_bias: Optional[Tensor],
    proj_weight: Tensor,
    proj_bias: Optional[Tensor],
    position_bias: Optional[Tensor],
    heads: int,
    return_weights: bool = False
):
    """
    Multi-head scaled dot-product attention inside each window

    Scores are scaled by 1/sqrt(D/heads), offset by the relative-position
    bias [heads, L, L] and set to -inf on pairs the mask forbids before the
    softmax.

    Returns:
        Windows [B, L, D], plus the attention weights [B, heads, L, L] when
        ``return_weights`` is set
    """
    if windows.ndim != 3:
        raise ShapeError(f"Windows must be [B, L, D], got {windows.shape}")
    batch, length, dim = windows.shape
    if dim % heads:
        raise ShapeError(f"Width {dim} is not divisible by {heads} heads")
    allowed = mask.allowed if isinstance(mask, WindowMask) else mask
    if allowed is not None and (allowed.shape[1:] != (length, length) or batch % allowed.shape[0]):
        raise ShapeError(f"Mask {allowed.shape} does not match {batch} windows of {length} tokens")

    head_dim = dim // heads
    qkv = F.linear(windows, qkv_weight, qkv_bias).reshape(batch, length, 3, heads, head_dim)
    qkv = qkv.transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = (q * head_dim ** -0.5) @ k.transpose(0, 1, 3, 2)
    if position_bias is not None:
        scores = scores + position_bias
    if allowed is not None and not allowed.all():
        num_windows = allowed.shape[0]
        additive = np.where(allowed, 0.0, -np.inf).astype(windows.dtype)[None, :, None]
        scores = scores.reshape(batch // num_windows, num_windows, heads, length, length) + additive
        scores = scores.reshape(batch, heads, length, length)
    weights = F.softmax(scores, axis=-1)
    out = (weights @ v).transpose(0, 2, 1, 3).reshape(batch, length, dim)
    out = F.linear(out, proj_weight, proj_bias)
    if return_weights:
        return out, weights.data
    return out


class WindowAttention(Module):
    """Window attention with a learned relative-position bias table"""

    def __init__(self, dim: int, heads: int, window: Triple, rng: np.random.Generator):
        super().__init__()
        self.heads = heads
        self.window = tuple(window)
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        wt, wh, ww = self.window
        table = rng.normal(0.0, 0.02, size=((2 * wt - 1) * (2 * wh - 1) * (2 * ww - 1), heads))
        self.relative_position_bias = Parameter(table.astype(get_default_dtype()))
        self.position_index = relative_position_index(self.window)

    def position_bias(self) -> Tensor:
        length = self.position_index.shape[0]
        bias = self.relative_position_bias[self.position_index.reshape(-1)]
        return bias.reshape(length, length, self.heads).transpose(2, 0, 1)

    def forward(self, windows: Tensor, mask: Optional[WindowMask] = None, return_weights: bool = False):
        return window_attention(
            windows, mask,
            self.qkv.weight, self.qkv.bias,
            self.proj.weight, self.proj.bias,
            self.position_bias(), self.heads,
            return_weights=return_weights
        )


class Mlp(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(F.gelu(self.fc1(x)))


class SwinBlock(Module):
    """
    Pre-norm transformer block over (shifted) windows

    x + drop_path(attention(norm1(x))), then x + drop_path(mlp(norm2(x)))
    with an MLP of hidden width 4 x D and GELU.
    """

    MLP_RATIO = 4

    def __init__(self, spec: BlockSpec, rng: np.random.Generator):
        super().__init__()
        if not spec.kind.is_swin:
            raise ConfigurationError(f"SwinBlock cannot be built from a {spec.kind.value} spec")
        self.spec = spec
        dim = spec.in_channels
        self.norm1 = LayerNorm(dim)
        self.attn = WindowAttention(dim, spec.heads, spec.window, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(dim, self.MLP_RATIO * dim, rng)
        self.rng = np.random.default_rng(rng.integers(2 ** 63))

    def _attention_branch(self, x: Tensor) -> Tensor:
        n, t, h, w, d = x.shape
        grid = x.reshape(n * t, 1, h, w, d) if self.spec.kind is BlockKind.SWIN2D else x
        windows, mask = window_partition(self.norm1(grid), self.spec.window, self.spec.shift)
        attended = window_reverse(self.attn(windows, mask), mask, grid.shape[0])
        return attended.reshape(x.shape)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 5 or x.shape[-1] != self.spec.in_channels:
            raise ShapeError(
                f"{self.spec.kind.value} block expects a [N, T, H, W, {self.spec.in_channels}] grid, got {x.shape}"
            )
        rate = self.spec.drop_path_rate
        x = x + drop_path(self._attention_branch(x), rate, self.training, self.rng)
        return x + drop_path(self.mlp(self.norm2(x)), rate, self.training, self.rng)


def swin_block(x: Tensor, spec: BlockSpec, params: SwinBlock) -> Tensor:
    """Apply a built Swin block to a token grid"""
    if getattr(params, 'spec', None) != spec:
        raise ConfigurationError(f"Block parameters were built for {getattr(params, 'spec', None)}, not {spec}")
    return params(x)
