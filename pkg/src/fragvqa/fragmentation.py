"""Inter-frame patch-difference fragmentation.

For each consecutive frame pair: absolute residual, per-patch difference
scores over a non-overlapping p-grid, top-T selection (T = ceil(s^2/p^2)),
and assembly of the fragmented residual plus the position-aligned
fragmented frame, alongside the bilinearly resized current frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .errors import FormatError
from .frame_io import Frame

Coord = Tuple[int, int]


@dataclass(frozen=True)
class FragConfig:
    patch_size: int = 16
    target_size: int = 224
    resize_filter: str = "bilinear"

    def __post_init__(self):
        if self.patch_size < 1 or self.target_size < 1:
            raise FormatError("patch_size and target_size must be >= 1")
        if self.patch_size > self.target_size:
            raise FormatError(
                f"patch_size {self.patch_size} exceeds target_size {self.target_size}"
            )
        if self.resize_filter != "bilinear":
            raise FormatError(f"unsupported resize filter {self.resize_filter!r}")


@dataclass(frozen=True)
class Residual:
    """Per-sample |cur - prev| over all three channels; uint8, same shape as inputs."""

    values: np.ndarray
    source_index: int

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FragmentTriplet:
    """The three per-frame feature components plus the selected patch coords."""

    source_index: int
    resized_frame: np.ndarray
    frag_residual: np.ndarray
    frag_frame: np.ndarray
    coords: List[Coord] = field(default_factory=list)
    scores: List[int] = field(default_factory=list)


def compute_residual(cur: Frame, prev: Frame) -> Residual:
    """Absolute difference of consecutive frames (all three channels)."""
    if cur.pixels.shape != prev.pixels.shape:
        raise FormatError(
            f"frame shape mismatch: {cur.pixels.shape} vs {prev.pixels.shape}"
        )
    # |a - b| == max(a, b) - min(a, b): stays in uint8, no widening temporaries
    diff = np.maximum(cur.pixels, prev.pixels) - np.minimum(cur.pixels, prev.pixels)
    return Residual(values=diff, source_index=cur.index)


def patch_scores(residual: Residual, p: int) -> np.ndarray:
    """Channel-summed difference score per complete p x p patch, raster order.

    Partial edge patches (height or width not divisible by p) are dropped.
    Returns a (rows, cols) uint64 grid.
    """
    if p < 1:
        raise FormatError(f"patch size must be >= 1, got {p}")
    rows, cols = residual.height // p, residual.width // p
    if rows == 0 or cols == 0:
        raise FormatError(
            f"patch size {p} exceeds residual dimensions "
            f"{residual.width}x{residual.height}: empty grid"
        )
    trimmed = np.ascontiguousarray(residual.values[: rows * p, : cols * p, :])
    return trimmed.reshape(rows, p, cols, p, 3).sum(axis=(1, 3, 4), dtype=np.uint64)


def top_t_count(s: int, p: int) -> int:
    """Number of selected patches: ceil(s^2 / p^2), in exact integer arithmetic."""
    if not 1 <= p <= s:
        raise FormatError(f"need 1 <= p <= s, got p={p}, s={s}")
    return -((-(s * s)) // (p * p))


def select_top_patches(scores: np.ndarray, t: int) -> List[Coord]:
    """Top-t grid coords by descending score, ties broken by ascending raster index.

    Grids with fewer than t patches wrap cyclically so the output length is
    always t (keeps the assembled fragment shape fixed for the DNN input).
    """
    if scores.size == 0:
        raise FormatError("empty score grid")
    if t == 0:
        return []
    rows, cols = scores.shape
    flat = scores.reshape(-1)
    # stable sort on negated scores preserves raster order among ties
    order = np.argsort(-flat.astype(np.int64), kind="stable")
    ranked = [(int(i // cols), int(i % cols)) for i in order]
    if t <= len(ranked):
        return ranked[:t]
    reps = -(-t // len(ranked))
    return (ranked * reps)[:t]


def assemble_fragment(source: np.ndarray, coords: Sequence[Coord], p: int, s: int) -> np.ndarray:
    """Place source patches into an s x s canvas, slot k <- patch at coords[k].

    Destination slots run in raster order over a ceil(s/p) grid; when s is not
    a multiple of p the trailing slots are partial and receive the top-left
    crop of their patch. Slots beyond len(coords) stay black.
    """
    out = np.zeros((s, s, 3), dtype=source.dtype)
    slot_cols = -(-s // p)
    h, w = source.shape[:2]
    for k, (gr, gc) in enumerate(coords):
        dr, dc = (k // slot_cols) * p, (k % slot_cols) * p
        if dr >= s:
            break
        ph, pw = min(p, s - dr), min(p, s - dc)
        sr, sc = gr * p, gc * p
        if sr + p > h or sc + p > w or sr < 0 or sc < 0:
            raise IndexError(
                f"patch coord ({gr},{gc}) out of bounds for {w}x{h} source with p={p}"
            )
        out[dr : dr + ph, dc : dc + pw] = source[sr : sr + ph, sc : sc + pw]
    return out


def resize_frame(frame, s: int) -> np.ndarray:
    """Bilinear resize to s x s with half-pixel centers, round half away from zero."""
    pixels = frame.pixels if isinstance(frame, Frame) else frame
    h, w = pixels.shape[:2]
    if h == s and w == s:
        return pixels.copy()

    def axis_weights(n_src: int, n_dst: int):
        centers = (np.arange(n_dst, dtype=np.float64) + 0.5) * (n_src / n_dst) - 0.5
        centers = np.clip(centers, 0.0, n_src - 1.0)
        lo = np.floor(centers).astype(np.int64)
        hi = np.minimum(lo + 1, n_src - 1)
        return lo, hi, centers - lo

    y0, y1, wy = axis_weights(h, s)
    x0, x1, wx = axis_weights(w, s)
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    # gather the four neighbor grids as uint8 first; converting the whole
    # source to float64 would dominate the cost at high resolutions
    p00 = pixels[np.ix_(y0, x0)].astype(np.float64)
    p01 = pixels[np.ix_(y0, x1)].astype(np.float64)
    p10 = pixels[np.ix_(y1, x0)].astype(np.float64)
    p11 = pixels[np.ix_(y1, x1)].astype(np.float64)
    top = p00 * (1 - wx) + p01 * wx
    bot = p10 * (1 - wx) + p11 * wx
    blended = top * (1 - wy) + bot * wy
    return np.clip(np.floor(blended + 0.5), 0, 255).astype(np.uint8)


def fragment_pair(prev: Frame, cur: Frame, cfg: FragConfig) -> FragmentTriplet:
    """Full per-pair fragmentation: residual -> scores -> top-T -> aligned assembly."""
    residual = compute_residual(cur, prev)
    grid = patch_scores(residual, cfg.patch_size)
    t = top_t_count(cfg.target_size, cfg.patch_size)
    coords = select_top_patches(grid, t)
    frag_res = assemble_fragment(residual.values, coords, cfg.patch_size, cfg.target_size)
    frag_frm = assemble_fragment(cur.pixels, coords, cfg.patch_size, cfg.target_size)
    return FragmentTriplet(
        source_index=cur.index,
        resized_frame=resize_frame(cur, cfg.target_size),
        frag_residual=frag_res,
        frag_frame=frag_frm,
        coords=coords,
        scores=[int(grid[r, c]) for r, c in coords],
    )


def fragment_stream(frames, cfg: FragConfig):
    """Yield one FragmentTriplet per consecutive pair (frame 0 has no predecessor)."""
    prev = None
    for frame in frames:
        if prev is not None:
            yield fragment_pair(prev, frame, cfg)
        prev = frame
