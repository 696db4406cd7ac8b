"""Temporal segmentation of fragment triplets into fixed-length chunks.

Chunk i covers triplet indices [i*f_r, i*f_r + L_c); short chunks are
padded by repeating the last real entry. One chunk per second of video
by default (L_c = f_r, contiguous, no overlap).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import FormatError
from .fragmentation import FragmentTriplet
from .frame_io import VideoMeta

SAMPLING_ALL = "all_frames"
SAMPLING_EVERY_OTHER = "every_other_frame"


@dataclass(frozen=True)
class ChunkConfig:
    chunk_length: Optional[int] = None  # None -> use f_r (1-second chunks)
    sampling: str = SAMPLING_ALL

    def __post_init__(self):
        if self.chunk_length is not None and self.chunk_length < 1:
            raise FormatError(f"chunk_length must be >= 1, got {self.chunk_length}")
        if self.sampling not in (SAMPLING_ALL, SAMPLING_EVERY_OTHER):
            raise FormatError(f"unknown sampling mode {self.sampling!r}")


@dataclass(frozen=True)
class ChunkTriplet:
    """L_c stacked copies of each triplet component, (L_c, s, s, 3) uint8."""

    index: int
    resized: np.ndarray
    frag_residuals: np.ndarray
    frag_frames: np.ndarray
    pad_count: int


def chunk_triplets(
    triplets: Sequence[FragmentTriplet], meta: VideoMeta, cfg: ChunkConfig
) -> List[ChunkTriplet]:
    """Group ordered triplets into M = max(1, floor(N'/f_r)) chunks of length L_c."""
    seq = list(triplets)
    if not seq:
        raise FormatError("empty triplet sequence (video too short to fragment)")

    f_r = meta.nominal_fps()
    if cfg.sampling == SAMPLING_EVERY_OTHER:
        seq = seq[::2]
        f_r = max(1, -(-f_r // 2))
    l_c = cfg.chunk_length if cfg.chunk_length is not None else f_r

    n = len(seq)
    m = max(1, n // f_r)
    chunks = []
    for i in range(m):
        start = i * f_r
        real = seq[start : min(start + l_c, n)]
        pad = l_c - len(real)
        entries = real + [real[-1]] * pad
        chunks.append(
            ChunkTriplet(
                index=i,
                resized=np.stack([t.resized_frame for t in entries]),
                frag_residuals=np.stack([t.frag_residual for t in entries]),
                frag_frames=np.stack([t.frag_frame for t in entries]),
                pad_count=pad,
            )
        )
    return chunks
