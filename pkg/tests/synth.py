"""Synthetic test videos: a textured moving square over a static gradient."""

import numpy as np

from fragvqa.frame_io import Frame, VideoMeta, write_y4m


def moving_square_frames(width, height, count, seed=0, square_frac=0.2):
    """Deterministic frames with global texture and one moving bright square."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    base = ((xx * 255) // max(width - 1, 1) // 2
            + (yy * 255) // max(height - 1, 1) // 4).astype(np.uint8)
    texture = rng.integers(0, 32, (height, width), dtype=np.uint8)
    background = np.stack([base + texture, base, 255 - base], axis=-1).astype(np.uint8)
    side = max(2, int(min(width, height) * square_frac))
    frames = []
    for i in range(count):
        pix = background.copy()
        x0 = (i * max(1, (width - side) // max(count - 1, 1))) % max(width - side, 1)
        y0 = (i * max(1, (height - side) // max(count - 1, 1))) % max(height - side, 1)
        pix[y0:y0 + side, x0:x0 + side] = (230, 40 + (i * 13) % 100, 25)
        frames.append(Frame(i, pix))
    return frames


def write_synthetic_y4m(path, width, height, count, fps=4, seed=0):
    meta = VideoMeta(width, height, fps, 1)
    frames = moving_square_frames(width, height, count, seed=seed)
    write_y4m(path, frames, meta)
    return meta
