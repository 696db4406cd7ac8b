"""Temporal chunking tests: stride, truncation, padding, decimation."""

import numpy as np
import pytest

from fragvqa.chunking import (SAMPLING_EVERY_OTHER, ChunkConfig, chunk_triplets)
from fragvqa.errors import FormatError
from fragvqa.fragmentation import FragmentTriplet
from fragvqa.frame_io import VideoMeta


def make_triplets(n, s=4):
    out = []
    for i in range(n):
        img = np.full((s, s, 3), i % 256, np.uint8)
        out.append(FragmentTriplet(source_index=i + 1, resized_frame=img,
                                   frag_residual=img, frag_frame=img))
    return out


def meta_fps(fps):
    return VideoMeta(64, 64, fps, 1)


class TestChunking:
    def test_exact_division(self):
        chunks = chunk_triplets(make_triplets(60), meta_fps(30), ChunkConfig(chunk_length=30))
        assert len(chunks) == 2
        assert all(c.pad_count == 0 for c in chunks)
        assert [c.index for c in chunks] == [0, 1]

    def test_trailing_frames_fall_in_no_chunk(self):
        chunks = chunk_triplets(make_triplets(45), meta_fps(30), ChunkConfig(chunk_length=30))
        assert len(chunks) == 1
        assert chunks[0].pad_count == 0
        # chunk covers [0, 30): last entry is triplet 29 (value 29)
        assert chunks[0].resized[-1][0, 0, 0] == 29

    def test_short_video_pads_with_last_entry(self):
        chunks = chunk_triplets(make_triplets(10), meta_fps(30), ChunkConfig(chunk_length=30))
        assert len(chunks) == 1
        c = chunks[0]
        assert c.pad_count == 20
        assert c.resized.shape[0] == 30
        for stack in (c.resized, c.frag_residuals, c.frag_frames):
            for k in range(10, 30):
                assert np.array_equal(stack[k], stack[9])

    def test_default_chunk_length_is_fps(self):
        chunks = chunk_triplets(make_triplets(59), meta_fps(30), ChunkConfig())
        assert len(chunks) == 1
        assert chunks[0].resized.shape[0] == 30

    def test_start_indices_follow_stride(self):
        trips = make_triplets(90)
        chunks = chunk_triplets(trips, meta_fps(30), ChunkConfig(chunk_length=30))
        assert len(chunks) == 3
        for i, c in enumerate(chunks):
            assert c.resized[0][0, 0, 0] == (i * 30) % 256

    def test_every_other_frame_decimates_and_halves_stride(self):
        trips = make_triplets(60)
        cfg = ChunkConfig(sampling=SAMPLING_EVERY_OTHER)
        chunks = chunk_triplets(trips, meta_fps(30), cfg)
        # 30 decimated triplets, f_r 15 -> 2 chunks of length 15
        assert len(chunks) == 2
        assert chunks[0].resized.shape[0] == 15
        assert chunks[0].resized[0][0, 0, 0] == 0
        assert chunks[0].resized[1][0, 0, 0] == 2  # decimation keeps even positions

    def test_odd_fps_halving_rounds_up(self):
        trips = make_triplets(30)
        cfg = ChunkConfig(sampling=SAMPLING_EVERY_OTHER)
        chunks = chunk_triplets(trips, meta_fps(25), cfg)
        # f_r = ceil(25/2) = 13, 15 decimated triplets -> 1 chunk of 13
        assert len(chunks) == 1
        assert chunks[0].resized.shape[0] == 13

    def test_empty_sequence_errors(self):
        with pytest.raises(FormatError, match="empty"):
            chunk_triplets([], meta_fps(30), ChunkConfig())

    def test_reconstruction_of_unpadded_contents(self):
        trips = make_triplets(75)
        chunks = chunk_triplets(trips, meta_fps(30), ChunkConfig(chunk_length=30))
        seen = []
        for c in chunks:
            real = c.resized.shape[0] - c.pad_count
            seen.extend(int(c.resized[k][0, 0, 0]) for k in range(real))
        assert seen == list(range(60))  # ordered subsequence of the input

    def test_determinism(self):
        trips = make_triplets(45)
        a = chunk_triplets(trips, meta_fps(30), ChunkConfig())
        b = chunk_triplets(trips, meta_fps(30), ChunkConfig())
        for ca, cb in zip(a, b):
            assert np.array_equal(ca.resized, cb.resized)
            assert ca.pad_count == cb.pad_count
