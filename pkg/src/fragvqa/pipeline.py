"""End-to-end composition: frames -> triplets -> chunks -> per-video feature.

Also hosts the staged benchmark used by `fragvqa bench` (per-stage wall
times over repeated runs, mirroring the fixed-input runtime experiment).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .chunking import chunk_triplets
from .config import PipelineConfig
from .features import VideoFeature, config_hash, make_backend, video_feature
from .fragmentation import fragment_stream
from .frame_io import open_video
from .regressor import MlpModel, predict


def pipeline_hash(cfg: PipelineConfig) -> str:
    return config_hash(cfg.frag, cfg.chunk, cfg.backend)


def extract_video(path, cfg: PipelineConfig, backend=None) -> Tuple[VideoFeature, int]:
    """Feature for one video file; returns (VideoFeature, chunk_count)."""
    meta, frames = open_video(path)
    triplets = list(fragment_stream(frames, cfg.frag))
    chunks = chunk_triplets(triplets, meta, cfg.chunk)
    if backend is None:
        backend = make_backend(cfg.backend)
    feature = video_feature(chunks, backend, cfg.backend, pipeline_hash(cfg))
    return feature, len(chunks)


# ---------------------------------------------------------------------------
# Staged benchmark
# ---------------------------------------------------------------------------

BENCH_STAGES = ("decode", "fragment", "extract", "predict")


@dataclass
class BenchResult:
    """Per-stage mean wall times (seconds) for one labeled input."""

    label: str
    repeats: int
    stage_means: Dict[str, float]
    end_to_end: float

    def as_row(self) -> List[str]:
        return [self.label, str(self.repeats)] + [
            "%.6f" % self.stage_means[s] for s in BENCH_STAGES
        ] + ["%.6f" % self.end_to_end]


def bench_video(path, label: str, cfg: PipelineConfig, repeats: int = 10,
                model: Optional[MlpModel] = None) -> BenchResult:
    """Time decode / fragment / extract / predict separately, `repeats` times.

    Each stage re-runs its upstream work outside the clock where possible:
    decode is timed by draining the frame iterator, fragment re-decodes but
    times only the triplet computation via pre-materialized frames.
    """
    backend = make_backend(cfg.backend)
    if model is None:
        model = MlpModel(cfg.backend.fused_dim, seed=0)
    totals = {s: 0.0 for s in BENCH_STAGES}
    end_to_end = 0.0

    for _ in range(repeats):
        t0 = time.perf_counter()
        meta, frames = open_video(path)
        frame_list = list(frames)
        t1 = time.perf_counter()
        totals["decode"] += t1 - t0

        triplets = list(fragment_stream(iter(frame_list), cfg.frag))
        t2 = time.perf_counter()
        totals["fragment"] += t2 - t1
        del frame_list

        chunks = chunk_triplets(triplets, meta, cfg.chunk)
        feature = video_feature(chunks, backend, cfg.backend, pipeline_hash(cfg))
        t3 = time.perf_counter()
        totals["extract"] += t3 - t2

        predict(model, feature.values)
        t4 = time.perf_counter()
        totals["predict"] += t4 - t3
        end_to_end += t4 - t0

    return BenchResult(
        label=label,
        repeats=repeats,
        stage_means={s: totals[s] / repeats for s in BENCH_STAGES},
        end_to_end=end_to_end / repeats,
    )


def write_bench_csv(path, results: Sequence[BenchResult]) -> None:
    with open(path, "w") as fh:
        fh.write("label,repeats," + ",".join(BENCH_STAGES) + ",end_to_end\n")
        for res in results:
            fh.write(",".join(res.as_row()) + "\n")
