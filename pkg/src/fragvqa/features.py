"""Dual-branch spatio-temporal feature extraction behind a pluggable backend.

Per chunk and per triplet component, a motion vector (slow+fast pooled,
slow first) and a spatial vector are extracted, fused by concatenation in
a fixed component order, and per-chunk vectors reduce to one per-video
feature by elementwise mean. Backends: `toy_deterministic` (closed-form
statistics, no ML dependency) and `neural_interchange` (TorchScript
models described by a JSON manifest).
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .chunking import ChunkTriplet
from .errors import BackendError, ConfigError, FormatError

KIND_TOY = "toy_deterministic"
KIND_NEURAL = "neural_interchange"

COMPONENTS = ("resized", "frag_residual", "frag_frame")

DVQF_MAGIC = b"DVQF"
DVQF_VERSION = 1


@dataclass(frozen=True)
class BackendSpec:
    kind: str = KIND_TOY
    model_dir: Optional[str] = None
    slow_dim: int = 2048
    fast_dim: int = 256
    spatial_dim: int = 1024
    input_size: int = 224
    clip_len: int = 32
    slow_subsample: int = 4
    mean: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    std: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.kind not in (KIND_TOY, KIND_NEURAL):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if min(self.slow_dim, self.fast_dim, self.spatial_dim) < 1:
            raise ConfigError("backend dims must be positive")
        if any(s <= 0 for s in self.std):
            raise ConfigError("normalization std must be positive")

    @property
    def motion_dim(self) -> int:
        return self.slow_dim + self.fast_dim

    @property
    def fused_dim(self) -> int:
        return 3 * (self.motion_dim + self.spatial_dim)

    def backend_id(self) -> str:
        if self.kind == KIND_TOY:
            return f"{KIND_TOY}:{self.motion_dim}+{self.spatial_dim}"
        return f"{KIND_NEURAL}:{self.model_dir}"


@dataclass(frozen=True)
class ChunkFeatures:
    """Per-chunk motion and spatial vectors, one of each per triplet component."""

    chunk_index: int
    motion: Tuple[np.ndarray, np.ndarray, np.ndarray]
    spatial: Tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass(frozen=True)
class VideoFeature:
    dim: int
    values: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        if self.values.shape != (self.dim,):
            raise FormatError(f"feature length {self.values.shape} != dim {self.dim}")


def _check_finite(vec: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(vec)):
        raise BackendError(f"{what} produced non-finite values")
    return vec


# ---------------------------------------------------------------------------
# Toy deterministic backend
# ---------------------------------------------------------------------------

def _abs_diff_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-channel mean |a - b| for uint8 views, exact integer accumulation."""
    diff = np.maximum(a, b) - np.minimum(a, b)
    count = diff.size // 3
    return diff.sum(axis=tuple(range(diff.ndim - 1)), dtype=np.int64) / float(count)


def toy_backend_eval(stack: np.ndarray, dim: int) -> np.ndarray:
    """Closed-form signature of a (L, H, W, 3) uint8 stack, tiled to `dim`.

    Base statistics per channel: mean, variance, horizontal and vertical
    gradient energy, temporal-difference energy. Sums accumulate in int64
    (exact for 8-bit input), so results are bit-reproducible and constant
    stacks zero the variance and temporal terms exactly.
    """
    if stack.ndim != 4 or stack.shape[3] != 3:
        raise FormatError(f"expected (L, H, W, 3) stack, got {stack.shape}")
    n = stack.size // 3
    total = stack.sum(axis=(0, 1, 2), dtype=np.int64)
    total_sq = (stack.astype(np.uint16) ** 2).sum(axis=(0, 1, 2), dtype=np.int64)
    mean = total / float(n)
    var = total_sq / float(n) - mean * mean
    zeros = np.zeros(3)
    gx = _abs_diff_mean(stack[:, :, 1:], stack[:, :, :-1]) if stack.shape[2] > 1 else zeros
    gy = _abs_diff_mean(stack[:, 1:], stack[:, :-1]) if stack.shape[1] > 1 else zeros
    dt = _abs_diff_mean(stack[1:], stack[:-1]) if stack.shape[0] > 1 else zeros
    base = np.concatenate([mean, var, gx, gy, dt])
    reps = -(-dim // base.size)
    return np.tile(base, reps)[:dim]


class ToyBackend:
    """Deterministic stand-in for the neural backbones (CI and bench use)."""

    def __init__(self, spec: BackendSpec):
        self.spec = spec

    def extract_motion(self, stack: np.ndarray) -> np.ndarray:
        slow = toy_backend_eval(stack[:: self.spec.slow_subsample], self.spec.slow_dim)
        fast = toy_backend_eval(stack, self.spec.fast_dim)
        return _check_finite(np.concatenate([slow, fast]), "toy motion backend")

    def extract_spatial(self, stack: np.ndarray) -> np.ndarray:
        per_frame = np.stack(
            [toy_backend_eval(stack[i : i + 1], self.spec.spatial_dim) for i in range(len(stack))]
        )
        return _check_finite(per_frame.mean(axis=0), "toy spatial backend")


# ---------------------------------------------------------------------------
# Neural interchange backend (TorchScript models + JSON manifest)
# ---------------------------------------------------------------------------

MANIFEST_NAME = "manifest.json"


def load_manifest(model_dir: str) -> dict:
    path = os.path.join(model_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        raise BackendError(f"backend manifest not found: {path}")
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("motion_model", "spatial_model", "spatial_dim", "clip_len", "mean", "std"):
        if key not in doc:
            raise BackendError(f"manifest {path} missing key {key!r}")
    return doc


def spec_from_manifest(model_dir: str, input_size: int = 224) -> BackendSpec:
    doc = load_manifest(model_dir)
    return BackendSpec(
        kind=KIND_NEURAL,
        model_dir=model_dir,
        slow_dim=int(doc.get("slow_dim", 2048)),
        fast_dim=int(doc.get("fast_dim", 256)),
        spatial_dim=int(doc["spatial_dim"]),
        input_size=input_size,
        clip_len=int(doc["clip_len"]),
        slow_subsample=int(doc.get("slow_subsample", 4)),
        mean=tuple(float(v) for v in doc["mean"]),
        std=tuple(float(v) for v in doc["std"]),
    )


def resample_indices(length: int, target: int) -> np.ndarray:
    """Uniform index rounding from `length` frames to `target` frames."""
    if length < 1:
        raise FormatError("cannot resample an empty stack")
    if length == target:
        return np.arange(length)
    return np.clip(np.round(np.linspace(0, length - 1, target)).astype(np.int64), 0, length - 1)


class NeuralBackend:
    """Runs exported TorchScript backbones; one session per worker, never shared."""

    def __init__(self, spec: BackendSpec):
        try:
            import torch
        except ImportError as exc:
            raise BackendError(
                "neural backend requires torch; install fragvqa[neural]"
            ) from exc
        self._torch = torch
        self.spec = spec
        doc = load_manifest(spec.model_dir)
        try:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DeprecationWarning)
                self._motion = torch.jit.load(
                    os.path.join(spec.model_dir, doc["motion_model"]), map_location="cpu"
                ).eval()
                self._spatial = torch.jit.load(
                    os.path.join(spec.model_dir, doc["spatial_model"]), map_location="cpu"
                ).eval()
        except (RuntimeError, ValueError, OSError) as exc:
            raise BackendError(f"failed to load backend models from {spec.model_dir}: {exc}") from exc

    def _normalize(self, stack: np.ndarray) -> np.ndarray:
        x = stack.astype(np.float32) / 255.0
        mean = np.asarray(self.spec.mean, np.float32)
        std = np.asarray(self.spec.std, np.float32)
        return (x - mean) / std

    def extract_motion(self, stack: np.ndarray) -> np.ndarray:
        torch = self._torch
        if stack.shape[1] != self.spec.input_size or stack.shape[2] != self.spec.input_size:
            raise BackendError(
                f"motion backend expects {self.spec.input_size}x{self.spec.input_size} "
                f"frames, got stack of shape {stack.shape}"
            )
        clip = self._normalize(stack[resample_indices(len(stack), self.spec.clip_len)])
        # (T, H, W, C) -> (1, C, T, H, W)
        fast = torch.from_numpy(np.ascontiguousarray(clip.transpose(3, 0, 1, 2)))[None]
        slow = fast[:, :, :: self.spec.slow_subsample]
        with torch.no_grad():
            out = self._motion(slow, fast)
        vec = out.detach().cpu().numpy().reshape(-1).astype(np.float64)
        if vec.shape != (self.spec.motion_dim,):
            raise BackendError(
                f"motion model emitted shape {out.shape}, expected "
                f"({self.spec.motion_dim},) = slow {self.spec.slow_dim} + fast {self.spec.fast_dim}"
            )
        return _check_finite(vec, "motion backend")

    def extract_spatial(self, stack: np.ndarray) -> np.ndarray:
        torch = self._torch
        frames = self._normalize(stack)
        batch = torch.from_numpy(np.ascontiguousarray(frames.transpose(0, 3, 1, 2)))
        with torch.no_grad():
            out = self._spatial(batch)
        arr = out.detach().cpu().numpy().astype(np.float64)
        if arr.shape != (len(stack), self.spec.spatial_dim):
            raise BackendError(
                f"spatial model emitted shape {out.shape}, expected "
                f"({len(stack)}, {self.spec.spatial_dim})"
            )
        return _check_finite(arr.mean(axis=0), "spatial backend")


def make_backend(spec: BackendSpec):
    if spec.kind == KIND_TOY:
        return ToyBackend(spec)
    return NeuralBackend(spec)


# ---------------------------------------------------------------------------
# Fusion and per-video aggregation
# ---------------------------------------------------------------------------

def extract_chunk(chunk: ChunkTriplet, backend) -> ChunkFeatures:
    stacks = (chunk.resized, chunk.frag_residuals, chunk.frag_frames)
    return ChunkFeatures(
        chunk_index=chunk.index,
        motion=tuple(backend.extract_motion(s) for s in stacks),
        spatial=tuple(backend.extract_spatial(s) for s in stacks),
    )


def fuse_chunk(features: ChunkFeatures) -> np.ndarray:
    """Concatenate [motion, spatial] per component in the fixed component order."""
    parts = []
    for m, s in zip(features.motion, features.spatial):
        parts.append(m)
        parts.append(s)
    return np.concatenate(parts)


def aggregate_video(fused: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise mean over chunks.

    Values are sorted per dimension before summing so the reduction tree is a
    function of the value multiset, making the result bit-identical under any
    chunk processing order.
    """
    if len(fused) == 0:
        raise FormatError("cannot aggregate zero chunks")
    stack = np.stack(fused)
    return np.sort(stack, axis=0).sum(axis=0) / float(len(fused))


def video_feature(chunks: Sequence[ChunkTriplet], backend, spec: BackendSpec,
                  config_hash: str = "") -> VideoFeature:
    fused = [fuse_chunk(extract_chunk(c, backend)) for c in chunks]
    values = aggregate_video(fused)
    if values.shape != (spec.fused_dim,):
        raise BackendError(f"fused dim {values.shape} != declared {spec.fused_dim}")
    return VideoFeature(
        dim=spec.fused_dim,
        values=values,
        provenance=f"{spec.backend_id()};cfg={config_hash}",
    )


def config_hash(*parts) -> str:
    blob = json.dumps([repr(p) for p in parts], sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


# ---------------------------------------------------------------------------
# DVQF feature file + JSON sidecar
# ---------------------------------------------------------------------------

def write_dvqf(path, dim: int, entries: Sequence[Tuple[str, np.ndarray]]) -> None:
    """Write the binary feature file: magic, version, dim, count, then records."""
    with open(path, "wb") as fh:
        fh.write(DVQF_MAGIC)
        fh.write(struct.pack("<III", DVQF_VERSION, dim, len(entries)))
        for vid, values in entries:
            if values.shape != (dim,):
                raise FormatError(f"feature for {vid!r} has length {values.shape}, want {dim}")
            ident = vid.encode("utf-8")
            fh.write(struct.pack("<I", len(ident)))
            fh.write(ident)
            fh.write(values.astype("<f4").tobytes())


def read_dvqf(path) -> Tuple[int, Dict[str, np.ndarray]]:
    """Read a DVQF file; returns (dim, ordered id -> float32 vector mapping)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != DVQF_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {DVQF_MAGIC!r}")
        version, dim, count = struct.unpack("<III", fh.read(12))
        if version != DVQF_VERSION:
            raise FormatError(f"{path}: unsupported DVQF version {version}")
        entries: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (id_len,) = struct.unpack("<I", fh.read(4))
            vid = fh.read(id_len).decode("utf-8")
            vec = np.frombuffer(fh.read(4 * dim), dtype="<f4")
            if vec.size != dim:
                raise FormatError(f"{path}: truncated record for {vid!r}")
            entries[vid] = vec
    return dim, entries


def dvqf_sidecar_path(path) -> str:
    return str(path) + ".json"


def read_dvqf_sidecar(path) -> dict:
    sidecar = dvqf_sidecar_path(path)
    if not os.path.exists(sidecar):
        return {}
    with open(sidecar) as fh:
        return json.load(fh)


def write_dvqf_sidecar(path, mapping: dict) -> None:
    with open(dvqf_sidecar_path(path), "w") as fh:
        json.dump(mapping, fh, indent=2, sort_keys=True)
        fh.write("\n")
