"""TorchScript export with native-vs-exported parity gating and manifest output.

The exported graphs take [0,1]-scaled RGB and perform their own channel
normalization internally, so the manifest advertises identity mean/std to
the consumer. The manifest is only written after the parity check passes.
"""

from __future__ import annotations

import json
import os
import warnings
from typing import Optional, Tuple

import torch
from torch import nn

from .slowfast import ALPHA, FAST_DIM, SLOW_DIM, SlowFastR50
from .swin import build_swin, load_torchvision_pretrained, spatial_dim

CLIP_LEN = 32
PARITY_TOL = 1e-4
PARITY_SAMPLES = 5

# normalization baked into the exported graphs
KINETICS_MEAN = (0.45, 0.45, 0.45)
KINETICS_STD = (0.225, 0.225, 0.225)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

MANIFEST_NAME = "manifest.json"


class ParityError(RuntimeError):
    """Native and exported graphs disagree beyond tolerance."""


def _norm_buffer(values, shape) -> torch.Tensor:
    return torch.tensor(values, dtype=torch.float32).reshape(shape)


class MotionExport(nn.Module):
    """(slow (B,3,8,r,r), fast (B,3,32,r,r)) in [0,1] -> (B, 2304), slow first."""

    def __init__(self, backbone: SlowFastR50, mean=KINETICS_MEAN, std=KINETICS_STD):
        super().__init__()
        self.backbone = backbone
        self.register_buffer("mean", _norm_buffer(mean, (1, 3, 1, 1, 1)))
        self.register_buffer("std", _norm_buffer(std, (1, 3, 1, 1, 1)))

    def forward(self, slow: torch.Tensor, fast: torch.Tensor) -> torch.Tensor:
        slow = (slow - self.mean) / self.std
        fast = (fast - self.mean) / self.std
        s, f = self.backbone(slow, fast)
        return torch.cat([s, f], dim=1)


class SpatialExport(nn.Module):
    """(B,3,r,r) in [0,1] -> pooled (B, spatial_dim)."""

    def __init__(self, backbone: nn.Module, mean=IMAGENET_MEAN, std=IMAGENET_STD):
        super().__init__()
        self.backbone = backbone
        self.register_buffer("mean", _norm_buffer(mean, (1, 3, 1, 1)))
        self.register_buffer("std", _norm_buffer(std, (1, 3, 1, 1)))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.backbone((x - self.mean) / self.std)


def _script_and_check(module: nn.Module, example: Tuple[torch.Tensor, ...], out_path,
                      tol: float = PARITY_TOL, samples: int = PARITY_SAMPLES) -> float:
    """Trace to TorchScript, reload from disk, and compare against native."""
    module.eval()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with torch.no_grad():
            traced = torch.jit.trace(module, example, check_trace=False)
        traced.save(str(out_path))
        loaded = torch.jit.load(str(out_path), map_location="cpu").eval()

    max_delta = 0.0
    with torch.no_grad():
        for i in range(samples):
            torch.manual_seed(1000 + i)
            probe = tuple(torch.rand_like(t) for t in example)
            native = module(*probe)
            exported = loaded(*probe)
            if not torch.isfinite(exported).all():
                os.unlink(out_path)
                raise ParityError(f"{out_path}: exported graph produced non-finite values")
            max_delta = max(max_delta, float((native - exported).abs().max()))
    if max_delta > tol:
        os.unlink(out_path)
        raise ParityError(
            f"{out_path}: native vs exported max |delta| {max_delta:.3e} exceeds {tol:g}"
        )
    return max_delta


def _update_manifest(models_dir, fragment: dict) -> dict:
    path = os.path.join(models_dir, MANIFEST_NAME)
    doc = {}
    if os.path.exists(path):
        with open(path) as fh:
            doc = json.load(fh)
    doc.update(fragment)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


def _load_local_weights(backbone: nn.Module, weights_path: str) -> None:
    state = torch.load(weights_path, map_location="cpu", weights_only=True)
    if isinstance(state, dict) and "state_dict" in state:
        state = state["state_dict"]
    missing, unexpected = backbone.load_state_dict(state, strict=False)
    print(f"loaded {weights_path}: {len(missing)} missing, {len(unexpected)} unexpected keys")


def export_motion_backbone(models_dir, resolution: int = 224, seed: int = 0,
                           weights: Optional[str] = None,
                           tol: float = PARITY_TOL) -> dict:
    """Build, strip, pool and export the motion backbone; returns the manifest."""
    os.makedirs(models_dir, exist_ok=True)
    torch.manual_seed(seed)
    backbone = SlowFastR50()
    source = "random-init"
    if weights:
        _load_local_weights(backbone, weights)
        source = os.path.basename(weights)
    module = MotionExport(backbone).eval()  # eval BEFORE any forward: keep BN stats intact
    example = (
        torch.rand(1, 3, CLIP_LEN // ALPHA, resolution, resolution),
        torch.rand(1, 3, CLIP_LEN, resolution, resolution),
    )
    with torch.no_grad():
        out = module(*example)
    if out.shape != (1, SLOW_DIM + FAST_DIM):
        raise RuntimeError(f"motion backbone emits {tuple(out.shape)}, expected (1, {SLOW_DIM + FAST_DIM})")
    out_name = "motion_slowfast_r50.pt"
    delta = _script_and_check(module, example, os.path.join(models_dir, out_name), tol=tol)
    print(f"motion export parity max |delta| = {delta:.3e}")
    return _update_manifest(models_dir, {
        "motion_model": out_name,
        "slow_dim": SLOW_DIM,
        "fast_dim": FAST_DIM,
        "clip_len": CLIP_LEN,
        "slow_subsample": ALPHA,
        "mean": [0.0, 0.0, 0.0],
        "std": [1.0, 1.0, 1.0],
        "motion_source": f"slowfast-r50:{source}",
    })


def export_spatial_backbone(models_dir, variant: str = "base", resolution: int = 224,
                            seed: int = 0, weights: Optional[str] = None,
                            pretrained: bool = False, tol: float = PARITY_TOL) -> dict:
    """Build, strip, pool and export a spatial backbone variant."""
    os.makedirs(models_dir, exist_ok=True)
    torch.manual_seed(seed)
    backbone = build_swin(variant, resolution)
    source = "random-init"
    if pretrained:
        load_torchvision_pretrained(backbone, variant)
        source = "torchvision-imagenet"
    elif weights:
        _load_local_weights(backbone, weights)
        source = os.path.basename(weights)
    module = SpatialExport(backbone).eval()
    example = (torch.rand(1, 3, resolution, resolution),)
    with torch.no_grad():
        out = module(*example)
    dim = spatial_dim(variant)
    if out.shape != (1, dim):
        raise RuntimeError(f"spatial backbone emits {tuple(out.shape)}, expected (1, {dim})")
    out_name = f"spatial_swin_{variant}_{resolution}.pt"
    delta = _script_and_check(module, example, os.path.join(models_dir, out_name), tol=tol)
    print(f"spatial export parity max |delta| = {delta:.3e}")
    return _update_manifest(models_dir, {
        "spatial_model": out_name,
        "spatial_dim": dim,
        "mean": [0.0, 0.0, 0.0],
        "std": [1.0, 1.0, 1.0],
        "spatial_source": f"swin-{variant}-{resolution}:{source}",
    })
