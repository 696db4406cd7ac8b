"""Hierarchical window-attention spatial backbones, headless and pooled.

Variants mirror the published tiny/small/base/large hyperparameters; the
final feature width is embed_dim * 8. torchvision supplies pretrained
weights for tiny/small/base; large is instantiated from its published
shape and takes weights via a local state-dict file.
"""

from __future__ import annotations

from torch import nn
from torchvision.models.swin_transformer import SwinTransformer

VARIANTS = {
    "tiny": dict(embed_dim=96, depths=[2, 2, 6, 2], num_heads=[3, 6, 12, 24]),
    "small": dict(embed_dim=96, depths=[2, 2, 18, 2], num_heads=[3, 6, 12, 24]),
    "base": dict(embed_dim=128, depths=[2, 2, 18, 2], num_heads=[4, 8, 16, 32]),
    "large": dict(embed_dim=192, depths=[2, 2, 18, 2], num_heads=[6, 12, 24, 48]),
}

TORCHVISION_WEIGHTS = {"tiny": "swin_t", "small": "swin_s", "base": "swin_b"}


def spatial_dim(variant: str) -> int:
    return VARIANTS[variant]["embed_dim"] * 8


def build_swin(variant: str, resolution: int = 224) -> nn.Module:
    """Headless Swin backbone; forward((B,3,r,r)) -> pooled (B, embed_dim*8)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {sorted(VARIANTS)}")
    if resolution not in (224, 384):
        raise ValueError(f"resolution must be 224 or 384, got {resolution}")
    window = 7 if resolution == 224 else 12
    cfg = VARIANTS[variant]
    model = SwinTransformer(
        patch_size=[4, 4],
        embed_dim=cfg["embed_dim"],
        depths=cfg["depths"],
        num_heads=cfg["num_heads"],
        window_size=[window, window],
        stochastic_depth_prob=0.0,
    )
    model.head = nn.Identity()
    return model


def load_torchvision_pretrained(model: nn.Module, variant: str) -> None:
    """Fetch the published torchvision checkpoint (needs network access)."""
    import torchvision.models as tvm

    name = TORCHVISION_WEIGHTS.get(variant)
    if name is None:
        raise ValueError(
            f"no torchvision weights for {variant!r}; pass a local state dict "
            f"via --weights instead"
        )
    weights = tvm.get_model_weights(name).DEFAULT
    reference = tvm.get_model(name, weights=weights)
    missing, unexpected = model.load_state_dict(reference.state_dict(), strict=False)
    # only the stripped classification head may fail to match
    bad = [k for k in missing if not k.startswith("head")]
    bad += [k for k in unexpected if not k.startswith("head")]
    if bad:
        raise RuntimeError(f"pretrained load mismatch beyond the head: {bad[:5]}")
