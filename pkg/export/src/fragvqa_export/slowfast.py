"""Dual-pathway R50-3D motion backbone (slow/fast) as a headless feature extractor.

Slow pathway: 8 frames, channels 64..2048, temporal convs only in the last
two stages. Fast pathway: 32 frames, 1/8 of the slow channel widths,
temporal convs everywhere. Fast features feed the slow pathway through
time-strided lateral convolutions (stride alpha, 2x channel expansion)
after the stem and the first three stages. Output: globally average-pooled
slow (2048) and fast (256) vectors.
"""

from __future__ import annotations

from typing import List, Tuple

import torch
from torch import nn

ALPHA = 4       # fast/slow frame-rate ratio
BETA_INV = 8    # slow/fast channel ratio
DEPTHS = (3, 4, 6, 3)  # R50 bottleneck counts
SLOW_DIM = 2048
FAST_DIM = 256


class Bottleneck3d(nn.Module):
    expansion = 4

    def __init__(self, in_ch: int, mid_ch: int, t_kernel: int, spatial_stride: int):
        super().__init__()
        out_ch = mid_ch * self.expansion
        self.conv1 = nn.Conv3d(in_ch, mid_ch, (t_kernel, 1, 1),
                               padding=(t_kernel // 2, 0, 0), bias=False)
        self.bn1 = nn.BatchNorm3d(mid_ch)
        self.conv2 = nn.Conv3d(mid_ch, mid_ch, (1, 3, 3),
                               stride=(1, spatial_stride, spatial_stride),
                               padding=(0, 1, 1), bias=False)
        self.bn2 = nn.BatchNorm3d(mid_ch)
        self.conv3 = nn.Conv3d(mid_ch, out_ch, 1, bias=False)
        self.bn3 = nn.BatchNorm3d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        if in_ch != out_ch or spatial_stride != 1:
            self.shortcut = nn.Sequential(
                nn.Conv3d(in_ch, out_ch, 1,
                          stride=(1, spatial_stride, spatial_stride), bias=False),
                nn.BatchNorm3d(out_ch),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        return self.relu(out + self.shortcut(x))


def _stage(in_ch: int, mid_ch: int, blocks: int, t_kernel: int, stride: int) -> nn.Sequential:
    layers: List[nn.Module] = [Bottleneck3d(in_ch, mid_ch, t_kernel, stride)]
    for _ in range(1, blocks):
        layers.append(Bottleneck3d(mid_ch * Bottleneck3d.expansion, mid_ch, t_kernel, 1))
    return nn.Sequential(*layers)


def _stem(out_ch: int, t_kernel: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv3d(3, out_ch, (t_kernel, 7, 7), stride=(1, 2, 2),
                  padding=(t_kernel // 2, 3, 3), bias=False),
        nn.BatchNorm3d(out_ch),
        nn.ReLU(inplace=True),
        nn.MaxPool3d((1, 3, 3), stride=(1, 2, 2), padding=(0, 1, 1)),
    )


def _lateral(fast_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv3d(fast_ch, 2 * fast_ch, (5, 1, 1), stride=(ALPHA, 1, 1),
                  padding=(2, 0, 0), bias=False),
        nn.BatchNorm3d(2 * fast_ch),
        nn.ReLU(inplace=True),
    )


class SlowFastR50(nn.Module):
    """Headless SlowFast feature extractor emitting (slow 2048, fast 256)."""

    def __init__(self):
        super().__init__()
        slow_w, fast_w = 64, 64 // BETA_INV
        self.slow_stem = _stem(slow_w, 1)
        self.fast_stem = _stem(fast_w, 5)
        # lateral input channels: fast stem/stage outputs
        fast_outs = [fast_w, fast_w * 4, fast_w * 8, fast_w * 16]
        self.laterals = nn.ModuleList([_lateral(c) for c in fast_outs])

        slow_t = (1, 1, 3, 3)  # temporal kernels per slow stage
        fast_t = (3, 3, 3, 3)
        strides = (1, 2, 2, 2)
        slow_mids = (64, 128, 256, 512)
        fast_mids = tuple(m // BETA_INV for m in slow_mids)

        slow_in = slow_w + 2 * fast_outs[0]
        fast_in = fast_w
        slow_stages, fast_stages = [], []
        for i in range(4):
            slow_stages.append(_stage(slow_in, slow_mids[i], DEPTHS[i], slow_t[i], strides[i]))
            fast_stages.append(_stage(fast_in, fast_mids[i], DEPTHS[i], fast_t[i], strides[i]))
            fast_in = fast_mids[i] * 4
            slow_in = slow_mids[i] * 4
            if i < 3:
                slow_in += 2 * fast_outs[i + 1]
        self.slow_stages = nn.ModuleList(slow_stages)
        self.fast_stages = nn.ModuleList(fast_stages)

    def forward(self, slow: torch.Tensor, fast: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        s = self.slow_stem(slow)
        f = self.fast_stem(fast)
        s = torch.cat([s, self.laterals[0](f)], dim=1)
        for i in range(4):
            s = self.slow_stages[i](s)
            f = self.fast_stages[i](f)
            if i < 3:
                s = torch.cat([s, self.laterals[i + 1](f)], dim=1)
        s = s.mean(dim=(2, 3, 4))
        f = f.mean(dim=(2, 3, 4))
        return s, f
