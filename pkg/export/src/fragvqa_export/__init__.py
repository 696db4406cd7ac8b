"""fragvqa-export: backbone export scripts for the fragvqa neural backend."""

from .export import (MotionExport, ParityError, SpatialExport,
                     export_motion_backbone, export_spatial_backbone)
from .slowfast import FAST_DIM, SLOW_DIM, SlowFastR50
from .swin import VARIANTS, build_swin, spatial_dim

__version__ = "0.1.0"
