"""fragvqa: no-reference video quality assessment from patch-difference fragments."""

from .chunking import ChunkConfig, ChunkTriplet, chunk_triplets
from .config import PipelineConfig, load_pipeline_config
from .errors import (BackendError, ConfigError, FormatError, FragVqaError,
                     ParseError, UnsupportedFormatError)
from .features import (BackendSpec, ChunkFeatures, VideoFeature,
                       aggregate_video, fuse_chunk, make_backend,
                       read_dvqf, toy_backend_eval, write_dvqf)
from .fragmentation import (FragConfig, FragmentTriplet, Residual,
                            assemble_fragment, compute_residual, fragment_pair,
                            fragment_stream, patch_scores, resize_frame,
                            select_top_patches, top_t_count)
from .frame_io import Frame, VideoMeta, open_raw_rgb, open_video, open_y4m
from .metrics import EvalResult, evaluate, kfold_eval, krcc, plcc, repeated_eval, rmse, srcc
from .pipeline import bench_video, extract_video
from .regressor import (MlpModel, TrainConfig, composite_loss, load_checkpoint,
                        mae_loss, predict, rank_loss, save_checkpoint, train)

__version__ = "0.1.0"
