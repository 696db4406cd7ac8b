"""Command-line interface: fragment, extract, train, predict, eval, bench.

Exit codes: 1 usage/config, 2 I/O, 3 format, 4 backend.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import metrics as metrics_mod
from . import regressor as reg
from .config import MODELS_DIR_ENV, PipelineConfig, load_pipeline_config
from .errors import (BackendError, ConfigError, FormatError, FragVqaError,
                     ParseError, UnsupportedFormatError)
from .features import (read_dvqf, read_dvqf_sidecar, write_dvqf,
                       write_dvqf_sidecar)
from .fragmentation import fragment_stream, top_t_count
from .frame_io import open_video
from .pipeline import bench_video, extract_video, pipeline_hash, write_bench_csv

EXIT_USAGE = 1
EXIT_IO = 2
EXIT_FORMAT = 3
EXIT_BACKEND = 4


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML-style pipeline config file")
    parser.add_argument("--patch-size", type=int, help="fragmentation patch size p")
    parser.add_argument("--target-size", type=int, help="assembled fragment side s")
    parser.add_argument("--backend", choices=["toy", "neural"], help="feature backend")
    parser.add_argument("--models-dir", help=f"neural model dir (or ${MODELS_DIR_ENV})")
    parser.add_argument("--jobs", type=int, help="parallel videos (default 1)")
    parser.add_argument("--seed", type=int, help="seed override for training/eval")
    parser.add_argument("--sampling", choices=["all", "every-other"],
                        help="frame sampling before chunking")
    parser.add_argument("--chunk-length", type=int, help="override chunk length L_c")


def _config_from_args(args) -> PipelineConfig:
    return load_pipeline_config(
        args.config,
        patch_size=args.patch_size,
        target_size=args.target_size,
        backend_kind=args.backend,
        models_dir=args.models_dir,
        sampling=args.sampling,
        chunk_length=args.chunk_length,
        seed=args.seed,
        jobs=args.jobs,
    )


def read_labels_csv(path) -> Dict[str, float]:
    """Parse the `video_id,mos` labels file (one header row)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip().lower() for c in rows[0]] != ["video_id", "mos"]:
        raise FormatError(f"{path}: expected header 'video_id,mos'")
    labels = {}
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != 2:
            raise FormatError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
        try:
            labels[row[0]] = float(row[1])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: bad MOS value {row[1]!r}") from exc
    return labels


def _video_id(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_fragment(args) -> int:
    from PIL import Image

    cfg = _config_from_args(args)
    os.makedirs(args.out_dir, exist_ok=True)
    meta, frames = open_video(args.video)
    count = 0
    grid = None
    for triplet in fragment_stream(frames, cfg.frag):
        stem = os.path.join(args.out_dir, f"frame{triplet.source_index:06d}")
        for tag, image in (("resized", triplet.resized_frame),
                           ("residual", triplet.frag_residual),
                           ("fragment", triplet.frag_frame)):
            Image.fromarray(image).save(f"{stem}_{tag}.png")
        with open(f"{stem}_coords.json", "w") as fh:
            json.dump({"source_index": triplet.source_index,
                       "coords": [list(c) for c in triplet.coords],
                       "scores": triplet.scores}, fh)
            fh.write("\n")
        count += 1
        if grid is None:
            grid = (meta.height // cfg.frag.patch_size, meta.width // cfg.frag.patch_size)
    t = top_t_count(cfg.frag.target_size, cfg.frag.patch_size)
    print(f"frames: {count + 1}")
    print(f"triplets: {count}")
    print(f"grid: {grid[0]}x{grid[1]}" if grid else "grid: n/a")
    print(f"T: {t}")
    return 0


def cmd_extract(args) -> int:
    cfg = _config_from_args(args)
    videos: List[str] = list(args.videos)
    if args.list:
        with open(args.list) as fh:
            videos.extend(line.strip() for line in fh if line.strip())

    existing_dim: Optional[int] = None
    entries: List[Tuple[str, np.ndarray]] = []
    if os.path.exists(args.out):
        existing_dim, existing = read_dvqf(args.out)
        entries = list(existing.items())
    sidecar = read_dvqf_sidecar(args.out)
    labels = read_labels_csv(args.labels) if args.labels else {}

    dim = cfg.backend.fused_dim
    if existing_dim is not None and existing_dim != dim:
        raise FormatError(
            f"{args.out} holds dim {existing_dim} features, config produces {dim}"
        )
    known = {vid for vid, _ in entries}
    todo = []
    for path in videos:
        vid = _video_id(path)
        if vid in known:
            _log(f"warning: {vid} already in {args.out}, skipping")
            continue
        known.add(vid)
        todo.append((vid, path))

    def one(item):
        vid, path = item
        feature, chunk_count = extract_video(path, cfg)
        _log(f"extracted {vid}: dim {feature.dim}, {chunk_count} chunks")
        return vid, path, feature, chunk_count

    if cfg.jobs > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(one, todo))
    else:
        results = [one(item) for item in todo]

    for vid, path, feature, chunk_count in results:
        entries.append((vid, feature.values))
        sidecar[vid] = {
            "path": os.path.abspath(path),
            "mos": labels.get(vid),
            "chunk_count": chunk_count,
        }
    write_dvqf(args.out, dim, entries)
    write_dvqf_sidecar(args.out, sidecar)
    print(f"wrote {args.out}: {len(entries)} videos, dim {dim}")
    return 0


def _load_features_and_labels(features_path, labels_path):
    dim, table = read_dvqf(features_path)
    labels = read_labels_csv(labels_path)
    ids = [vid for vid in table if vid in labels]
    missing = [vid for vid in table if vid not in labels]
    if missing:
        _log(f"warning: {len(missing)} feature ids without labels: {missing[:5]}...")
    if not ids:
        raise FormatError("no overlap between feature ids and labels")
    x = np.stack([table[vid] for vid in ids]).astype(np.float64)
    y = np.array([labels[vid] for vid in ids], dtype=np.float64)
    return ids, x, y


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    ids, x, y = _load_features_and_labels(args.features, args.labels)
    _log(f"training on {len(ids)} videos, dim {x.shape[1]}")
    model, log = reg.train(x, y, cfg.train)
    reg.save_checkpoint(args.out, model, cfg.train,
                        extra={"selected": log.selected, "pipeline": pipeline_hash(cfg)})
    base, _ = os.path.splitext(args.out)
    log.write_csv(base + "_log.csv")
    from .report import save_training_figure
    save_training_figure(base + "_log.png", log)
    print(f"model: {args.out} (selected: {log.selected})")
    print(f"best val RMSE: {log.best_val_rmse:.6f}  swa val RMSE: {log.swa_val_rmse:.6f}")
    return 0


def cmd_predict(args) -> int:
    model, _ = reg.load_checkpoint(args.model)
    if args.features:
        _, table = read_dvqf(args.features)
        rows = [(vid, float(reg.predict(model, vec)[0])) for vid, vec in table.items()]
    else:
        cfg = _config_from_args(args)
        rows = []
        for path in args.videos:
            feature, _ = extract_video(path, cfg)
            rows.append((_video_id(path), float(reg.predict(model, feature.values)[0])))
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        out.write("video_id,score\n")
        for vid, score in rows:
            out.write(f"{vid},{score:.6f}\n")
    finally:
        if args.out:
            out.close()
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    ids, x, y = _load_features_and_labels(args.features, args.labels)
    outcome = metrics_mod.repeated_eval(x, y, cfg.train, repeats=args.repeats)
    med = outcome.median

    header = f"{'split':>8} {'SRCC':>8} {'PLCC':>8} {'KRCC':>8} {'RMSE':>8} {'n':>5}"
    print(header)
    print("-" * len(header))
    for res in outcome.repeats:
        print(f"{res.repeat_index:>8d} {res.srcc:8.4f} {res.plcc:8.4f} "
              f"{res.krcc:8.4f} {res.rmse:8.4f} {res.n:>5d}")
    print(f"{'median':>8} {med.srcc:8.4f} {med.plcc:8.4f} {med.krcc:8.4f} "
          f"{med.rmse:8.4f} {med.n:>5d}")

    if args.out:
        base, _ = os.path.splitext(args.out)
        with open(base + ".csv", "w") as fh:
            fh.write("repeat,srcc,plcc,krcc,rmse,n\n")
            for res in outcome.repeats:
                fh.write(f"{res.repeat_index},{res.srcc:.10g},{res.plcc:.10g},"
                         f"{res.krcc:.10g},{res.rmse:.10g},{res.n}\n")
            fh.write(f"median,{med.srcc:.10g},{med.plcc:.10g},{med.krcc:.10g},"
                     f"{med.rmse:.10g},{med.n}\n")
        with open(base + ".json", "w") as fh:
            json.dump({"median": med.as_dict(),
                       "repeats": [r.as_dict() for r in outcome.repeats]}, fh, indent=2)
            fh.write("\n")
        from .report import save_eval_figure
        save_eval_figure(base + ".png", outcome.repeats)
    return 0


def cmd_bench(args) -> int:
    cfg = _config_from_args(args)
    results = []
    for path in args.videos:
        label = _video_id(path)
        _log(f"benchmarking {label} ({args.repeats} repeats)")
        results.append(bench_video(path, label, cfg, repeats=args.repeats))
    colw = max(len(r.label) for r in results)
    print(f"{'input':>{colw}} {'decode':>9} {'fragment':>9} {'extract':>9} "
          f"{'predict':>9} {'end2end':>9}")
    for r in results:
        print(f"{r.label:>{colw}} " + " ".join(
            f"{r.stage_means[s]:9.4f}" for s in ("decode", "fragment", "extract", "predict")
        ) + f" {r.end_to_end:9.4f}")
    if args.out:
        base, _ = os.path.splitext(args.out)
        write_bench_csv(base + ".csv", results)
        from .report import save_bench_figure
        save_bench_figure(base + ".png", results)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fragvqa",
        description="No-reference video quality assessment from patch-difference fragments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fragment", help="dump per-frame triplets and coords")
    _add_common(p)
    p.add_argument("video", help="input video (.y4m, .rgb/.raw with sidecar, or -)")
    p.add_argument("out_dir", help="output directory for PNGs and coords JSON")
    p.set_defaults(func=cmd_fragment)

    p = sub.add_parser("extract", help="extract per-video features into a DVQF file")
    _add_common(p)
    p.add_argument("videos", nargs="*", help="input videos")
    p.add_argument("--list", help="file with one video path per line")
    p.add_argument("--labels", help="labels CSV to embed MOS in the sidecar")
    p.add_argument("-o", "--out", required=True, help="output DVQF path")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train the quality regressor")
    _add_common(p)
    p.add_argument("features", help="DVQF feature file")
    p.add_argument("labels", help="labels CSV (video_id,mos)")
    p.add_argument("-o", "--out", required=True, help="output checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score videos or precomputed features")
    _add_common(p)
    p.add_argument("model", help="trained checkpoint")
    p.add_argument("videos", nargs="*", help="videos to score (unless --features)")
    p.add_argument("--features", help="DVQF file to score instead of videos")
    p.add_argument("-o", "--out", help="output scores CSV (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="repeated train/test evaluation with medians")
    _add_common(p)
    p.add_argument("features", help="DVQF feature file")
    p.add_argument("labels", help="labels CSV (video_id,mos)")
    p.add_argument("--repeats", type=int, default=21, help="repeat count (default 21)")
    p.add_argument("-o", "--out", help="output basename for .csv/.json/.png")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-stage runtime over repeated runs")
    _add_common(p)
    p.add_argument("videos", nargs="+", help="videos (e.g. same content at several resolutions)")
    p.add_argument("--repeats", type=int, default=10, help="runs per video (default 10)")
    p.add_argument("-o", "--out", help="output basename for .csv/.png")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE
    except BackendError as exc:
        _log(f"backend error: {exc}")
        return EXIT_BACKEND
    except (ParseError, UnsupportedFormatError, FormatError) as exc:
        _log(f"format error: {exc}")
        return EXIT_FORMAT
    except FragVqaError as exc:
        _log(f"error: {exc}")
        return EXIT_FORMAT
    except OSError as exc:
        _log(f"io error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
