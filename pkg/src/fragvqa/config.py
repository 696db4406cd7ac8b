"""Pipeline configuration: TOML-style config files and cross-field validation."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

from .chunking import ChunkConfig
from .errors import ConfigError
from .features import KIND_NEURAL, KIND_TOY, BackendSpec, spec_from_manifest
from .fragmentation import FragConfig
from .regressor import TrainConfig

MODELS_DIR_ENV = "FRAGVQA_MODELS_DIR"


def parse_toml_subset(text: str) -> dict:
    """Parse the small TOML subset used for config files.

    Supported: [section] headers, scalar `key = value` pairs (strings,
    ints, floats, booleans) and flat arrays of scalars. Comments start
    with '#'.
    """
    doc: dict = {}
    section = doc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise ConfigError(f"line {lineno}: empty section name")
            section = doc.setdefault(name, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, _, value = line.partition("=")
        section[key.strip()] = _parse_value(value.strip(), lineno)
    return doc


def _parse_value(token: str, lineno: int):
    if not token:
        raise ConfigError(f"line {lineno}: missing value")
    if token.startswith("[") and token.endswith("]"):
        inner = token[1:-1].strip()
        return [_parse_value(t.strip(), lineno) for t in inner.split(",")] if inner else []
    if token[0] in "\"'":
        if len(token) < 2 or token[-1] != token[0]:
            raise ConfigError(f"line {lineno}: unterminated string {token!r}")
        return token[1:-1]
    if token == "true":
        return True
    if token == "false":
        return False
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        raise ConfigError(f"line {lineno}: cannot parse value {token!r}") from None


@dataclass
class PipelineConfig:
    frag: FragConfig = field(default_factory=FragConfig)
    chunk: ChunkConfig = field(default_factory=ChunkConfig)
    backend: BackendSpec = field(default_factory=BackendSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    models_dir: Optional[str] = None
    jobs: int = 1

    def validate(self) -> "PipelineConfig":
        if self.backend.input_size != self.frag.target_size:
            raise ConfigError(
                f"backend input_size {self.backend.input_size} != "
                f"fragmentation target_size {self.frag.target_size}"
            )
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return self


def _pick(section: dict, dataclass_type, **overrides):
    known = {f for f in dataclass_type.__dataclass_fields__}
    kwargs = {k: v for k, v in section.items() if k in known}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown {dataclass_type.__name__} keys: {sorted(unknown)}")
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return dataclass_type(**kwargs)


def load_pipeline_config(path: Optional[str] = None, *,
                         patch_size: Optional[int] = None,
                         target_size: Optional[int] = None,
                         backend_kind: Optional[str] = None,
                         models_dir: Optional[str] = None,
                         sampling: Optional[str] = None,
                         chunk_length: Optional[int] = None,
                         seed: Optional[int] = None,
                         jobs: Optional[int] = None) -> PipelineConfig:
    """Build a validated PipelineConfig from an optional file plus CLI overrides."""
    doc: dict = {}
    if path:
        try:
            with open(path) as fh:
                doc = parse_toml_subset(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    if sampling is not None:
        sampling = {"all": "all_frames", "every-other": "every_other_frame"}.get(sampling, sampling)

    frag = _pick(doc.get("frag", {}), FragConfig,
                 patch_size=patch_size, target_size=target_size)
    chunk = _pick(doc.get("chunk", {}), ChunkConfig,
                  sampling=sampling, chunk_length=chunk_length)

    backend_doc = dict(doc.get("backend", {}))
    kind_alias = {"toy": KIND_TOY, "neural": KIND_NEURAL}
    kind = kind_alias.get(backend_kind or backend_doc.pop("kind", "toy"))
    if kind is None:
        raise ConfigError(f"backend kind must be 'toy' or 'neural'")
    resolved_models = models_dir or backend_doc.pop("models_dir", None) \
        or os.environ.get(MODELS_DIR_ENV)
    if kind == KIND_NEURAL:
        if not resolved_models:
            raise ConfigError(
                f"neural backend needs --models-dir or ${MODELS_DIR_ENV}"
            )
        backend = spec_from_manifest(resolved_models, input_size=frag.target_size)
    else:
        backend_doc.setdefault("input_size", frag.target_size)
        if "mean" in backend_doc:
            backend_doc["mean"] = tuple(backend_doc["mean"])
        if "std" in backend_doc:
            backend_doc["std"] = tuple(backend_doc["std"])
        backend = _pick(backend_doc, BackendSpec, kind=KIND_TOY)

    train = _pick(doc.get("train", {}), TrainConfig, seed=seed)
    io_doc = doc.get("io", {})
    cfg = PipelineConfig(
        frag=frag, chunk=chunk, backend=backend, train=train,
        models_dir=resolved_models,
        jobs=jobs if jobs is not None else int(io_doc.get("jobs", 1)),
    )
    return cfg.validate()
