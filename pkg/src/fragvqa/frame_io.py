"""Video ingestion: YUV4MPEG2 streams and raw interleaved RGB24 files.

Compressed codecs are out of scope; decode externally and pipe Y4M to
stdin (`ffmpeg -i in.mp4 -f yuv4mpegpipe - | fragvqa ...`). Frames are
decoded to full-range RGB via BT.601 with round-half-away-from-zero and
nearest-neighbor chroma upsampling, so byte output is deterministic.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import BinaryIO, Iterator, Optional, Tuple

import numpy as np

from .errors import FormatError, ParseError, UnsupportedFormatError

Y4M_MAGIC = b"YUV4MPEG2"

# BT.601 luma weights; full-range conversion coefficients derive from them.
_KR, _KB = 0.299, 0.114
_KG = 1.0 - _KR - _KB


@dataclass(frozen=True)
class VideoMeta:
    """Stream-level metadata; frame_count is None when unknown (pipes)."""

    width: int
    height: int
    fps_num: int
    fps_den: int
    frame_count: Optional[int] = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise FormatError(f"invalid dimensions {self.width}x{self.height}")
        if self.fps_num <= 0 or self.fps_den <= 0:
            raise FormatError(f"invalid frame rate {self.fps_num}:{self.fps_den}")

    @property
    def frame_rate(self) -> Fraction:
        return Fraction(self.fps_num, self.fps_den)

    def nominal_fps(self) -> int:
        """Frame rate rounded to the nearest integer (half rounds up)."""
        return max(1, int(np.floor(self.fps_num / self.fps_den + 0.5)))


@dataclass(frozen=True)
class Frame:
    """One decoded picture: (height, width, 3) uint8 RGB, plus its ordinal."""

    index: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise FormatError(f"frame pixels must be HxWx3, got {self.pixels.shape}")
        if self.pixels.dtype != np.uint8:
            raise FormatError(f"frame pixels must be uint8, got {self.pixels.dtype}")
        self.pixels.setflags(write=False)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.trunc(x + np.copysign(0.5, x))


def yuv_to_rgb(y: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Full-range BT.601 YUV -> RGB, all planes full resolution uint8."""
    yf = y.astype(np.float64)
    cb = u.astype(np.float64) - 128.0
    cr = v.astype(np.float64) - 128.0
    r = yf + 2.0 * (1.0 - _KR) * cr
    g = yf - (2.0 * (1.0 - _KB) * _KB / _KG) * cb - (2.0 * (1.0 - _KR) * _KR / _KG) * cr
    b = yf + 2.0 * (1.0 - _KB) * cb
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(_round_half_away(rgb), 0, 255).astype(np.uint8)


def rgb_to_yuv(rgb: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`yuv_to_rgb` (full-range BT.601, full-resolution planes)."""
    f = rgb.astype(np.float64)
    y = _KR * f[..., 0] + _KG * f[..., 1] + _KB * f[..., 2]
    cb = (f[..., 2] - y) / (2.0 * (1.0 - _KB)) + 128.0
    cr = (f[..., 0] - y) / (2.0 * (1.0 - _KR)) + 128.0
    out = []
    for plane in (y, cb, cr):
        out.append(np.clip(_round_half_away(plane), 0, 255).astype(np.uint8))
    return out[0], out[1], out[2]


# Chroma plane dimensions per supported subsampling tag, as (x_div, y_div).
_SUBSAMPLING = {"420": (2, 2), "422": (2, 1), "444": (1, 1)}


def _parse_y4m_header(line: bytes, offset: int) -> Tuple[VideoMeta, Tuple[int, int]]:
    fields = line.decode("ascii", errors="replace").split()
    if not fields or fields[0] != "YUV4MPEG2":
        raise ParseError(f"not a YUV4MPEG2 stream (got {fields[:1] or 'empty header'})", offset)
    width = height = None
    fps_num, fps_den = 25, 1
    chroma = "420"
    for tag in fields[1:]:
        key, val = tag[0], tag[1:]
        try:
            if key == "W":
                width = int(val)
            elif key == "H":
                height = int(val)
            elif key == "F":
                num, den = val.split(":")
                fps_num, fps_den = int(num), int(den)
            elif key == "C":
                chroma = val
            # I (interlacing), A (aspect) and X (extensions) are ignored.
        except ValueError as exc:
            raise ParseError(f"malformed Y4M tag {tag!r}: {exc}", offset) from exc
    if width is None or height is None:
        raise ParseError("Y4M header missing W or H tag", offset)
    # normalize e.g. C420jpeg / C420mpeg2 / C420paldv to 420 (siting differences
    # are absorbed by nearest-neighbor upsampling)
    if chroma[:3] in _SUBSAMPLING and chroma[3:] in ("", "jpeg", "mpeg2", "paldv"):
        base = chroma[:3]
    else:
        raise UnsupportedFormatError(f"unsupported Y4M colorspace tag C{chroma}")
    xd, yd = _SUBSAMPLING[base]
    if width % xd or height % yd:
        raise FormatError(f"dimensions {width}x{height} not divisible for C{chroma}")
    return VideoMeta(width, height, fps_num, fps_den), (xd, yd)


def _upsample_nearest(plane: np.ndarray, xd: int, yd: int) -> np.ndarray:
    if xd == 1 and yd == 1:
        return plane
    return np.repeat(np.repeat(plane, yd, axis=0), xd, axis=1)


def open_y4m(source) -> Tuple[VideoMeta, Iterator[Frame]]:
    """Open a Y4M file path, file object, or bytes; returns (meta, frame iterator).

    Only 8-bit 4:2:0 / 4:2:2 / 4:4:4 streams are supported. The iterator
    is single-consumer and yields immutable Frames with increasing index.
    """
    if isinstance(source, (str, os.PathLike)):
        stream: BinaryIO = open(source, "rb")
        owns = True
    elif isinstance(source, (bytes, bytearray)):
        stream, owns = io.BytesIO(source), True
    else:
        stream, owns = source, False

    header = bytearray()
    while True:
        ch = stream.read(1)
        if not ch:
            raise ParseError("EOF before end of Y4M stream header", len(header))
        if ch == b"\n":
            break
        header += ch
        if len(header) > 512:
            raise ParseError("Y4M stream header exceeds 512 bytes", len(header))
    meta, (xd, yd) = _parse_y4m_header(bytes(header), 0)
    pos = len(header) + 1

    def frames() -> Iterator[Frame]:
        nonlocal pos
        w, h = meta.width, meta.height
        y_size = w * h
        c_size = (w // xd) * (h // yd)
        index = 0
        try:
            while True:
                line = bytearray()
                ch = stream.read(1)
                if not ch:
                    return  # clean end of stream
                while ch != b"\n":
                    line += ch
                    if len(line) > 512:
                        raise ParseError("Y4M frame header exceeds 512 bytes", pos)
                    ch = stream.read(1)
                    if not ch:
                        raise ParseError("EOF inside Y4M frame header", pos + len(line))
                if not bytes(line).startswith(b"FRAME"):
                    raise ParseError(f"expected FRAME marker, got {bytes(line)[:16]!r}", pos)
                pos += len(line) + 1
                payload = stream.read(y_size + 2 * c_size)
                if len(payload) != y_size + 2 * c_size:
                    raise ParseError(
                        f"truncated frame {index}: expected {y_size + 2 * c_size} "
                        f"payload bytes, received {len(payload)}",
                        pos,
                    )
                y = np.frombuffer(payload, np.uint8, y_size).reshape(h, w)
                u = np.frombuffer(payload, np.uint8, c_size, y_size).reshape(h // yd, w // xd)
                v = np.frombuffer(payload, np.uint8, c_size, y_size + c_size).reshape(h // yd, w // xd)
                pos += len(payload)
                rgb = yuv_to_rgb(y, _upsample_nearest(u, xd, yd), _upsample_nearest(v, xd, yd))
                yield Frame(index=index, pixels=rgb)
                index += 1
        finally:
            if owns:
                stream.close()

    return meta, frames()


def write_y4m(path, frames, meta: VideoMeta, chroma: str = "420") -> None:
    """Encode RGB frames to a Y4M file (full-range BT.601, box-averaged chroma)."""
    if chroma not in _SUBSAMPLING:
        raise UnsupportedFormatError(f"unsupported target colorspace C{chroma}")
    xd, yd = _SUBSAMPLING[chroma]
    with open(path, "wb") as fh:
        fh.write(
            f"YUV4MPEG2 W{meta.width} H{meta.height} "
            f"F{meta.fps_num}:{meta.fps_den} Ip A1:1 C{chroma}\n".encode("ascii")
        )
        for frame in frames:
            y, u, v = rgb_to_yuv(frame.pixels)
            if xd > 1 or yd > 1:
                h, w = u.shape
                u = _round_half_away(
                    u.astype(np.float64).reshape(h // yd, yd, w // xd, xd).mean(axis=(1, 3))
                ).astype(np.uint8)
                v = _round_half_away(
                    v.astype(np.float64).reshape(h // yd, yd, w // xd, xd).mean(axis=(1, 3))
                ).astype(np.uint8)
            fh.write(b"FRAME\n")
            fh.write(y.tobytes())
            fh.write(u.tobytes())
            fh.write(v.tobytes())


def sidecar_path(path) -> str:
    return str(path) + ".json"


def read_sidecar_meta(path) -> VideoMeta:
    """Read the JSON sidecar next to a raw RGB file."""
    with open(sidecar_path(path)) as fh:
        doc = json.load(fh)
    try:
        return VideoMeta(
            width=int(doc["width"]),
            height=int(doc["height"]),
            fps_num=int(doc["fps_num"]),
            fps_den=int(doc["fps_den"]),
        )
    except KeyError as exc:
        raise FormatError(f"sidecar {sidecar_path(path)} missing key {exc}") from exc


def open_raw_rgb(path, meta: VideoMeta) -> Tuple[VideoMeta, Iterator[Frame]]:
    """Open a raw interleaved RGB24 file; frame count comes from the file size."""
    frame_bytes = meta.width * meta.height * 3
    size = os.path.getsize(path)
    if size % frame_bytes:
        raise FormatError(
            f"{path}: size {size} is not a multiple of frame size {frame_bytes} "
            f"({meta.width}x{meta.height}x3)"
        )
    count = size // frame_bytes
    full_meta = VideoMeta(meta.width, meta.height, meta.fps_num, meta.fps_den, frame_count=count)

    def frames() -> Iterator[Frame]:
        with open(path, "rb") as fh:
            for index in range(count):
                buf = fh.read(frame_bytes)
                if len(buf) != frame_bytes:
                    raise ParseError(
                        f"truncated raw RGB frame {index}: expected {frame_bytes} "
                        f"bytes, received {len(buf)}",
                        index * frame_bytes + len(buf),
                    )
                pixels = np.frombuffer(buf, np.uint8).reshape(meta.height, meta.width, 3)
                yield Frame(index=index, pixels=pixels)

    return full_meta, frames()


def write_raw_rgb(path, frames, meta: VideoMeta) -> int:
    """Write frames as raw RGB24 plus the JSON sidecar; returns frame count."""
    count = 0
    with open(path, "wb") as fh:
        for frame in frames:
            if frame.width != meta.width or frame.height != meta.height:
                raise FormatError(
                    f"frame {frame.index} is {frame.width}x{frame.height}, "
                    f"expected {meta.width}x{meta.height}"
                )
            fh.write(frame.pixels.tobytes())
            count += 1
    with open(sidecar_path(path), "w") as fh:
        json.dump(
            {"width": meta.width, "height": meta.height,
             "fps_num": meta.fps_num, "fps_den": meta.fps_den},
            fh,
        )
        fh.write("\n")
    return count


def open_video(path) -> Tuple[VideoMeta, Iterator[Frame]]:
    """Dispatch on extension: .y4m streams, .rgb/.raw files with JSON sidecar, '-' = stdin Y4M."""
    name = str(path)
    if name == "-":
        import sys

        return open_y4m(sys.stdin.buffer)
    if name.lower().endswith(".y4m"):
        return open_y4m(name)
    if name.lower().endswith((".rgb", ".raw")):
        return open_raw_rgb(name, read_sidecar_meta(name))
    raise UnsupportedFormatError(
        f"cannot determine container for {name!r} (expected .y4m, .rgb/.raw, or '-')"
    )
