"""Persistence: GPDW weight files, images, latent JSON, pixel normalization.

GPDW layout (all integers little-endian):

    magic    4 bytes ASCII "GPDW"
    version  u32 = 1
    count    u32 number of tensors
    per tensor:
        name_len u32, name UTF-8, rank u32, dims u32 x rank,
        data float32 x prod(dims), row-major
    trailer  CRC-32 (IEEE) over all preceding bytes, u32

Weights are stored in float32; everything in memory is float64, so a
save -> load round-trip is exact at float32 granularity and load -> save
is a byte-level fixed point.  The CRC is verified before any parsing so
a single flipped byte anywhere always surfaces as a corruption error.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError, ShapeError, VersionError
from .nets import (
    DISC_PREFIX,
    GEN_PREFIX,
    DiscriminatorNet,
    GeneratorNet,
    build_discriminator,
    build_generator,
)

MAGIC = b"GPDW"
VERSION = 1


# ---------------------------------------------------------------------------
# images


@dataclass(frozen=True)
class Image:
    """8-bit image; pixels are (height, width, channels) uint8, channel-interleaved."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if not isinstance(p, np.ndarray) or p.dtype != np.uint8:
            raise ShapeError("Image pixels must be a uint8 ndarray")
        if p.ndim != 3 or p.shape[2] not in (1, 3):
            raise ShapeError(f"Image pixels must be (H, W, C) with C in {{1, 3}}, got {p.shape}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


def image_from_array(arr: np.ndarray) -> Image:
    """Wrap a (H, W) or (H, W, C) uint8 array as an Image."""
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return Image(np.ascontiguousarray(arr, dtype=np.uint8))


def round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def normalize(img: Image) -> np.ndarray:
    """Map 8-bit pixels to tensor space: x = p / 127.5 - 1."""
    return img.pixels.astype(np.float64) / 127.5 - 1.0


def denormalize(t: np.ndarray) -> Image:
    """Map tensor values back to 8-bit pixels.

    Values are clamped to [-1, 1] first, then p = round(x * 127.5 + 127.5)
    with round-half-up, clamped to [0, 255].
    """
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3 or t.shape[2] not in (1, 3):
        raise ShapeError(f"denormalize expects (H, W, C) with C in {{1, 3}}, got {t.shape}")
    p = round_half_up(np.clip(t, -1.0, 1.0) * 127.5 + 127.5)
    return Image(np.clip(p, 0, 255).astype(np.uint8))


# ---------------------------------------------------------------------------
# GPDW tensor container


def _encode_tensors(named: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(named))]
    for name, arr in named.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        name_b = name.encode("utf-8")
        parts.append(struct.pack("<I", len(name_b)))
        parts.append(name_b)
        parts.append(struct.pack("<I", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save_tensors(named: dict[str, np.ndarray], path) -> None:
    """Write an ordered name->tensor mapping as a GPDW file."""
    Path(path).write_bytes(_encode_tensors(named))


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptionError("GPDW file ended mid-record")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_tensors(path) -> dict[str, np.ndarray]:
    """Read a GPDW file back into an ordered name->float64 mapping."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 + 4 + 4:
        raise CorruptionError(f"GPDW file too short ({len(raw)} bytes)")
    body, trailer = raw[:-4], raw[-4:]
    if struct.unpack("<I", trailer)[0] != (zlib.crc32(body) & 0xFFFFFFFF):
        raise CorruptionError("GPDW checksum mismatch")
    cur = _Cursor(body)
    magic = cur.take(4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = cur.u32()
    if version != VERSION:
        raise VersionError(f"unsupported GPDW version {version}")
    count = cur.u32()
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = cur.take(cur.u32()).decode("utf-8")
        rank = cur.u32()
        dims = tuple(cur.u32() for _ in range(rank))
        n_elems = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(cur.take(4 * n_elems), dtype="<f4")
        out[name] = data.astype(np.float64).reshape(dims)
    if cur.pos != len(body):
        raise FormatError(f"{len(body) - cur.pos} trailing bytes after last tensor")
    return out


def save_weights(net: GeneratorNet | DiscriminatorNet, path) -> None:
    """Persist a network's parameters and buffers as GPDW."""
    save_tensors(net.named_tensors(), path)


def load_weights(path) -> GeneratorNet | DiscriminatorNet:
    """Rebuild a network from a GPDW file; architecture is inferred from shapes."""
    tensors = load_tensors(path)
    if f"{GEN_PREFIX}/dense0.w" in tensors:
        dense_w = tensors[f"{GEN_PREFIX}/dense0.w"]
        tconv3 = tensors.get(f"{GEN_PREFIX}/tconv3.w")
        if tconv3 is None:
            raise FormatError("generator file is missing tconv3.w")
        net = build_generator(input_dim=dense_w.shape[1], channels=tconv3.shape[1])
    elif f"{DISC_PREFIX}/conv1.w" in tensors:
        net = build_discriminator(channels=tensors[f"{DISC_PREFIX}/conv1.w"].shape[1])
    else:
        raise FormatError("file holds neither generator nor discriminator tensors")
    expected = net.named_tensors()
    if set(expected) != set(tensors):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise FormatError(f"tensor names do not match architecture (missing {missing}, extra {extra})")
    for name, value in tensors.items():
        net.set_tensor(name, value)
    net.training = False
    return net


# ---------------------------------------------------------------------------
# PNG / PGM / PPM


def read_image(path) -> Image:
    """Load an 8-bit PNG, binary PGM (P5), or binary PPM (P6)."""
    raw = Path(path).read_bytes()
    if raw[:8] == b"\x89PNG\r\n\x1a\n":
        return _read_png(path)
    if raw[:2] in (b"P5", b"P6"):
        return _read_pnm(raw)
    raise FormatError(f"{path}: not a PNG or binary PGM/PPM file")


def write_image(img: Image, path) -> None:
    """Write PNG/PGM/PPM based on the path suffix."""
    suffix = Path(path).suffix.lower()
    if suffix == ".png":
        _write_png(img, path)
    elif suffix == ".pgm":
        if img.channels != 1:
            raise FormatError("PGM holds a single channel; image has 3")
        _write_pnm(img, path, b"P5")
    elif suffix == ".ppm":
        if img.channels != 3:
            raise FormatError("PPM holds three channels; image has 1")
        _write_pnm(img, path, b"P6")
    else:
        raise FormatError(f"unsupported image suffix {suffix!r} (use .png, .pgm, or .ppm)")


def _read_png(path) -> Image:
    from PIL import Image as PILImage

    with PILImage.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.uint8)[:, :, None]
        elif im.mode == "RGB":
            arr = np.asarray(im, dtype=np.uint8)
        else:
            raise FormatError(f"PNG mode {im.mode!r} unsupported; need 8-bit grayscale or RGB")
    return Image(np.ascontiguousarray(arr))


def _write_png(img: Image, path) -> None:
    from PIL import Image as PILImage

    if img.channels == 1:
        pil = PILImage.fromarray(img.pixels[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(img.pixels, mode="RGB")
    pil.save(str(path), format="PNG")


def _read_pnm(raw: bytes) -> Image:
    kind = raw[:2]
    channels = 1 if kind == b"P5" else 3
    pos = 2
    fields = []
    while len(fields) < 3:
        # skip whitespace and comment lines between header tokens
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("malformed PNM header")
        fields.append(raw[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise FormatError(f"malformed PNM header fields {fields}") from exc
    if maxval != 255:
        raise FormatError(f"PNM maxval {maxval} unsupported; need 255")
    n = width * height * channels
    data = raw[pos : pos + n]
    if len(data) != n:
        raise FormatError(f"PNM pixel payload truncated ({len(data)} of {n} bytes)")
    arr = np.frombuffer(data, dtype=np.uint8).reshape(height, width, channels)
    return Image(np.ascontiguousarray(arr))


def _write_pnm(img: Image, path, kind: bytes) -> None:
    header = kind + b"\n%d %d\n255\n" % (img.width, img.height)
    Path(path).write_bytes(header + img.pixels.tobytes())


# ---------------------------------------------------------------------------
# latent JSON


def save_latents(vectors, meta: dict, path) -> None:
    """Write latent vectors as {"dim": d, "vectors": [...], "meta": {...}}."""
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None]
    if arr.ndim != 2:
        raise FormatError(f"latent vectors must be 1-D or 2-D, got shape {arr.shape}")
    doc = {"dim": int(arr.shape[1]), "vectors": arr.tolist(), "meta": meta}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_latents(path):
    """Read a latent JSON file; returns (vectors (n, d), meta dict)."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    try:
        dim = int(doc["dim"])
        rows = doc["vectors"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: missing dim/vectors fields") from exc
    for i, row in enumerate(rows):
        if len(row) != dim:
            raise FormatError(f"{path}: vector {i} has length {len(row)}, expected dim {dim}")
    vectors = np.asarray(rows, dtype=np.float64).reshape(len(rows), dim)
    return vectors, doc.get("meta", {})
