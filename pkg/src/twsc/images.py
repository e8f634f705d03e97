"""8-bit image I/O: PNG through Pillow, binary PPM/PGM by hand."""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

__all__ = ["ImageFormatError", "quantize", "read_image", "write_image", "read_pnm", "write_pnm"]

_PNM_EXT = {".ppm", ".pgm", ".pnm"}


class ImageFormatError(ValueError):
    pass


def quantize(image) -> np.ndarray:
    """Clamp to [0, 255] and round half away from zero to uint8."""
    x = np.clip(np.asarray(image, dtype=float), 0.0, 255.0)
    if np.isnan(x).any():
        raise ValueError("cannot quantize NaN pixels")
    # values are nonnegative here, so floor(x + .5) is round-half-away
    return np.floor(x + 0.5).astype(np.uint8)


def _pnm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    tokens: list[int] = []
    i = 2
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and data[j : j + 1].isdigit():
            j += 1
        if j == i:
            raise ImageFormatError("truncated or malformed PNM header")
        tokens.append(int(data[i:j]))
        i = j
    # exactly one whitespace byte separates the header from the raster
    if i >= n or not data[i : i + 1].isspace():
        raise ImageFormatError("malformed PNM header")
    return tokens, i + 1


def read_pnm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"{path}: not a binary PGM/PPM file")
    (w, h, maxval), off = _pnm_tokens(data, 3)
    if maxval != 255:
        raise ImageFormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    ch = 3 if magic == b"P6" else 1
    need = w * h * ch
    raster = data[off : off + need]
    if len(raster) != need:
        raise ImageFormatError(f"{path}: expected {need} pixel bytes, found {len(raster)}")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(h, w, ch)
    return img[:, :, 0].copy() if ch == 1 else img.copy()


def write_pnm(path, image) -> None:
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = quantize(img)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ImageFormatError(f"cannot write shape {img.shape} as PNM")
    h, w = img.shape[:2]
    header = magic + f"\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(img).tobytes())


def read_image(path) -> np.ndarray:
    """Read an 8-bit image as uint8 ``(H, W)`` or ``(H, W, 3)``."""
    path = Path(path)
    if path.suffix.lower() in _PNM_EXT:
        return read_pnm(path)
    from PIL import Image

    try:
        with Image.open(path) as im:
            if im.mode in ("I;16", "I", "F"):
                raise ImageFormatError(f"{path}: only 8-bit images are supported (mode {im.mode})")
            if im.mode in ("L", "RGB"):
                arr = np.asarray(im)
            elif im.mode in ("1", "LA"):
                arr = np.asarray(im.convert("L"))
            else:
                # palette and alpha images: alpha is dropped
                arr = np.asarray(im.convert("RGB"))
    except (OSError, SyntaxError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise ImageFormatError(f"{path}: {exc}") from exc
    return np.array(arr, dtype=np.uint8)


def write_image(path, image) -> None:
    """Quantize and write; the format follows the file extension."""
    path = Path(path)
    img = quantize(image) if np.asarray(image).dtype != np.uint8 else np.asarray(image)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if path.suffix.lower() in _PNM_EXT:
        write_pnm(path, img)
        return
    from PIL import Image

    tmp = path.with_name(path.name + ".part")
    try:
        Image.fromarray(img).save(tmp, format="PNG")
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()
