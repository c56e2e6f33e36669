"""Binary netpbm codecs: PPM (P6) for color images, PGM (P5) for grayscale
and label maps. Only 8-bit (maxval 255) files are supported."""

import numpy as np

from .errors import ValidationError


def _read_header(data, path, expected_magic):
    # header tokens separated by whitespace; '#' starts a comment to EOL
    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            c = data[pos:pos + 1]
            if c == b"#":
                while pos < len(data) and data[pos:pos + 1] != b"\n":
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValidationError(f"{path}: truncated header at byte offset {start}")
        return data[start:pos]

    magic = token()
    if magic != expected_magic:
        raise ValidationError(
            f"{path}: bad magic {magic!r} at byte offset 0, expected {expected_magic!r}")
    try:
        width = int(token())
        height = int(token())
        maxval_at = pos
        maxval = int(token())
    except ValueError:
        raise ValidationError(f"{path}: malformed header near byte offset {pos}")
    if maxval != 255:
        raise ValidationError(f"{path}: maxval must be 255, got {maxval} at byte offset {maxval_at}")
    if width <= 0 or height <= 0:
        raise ValidationError(f"{path}: non-positive image size {width}x{height}")
    pos += 1  # single whitespace byte before the raster
    return width, height, pos


def read_ppm(path):
    """Read a binary P6 file into a uint8 (H,W,3) array."""
    with open(path, "rb") as f:
        data = f.read()
    w, h, pos = _read_header(data, path, b"P6")
    need = w * h * 3
    raster = data[pos:pos + need]
    if len(raster) != need:
        raise ValidationError(
            f"{path}: raster truncated at byte offset {pos + len(raster)} "
            f"(need {need} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).copy()


def read_pgm(path):
    """Read a binary P5 file into a uint8 (H,W) array."""
    with open(path, "rb") as f:
        data = f.read()
    w, h, pos = _read_header(data, path, b"P5")
    need = w * h
    raster = data[pos:pos + need]
    if len(raster) != need:
        raise ValidationError(
            f"{path}: raster truncated at byte offset {pos + len(raster)} "
            f"(need {need} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def write_ppm(path, image):
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValidationError(f"write_ppm expects uint8 (H,W,3), got {img.dtype} {img.shape}")
    h, w, _ = img.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def write_pgm(path, image):
    img = np.asarray(image)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValidationError(f"write_pgm expects uint8 (H,W), got {img.dtype} {img.shape}")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())
