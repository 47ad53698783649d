"""Images, masks, annotation boxes and their on-disk formats.

Only 8-bit binary netpbm files are supported: P6 for RGB images and P5 for
masks, both with maxval 255. Writers always emit the canonical header
``P6\\n<w> <h>\\n255\\n`` so identical images produce identical bytes.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_pixels, check_rgb_array

LEAF = "leaf"
BACKGROUND = "background"
_LABELS = (LEAF, BACKGROUND)
_WHITESPACE = b" \t\n\r\v\f"


class ImageFormatError(ValueError):
    """Base class for netpbm decoding failures."""


class UnsupportedMagicError(ImageFormatError):
    pass


class MalformedHeaderError(ImageFormatError):
    pass


class UnsupportedMaxvalError(ImageFormatError):
    pass


class TruncatedDataError(ImageFormatError):
    pass


class AnnotationError(ValueError):
    """Raised for unparsable annotation lines or boxes outside their image."""


@dataclass(frozen=True, eq=False)
class RgbImage:
    """An 8-bit RGB image stored as a read-only ``(height, width, 3)`` array."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = check_rgb_array(self.pixels)
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, RgbImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """A ``(height, width)`` uint8 mask whose values are exactly 0 or 255."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all((arr == 0) | (arr == 255)):
            raise ValueError("mask values must be 0 or 255")
        arr = arr.astype(np.uint8)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def foreground(self):
        return self.values == 255

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.values.shape, self.values.tobytes()))


@dataclass(frozen=True)
class SampleBox:
    image_id: str
    label: str
    x0: int
    y0: int
    width: int = 10
    height: int = 10

    def __post_init__(self):
        if self.label not in _LABELS:
            raise ValueError(f"label must be one of {_LABELS}, got {self.label!r}")
        if self.width < 1 or self.height < 1:
            raise ValueError("box width and height must be >= 1")
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError("box origin must be non-negative")

    def fits(self, image):
        return (self.x0 + self.width <= image.width
                and self.y0 + self.height <= image.height)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Labelled pixel populations: N leaf pixels and M background pixels."""

    leaf_pixels: np.ndarray = field(default_factory=lambda: np.empty((0, 3), np.uint8))
    background_pixels: np.ndarray = field(default_factory=lambda: np.empty((0, 3), np.uint8))

    def __post_init__(self):
        object.__setattr__(self, "leaf_pixels",
                           check_pixels(self.leaf_pixels, "leaf_pixels", allow_empty=True))
        object.__setattr__(self, "background_pixels",
                           check_pixels(self.background_pixels, "background_pixels",
                                        allow_empty=True))

    @property
    def n_leaf(self):
        return len(self.leaf_pixels)

    @property
    def n_background(self):
        return len(self.background_pixels)

    def __eq__(self, other):
        if not isinstance(other, SampleSet):
            return NotImplemented
        return (np.array_equal(self.leaf_pixels, other.leaf_pixels)
                and np.array_equal(self.background_pixels, other.background_pixels))

    def __hash__(self):
        return hash((self.leaf_pixels.tobytes(), self.background_pixels.tobytes()))

    def to_xy(self):
        """Stack into an sklearn-style ``(X, y)`` pair, leaf rows labelled 1."""
        X = np.concatenate([self.leaf_pixels, self.background_pixels])
        y = np.concatenate([np.ones(self.n_leaf, dtype=int),
                            np.zeros(self.n_background, dtype=int)])
        return X, y


# --- netpbm -----------------------------------------------------------------

def _read_header(data, magic, n_fields=3):
    """Parse ``magic`` and ``n_fields`` integers; return (fields, payload offset)."""
    if data[:2] != magic:
        raise UnsupportedMagicError(
            f"unsupported magic {bytes(data[:2])!r}, expected {magic!r}")
    pos = 2
    values = []
    while len(values) < n_fields:
        # skip whitespace and comments between tokens
        while pos < len(data):
            if data[pos] in _WHITESPACE:
                pos += 1
            elif data[pos] == ord("#"):
                end = data.find(b"\n", pos)
                pos = len(data) if end < 0 else end + 1
            else:
                break
        start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        token = bytes(data[start:pos])
        if not token:
            raise MalformedHeaderError("header ended before width, height and maxval")
        if not token.isdigit():
            raise MalformedHeaderError(f"non-numeric header token {token!r}")
        values.append(int(token))
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise MalformedHeaderError("missing whitespace after maxval")
    width, height, maxval = values
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxvalError(f"maxval must be 255, got {maxval}")
    return (width, height), pos + 1


def _payload(data, offset, count):
    if len(data) - offset < count:
        raise TruncatedDataError(
            f"expected {count} payload bytes, found {len(data) - offset}")
    return np.frombuffer(bytes(data[offset:offset + count]), dtype=np.uint8)


def read_ppm(data):
    """Decode a binary P6 byte string into an :class:`RgbImage`."""
    data = bytes(data)
    (width, height), offset = _read_header(data, b"P6")
    flat = _payload(data, offset, width * height * 3)
    return RgbImage(flat.reshape(height, width, 3))


def write_ppm(image):
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.pixels.tobytes()


def read_pgm(data):
    """Decode a binary P5 byte string into a ``(height, width)`` uint8 array."""
    data = bytes(data)
    (width, height), offset = _read_header(data, b"P5")
    return _payload(data, offset, width * height).reshape(height, width).copy()


def read_mask(data):
    return BinaryMask(read_pgm(data))


def write_mask(mask):
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    return header + mask.values.tobytes()


def load_image(path):
    return read_ppm(Path(path).read_bytes())


def save_image(image, path):
    Path(path).write_bytes(write_ppm(image))


# --- annotations ------------------------------------------------------------

def parse_annotations(text):
    """Parse ``<image_id> <leaf|background> <x0> <y0> <w> <h>`` lines.

    Blank lines and ``#`` comments are ignored. Boxes keep file order.
    """
    boxes = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 6:
            raise AnnotationError(f"line {lineno}: expected 6 fields, got {len(parts)}")
        image_id, label = parts[0], parts[1].lower()
        try:
            x0, y0, w, h = (int(p) for p in parts[2:])
        except ValueError:
            raise AnnotationError(f"line {lineno}: box coordinates must be integers") from None
        try:
            boxes.append(SampleBox(image_id, label, x0, y0, w, h))
        except ValueError as exc:
            raise AnnotationError(f"line {lineno}: {exc}") from None
    return boxes


def format_annotations(boxes):
    return "".join(f"{b.image_id} {b.label} {b.x0} {b.y0} {b.width} {b.height}\n"
                   for b in boxes)


def extract_samples(images, boxes):
    """Collect the pixels inside every box, split by label.

    Boxes are visited in input order and each box is read row by row, so the
    result is fully determined by the inputs. Overlapping boxes contribute
    their shared pixels once per box.
    """
    leaf, background = [], []
    for box in boxes:
        if box.image_id not in images:
            raise AnnotationError(f"unknown image id {box.image_id!r}")
        image = images[box.image_id]
        if not box.fits(image):
            raise AnnotationError(
                f"box ({box.x0}, {box.y0}, {box.width}, {box.height}) lies outside "
                f"{box.image_id!r} ({image.width}x{image.height})")
        patch = image.pixels[box.y0:box.y0 + box.height, box.x0:box.x0 + box.width]
        (leaf if box.label == LEAF else background).append(patch.reshape(-1, 3))
    empty = np.empty((0, 3), np.uint8)
    return SampleSet(np.concatenate(leaf) if leaf else empty,
                     np.concatenate(background) if background else empty)
