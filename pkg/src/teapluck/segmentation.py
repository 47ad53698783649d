"""Linear colour-index scoring and pointwise binarisation.

A pixel is tender leaf when ``x*r + y*g + z*b >= T``. Scores are always
evaluated as ``(x*r + y*g) + z*b`` in float64, elementwise, so the vectorised
paths here and in :mod:`teapluck.fitting` agree bit for bit with a scalar
Python evaluation of the same expression.
"""

import math
from dataclasses import astuple, dataclass

import numpy as np

from ._validation import check_finite, check_pixels
from .imaging import BinaryMask, RgbImage

FOREGROUND = "foreground"
BACKGROUND = "background"


@dataclass(frozen=True)
class SegmentationParams:
    x: float
    y: float
    z: float
    T: float

    def __post_init__(self):
        for name in ("x", "y", "z", "T"):
            object.__setattr__(self, name, check_finite(getattr(self, name), name))

    @property
    def coefficients(self):
        return (self.x, self.y, self.z)

    def __iter__(self):
        return iter(astuple(self))


EXG = SegmentationParams(-1.0, 2.0, -1.0, 0.0)


def _channels(pixels):
    arr = np.asarray(pixels, dtype=np.float64)
    return arr[..., 0], arr[..., 1], arr[..., 2]


def score_array(params, pixels):
    """Vectorised score over the trailing RGB axis of ``pixels``."""
    r, g, b = _channels(pixels)
    return params.x * r + params.y * g + params.z * b


def score(params, pixel):
    r, g, b = (float(c) for c in check_pixels(pixel, "pixel")[0])
    return params.x * r + params.y * g + params.z * b


def classify(params, pixel):
    return FOREGROUND if score(params, pixel) >= params.T else BACKGROUND


def binarize(params, image):
    """Map ``image`` to a mask: 255 where the score reaches ``T``, else 0."""
    if not isinstance(image, RgbImage):
        image = RgbImage(image)
    hit = score_array(params, image.pixels) >= params.T
    return BinaryMask(np.where(hit, 255, 0).astype(np.uint8))


def exg_index(pixel):
    r, g, b = (int(c) for c in check_pixels(pixel, "pixel")[0])
    return float(2 * g - r - b)


def parse_params(text):
    """Read ``x y z T`` (whitespace separated) from a params file."""
    fields = text.split()
    if len(fields) != 4:
        raise ValueError(f"params must hold exactly 4 numbers, got {len(fields)}")
    try:
        values = [float(f) for f in fields]
    except ValueError:
        raise ValueError(f"params contain a non-numeric field: {text.strip()!r}") from None
    if not all(math.isfinite(v) for v in values):
        raise ValueError("params must be finite")
    return SegmentationParams(*values)


def format_params(params):
    # repr-precision so a round trip through the file is exact
    return " ".join(repr(v) for v in params) + "\n"
