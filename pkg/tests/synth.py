"""Deterministic synthetic tea scenes used by the tests and checked-in data."""

import numpy as np

from teapluck.imaging import RgbImage, SampleBox

TENDER = (182, 198, 64)
OLD_LEAF = (42, 92, 40)
STEM = (112, 80, 52)
SOIL = (88, 70, 62)
BACKGROUND_PALETTE = (OLD_LEAF, STEM, SOIL)


def tea_scene(seed, size=64, n_leaves=4, leaf_size=10, jitter=2, n_background=10, bg_size=6):
    """Return ``(image, leaf_boxes, background_boxes)``.

    Tender leaves are square blobs on a background tiled from the old-leaf,
    stem and soil colours; every channel gets uniform jitter in
    ``[-jitter, jitter]``. Leaf boxes are the painted squares; background
    boxes are ``bg_size`` squares that avoid them.
    """
    rng = np.random.default_rng(seed)
    tiles = rng.integers(0, len(BACKGROUND_PALETTE), size=(size // 8, size // 8))
    base = np.array(BACKGROUND_PALETTE)[tiles].repeat(8, axis=0).repeat(8, axis=1)
    image = base.astype(int)
    occupied = np.zeros((size, size), dtype=bool)
    leaves = []
    attempts = 0
    while len(leaves) < n_leaves:
        attempts += 1
        if attempts > 1000:
            raise RuntimeError("could not place leaves")
        x0, y0 = rng.integers(1, size - leaf_size - 1, size=2)
        # one-pixel margin keeps leaves 8-disconnected from each other
        if occupied[y0 - 1:y0 + leaf_size + 1, x0 - 1:x0 + leaf_size + 1].any():
            continue
        occupied[y0:y0 + leaf_size, x0:x0 + leaf_size] = True
        image[y0:y0 + leaf_size, x0:x0 + leaf_size] = TENDER
        leaves.append((int(x0), int(y0), leaf_size, leaf_size))
    if jitter:
        image = image + rng.integers(-jitter, jitter + 1, size=image.shape)
    image = np.clip(image, 0, 255).astype(np.uint8)

    background = []
    while len(background) < n_background:
        x0, y0 = (int(v) for v in rng.integers(0, size - bg_size, size=2))
        if not occupied[max(0, y0 - 1):y0 + bg_size + 1, max(0, x0 - 1):x0 + bg_size + 1].any():
            background.append((x0, y0, bg_size, bg_size))
    return RgbImage(image), leaves, background


def scene_boxes(image_id, leaves, background):
    return ([SampleBox(image_id, "leaf", *b) for b in leaves]
            + [SampleBox(image_id, "background", *b) for b in background])


def random_image(rng, height, width):
    return RgbImage(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))
