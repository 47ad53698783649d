"""Region extraction from masks and leaf-level identification metrics.

A mask is split into 8-connected foreground regions; each region's centroid
is matched greedily against ground-truth leaf boxes. Matched regions count
as identified leaves (n), unmatched ones as misidentifications (m), giving

    R_i = 100 * n / N      R_m = 100 * m / N

with N the number of ground-truth leaves.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imaging import BinaryMask

DEFAULT_MIN_AREA = 50
_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


class GroundTruthError(ValueError):
    pass


@dataclass(frozen=True)
class Region:
    pixel_count: int
    bounding_box: tuple  # (x0, y0, w, h)
    centroid: tuple  # (cx, cy), pixel centres at integer coordinates


@dataclass(frozen=True)
class GroundTruth:
    leaf_boxes: tuple  # of (x0, y0, w, h)

    def __post_init__(self):
        boxes = tuple(tuple(int(v) for v in box) for box in self.leaf_boxes)
        for box in boxes:
            if len(box) != 4 or box[2] < 1 or box[3] < 1:
                raise GroundTruthError(f"invalid truth box {box}")
        object.__setattr__(self, "leaf_boxes", boxes)

    def __len__(self):
        return len(self.leaf_boxes)


@dataclass(frozen=True)
class EvalReport:
    n_identified: int
    m_misidentified: int
    N_actual: int
    R_i: float
    R_m: float


def _contains(box, point):
    x0, y0, w, h = box
    cx, cy = point
    # box covers pixel centres x0..x0+w-1, i.e. the area [x0-0.5, x0+w-0.5)
    return x0 - 0.5 <= cx < x0 + w - 0.5 and y0 - 0.5 <= cy < y0 + h - 0.5


def connected_components(mask, min_area=DEFAULT_MIN_AREA):
    """8-connected foreground regions with at least ``min_area`` pixels.

    Regions are ordered by the top-left corner of their bounding box
    (row first, then column).
    """
    if min_area < 1:
        raise ValueError("min_area must be >= 1")
    fg = mask.foreground if isinstance(mask, BinaryMask) else np.asarray(mask) == 255
    labels, count = ndimage.label(fg, structure=_EIGHT_CONNECTED)
    if count == 0:
        return []
    index = np.arange(1, count + 1)
    sizes = ndimage.sum_labels(fg, labels, index).astype(int)
    centres = ndimage.center_of_mass(fg, labels, index)
    regions = []
    for size, (cy, cx), sl in zip(sizes, centres, ndimage.find_objects(labels)):
        if size < min_area:
            continue
        rows, cols = sl
        box = (cols.start, rows.start, cols.stop - cols.start, rows.stop - rows.start)
        regions.append(Region(int(size), box, (float(cx), float(cy))))
    regions.sort(key=lambda r: (r.bounding_box[1], r.bounding_box[0]))
    return regions


def match_regions(regions, truth):
    """Greedy one-to-one matching of region centroids to truth boxes.

    Returns ``(n, m)``: matched regions and unmatched (misidentified) regions.
    """
    taken = [False] * len(truth.leaf_boxes)
    n = m = 0
    for region in regions:
        for i, box in enumerate(truth.leaf_boxes):
            if not taken[i] and _contains(box, region.centroid):
                taken[i] = True
                n += 1
                break
        else:
            m += 1
    return n, m


def make_report(n, m, N):
    if N < 1:
        raise GroundTruthError("ground truth holds no leaves")
    return EvalReport(n, m, N, 100.0 * n / N, 100.0 * m / N)


def evaluate(mask, truth, min_area=DEFAULT_MIN_AREA):
    if len(truth) == 0:
        raise GroundTruthError("ground truth holds no leaves")
    n, m = match_regions(connected_components(mask, min_area), truth)
    return make_report(n, m, len(truth))


def aggregate_reports(reports):
    """Average R_i and R_m across reports (table-average convention), sum counts."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    k = len(reports)
    return EvalReport(
        sum(r.n_identified for r in reports),
        sum(r.m_misidentified for r in reports),
        sum(r.N_actual for r in reports),
        math.fsum(r.R_i for r in reports) / k,
        math.fsum(r.R_m for r in reports) / k,
    )


def parse_truth(text):
    """Parse ``<image_id> <x0> <y0> <w> <h>`` lines into per-image truths.

    Image order follows first appearance in the file.
    """
    boxes = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise GroundTruthError(f"line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            box = tuple(int(p) for p in parts[1:])
        except ValueError:
            raise GroundTruthError(f"line {lineno}: box coordinates must be integers") from None
        boxes.setdefault(parts[0], []).append(box)
    if not boxes:
        raise GroundTruthError("truth file holds no boxes")
    return {image_id: GroundTruth(tuple(b)) for image_id, b in boxes.items()}


def format_eval_report(labels, reports, seed, min_area):
    lines = [
        "# teapluck evaluation report",
        f"# seed: {seed}",
        f"# min_area: {min_area}",
        f"{'image':<16} {'n':>5} {'m':>5} {'N':>5} {'R_i':>8} {'R_m':>8}",
    ]
    for label, r in zip(labels, reports):
        lines.append(f"{label:<16} {r.n_identified:5d} {r.m_misidentified:5d} "
                     f"{r.N_actual:5d} {r.R_i:7.2f}% {r.R_m:7.2f}%")
    avg = aggregate_reports(reports)
    lines.append(f"{'average':<16} {avg.n_identified:5d} {avg.m_misidentified:5d} "
                 f"{avg.N_actual:5d} {avg.R_i:7.2f}% {avg.R_m:7.2f}%")
    return "\n".join(lines) + "\n"
