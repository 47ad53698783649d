"""Constrained grid search for the colour-index parameters.

The search walks every ``(x, y, z, T)`` on an inclusive grid, in
lexicographic order (x outermost, T innermost, each ascending), and tests

    n > leaf_fraction * N   and   m < background_fraction * M

where n and m count leaf and background samples whose score reaches T.

Scanning T naively would cost one pass over the samples per threshold. For a
fixed coefficient triple the counts at every grid threshold are instead read
off a single score pass: each sample is bucketed by the number of grid
thresholds it clears (``searchsorted``) and a reversed cumulative sum of the
bucket histogram gives ``#{score >= T_k}`` for all k at once. Duplicate
sample colours are collapsed first and carried as weights.
"""

import math
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .imaging import SampleSet
from .segmentation import SegmentationParams, score_array

FIRST = "first"
BEST = "best"
_MODES = (FIRST, BEST)

# float64 elements per working block (scores and histogram both bounded by it)
_BLOCK_ELEMENTS = 1 << 21


class NotFoundError(LookupError):
    """No grid point satisfies the leaf/background constraints."""

    def __init__(self, message, config=None):
        super().__init__(message)
        self.config = config


@dataclass(frozen=True)
class FitConfig:
    coeff_min: float = -3.0
    coeff_max: float = 3.0
    coeff_step: float = 0.05
    t_min: float = 0.0
    t_max: float = 255.0
    t_step: float = 0.5
    leaf_fraction: float = 0.98
    background_fraction: float = 0.02
    mode: str = FIRST

    def __post_init__(self):
        for name in ("coeff_min", "coeff_max", "coeff_step", "t_min", "t_max", "t_step",
                     "leaf_fraction", "background_fraction"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if not self.coeff_min < self.coeff_max:
            raise ValueError("coeff_min must be < coeff_max")
        if not self.t_min < self.t_max:
            raise ValueError("t_min must be < t_max")
        if self.coeff_step <= 0 or self.t_step <= 0:
            raise ValueError("grid steps must be > 0")
        for name in ("leaf_fraction", "background_fraction"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")

    def coeff_grid(self):
        return grid_values(self.coeff_min, self.coeff_max, self.coeff_step)

    def t_grid(self):
        return grid_values(self.t_min, self.t_max, self.t_step)

    def describe(self):
        return (f"x, y, z in [{self.coeff_min:g}, {self.coeff_max:g}] step {self.coeff_step:g}; "
                f"T in [{self.t_min:g}, {self.t_max:g}] step {self.t_step:g}")


@dataclass(frozen=True)
class FitResult:
    params: SegmentationParams
    n: int
    m: int
    N: int
    M: int
    satisfied: bool = field(default=False)


ThresholdSweep = namedtuple("ThresholdSweep", ["thresholds", "n", "m"])


def grid_values(lo, hi, step):
    """Inclusive grid ``lo + i*step`` built from integer indices."""
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    if count < 1:
        raise ValueError(f"degenerate grid [{lo}, {hi}] step {step}")
    return lo + np.arange(count, dtype=np.float64) * step


def _check_samples(samples):
    if not isinstance(samples, SampleSet):
        raise TypeError("samples must be a SampleSet")
    if samples.n_leaf == 0 or samples.n_background == 0:
        raise ValueError("both leaf and background samples are required")


def constraints_hold(n, m, N, M, config):
    return bool(n > config.leaf_fraction * N and m < config.background_fraction * M)


def count_satisfying(params, samples):
    """Return ``(n, m)``: leaf and background samples with score >= T."""
    _check_samples(samples)
    n = int(np.count_nonzero(score_array(params, samples.leaf_pixels) >= params.T))
    m = int(np.count_nonzero(score_array(params, samples.background_pixels) >= params.T))
    return n, m


def sweep_thresholds(coeffs, samples, config=None):
    """Counts ``n(T)``, ``m(T)`` for every grid threshold with fixed coefficients.

    Scores are computed and sorted once; each threshold is then a rank lookup.
    """
    _check_samples(samples)
    config = config or FitConfig()
    x, y, z = (float(c) for c in coeffs)
    params = SegmentationParams(x, y, z, 0.0)
    thresholds = config.t_grid()
    leaf = np.sort(score_array(params, samples.leaf_pixels))
    background = np.sort(score_array(params, samples.background_pixels))
    n = len(leaf) - np.searchsorted(leaf, thresholds, side="left")
    m = len(background) - np.searchsorted(background, thresholds, side="left")
    return ThresholdSweep(thresholds, n.astype(np.int64), m.astype(np.int64))


class _GridSearch:
    """Evaluates per-threshold counts for contiguous runs of coefficient triples."""

    def __init__(self, samples, config):
        self.config = config
        self.N = samples.n_leaf
        self.M = samples.n_background
        leaf, leaf_w = np.unique(samples.leaf_pixels, axis=0, return_counts=True)
        background, bg_w = np.unique(samples.background_pixels, axis=0, return_counts=True)
        pixels = np.concatenate([leaf, background]).astype(np.float64)
        self.r, self.g, self.b = pixels[:, 0], pixels[:, 1], pixels[:, 2]
        self.n_leaf_colours = len(leaf)
        self.leaf_w = leaf_w.astype(np.float64)
        self.bg_w = bg_w.astype(np.float64)

        self.coeffs = config.coeff_grid()
        self.thresholds = config.t_grid()
        nc = len(self.coeffs)
        self.n_triples = nc ** 3
        n_bins = len(self.thresholds) + 1
        self.block = max(1, min(_BLOCK_ELEMENTS // len(pixels), _BLOCK_ELEMENTS // n_bins))

    def triple(self, index):
        nc = len(self.coeffs)
        ix, rem = divmod(index, nc * nc)
        iy, iz = divmod(rem, nc)
        return self.coeffs[ix], self.coeffs[iy], self.coeffs[iz]

    def blocks(self):
        return [(s, min(s + self.block, self.n_triples))
                for s in range(0, self.n_triples, self.block)]

    def counts(self, start, stop):
        """Return ``n`` and ``m`` arrays of shape (stop - start, n_thresholds)."""
        nc = len(self.coeffs)
        idx = np.arange(start, stop)
        xs = self.coeffs[idx // (nc * nc)][:, None]
        ys = self.coeffs[(idx // nc) % nc][:, None]
        zs = self.coeffs[idx % nc][:, None]
        scores = xs * self.r + ys * self.g + zs * self.b
        # bucket k+1 means the score clears thresholds[0..k]
        cleared = np.searchsorted(self.thresholds, scores, side="right")
        split = self.n_leaf_colours
        n = self._count_at_least(cleared[:, :split], self.leaf_w)
        m = self._count_at_least(cleared[:, split:], self.bg_w)
        return n, m

    def _count_at_least(self, cleared, weights):
        rows = cleared.shape[0]
        n_bins = len(self.thresholds) + 1
        flat = (cleared + np.arange(rows)[:, None] * n_bins).ravel()
        hist = np.bincount(flat, weights=np.broadcast_to(weights, cleared.shape).ravel(),
                           minlength=rows * n_bins).reshape(rows, n_bins)
        at_least = np.cumsum(hist[:, ::-1], axis=1)[:, ::-1]
        return at_least[:, 1:].astype(np.int64)

    def result(self, row_index, t_index, n, m):
        x, y, z = self.triple(row_index)
        params = SegmentationParams(float(x), float(y), float(z),
                                    float(self.thresholds[t_index]))
        return FitResult(params, int(n), int(m), self.N, self.M,
                         constraints_hold(n, m, self.N, self.M, self.config))


def _first_in_block(search, start, stop):
    n, m = search.counts(start, stop)
    cfg = search.config
    ok = (n > cfg.leaf_fraction * search.N) & (m < cfg.background_fraction * search.M)
    if not ok.any():
        return None
    row, k = divmod(int(np.argmax(ok.ravel())), ok.shape[1])
    return search.result(start + row, k, n[row, k], m[row, k])


def _best_in_block(search, start, stop):
    n, m = search.counts(start, stop)
    # n/N - m/M compared exactly as n*M - m*N
    objective = n * search.M - m * search.N
    row, k = divmod(int(np.argmax(objective.ravel())), objective.shape[1])
    return int(objective[row, k]), search.result(start + row, k, n[row, k], m[row, k])


def fit_image(samples, config=None, n_jobs=1):
    """Search the grid for parameters separating leaf from background samples.

    In ``first`` mode the lexicographically first satisfying grid point is
    returned and :class:`NotFoundError` is raised when none exists. In
    ``best`` mode the whole grid is scanned for the point maximising
    ``n/N - m/M`` (earliest wins ties); its ``satisfied`` flag says whether
    the constraints hold there.

    ``n_jobs`` only changes speed, never the result.
    """
    _check_samples(samples)
    config = config or FitConfig()
    search = _GridSearch(samples, config)
    blocks = search.blocks()
    n_jobs = max(1, int(n_jobs))

    if config.mode == FIRST:
        with ThreadPoolExecutor(n_jobs) as pool:
            # windows keep the earliest block authoritative while bounding wasted work
            for w in range(0, len(blocks), n_jobs):
                window = blocks[w:w + n_jobs]
                for found in pool.map(lambda b: _first_in_block(search, *b), window):
                    if found is not None:
                        return found
        raise NotFoundError(
            f"no grid point satisfies n > {config.leaf_fraction:g}*N and "
            f"m < {config.background_fraction:g}*M over {config.describe()}; "
            "widen the ranges or refine the steps and retry", config)

    best_value, best = None, None
    with ThreadPoolExecutor(n_jobs) as pool:
        for value, candidate in pool.map(lambda b: _best_in_block(search, *b), blocks):
            if best_value is None or value > best_value:
                best_value, best = value, candidate
    return best


def average_params(results):
    """Component-wise mean of a non-empty list of parameter sets."""
    results = list(results)
    if not results:
        raise ValueError("cannot average an empty list of parameters")
    count = len(results)
    return SegmentationParams(*(math.fsum(p[i] for p in map(tuple, results)) / count
                                for i in range(4)))


def fit_dataset(per_image_samples, config=None, n_jobs=1):
    """Fit every image independently and average the satisfied fits.

    Returns ``(results, average)`` where ``results[i]`` is the image's
    :class:`FitResult`, or ``None`` when nothing on the grid satisfied the
    constraints for that image.
    """
    per_image_samples = list(per_image_samples)
    if not per_image_samples:
        raise ValueError("dataset is empty")
    config = config or FitConfig()
    for samples in per_image_samples:
        _check_samples(samples)
    results = []
    for samples in per_image_samples:
        try:
            result = fit_image(samples, config, n_jobs=n_jobs)
        except NotFoundError:
            result = None
        results.append(result if result is not None and result.satisfied else None)
    satisfied = [r.params for r in results if r is not None]
    if not satisfied:
        raise NotFoundError(f"no image could be fitted over {config.describe()}", config)
    return results, average_params(satisfied)


def format_fit_report(labels, results, average, config, seed):
    lines = [
        "# teapluck fit report",
        f"# seed: {seed}",
        f"# mode: {config.mode}",
        f"# grid: {config.describe()}",
        f"# constraints: n > {config.leaf_fraction:g}*N, m < {config.background_fraction:g}*M",
        f"{'image':<12} {'x':>8} {'y':>8} {'z':>8} {'T':>7} {'n':>7} {'N':>7} {'m':>7} {'M':>7}",
    ]
    for label, result in zip(labels, results):
        if result is None:
            lines.append(f"{label:<12} {'NotFound':>8}")
            continue
        p = result.params
        lines.append(f"{label:<12} {p.x:8.3f} {p.y:8.3f} {p.z:8.3f} {p.T:7.1f} "
                     f"{result.n:7d} {result.N:7d} {result.m:7d} {result.M:7d}")
    a = average
    lines.append(f"{'average':<12} {a.x:8.3f} {a.y:8.3f} {a.z:8.3f} {a.T:7.1f}")
    return "\n".join(lines) + "\n"
