import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teapluck.fitting import (
    FitConfig,
    NotFoundError,
    _GridSearch,
    average_params,
    count_satisfying,
    fit_dataset,
    fit_image,
    format_fit_report,
    grid_values,
    sweep_thresholds,
)
from teapluck.imaging import SampleSet
from teapluck.segmentation import SegmentationParams

FITTED = SegmentationParams(0.764, 0.392, -1.157, 90.3)
COARSE = FitConfig(coeff_step=0.5, t_step=16)


def naive_counts(params, samples):
    """Double loop over pixels in plain Python floats."""
    def hits(pixels):
        total = 0
        for r, g, b in pixels.tolist():
            if params.x * r + params.y * g + params.z * b >= params.T:
                total += 1
        return total
    return hits(samples.leaf_pixels), hits(samples.background_pixels)


def oracle_scan(samples, config):
    """Sequential lexicographic scan over the grid, one count per grid point."""
    coeffs = [config.coeff_min + i * config.coeff_step
              for i in range(int(round((config.coeff_max - config.coeff_min) / config.coeff_step)) + 1)]
    ts = [config.t_min + i * config.t_step
          for i in range(int(math.floor((config.t_max - config.t_min) / config.t_step)) + 1)]
    leaf = samples.leaf_pixels.astype(float)
    bg = samples.background_pixels.astype(float)
    N, M = len(leaf), len(bg)
    for x in coeffs:
        for y in coeffs:
            for z in coeffs:
                s_leaf = x * leaf[:, 0] + y * leaf[:, 1] + z * leaf[:, 2]
                s_bg = x * bg[:, 0] + y * bg[:, 1] + z * bg[:, 2]
                for t in ts:
                    n = int((s_leaf >= t).sum())
                    m = int((s_bg >= t).sum())
                    if n > config.leaf_fraction * N and m < config.background_fraction * M:
                        return (x, y, z, t), n, m
    return None


def oracle_best(samples, config):
    coeffs = config.coeff_grid().tolist()
    ts = config.t_grid().tolist()
    leaf = samples.leaf_pixels.astype(float)
    bg = samples.background_pixels.astype(float)
    N, M = len(leaf), len(bg)
    best = None
    for x in coeffs:
        for y in coeffs:
            for z in coeffs:
                s_leaf = x * leaf[:, 0] + y * leaf[:, 1] + z * leaf[:, 2]
                s_bg = x * bg[:, 0] + y * bg[:, 1] + z * bg[:, 2]
                for t in ts:
                    value = int((s_leaf >= t).sum()) * M - int((s_bg >= t).sum()) * N
                    if best is None or value > best[0]:
                        best = (value, (x, y, z, t))
    return best[1]


def blob_samples(seed, n_leaf=1000, n_background=1000, spread=12):
    rng = np.random.default_rng(seed)
    leaf_centre = rng.integers(60, 200, size=3)
    bg_centres = rng.integers(20, 220, size=(3, 3))
    leaf = leaf_centre + rng.integers(-spread, spread + 1, size=(n_leaf, 3))
    bg = bg_centres[rng.integers(0, 3, n_background)] + rng.integers(
        -spread, spread + 1, size=(n_background, 3))
    return SampleSet(np.clip(leaf, 0, 255), np.clip(bg, 0, 255))


def separable():
    return SampleSet(np.tile([200, 180, 40], (50, 1)), np.tile([60, 80, 50], (50, 1)))


class TestGrid:
    def test_default_sizes(self):
        config = FitConfig()
        assert len(config.coeff_grid()) == 121
        assert len(config.t_grid()) == 511

    def test_inclusive_endpoints_from_indices(self):
        grid = grid_values(-3, 3, 0.05)
        assert grid[0] == -3.0 and grid[-1] == pytest.approx(3.0, abs=1e-12)
        assert grid[37] == -3 + 37 * 0.05

    def test_coarse_t_grid_stops_inside_range(self):
        assert COARSE.t_grid().tolist() == [16.0 * i for i in range(16)]

    @pytest.mark.parametrize("kwargs", [
        dict(coeff_min=1, coeff_max=1), dict(t_min=5, t_max=0), dict(coeff_step=0),
        dict(leaf_fraction=1.0), dict(background_fraction=0), dict(mode="fastest"),
    ])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            FitConfig(**kwargs)


class TestCountSatisfying:
    def test_single_pixels(self):
        samples = SampleSet([[200, 180, 40]], [[0, 0, 0]])
        assert count_satisfying(FITTED, samples) == (1, 0)

    def test_threshold_above_any_score(self):
        samples = blob_samples(0, 50, 50)
        assert count_satisfying(SegmentationParams(3, 3, 3, 1e6), samples) == (0, 0)

    def test_empty_population(self):
        with pytest.raises(ValueError):
            count_satisfying(FITTED, SampleSet([[1, 2, 3]], np.empty((0, 3))))

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(42)
        samples = SampleSet(rng.integers(0, 256, (500, 3)), rng.integers(0, 256, (500, 3)))
        for _ in range(100):
            params = SegmentationParams(*rng.uniform(-3, 3, 3), rng.uniform(-200, 400))
            assert count_satisfying(params, samples) == naive_counts(params, samples)


class TestSweepThresholds:
    def test_matches_count_satisfying(self):
        rng = np.random.default_rng(7)
        samples = SampleSet(rng.integers(0, 256, (250, 3)), rng.integers(0, 256, (250, 3)))
        grid = FitConfig().coeff_grid()
        for _ in range(10):
            coeffs = rng.choice(grid, 3)
            sweep = sweep_thresholds(coeffs, samples)
            for t, n, m in zip(sweep.thresholds, sweep.n, sweep.m):
                assert (n, m) == count_satisfying(SegmentationParams(*coeffs, t), samples)

    def test_step_function_for_one_pixel(self):
        samples = SampleSet([[10, 20, 30]], [[0, 0, 0]])
        sweep = sweep_thresholds((1.0, 1.0, 1.0), samples)  # score 60
        assert sweep.n.tolist() == [1 if t <= 60 else 0 for t in sweep.thresholds]

    def test_monotone(self):
        samples = blob_samples(3)
        sweep = sweep_thresholds((0.5, 1.0, -1.0), samples)
        assert np.all(np.diff(sweep.n) <= 0) and np.all(np.diff(sweep.m) <= 0)

    def test_block_counts_match_count_satisfying(self):
        # the path fit_image uses: colour collapsing + histogram per block
        samples = blob_samples(5, 300, 300, spread=3)
        config = FitConfig()
        search = _GridSearch(samples, config)
        rng = np.random.default_rng(0)
        for start in rng.integers(0, search.n_triples - 40, size=5):
            n, m = search.counts(int(start), int(start) + 40)
            for row in range(0, 40, 7):
                x, y, z = search.triple(int(start) + row)
                for k in range(0, 511, 37):
                    p = SegmentationParams(x, y, z, search.thresholds[k])
                    assert (n[row, k], m[row, k]) == count_satisfying(p, samples)


class TestFitImage:
    def test_separable_set(self):
        samples = separable()
        result = fit_image(samples, COARSE)
        assert result.satisfied
        assert count_satisfying(result.params, samples) == (50, 0)

    def test_identical_populations_not_found(self):
        pixels = np.random.default_rng(1).integers(0, 256, (40, 3))
        with pytest.raises(NotFoundError, match="widen the ranges"):
            fit_image(SampleSet(pixels, pixels), COARSE)

    def test_empty_samples(self):
        with pytest.raises(ValueError):
            fit_image(SampleSet(np.empty((0, 3)), [[1, 1, 1]]), COARSE)

    @pytest.mark.parametrize("seed", range(4))
    def test_first_found_matches_oracle(self, seed):
        samples = blob_samples(seed, 200, 200)
        expected = oracle_scan(samples, COARSE)
        try:
            result = fit_image(samples, COARSE)
        except NotFoundError:
            assert expected is None
            return
        assert tuple(result.params) == expected[0]
        assert (result.n, result.m) == expected[1:]

    @pytest.mark.parametrize("seed", range(2))
    def test_best_matches_oracle(self, seed):
        config = FitConfig(coeff_min=-1, coeff_max=1, coeff_step=0.5, t_step=16, mode="best")
        samples = blob_samples(seed + 10, 100, 100)
        result = fit_image(samples, config)
        assert tuple(result.params) == oracle_best(samples, config)

    def test_best_reports_unsatisfied(self):
        pixels = np.random.default_rng(2).integers(0, 256, (30, 3))
        result = fit_image(SampleSet(pixels, pixels), FitConfig(coeff_step=1, t_step=32, mode="best"))
        assert not result.satisfied

    def test_threads_do_not_change_result(self):
        samples = blob_samples(0, 300, 300)
        config = FitConfig(coeff_step=0.25, t_step=4)
        assert fit_image(samples, config, n_jobs=1) == fit_image(samples, config, n_jobs=3)
        best = FitConfig(coeff_step=0.5, t_step=8, mode="best")
        assert fit_image(samples, best, n_jobs=1) == fit_image(samples, best, n_jobs=4)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000))
    def test_satisfied_results_honour_strict_constraints(self, seed):
        samples = blob_samples(seed, 60, 90, spread=20)
        try:
            result = fit_image(samples, FitConfig(coeff_step=0.5, t_step=8))
        except NotFoundError:
            return
        n, m = count_satisfying(result.params, samples)
        assert (n, m) == (result.n, result.m)
        assert n > math.ceil(0.98 * 60) - 1 and m < 0.02 * 90


class TestAverage:
    def test_single(self):
        assert average_params([FITTED]) == FITTED

    def test_negation_cancels(self):
        neg = SegmentationParams(-0.764, -0.392, 1.157, -90.3)
        assert tuple(average_params([FITTED, neg])) == (0.0, 0.0, 0.0, 0.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            average_params([])


class TestFitDataset:
    def test_all_separable(self):
        results, avg = fit_dataset([separable()] * 3, COARSE)
        assert all(r.satisfied for r in results)
        assert avg == results[0].params

    def test_skips_unfittable_image(self):
        pixels = np.random.default_rng(1).integers(0, 256, (40, 3))
        sets = [blob_samples(s, 100, 100, spread=3) for s in range(3)]
        sets.insert(1, SampleSet(pixels, pixels))
        results, avg = fit_dataset(sets, COARSE)
        assert results[1] is None
        assert avg == average_params([r.params for r in results if r is not None])

    def test_all_fail(self):
        pixels = np.random.default_rng(1).integers(0, 256, (40, 3))
        with pytest.raises(NotFoundError):
            fit_dataset([SampleSet(pixels, pixels)], COARSE)

    def test_empty(self):
        with pytest.raises(ValueError):
            fit_dataset([], COARSE)


def test_report_layout():
    results, avg = fit_dataset([separable(), separable()], COARSE)
    text = format_fit_report(["a", "b"], [results[0], None], avg, COARSE, seed=7)
    lines = text.splitlines()
    assert "# seed: 7" in lines
    assert lines[-3].split()[0] == "a" and lines[-2].split() == ["b", "NotFound"]
    fields = lines[-1].split()
    assert fields[0] == "average"
    p = avg
    assert fields[1:] == [f"{p.x:.3f}", f"{p.y:.3f}", f"{p.z:.3f}", f"{p.T:.1f}"]
