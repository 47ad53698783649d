"""scikit-learn compatible front end for the colour-index segmenter."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_pixels, check_rgb_array
from .fitting import FitConfig, fit_dataset, fit_image
from .imaging import SampleSet
from .segmentation import SegmentationParams, binarize, score_array


class TenderLeafSegmenter(ClassifierMixin, BaseEstimator):
    """Fit ``x*r + y*g + z*b >= T`` on labelled pixels and segment images.

    ``X`` is an ``(n_samples, 3)`` array of RGB pixels; ``y`` marks tender
    leaf pixels with 1 and background with 0. Passing ``groups`` (one image id
    per row) fits each image separately and averages the satisfied fits.

    Parameters mirror :class:`teapluck.fitting.FitConfig`; ``n_jobs`` only
    affects speed.

    Attributes
    ----------
    params_ : SegmentationParams
    fit_results_ : list of FitResult or None
        One entry per group (a single entry without ``groups``).
    classes_ : ndarray
        Always ``[0, 1]``.
    """

    def __init__(self, coeff_min=-3.0, coeff_max=3.0, coeff_step=0.05,
                 t_min=0.0, t_max=255.0, t_step=0.5,
                 leaf_fraction=0.98, background_fraction=0.02,
                 mode="first", n_jobs=1):
        self.coeff_min = coeff_min
        self.coeff_max = coeff_max
        self.coeff_step = coeff_step
        self.t_min = t_min
        self.t_max = t_max
        self.t_step = t_step
        self.leaf_fraction = leaf_fraction
        self.background_fraction = background_fraction
        self.mode = mode
        self.n_jobs = n_jobs

    @classmethod
    def from_params(cls, params):
        """Build an already-fitted segmenter around known parameters."""
        est = cls()
        est.params_ = params if isinstance(params, SegmentationParams) \
            else SegmentationParams(*params)
        est.fit_results_ = []
        est.classes_ = np.array([0, 1])
        return est

    def _config(self):
        return FitConfig(self.coeff_min, self.coeff_max, self.coeff_step,
                         self.t_min, self.t_max, self.t_step,
                         self.leaf_fraction, self.background_fraction, self.mode)

    def fit(self, X, y, groups=None):
        X = check_pixels(X, "X")
        y = np.asarray(y)
        if y.shape != (len(X),):
            raise ValueError(f"y must have shape ({len(X)},), got {y.shape}")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("y must contain only 0 (background) and 1 (leaf)")
        config = self._config()
        if groups is None:
            result = fit_image(SampleSet(X[y == 1], X[y == 0]), config, self.n_jobs)
            self.fit_results_ = [result]
            self.params_ = result.params
        else:
            groups = np.asarray(groups)
            if groups.shape != y.shape:
                raise ValueError("groups must have one entry per sample")
            _, first = np.unique(groups, return_index=True)
            order = groups[np.sort(first)]
            sets = [SampleSet(X[(groups == g) & (y == 1)], X[(groups == g) & (y == 0)])
                    for g in order]
            self.fit_results_, self.params_ = fit_dataset(sets, config, self.n_jobs)
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        """Score minus threshold; non-negative means tender leaf."""
        check_is_fitted(self, "params_")
        X = check_pixels(X, "X")
        return score_array(self.params_, X) - self.params_.T

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_pixels(X, "X")
        return (score_array(self.params_, X) >= self.params_.T).astype(int)

    def transform(self, X):
        """Binarise an ``(h, w, 3)`` image into a 0/255 mask array."""
        check_is_fitted(self, "params_")
        return binarize(self.params_, check_rgb_array(X)).values
