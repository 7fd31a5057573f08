"""scikit-learn style front ends.

``CorrespondenceMatcher`` is fit on a target frame and transforms source
frames into correspondence fields; ``PseudoLabeler`` turns a
:class:`~gpsflow.tensorio.PairSample` into pseudo-labels and confidence maps.
Both expose ``get_params``/``set_params`` and clone cleanly.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .confidence import confidence_map, zero_fraction
from .correspond import (
    DEFAULT_ALPHA,
    correlation,
    fuse_volumes,
    hard_argmax,
    soft_argmax_flow,
)
from .errors import ShapeError
from .losses import ClassConfig, warping_loss
from .validation import check_feature_map
from .warp import make_pseudolabels


def _as_feature_pair(X, name):
    """Accept a single ``(h, w, d)`` map or a ``(local, global)`` pair."""
    if isinstance(X, (tuple, list)):
        if len(X) != 2:
            raise ValueError(f"{name}: expected (local, global) pair, got {len(X)} arrays")
        local = check_feature_map(X[0], f"{name}[local]")
        glob = check_feature_map(X[1], f"{name}[global]")
        if local.shape[:2] != glob.shape[:2]:
            raise ShapeError(f"{name}: local and global grids differ")
        return local, glob
    return check_feature_map(X, name), None


class CorrespondenceMatcher(TransformerMixin, BaseEstimator):
    """Soft-argmax dense matcher against a fixed target frame.

    Parameters
    ----------
    alpha : float
        Softmax temperature.
    n_jobs : int or None
        Correlation workers; None reads ``GLASS_THREADS`` or uses all cores.
    """

    def __init__(self, alpha=DEFAULT_ALPHA, n_jobs=None):
        self.alpha = alpha
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        local, glob = _as_feature_pair(X, "target")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        self.target_local_ = local
        self.target_global_ = glob
        self.target_shape_ = local.shape[:2]
        return self

    def volume(self, X):
        check_is_fitted(self, "target_local_")
        local, glob = _as_feature_pair(X, "source")
        if (glob is None) != (self.target_global_ is None):
            raise ValueError("source and target must both be (local, global) pairs or both single")
        c = correlation(local, self.target_local_, n_jobs=self.n_jobs)
        if glob is not None:
            c = fuse_volumes(c, correlation(glob, self.target_global_, n_jobs=self.n_jobs))
        return c

    def transform(self, X):
        """Absolute target coordinates ``(h, w, 2)`` for every source pixel."""
        return soft_argmax_flow(self.volume(X), self.alpha)

    def predict(self, X):
        """Hard (integer) best-match coordinates."""
        return hard_argmax(self.volume(X))


class PseudoLabeler(BaseEstimator):
    """Pseudo-labels, confidence maps and warping losses for a pair sample.

    Stateless: ``fit`` only validates the parameters.
    """

    def __init__(self, alpha=DEFAULT_ALPHA, num_classes=19, dynamic_classes=None, n_jobs=None):
        self.alpha = alpha
        self.num_classes = num_classes
        self.dynamic_classes = dynamic_classes
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        self.class_config_ = ClassConfig(
            self.num_classes,
            None if self.dynamic_classes is None else frozenset(self.dynamic_classes),
        )
        return self

    def transform(self, sample):
        """Return a dict with the four pseudo-labels, oob masks, both
        confidence maps, the reference choice and the scale factor."""
        check_is_fitted(self, "class_config_")
        if sample.p_day.shape[2] != self.class_config_.num_classes:
            raise ShapeError(
                f"sample has {sample.p_day.shape[2]} classes, labeler configured for "
                f"{self.class_config_.num_classes}"
            )
        pl = make_pseudolabels(sample, alpha=self.alpha, n_jobs=self.n_jobs)
        m_n2d = confidence_map(pl.p_n2d, pl.p_n2d_prime, pl.oob_n2d | pl.oob_n2d_prime)
        m_d2n = confidence_map(pl.p_d2n, pl.p_d2n_prime, pl.oob_d2n | pl.oob_d2n_prime)
        return {
            "pseudolabels": pl,
            "m_n2d": m_n2d,
            "m_d2n": m_d2n,
            "zero_fraction_n2d": zero_fraction(m_n2d),
            "zero_fraction_d2n": zero_fraction(m_d2n),
        }

    def fit_transform(self, sample, y=None):
        return self.fit().transform(sample)

    def score_losses(self, sample, result):
        """Warping losses ``(l_n2d, l_d2n)`` for a :meth:`transform` result."""
        cfg = self.class_config_
        pl = result["pseudolabels"]
        l_d2n = warping_loss(sample.p_night, pl.p_d2n, result["m_d2n"], cfg)
        l_n2d = warping_loss(pl.p_n2d, sample.p_day, result["m_n2d"], cfg)
        return l_n2d, l_d2n


def mean_endpoint_error(field, gt_field, valid=None):
    err = np.linalg.norm(np.asarray(field, np.float64) - np.asarray(gt_field, np.float64), axis=2)
    if valid is not None:
        err = err[np.asarray(valid, bool)]
    return float(err.mean())
