"""Estimator plumbing shared by every detector.

Detectors follow the scikit-learn conventions: hyper-parameters go to
``__init__``, ``fit(channel)`` caches whatever depends on the channel
realization only, and ``predict(Y)`` maps matched-filter outputs (one row
per transmission) to +/-1 decisions.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_statistic
from .channel import ChannelInstance


class BaseDetector(BaseEstimator):
    """Common ``fit``/``predict``/``score`` surface for multiuser detectors."""

    def fit(self, channel, y=None):
        if not isinstance(channel, ChannelInstance):
            raise TypeError("fit expects a ChannelInstance")
        self.channel_ = channel
        self.n_bits_ = channel.total_bits
        self._fit(channel)
        return self

    def _fit(self, channel):
        pass

    def predict(self, Y):
        check_is_fitted(self, "channel_")
        Y2, one_d = check_statistic(Y, self.n_bits_)
        out = self._predict(Y2)
        return out[0] if one_d else out

    def _predict(self, Y):
        raise NotImplementedError

    def score(self, Y, b):
        """Fraction of correctly detected bits."""
        b = np.asarray(b, dtype=np.float64)
        return float(np.mean(self.predict(Y) == b))
