"""scikit-learn style front end: fit a database of scans, then score or
retrieve query scans against it."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .pipeline import AblationConfig, describe, match_pair
from .projection import SicpParams
from .ssc import SscParams
from .validation import check_clouds


class SemanticScanContext(TransformerMixin, BaseEstimator):
    """Place recognition over labeled scans.

    ``transform`` gives flattened (unaligned) descriptors.  ``decision_function``
    runs the full pose-aligned match of every query against every fitted scan,
    and ``predict`` returns the best database index, or -1 when no score
    reaches ``score_threshold``.
    """

    def __init__(self, na=360, nl=20, ns=360, nr=50, rmax=50.0, max_iters=30,
                 converge_eps=1e-3, use_yaw_align=True, use_icp=True,
                 use_semantic_encoding=True, score_threshold=0.5):
        self.na = na
        self.nl = nl
        self.ns = ns
        self.nr = nr
        self.rmax = rmax
        self.max_iters = max_iters
        self.converge_eps = converge_eps
        self.use_yaw_align = use_yaw_align
        self.use_icp = use_icp
        self.use_semantic_encoding = use_semantic_encoding
        self.score_threshold = score_threshold

    def _configs(self):
        return (
            SicpParams(self.na, self.nl, self.max_iters, self.converge_eps),
            SscParams(self.ns, self.nr, self.rmax),
            AblationConfig(self.use_yaw_align, self.use_icp, self.use_semantic_encoding),
        )

    def fit(self, X, y=None):
        self.sicp_params_, self.ssc_params_, self.ablation_ = self._configs()
        self.database_ = check_clouds(X)
        self.n_database_ = len(self.database_)
        return self

    def transform(self, X):
        check_is_fitted(self, "database_")
        return np.stack([
            describe(c, self.ssc_params_, semantic=self.use_semantic_encoding).grid.reshape(-1)
            for c in check_clouds(X)
        ])

    def decision_function(self, X):
        check_is_fitted(self, "database_")
        queries = check_clouds(X)
        scores = np.zeros((len(queries), self.n_database_))
        for q, query in enumerate(queries):
            for d, ref in enumerate(self.database_):
                scores[q, d] = match_pair(
                    ref, query, self.sicp_params_, self.ssc_params_, self.ablation_
                ).score
        return scores

    def predict(self, X):
        scores = self.decision_function(X)
        best = np.argmax(scores, axis=1)
        return np.where(scores[np.arange(len(best)), best] >= self.score_threshold, best, -1)
