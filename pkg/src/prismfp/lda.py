"""Linear discriminant analysis used both as reducer and as classifier.

The estimator z-scores the features, optionally keeps only the magnitude or
phase coordinates, and fits a Gaussian model per class with one covariance
shared by all classes. The Fisher projection is the top ``M - 1``
generalised eigenvectors of ``(S_W + reg*I, S_B)``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import DegenerateClass, DimensionMismatch, ParseError, SingularScatter
from .radial import SUBSETS, subset_indices

FORMAT_VERSION = 1
NORMALIZATIONS = ("zscore", "minmax", "none")

_SCALE_FLOOR = 1e-12
_EIG_RTOL = 1e-10
_TIE_RTOL = 1e-12


def _standardizer(X, how):
    if how == "zscore":
        offset, scale = X.mean(axis=0), X.std(axis=0)
    elif how == "minmax":
        offset, scale = X.min(axis=0), X.max(axis=0) - X.min(axis=0)
    elif how == "none":
        offset, scale = np.zeros(X.shape[1]), np.ones(X.shape[1])
    else:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}, got {how!r}")
    return offset, np.maximum(scale, _SCALE_FLOOR)


class LdaAttributor(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Shared-covariance Gaussian classifier with a Fisher projection.

    Parameters
    ----------
    reg : float or None, default=None
        Ridge added to the within-class scatter. ``None`` uses
        ``1e-6 * trace(S_W) / d``; ``0`` disables regularisation.
    subset : {"all", "magnitude", "phase"}, default="all"
        Coordinates kept after standardisation. The last two assume the
        ``6 * n_r`` fingerprint layout.
    n_r : int or None, default=None
        Rings per channel; inferred as ``d / 6`` when needed and not given.
    normalization : {"zscore", "minmax", "none"}, default="zscore"
        Per-feature scaling learned on the training data.
    priors : array-like or None, default=None
        Class priors in vocabulary order; class frequencies if ``None``.

    Attributes
    ----------
    classes_ : ndarray of shape (M,)
        Label vocabulary, sorted.
    scalings_ : ndarray of shape (d_kept, M - 1)
        Projection used by :meth:`transform`.
    means_ : ndarray of shape (M, d_kept)
        Class means in standardised space.
    covariance_cholesky_ : ndarray of shape (d_kept, d_kept)
        Lower Cholesky factor of the regularised shared covariance.
    """

    def __init__(self, reg=None, subset="all", n_r=None, normalization="zscore", priors=None):
        self.reg = reg
        self.subset = subset
        self.n_r = n_r
        self.normalization = normalization
        self.priors = priors

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        if self.subset not in SUBSETS:
            raise ValueError(f"subset must be one of {SUBSETS}, got {self.subset!r}")
        classes, y_idx, counts = np.unique(y, return_inverse=True, return_counts=True)
        if len(classes) < 2:
            raise DegenerateClass(f"need at least 2 classes, got {len(classes)}")
        if counts.min() < 2:
            small = [str(c) for c, n in zip(classes, counts) if n < 2]
            raise DegenerateClass(f"classes with fewer than 2 samples: {small}")

        n, d = X.shape
        self.n_features_in_ = d
        self.classes_ = classes
        self.offset_, self.scale_ = _standardizer(X, self.normalization)
        self.feature_indices_ = subset_indices(d, self.subset, self.n_r)
        Z = self._prepare(X)
        p = Z.shape[1]
        n_classes = len(classes)

        means = np.zeros((n_classes, p))
        np.add.at(means, y_idx, Z)
        means /= counts[:, None]
        centered = Z - means[y_idx]
        s_w = centered.T @ centered
        between = (means - Z.mean(axis=0)) * np.sqrt(counts)[:, None]
        s_b = between.T @ between

        if self.reg is None:
            tr = np.trace(s_w)
            reg = 1e-6 * tr / p if tr > 0 else 1e-6
        else:
            reg = float(self.reg)
            if reg < 0:
                raise ValueError(f"reg must be >= 0, got {reg}")
        if reg == 0 and np.linalg.matrix_rank(s_w) < p:
            raise SingularScatter("within-class scatter is rank-deficient and reg=0")
        s_w_reg = s_w + reg * np.eye(p)
        try:
            chol = linalg.cholesky(s_w_reg, lower=True)
        except linalg.LinAlgError as exc:
            raise SingularScatter(f"within-class scatter not positive definite: {exc}") from exc

        # whitened between-class scatter: L^-1 S_B L^-T
        half = linalg.solve_triangular(chol, s_b, lower=True)
        whitened = linalg.solve_triangular(chol, half.T, lower=True)
        whitened = (whitened + whitened.T) / 2
        evals, evecs = linalg.eigh(whitened)
        evals, evecs = evals[::-1], evecs[:, ::-1]
        top = evals[0] if evals.size and evals[0] > 0 else 1.0
        evals = np.where(evals < _EIG_RTOL * top, 0.0, evals)
        n_e = min(n_classes - 1, p)
        # unit within-class variance along each axis: normalise against S_W / n
        scalings = linalg.solve_triangular(chol.T, evecs[:, :n_e], lower=False) * np.sqrt(n)
        pivot = np.argmax(np.abs(scalings), axis=0)
        scalings *= np.sign(scalings[pivot, np.arange(n_e)])

        if self.priors is None:
            priors = counts / n
        else:
            priors = np.asarray(self.priors, dtype=np.float64)
            if priors.shape != (n_classes,) or np.any(priors <= 0):
                raise ValueError("priors must be positive, one per class")
            priors = priors / priors.sum()

        self.reg_ = reg
        self.means_ = means
        self.priors_ = priors
        self.covariance_cholesky_ = chol / np.sqrt(n)
        self.scalings_ = scalings
        total = evals.sum()
        self.explained_variance_ratio_ = evals[:n_e] / total if total > 0 else np.zeros(n_e)
        self._set_linear_rule()
        return self

    def _set_linear_rule(self):
        self.coef_ = linalg.cho_solve((self.covariance_cholesky_, True), self.means_.T).T
        self.intercept_ = -0.5 * np.einsum("ij,ij->i", self.means_, self.coef_) + np.log(self.priors_)

    @property
    def covariance_(self):
        """Regularised shared covariance (in the kept, standardised coordinates)."""
        return self.covariance_cholesky_ @ self.covariance_cholesky_.T

    @property
    def n_components_(self):
        return self.scalings_.shape[1]

    def _prepare(self, X):
        return ((X - self.offset_) / self.scale_)[:, self.feature_indices_]

    def _validate(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"model expects {self.n_features_in_} features, got {X.shape[1]}"
            )
        return self._prepare(X)

    def decision_function(self, X):
        """Per-class discriminant scores, shape ``(n_samples, M)``."""
        Z = self._validate(X)
        return Z @ self.coef_.T + self.intercept_

    def predict_proba(self, X):
        scores = self.decision_function(X)
        scores = scores - scores.max(axis=1, keepdims=True)
        proba = np.exp(scores)
        return proba / proba.sum(axis=1, keepdims=True)

    def predict(self, X):
        scores = self.decision_function(X)
        best = scores.max(axis=1, keepdims=True)
        tol = _TIE_RTOL * np.maximum(1.0, np.abs(scores).max(axis=1, keepdims=True))
        # near-ties go to the earliest class in the vocabulary
        return self.classes_[np.argmax(scores >= best - tol, axis=1)]

    def transform(self, X):
        return self._validate(X) @ self.scalings_

    def to_dict(self) -> dict:
        check_is_fitted(self, "coef_")
        return {
            "format_version": FORMAT_VERSION,
            "params": {
                "reg": self.reg,
                "subset": self.subset,
                "n_r": self.n_r,
                "normalization": self.normalization,
                "priors": None if self.priors is None else np.asarray(self.priors, float).tolist(),
            },
            "vocabulary": self.classes_.tolist(),
            "n_features_in": int(self.n_features_in_),
            "feature_indices": self.feature_indices_.tolist(),
            "standardizer": {"offset": self.offset_.tolist(), "scale": self.scale_.tolist()},
            "reg_used": self.reg_,
            "priors": self.priors_.tolist(),
            "class_means": self.means_.tolist(),
            "covariance_cholesky": self.covariance_cholesky_.tolist(),
            "projection": self.scalings_.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio_.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LdaAttributor":
        if data.get("format_version") != FORMAT_VERSION:
            raise ParseError(f"unsupported model format version {data.get('format_version')!r}")
        model = cls(**data["params"])
        model.classes_ = np.asarray(data["vocabulary"])
        model.n_features_in_ = int(data["n_features_in"])
        model.feature_indices_ = np.asarray(data["feature_indices"], dtype=np.intp)
        model.offset_ = np.asarray(data["standardizer"]["offset"], dtype=np.float64)
        model.scale_ = np.asarray(data["standardizer"]["scale"], dtype=np.float64)
        model.reg_ = data["reg_used"]
        model.priors_ = np.asarray(data["priors"], dtype=np.float64)
        model.means_ = np.asarray(data["class_means"], dtype=np.float64)
        model.covariance_cholesky_ = np.asarray(data["covariance_cholesky"], dtype=np.float64)
        model.scalings_ = np.asarray(data["projection"], dtype=np.float64).reshape(
            len(model.feature_indices_), -1
        )
        model.explained_variance_ratio_ = np.asarray(data["explained_variance_ratio"])
        p = len(model.feature_indices_)
        if (
            model.offset_.shape != (model.n_features_in_,)
            or model.scale_.shape != (model.n_features_in_,)
            or np.any(model.feature_indices_ >= model.n_features_in_)
            or model.means_.shape != (len(model.classes_), p)
            or model.covariance_cholesky_.shape != (p, p)
        ):
            raise DimensionMismatch("model file arrays have inconsistent shapes")
        model._set_linear_rule()
        return model

    def save(self, path) -> None:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True)
        Path(path).write_text(text + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "LdaAttributor":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc.msg}", exc.lineno) from exc
        return cls.from_dict(data)


def fit(features, labels, reg=None, subset="all", n_r=None, normalization="zscore") -> LdaAttributor:
    return LdaAttributor(reg=reg, subset=subset, n_r=n_r, normalization=normalization).fit(
        features, labels
    )


def predict(model: LdaAttributor, feature):
    """Label and posterior vector (vocabulary order) for a single feature vector."""
    row = np.atleast_2d(np.asarray(feature, dtype=np.float64))
    return model.predict(row)[0], model.predict_proba(row)[0]


def transform(model: LdaAttributor, feature) -> np.ndarray:
    return model.transform(np.atleast_2d(np.asarray(feature, dtype=np.float64)))[0]
