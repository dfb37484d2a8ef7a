"""scikit-learn style wrappers over the functional API.

Only two pieces fit the estimator shape: classification of parameter
arrays (``PhaseClassifier``) and the convergence diagnosis of trace
ensembles (``ConvergenceDiagnoser``).  Nothing is learned from data; ``fit``
validates the configuration and builds the model.
"""
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from . import charfun
from .classifier import Region, classify_many
from .diagnostics import convergence_verdict
from .models import OffspringModel, make_model
from ._validation import as_lambda_array


class PhaseClassifier(ClassifierMixin, BaseEstimator):
    """Assigns a region tag to each parameter lambda.

    ``X`` is an (n, 2) array of (theta, eta) rows or a complex vector.
    ``model`` is a built-in name, ``"table"`` (with ``table``) or an
    ``OffspringModel`` instance.
    """

    def __init__(self, model="gaussian-binary", table=None, tol=charfun.DEFAULT_TOL):
        self.model = model
        self.table = table
        self.tol = tol

    def fit(self, X=None, y=None):
        if isinstance(self.model, OffspringModel):
            self.model_ = self.model
        else:
            self.model_ = make_model(self.model, self.table)
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        self.classes_ = np.array([r.value for r in Region])
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before predict")

    def predict_verdicts(self, X):
        self._check_fitted()
        return classify_many(self.model_, as_lambda_array(X), self.tol)

    def predict(self, X):
        return np.array([v.tag.value for v in self.predict_verdicts(X)])

    def predict_alpha(self, X):
        """Characteristic index per row (nan where no boundary root)."""
        return np.array([np.nan if v.alpha is None or not v.tag.is_boundary else v.alpha
                         for v in self.predict_verdicts(X)])


class ConvergenceDiagnoser(BaseEstimator):
    """Convergence verdict for an ensemble ``Z`` of shape (replicates, generations + 1)."""

    def __init__(self, p=1.5, k=1, n_boot=1000, level=0.95, seed=0):
        self.p = p
        self.k = k
        self.n_boot = n_boot
        self.level = level
        self.seed = seed

    def fit(self, Z, y=None):
        self.report_ = convergence_verdict(Z, self.p, self.k, self.n_boot, self.level, seed=self.seed)
        self.verdict_ = self.report_.verdict
        self.slope_ = self.report_.slope
        self.slope_ci_ = self.report_.slope_ci
        return self

    def predict(self, Z=None):
        if not hasattr(self, "report_"):
            raise NotFittedError("call fit first")
        if Z is not None:
            return convergence_verdict(Z, self.p, self.k, self.n_boot, self.level, seed=self.seed).verdict
        return self.verdict_
