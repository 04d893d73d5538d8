"""
Bayesian linear discriminant analysis.

Linear regression of +/-1 labels on the features with an isotropic Gaussian
prior (precision alpha) on the weights and Gaussian noise (precision beta).
Both precisions maximise the marginal likelihood. The bias column is
integrated out under a flat prior: features and labels are centred, the
regularised block is solved through the eigendecomposition of the centred
Gram matrix, and the bias is recovered as ``mean(y) - mean(x) @ w``.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from erpspeller.core import config
from erpspeller.core.errors import ClassifierError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BldaModel:
    weights: np.ndarray
    alpha: float
    beta: float
    n_iterations: int
    evidence_trace: tuple
    converged: bool = True
    regularize_bias: bool = False
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def n_features(self):
        return len(self.weights)

    @property
    def bias(self):
        return float(self.weights[-1])


class _EvidenceProblem:
    """Posterior mean and log evidence of one training set as functions of (alpha, beta)."""

    def __init__(self, Z, t, n_eff):
        gram = Z.T @ Z
        eigvals, eigvecs = linalg.eigh(gram)
        self.eigvals = np.clip(eigvals, 0.0, None)
        self.eigvecs = eigvecs
        self.projection = eigvecs.T @ (Z.T @ t)
        self.tt = float(t @ t)
        self.n = n_eff
        self.d = Z.shape[1]

    def posterior(self, alpha, beta):
        coef = beta * self.projection / (beta * self.eigvals + alpha)
        m_sq = float(coef @ coef)
        r_sq = max(self.tt - 2.0 * float(coef @ self.projection) + float(self.eigvals @ coef ** 2), 0.0)
        return coef, m_sq, r_sq

    def log_evidence(self, alpha, beta):
        _, m_sq, r_sq = self.posterior(alpha, beta)
        return (0.5 * self.d * math.log(alpha) + 0.5 * self.n * math.log(beta)
                - 0.5 * beta * r_sq - 0.5 * alpha * m_sq
                - 0.5 * float(np.sum(np.log(alpha + beta * self.eigvals)))
                - 0.5 * self.n * math.log(2 * math.pi))

    def mackay_step(self, alpha, beta):
        _, m_sq, r_sq = self.posterior(alpha, beta)
        gamma = float(np.sum(beta * self.eigvals / (beta * self.eigvals + alpha)))
        return self._bounded(gamma / max(m_sq, 1e-300), (self.n - gamma) / max(r_sq, 1e-300))

    def em_step(self, alpha, beta):
        _, m_sq, r_sq = self.posterior(alpha, beta)
        denom = alpha + beta * self.eigvals
        new_alpha = self.d / (m_sq + float(np.sum(1.0 / denom)))
        new_beta = self.n / (r_sq + float(np.sum(self.eigvals / denom)))
        return self._bounded(new_alpha, new_beta)

    @staticmethod
    def _bounded(alpha, beta):
        return min(max(alpha, 1e-12), 1e12), min(max(beta, 1e-12), config.BLDA_MAX_BETA)

    def weights(self, alpha, beta):
        coef, _, _ = self.posterior(alpha, beta)
        return self.eigvecs @ coef


def _class_weights(y):
    n_pos, n_neg = np.sum(y > 0), np.sum(y < 0)
    return np.where(y > 0, len(y) / (2.0 * n_pos), len(y) / (2.0 * n_neg))


def train(X, y, *, tolerance=config.BLDA_TOLERANCE, max_iterations=config.BLDA_MAX_ITERATIONS,
          initial_alpha=config.BLDA_INITIAL_ALPHA, initial_beta=config.BLDA_INITIAL_BETA,
          update_hyperparameters=True, regularize_bias=False, balance_classes=False):
    """Fit a BLDA model by evidence maximisation.

    Each iteration takes the MacKay fixed-point update. If that would lower
    the log evidence the EM update is taken instead, and if both would lower
    it training stops, so the evidence trace never decreases.

    Args:
        X (numpy.ndarray): N x (d + 1) features, last column all ones
        y (numpy.ndarray): Labels in {-1, +1}
        tolerance (float): Relative change of alpha and beta that ends training
        max_iterations (int): Hyperparameter update cap
        initial_alpha (float): Starting prior precision
        initial_beta (float): Starting noise precision
        update_hyperparameters (bool): False solves once at the initial values
        regularize_bias (bool): Penalise the bias weight like the others
        balance_classes (bool): Weight samples so both classes carry equal mass

    Returns:
        BldaModel: Weights (features then bias) and training diagnostics
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValidationError(f"features {X.shape} and labels {y.shape} do not line up")
    if not np.all(np.isfinite(X)):
        raise ValidationError("features contain non-finite values")
    if not np.all(X[:, -1] == 1.0):
        raise ValidationError("last feature column must be the bias column of ones")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValidationError("labels must be -1 or +1")
    if len(np.unique(y)) < 2:
        raise ValidationError("training labels contain a single class")
    if initial_alpha <= 0 or initial_beta <= 0:
        raise ValidationError("initial alpha and beta must be positive")

    sample_weights = _class_weights(y) if balance_classes else np.ones(len(y))
    root_w = np.sqrt(sample_weights)

    if regularize_bias:
        Z, t = X * root_w[:, None], y * root_w
        n_eff = len(y)
        x_mean, y_mean = None, None
    else:
        features = X[:, :-1]
        x_mean = sample_weights @ features / sample_weights.sum()
        y_mean = float(sample_weights @ y / sample_weights.sum())
        Z = (features - x_mean) * root_w[:, None]
        t = (y - y_mean) * root_w
        n_eff = len(y) - 1
        if not np.any(Z):
            raise ClassifierError(
                f"all {features.shape[1]} features are constant across {len(y)} samples; nothing to fit")

    problem = _EvidenceProblem(Z, t, n_eff)
    alpha, beta = float(initial_alpha), float(initial_beta)
    evidence = problem.log_evidence(alpha, beta)
    trace = [evidence]
    converged = not update_hyperparameters

    if update_hyperparameters:
        for _ in range(max_iterations):
            new_alpha, new_beta = problem.mackay_step(alpha, beta)
            new_evidence = problem.log_evidence(new_alpha, new_beta)
            if new_evidence < evidence:
                new_alpha, new_beta = problem.em_step(alpha, beta)
                new_evidence = problem.log_evidence(new_alpha, new_beta)
                if new_evidence < evidence:
                    converged = True
                    logger.debug("Evidence stalled at alpha=%.4g beta=%.4g", alpha, beta)
                    break
            change = max(abs(new_alpha - alpha) / alpha, abs(new_beta - beta) / beta)
            alpha, beta, evidence = new_alpha, new_beta, new_evidence
            trace.append(evidence)
            if change < tolerance:
                converged = True
                break

    w = problem.weights(alpha, beta)
    if regularize_bias:
        weights = w
    else:
        weights = np.append(w, y_mean - float(x_mean @ w))
    if not np.all(np.isfinite(weights)):
        raise ClassifierError(f"training diverged: non-finite weights at alpha={alpha:.4g} beta={beta:.4g}")

    logger.info("BLDA trained on %d x %d: alpha=%.4g beta=%.4g after %d updates (%s)",
                X.shape[0], X.shape[1], alpha, beta, len(trace) - 1,
                "converged" if converged else "iteration cap")
    return BldaModel(
        weights=weights,
        alpha=alpha,
        beta=beta,
        n_iterations=len(trace) - 1,
        evidence_trace=tuple(trace),
        converged=converged,
        regularize_bias=regularize_bias,
        metadata={"n_train": int(X.shape[0]), "n_target": int(np.sum(y > 0)),
                  "balance_classes": bool(balance_classes)},
    )


def score(model, x):
    """Linear discriminant score ``w @ x``.

    Args:
        model (BldaModel): Trained model
        x (numpy.ndarray): One feature vector or an N x d matrix, bias column included

    Returns:
        float or numpy.ndarray: One score per vector
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.n_features:
        raise ValidationError(f"feature length {x.shape[-1]} != model length {model.n_features}")
    scores = x @ model.weights
    return float(scores) if scores.ndim == 0 else scores
