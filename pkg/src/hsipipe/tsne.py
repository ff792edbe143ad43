"""1-D t-SNE embedding with per-point bandwidth calibration.

Per-point Gaussian precisions are bisected until the conditional distribution
entropy matches log(perplexity); optimization is plain gradient descent with
early exaggeration and momentum. All randomness flows from the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels as K
from .errors import ConfigError, NumericError

ENTROPY_TOL = 1e-5
BISECTION_MAX_ITER = 200
EARLY_EXAGGERATION = 12.0
MIN_GAIN = 0.01


@dataclass
class TsneResult:
    coords: np.ndarray  # (n,) float64
    costs: list = field(default_factory=list)  # KL(P||Q) per iteration
    betas: np.ndarray | None = None


def pairwise_sq_distances(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    sq = np.einsum("nd,nd->n", x, x)
    d2 = sq[:, None] - 2.0 * (x @ x.T) + sq[None, :]
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def joint_probabilities(samples: np.ndarray, perplexity: float, tol: float = ENTROPY_TOL):
    """Symmetrized t-SNE affinities; returns (P, conditional P, betas)."""
    d2 = pairwise_sq_distances(samples)
    cond, betas = K.perplexity_betas(d2, perplexity, tol, BISECTION_MAX_ITER)
    n = d2.shape[0]
    P = (cond + cond.T) / (2.0 * n)
    return P, cond, betas


def tsne_embed_1d(
    samples: np.ndarray,
    perplexity: float = 30.0,
    iterations: int = 1000,
    learning_rate: float = 200.0,
    seed: int = 0,
    early_exaggeration: float = EARLY_EXAGGERATION,
) -> TsneResult:
    """Embed spectra to one dimension. Deterministic given the seed."""
    x = np.asarray(samples, dtype=np.float64)
    n = x.shape[0]
    if perplexity < 2:
        raise ConfigError("perplexity must be >= 2")
    if n < 3 * perplexity:
        raise ConfigError(
            f"infeasible perplexity: {n} samples < 3 x perplexity ({perplexity})"
        )
    if iterations < 1:
        raise ConfigError("iterations must be >= 1")

    P, _, betas = joint_probabilities(x, perplexity)
    rng = np.random.default_rng(seed)
    y = rng.normal(0.0, 1e-4, size=n)
    velocity = np.zeros(n)
    gains = np.ones(n)
    exagg_end = iterations // 4
    costs = []
    for it in range(iterations):
        exaggeration = early_exaggeration if it < exagg_end else 1.0
        momentum = 0.5 if it < exagg_end else 0.8
        grad, kl = K.tsne_grad(P, y, exaggeration)
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite t-SNE gradient at iteration {it}")
        same_sign = np.sign(grad) == np.sign(velocity)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, MIN_GAIN, out=gains)
        velocity = momentum * velocity - learning_rate * (gains * grad)
        y = y + velocity
        y = y - y.mean()
        costs.append(kl)
    return TsneResult(y, costs, betas)
