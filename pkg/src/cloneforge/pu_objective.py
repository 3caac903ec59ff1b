"""Three-term positive-vs-unlabeled objective over latent norms.

Given the norms of a positive (clone) batch and an unlabeled batch and a
margin m:

    mu          = mean of the positive norms
    consistency = mean((n_p - mu)^2)
    variance    = population variance of the positive norms
    hinge       = mean(max(0, mu + m - n_u))
    total       = consistency + lambda_var * variance + hinge

``variance`` equals ``consistency`` by definition here (population
variance); they are reported separately because the variance weight can
be toggled independently. Gradients treat mu as a function of the
positive norms, so every positive norm also feels the hinge term through
mu. The hinge subgradient at exactly mu + m - n = 0 is taken as 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PULossConfig:
    lambda_var: float = 0.0

    def __post_init__(self) -> None:
        if self.lambda_var < 0:
            raise ValueError("lambda_var must be >= 0")


@dataclass
class PULossValue:
    total: float
    consistency: float
    variance: float
    hinge: float
    mu: float


def compute_mu(pos_norms: np.ndarray) -> float:
    pos_norms = np.asarray(pos_norms, dtype=np.float64)
    if pos_norms.size == 0:
        raise ValueError("need at least one positive norm")
    return float(pos_norms.mean())


def pu_loss(pos_norms: np.ndarray, unl_norms: np.ndarray, m: float, config: PULossConfig) -> PULossValue:
    pos = np.asarray(pos_norms, dtype=np.float64)
    unl = np.asarray(unl_norms, dtype=np.float64)
    if pos.size == 0 or unl.size == 0:
        raise ValueError("positive and unlabeled batches must be non-empty")
    mu = float(pos.mean())
    centered = pos - mu
    consistency = float(np.mean(centered * centered))
    variance = consistency
    hinge = float(np.mean(np.maximum(0.0, mu + m - unl)))
    total = consistency + config.lambda_var * variance + hinge
    return PULossValue(total=total, consistency=consistency, variance=variance, hinge=hinge, mu=mu)


def pu_loss_backward(
    pos_norms: np.ndarray, unl_norms: np.ndarray, m: float, config: PULossConfig
) -> tuple[np.ndarray, np.ndarray, float]:
    """Gradients of the total loss w.r.t. (pos_norms, unl_norms, m).

    The caller chains d_m through sigmoid(raw) in learned-margin mode
    and drops it entirely in fixed mode.
    """
    pos = np.asarray(pos_norms, dtype=np.float64)
    unl = np.asarray(unl_norms, dtype=np.float64)
    if pos.size == 0 or unl.size == 0:
        raise ValueError("positive and unlabeled batches must be non-empty")
    p = pos.size
    u = unl.size
    mu = pos.mean()
    # d(consistency)/d n_p = (2/P)(n_p - mu); the mu coupling cancels
    # because the centered norms sum to zero.
    d_pos = (1.0 + config.lambda_var) * (2.0 / p) * (pos - mu)
    active = (mu + m - unl) > 0.0
    n_active = int(active.sum())
    d_pos += n_active / (u * p)  # hinge through mu
    d_unl = np.where(active, -1.0 / u, 0.0)
    d_m = n_active / u
    return d_pos, d_unl, float(d_m)


def decision(norm: float, tau: float) -> bool:
    """Clone iff the latent norm is at or below the operating point."""
    return norm <= tau
