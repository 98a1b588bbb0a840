"""Optimal allocation field theta(x, tau) recovered from a solved phi field."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .market_data import AssetStats, DecisionSet, DriftProfile, Simplex
from .value_function import AlphaEval, alpha_at_zero_limit, evaluate_alpha

log = logging.getLogger(__name__)

SUPPORT_THRESHOLD = 0.01


def normalized_entropy(theta) -> float:
    """-sum(theta ln theta) / ln n, with 0 ln 0 = 0; zero for a single asset."""
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    if n < 2:
        return 0.0
    pos = theta[theta > 0]
    h = float(-np.sum(pos * np.log(pos)) / np.log(n))
    return min(max(h, 0.0), 1.0)


def support_size(theta, threshold: float = SUPPORT_THRESHOLD) -> int:
    return max(1, int(np.count_nonzero(np.asarray(theta) > threshold)))


@dataclass
class PolicyField:
    taus: np.ndarray
    x: np.ndarray
    theta: np.ndarray  # (n_tau, n_x, n_assets)
    support: np.ndarray  # (n_tau, n_x)
    entropy: np.ndarray  # (n_tau, n_x)
    threshold: float = SUPPORT_THRESHOLD
    warnings: list = field(default_factory=list)


def optimal_weights(stats: AssetStats, decision_set: DecisionSet, phi: float,
                    g: float = 1.0) -> AlphaEval:
    """Minimizer at risk aversion phi for the drift scaled by g."""
    local = stats if g == 1.0 else stats.scaled_mu(g)
    return evaluate_alpha(local, decision_set, phi)


def reconstruct_policy(snapshots, x, stats: AssetStats, decision_set: DecisionSet | None = None,
                       drift: DriftProfile | None = None,
                       threshold: float = SUPPORT_THRESHOLD) -> PolicyField:
    """Exact minimizer at every (x_i, tau_k); never interpolated.

    ``snapshots`` is a sequence of PdeState. Cells with phi <= 0 receive the
    phi -> 0+ limit allocation and a warning.
    """
    decision_set = decision_set or Simplex(stats.n)
    x = np.asarray(x, dtype=float)
    g = drift.g(x) if drift is not None else np.ones_like(x)
    taus = np.array([s.tau for s in snapshots], dtype=float)
    theta = np.zeros((len(snapshots), len(x), stats.n))
    warnings = []
    cache = {}
    for k, snap in enumerate(snapshots):
        values = np.asarray(snap.values, dtype=float)
        if values.shape != x.shape:
            raise ValidationError("snapshot length does not match the x grid")
        for i, phi in enumerate(values):
            key = (float(phi), float(g[i]))
            ev = cache.get(key)
            if ev is None:
                if phi <= 0:
                    local = stats if g[i] == 1.0 else stats.scaled_mu(float(g[i]))
                    ev = alpha_at_zero_limit(local)
                else:
                    ev = optimal_weights(stats, decision_set, float(phi), float(g[i]))
                cache[key] = ev
            if phi <= 0:
                warnings.append(f"phi = {phi:.6g} <= 0 at tau = {snap.tau:.6g}, x = {x[i]:.6g}; "
                                "using the phi -> 0+ allocation")
            theta[k, i] = ev.theta_hat
    for w in warnings[:5]:
        log.warning(w)
    support = np.apply_along_axis(support_size, 2, theta, threshold)
    entropy = np.apply_along_axis(normalized_entropy, 2, theta)
    return PolicyField(taus, x, theta, support, entropy, threshold, warnings)


def diversification_report(field: PolicyField) -> list:
    rows = []
    for k, tau in enumerate(field.taus):
        ent = field.entropy[k]
        sup = field.support[k]
        rows.append({
            "tau": float(tau),
            "entropy_min": float(ent.min()), "entropy_mean": float(ent.mean()),
            "entropy_max": float(ent.max()),
            "support_min": int(sup.min()), "support_mean": float(sup.mean()),
            "support_max": int(sup.max()),
        })
    return rows
