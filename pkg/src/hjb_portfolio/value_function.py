"""Parametric value function alpha(phi) = min over the decision set of
-mu^T theta + (phi/2) theta^T Sigma theta, with its minimizer and slope.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import QPConvergenceError, ValidationError
from .market_data import AssetStats, DecisionSet, Discrete, DriftProfile, Simplex

DUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class AlphaEval:
    alpha: float
    alpha_prime: float
    theta_hat: np.ndarray
    active_support: tuple

    @property
    def support_size(self) -> int:
        return len(self.active_support)


def objective(stats: AssetStats, theta, phi: float) -> float:
    theta = np.asarray(theta, dtype=float)
    return float(-stats.mu @ theta + 0.5 * phi * (theta @ stats.sigma @ theta))


def _make_eval(stats: AssetStats, theta: np.ndarray, phi: float) -> AlphaEval:
    theta.setflags(write=False)
    half_var = 0.5 * float(theta @ stats.sigma @ theta)
    support = tuple(int(i) for i in np.flatnonzero(theta > 0))
    return AlphaEval(objective(stats, theta, phi), half_var, theta, support)


def _kkt_solve(stats: AssetStats, support: list, phi: float):
    """Minimizer of the objective on the affine hull of the face ``support``."""
    k = len(support)
    idx = np.array(support)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = phi * stats.sigma[np.ix_(idx, idx)]
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.append(stats.mu[idx], 1.0)
    sol = np.linalg.solve(kkt, rhs)
    return sol[:k], sol[k]


def solve_simplex_qp(stats: AssetStats, phi: float) -> AlphaEval:
    """Exact minimizer over the unit simplex by a primal active-set method.

    Starts at the best vertex. On each face the equality-constrained KKT system
    is solved; if the face minimizer leaves the simplex a ratio test moves to
    the first blocking boundary and drops that index. At a face optimum the
    multipliers xi_i = -mu_i + phi (Sigma theta)_i + lambda of the inactive
    bounds are checked and the most violated index enters. Ties go to the
    lowest index.
    """
    phi = float(phi)
    if not phi > 0 or not np.isfinite(phi):
        raise ValidationError(f"phi must be positive and finite, got {phi}")
    n = stats.n
    theta = np.zeros(n)
    start = int(np.argmax(stats.mu))
    theta[start] = 1.0
    support = [start]
    max_changes = 2**n + n
    changes = 0
    while True:
        theta_s, lam = _kkt_solve(stats, support, phi)
        if np.all(theta_s >= 0):
            theta = np.zeros(n)
            theta[support] = theta_s
            grad = -stats.mu + phi * (stats.sigma @ theta) + lam
            outside = [i for i in range(n) if i not in support]
            if not outside:
                break
            xi = grad[outside]
            j = int(np.argmin(xi))
            if xi[j] >= -DUAL_TOL:
                break
            support = sorted(support + [outside[j]])
        else:
            current = theta[support]
            direction = theta_s - current
            ratios = np.full(len(support), np.inf)
            neg = direction < 0
            ratios[neg] = current[neg] / -direction[neg]
            t = float(ratios.min())
            blocking = int(np.argmin(ratios))
            new = current + t * direction
            new[blocking] = 0.0
            new = np.maximum(new, 0.0)
            theta = np.zeros(n)
            theta[support] = new
            support = [i for i in support if theta[i] > 0]
        changes += 1
        if changes > max_changes:
            raise QPConvergenceError(
                f"active-set method did not converge after {max_changes} support changes; "
                "is the covariance positive definite?"
            )
    return _make_eval(stats, theta, phi)


def alpha_at_zero_limit(stats: AssetStats) -> AlphaEval:
    """phi -> 0+ limit: the linear program max mu^T theta, lowest-index vertex."""
    theta = np.zeros(stats.n)
    theta[int(np.argmax(stats.mu))] = 1.0
    return _make_eval(stats, theta, 0.0)


def alpha_discrete(decision_set: Discrete, stats: AssetStats, phi: float) -> AlphaEval:
    if decision_set.n != stats.n:
        raise ValidationError(
            f"decision set has dimension {decision_set.n}, universe has {stats.n} assets"
        )
    if not phi >= 0:
        raise ValidationError(f"phi must be >= 0, got {phi}")
    w = decision_set.weights
    offsets, slopes = discrete_pieces(decision_set, stats)
    values = offsets + phi * slopes
    j = int(np.argmin(values))
    theta = np.array(w[j])
    theta.setflags(write=False)
    # same arithmetic as AlphaTable so tabulated values agree bit for bit
    support = tuple(int(i) for i in np.flatnonzero(theta > 0))
    return AlphaEval(float(values[j]), float(slopes[j]), theta, support)


def discrete_pieces(decision_set: Discrete, stats: AssetStats):
    """Each element contributes the affine function offset + phi * slope."""
    w = decision_set.weights
    offsets = -(w @ stats.mu)
    slopes = 0.5 * np.einsum("ji,ik,jk->j", w, stats.sigma, w)
    return offsets, slopes


def alpha_second_derivative(stats: AssetStats, support, phi: float) -> float:
    """alpha'' = theta^T Sigma dtheta/dphi with the support held fixed.

    Differentiating the face KKT system gives
    phi Sigma_S theta' + lambda' 1 = -Sigma_S theta_S,  1^T theta' = 0.
    """
    support = list(support)
    idx = np.array(support)
    theta_s, _ = _kkt_solve(stats, support, phi)
    sig = stats.sigma[np.ix_(idx, idx)]
    k = len(support)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = phi * sig
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    dtheta = np.linalg.solve(kkt, np.append(-sig @ theta_s, 0.0))[:k]
    return float(theta_s @ sig @ dtheta)


def envelope_derivative(ev: AlphaEval, stats: AssetStats) -> float:
    theta = ev.theta_hat
    return 0.5 * float(theta @ stats.sigma @ theta)


def evaluate_alpha(stats: AssetStats, decision_set: DecisionSet, phi: float) -> AlphaEval:
    if isinstance(decision_set, Discrete):
        return alpha_discrete(decision_set, stats, phi)
    if decision_set.n != stats.n:
        raise ValidationError(
            f"decision set has dimension {decision_set.n}, universe has {stats.n} assets"
        )
    if phi == 0:
        return alpha_at_zero_limit(stats)
    return solve_simplex_qp(stats, phi)


# -- tabulation --------------------------------------------------------------


class AlphaTable:
    """Precomputed alpha(phi) and alpha'(phi) on a geometric knot grid.

    Simplex sets: alpha is a cubic Hermite interpolant using the exact
    envelope slopes at the knots; alpha' is a cubic Hermite interpolant using
    exact one-sided second derivatives, taken on each interval's own support.
    Discrete sets: exact lower envelope of the affine pieces.
    Outside the knot range both extrapolate linearly with the boundary slope.
    """

    x_dependent = False

    def __init__(self, stats, decision_set, phi_knots, evals):
        self.stats = stats
        self.decision_set = decision_set
        self.phi_knots = np.asarray(phi_knots, dtype=float)
        self.evals = list(evals)
        self.alpha_knots = np.array([e.alpha for e in self.evals])
        self.prime_knots = np.array([e.alpha_prime for e in self.evals])
        self.phi_min = float(self.phi_knots[0])
        self.phi_max = float(self.phi_knots[-1])
        if isinstance(decision_set, Discrete):
            self.rule = "piecewise-affine"
            self._offsets, self._slopes = discrete_pieces(decision_set, stats)
        else:
            self.rule = "hermite-cubic"
            self._alpha_spline = CubicHermiteSpline(self.phi_knots, self.alpha_knots, self.prime_knots)
            # each interval lies on the support found at its left knot
            self._curv = np.array([
                [alpha_second_derivative(stats, e.active_support, p0),
                 alpha_second_derivative(stats, e.active_support, p1)]
                for e, p0, p1 in zip(self.evals[:-1], self.phi_knots[:-1], self.phi_knots[1:])
            ]).reshape(-1, 2)

    def _inside(self, phi):
        if self.rule == "piecewise-affine":
            pieces = self._offsets[None, :] + phi[:, None] * self._slopes[None, :]
            j = np.argmin(pieces, axis=1)
            rows = np.arange(len(phi))
            return pieces[rows, j], self._slopes[j]
        return self._alpha_spline(phi), self._prime_hermite(phi)

    def _prime_hermite(self, phi):
        k = np.clip(np.searchsorted(self.phi_knots, phi, side="right") - 1, 0, len(self.phi_knots) - 2)
        p0, p1 = self.phi_knots[k], self.phi_knots[k + 1]
        h = p1 - p0
        t = (phi - p0) / h
        y0, y1 = self.prime_knots[k], self.prime_knots[k + 1]
        d0, d1 = self._curv[k, 0] * h, self._curv[k, 1] * h
        t2, t3 = t * t, t * t * t
        return ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * d0
                + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * d1)

    def _eval(self, phi):
        phi = np.asarray(phi, dtype=float)
        flat = np.atleast_1d(phi).ravel()
        a = np.empty_like(flat)
        d = np.empty_like(flat)
        lo = flat < self.phi_min
        hi = flat > self.phi_max
        mid = ~(lo | hi)
        if mid.any():
            a[mid], d[mid] = self._inside(flat[mid])
        if lo.any():
            a[lo] = self.alpha_knots[0] + self.prime_knots[0] * (flat[lo] - self.phi_min)
            d[lo] = self.prime_knots[0]
        if hi.any():
            a[hi] = self.alpha_knots[-1] + self.prime_knots[-1] * (flat[hi] - self.phi_max)
            d[hi] = self.prime_knots[-1]
        return a.reshape(phi.shape), d.reshape(phi.shape), bool(lo.any() or hi.any())

    def value(self, phi, x=None):
        return self._eval(phi)[0]

    def derivative(self, phi, x=None):
        return self._eval(phi)[1]

    def lookup(self, phi):
        """Return (alpha, alpha_prime, clamped) where clamped flags extrapolation."""
        return self._eval(phi)


def build_alpha_table(stats: AssetStats, decision_set: DecisionSet, phi_min: float,
                      phi_max: float, knots: int) -> AlphaTable:
    if not 0 < phi_min < phi_max:
        raise ValidationError(f"alpha table requires 0 < phi_min < phi_max, got {phi_min}, {phi_max}")
    if knots < 2:
        raise ValidationError("alpha table requires at least 2 knots")
    phi_knots = list(np.geomspace(phi_min, phi_max, int(knots)))
    evals = [evaluate_alpha(stats, decision_set, float(p)) for p in phi_knots]
    if isinstance(decision_set, Simplex):
        # alpha'' jumps where the support changes; a knot there keeps each
        # Hermite interval smooth
        extra = []
        for (p0, e0), (p1, e1) in zip(zip(phi_knots, evals), zip(phi_knots[1:], evals[1:])):
            # several supports may change inside one interval
            while e0.active_support != e1.active_support:
                p_star = locate_support_change(stats, p0, p1)
                if not p0 < p_star < p1:
                    break
                e_star = evaluate_alpha(stats, decision_set, p_star)
                extra.append((p_star, e_star))
                p0, e0 = p_star, e_star
        if extra:
            pairs = sorted(list(zip(phi_knots, evals)) + extra, key=lambda t: t[0])
            phi_knots = [p for p, _ in pairs]
            evals = [e for _, e in pairs]
    return AlphaTable(stats, decision_set, np.array(phi_knots), evals)


def _switch_key(ev: AlphaEval, decision_set: DecisionSet):
    if isinstance(decision_set, Discrete):
        return tuple(ev.theta_hat)
    return ev.active_support


def locate_minimizer_switch(stats: AssetStats, decision_set: DecisionSet, lo: float, hi: float,
                            rtol: float = 1e-13) -> float:
    """Bisect for the phi in (lo, hi] where the minimizer changes.

    For simplex sets the switch is a change of support, for discrete sets a
    change of the selected element. Returns the upper end of the final bracket.
    """
    ref = _switch_key(evaluate_alpha(stats, decision_set, lo), decision_set)
    if _switch_key(evaluate_alpha(stats, decision_set, hi), decision_set) == ref:
        raise ValidationError(f"minimizer does not change on [{lo}, {hi}]")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _switch_key(evaluate_alpha(stats, decision_set, mid), decision_set) == ref:
            lo = mid
        else:
            hi = mid
    return hi


def locate_support_change(stats: AssetStats, lo: float, hi: float, rtol: float = 1e-13) -> float:
    return locate_minimizer_switch(stats, Simplex(stats.n), lo, hi, rtol)


class ProfiledAlpha:
    """alpha(x, phi) for the drift g(x) mu^T theta, from an x-independent table.

    With g > 0 the minimization problem rescales exactly:
    alpha(x, phi) = g(x) * alpha_0(phi / g(x)) and d/dphi = alpha_0'(phi / g(x)).
    """

    def __init__(self, table: AlphaTable, drift: DriftProfile):
        self.table = table
        self.drift = drift
        self.x_dependent = drift.x_dependent

    def _g(self, x):
        g = self.drift.g(x)
        if np.any(g <= 0):
            raise ValidationError("drift profile must stay positive on the grid")
        return g

    def value(self, phi, x):
        g = self._g(x)
        return g * self.table.value(np.asarray(phi) / g)

    def derivative(self, phi, x):
        g = self._g(x)
        return self.table.derivative(np.asarray(phi) / g)


def make_alpha_evaluator(table: AlphaTable, drift: DriftProfile | None):
    if drift is None or drift == DriftProfile():
        return table
    return ProfiledAlpha(table, drift)
