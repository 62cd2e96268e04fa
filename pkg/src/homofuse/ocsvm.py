"""Geodesic RBF kernel and one-class SVM scoring.

Two dual problems are solved over a precomputed kernel ``K``:

``scholkopf``
    min 1/2 a'Ka  s.t.  0 <= a_j <= 1/(nu n),  sum(a) = 1.
    Score ``f_i = (K a)_i - rho`` with the offset ``rho`` recovered from
    the KKT conditions.

``paper_eq8``
    The primal with ``nu`` held fixed as the margin,
    min 1/2 |w|^2 + 1/(Co n) sum(eps) - nu  s.t.  w'phi_i >= nu - eps_i,
    whose dual is the box QP  min 1/2 a'Ka - nu sum(a),  0 <= a_j <= 1/(Co n).
    Score ``f_i = (K a)_i - nu``.

Both are solved by working-set ascent in the style of LibSVM, stopping on
the maximal KKT violation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConvergenceError, DataError, UsageError

FORMULATIONS = ("scholkopf", "paper_eq8")
SIGMA_FLOOR = 1e-12


def sigma_heuristic(d: np.ndarray) -> float:
    """Twice the mean distance from each point to its nearest other point.

    Points with no finite neighbour do not enter the mean.
    """
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    if n < 2:
        raise DataError("sigma heuristic needs at least two points")
    off = d.copy()
    np.fill_diagonal(off, np.inf)
    nearest = off.min(axis=1)
    finite = np.isfinite(nearest)
    if not finite.any():
        raise DataError("degenerate kernel: no point has a finite neighbour")
    return float(2.0 * nearest[finite].mean())


def auto_sigma(d: np.ndarray) -> float:
    """``sigma_heuristic`` with the zero-bandwidth guard applied."""
    sigma = sigma_heuristic(d)
    if sigma < SIGMA_FLOOR:
        warnings.warn(
            f"sigma heuristic gave {sigma:.3g}; using sigma = 1", RuntimeWarning, stacklevel=2
        )
        sigma = 1.0
    return sigma


def build_kernel(d: np.ndarray, sigma: float) -> np.ndarray:
    """exp(-d^2 / sigma^2); infinite distances give exactly 0."""
    if not sigma > 0:
        raise UsageError(f"sigma must be positive, got {sigma}")
    d = np.asarray(d, dtype=float)
    k = np.exp(-np.square(d / sigma))
    np.fill_diagonal(k, 1.0)
    return k


@numba.njit(cache=True)
def _smo_simplex(K, C, tol, max_iter, alpha, g):
    """Pairwise SMO for min 1/2 a'Ka, 0 <= a <= C, sum(a) fixed.

    Working set: i = argmin g over {a < C}, j chosen among {a > 0} by the
    second-order gain rule. First index wins ties.
    """
    n = alpha.shape[0]
    it = 0
    gap = np.inf
    while it < max_iter:
        i = -1
        gmin = np.inf
        gmax = -np.inf
        for t in range(n):
            if alpha[t] < C and g[t] < gmin:
                gmin = g[t]
                i = t
            if alpha[t] > 0.0 and g[t] > gmax:
                gmax = g[t]
        gap = gmax - gmin
        if i < 0 or gap < tol:
            break
        j = -1
        best = -np.inf
        for t in range(n):
            if alpha[t] > 0.0:
                b = g[t] - gmin
                if b > 0.0:
                    eta = K[i, i] + K[t, t] - 2.0 * K[i, t]
                    if eta <= 0.0:
                        eta = 1e-12
                    gain = b * b / eta
                    if gain > best:
                        best = gain
                        j = t
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta <= 0.0:
            eta = 1e-12
        step = (g[j] - g[i]) / eta
        room_i = C - alpha[i]
        if step >= room_i:
            step = room_i
        if step >= alpha[j]:
            step = alpha[j]
            alpha[j] = 0.0
            alpha[i] = alpha[i] + step
        else:
            alpha[j] = alpha[j] - step
            alpha[i] = C if step == room_i else alpha[i] + step
        for t in range(n):
            g[t] += step * (K[t, i] - K[t, j])
        it += 1
    return it, gap


@numba.njit(cache=True)
def _cd_box(K, C, nu, tol, max_iter, alpha, g):
    """Greedy coordinate descent for min 1/2 a'Ka - nu sum(a), 0 <= a <= C."""
    n = alpha.shape[0]
    it = 0
    worst = np.inf
    while it < max_iter:
        t_best = -1
        worst = 0.0
        for t in range(n):
            grad = g[t] - nu
            viol = 0.0
            if grad < 0.0 and alpha[t] < C:
                viol = -grad
            elif grad > 0.0 and alpha[t] > 0.0:
                viol = grad
            if viol > worst:
                worst = viol
                t_best = t
        if t_best < 0 or worst < tol:
            break
        t = t_best
        new = alpha[t] - (g[t] - nu) / K[t, t]
        if new < 0.0:
            new = 0.0
        elif new > C:
            new = C
        delta = new - alpha[t]
        alpha[t] = new
        for s in range(n):
            g[s] += delta * K[s, t]
        it += 1
    return it, worst


@dataclass(eq=False)
class OcsvmSolution:
    alpha: np.ndarray
    rho: float
    scores: np.ndarray
    formulation: str
    co: float
    nu: float
    iterations: int
    kkt_residual: float
    objective: float

    @property
    def offset(self) -> float:
        return self.rho


def kkt_residual_simplex(K, alpha, C):
    g = K @ alpha
    up = alpha < C
    low = alpha > 0
    if not up.any() or not low.any():
        return 0.0
    return max(0.0, float(g[low].max() - g[up].min()))


def kkt_residual_box(K, alpha, C, nu):
    grad = K @ alpha - nu
    viol = np.where((grad < 0) & (alpha < C), -grad, 0.0)
    viol = np.maximum(viol, np.where((grad > 0) & (alpha > 0), grad, 0.0))
    return float(viol.max(initial=0.0))


def _offset_from_kkt(g, alpha, C):
    interior = (alpha > 0) & (alpha < C)
    if interior.any():
        return float(np.median(g[interior]))
    # no free coefficient: the offset lies between the bound groups
    upper = g[alpha == 0].min(initial=np.inf)
    lower = g[alpha == C].max(initial=-np.inf)
    if not np.isfinite(upper):
        return float(lower)
    if not np.isfinite(lower):
        return float(upper)
    return 0.5 * (lower + upper)


def solve_ocsvm(K, formulation: str = "scholkopf", co: float = 1.0, nu: float = 0.5,
                tol: float = 1e-6, max_iter: int = 1_000_000) -> OcsvmSolution:
    """Solve the one-class SVM dual on kernel ``K`` and score every point.

    Raises ``ConvergenceError`` if the KKT violation is still above ``tol``
    after ``max_iter`` updates.
    """
    formulation = formulation.replace("-", "_")
    if formulation not in FORMULATIONS:
        raise UsageError(f"unknown formulation {formulation!r}")
    if not 0 < nu <= 1:
        raise UsageError(f"nu must be in (0, 1], got {nu}")
    if not co > 0:
        raise UsageError(f"co must be positive, got {co}")
    K = np.ascontiguousarray(K, dtype=float)
    n = K.shape[0]
    if n == 0 or K.shape != (n, n):
        raise DataError("kernel must be a non-empty square matrix")

    if formulation == "scholkopf":
        C = 1.0 / (nu * n)
        alpha = np.zeros(n)
        # LibSVM start: fill the first floor(nu n) slots to the bound
        full = min(n, int(np.floor(nu * n)))
        alpha[:full] = C
        if full < n:
            alpha[full] = max(0.0, 1.0 - full * C)
        it = 0
        for _ in range(3):
            # restart from a fresh gradient to shed accumulated drift
            g = K @ alpha
            done, _ = _smo_simplex(K, C, tol, max_iter - it, alpha, g)
            it += done
            residual = kkt_residual_simplex(K, alpha, C)
            if residual < tol or it >= max_iter:
                break
        g = K @ alpha
        offset = _offset_from_kkt(g, alpha, C)
        objective = 0.5 * float(alpha @ g)
    else:
        C = 1.0 / (co * n)
        alpha = np.full(n, C)
        it = 0
        for _ in range(3):
            g = K @ alpha
            done, _ = _cd_box(K, C, nu, tol, max_iter - it, alpha, g)
            it += done
            residual = kkt_residual_box(K, alpha, C, nu)
            if residual < tol or it >= max_iter:
                break
        g = K @ alpha
        offset = float(nu)
        objective = 0.5 * float(alpha @ g) - nu * float(alpha.sum())

    if residual >= tol:
        raise ConvergenceError(
            f"one-class SVM stopped after {it} updates with KKT residual {residual:.3g}",
            residual=residual, iterations=it,
        )
    return OcsvmSolution(alpha, offset, g - offset, formulation, co, nu, int(it),
                         residual, objective)
