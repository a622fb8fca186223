"""Projected gradient ascent with backtracking on the coupled strategy set.

One routine serves every concave (or multi-started nonconcave) maximization
in the package: the inner fixed-point best response, single-player best
responses for certificates, weighted sum-rate solves and the penalized
subproblems. Steps use a Barzilai-Borwein spectral guess safeguarded by an
Armijo backtracking line search (halving), and the stopping rule is the
unit-step projected-gradient residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conic import project

ARMIJO_C1 = 1e-4
MIN_STEP = 1e-18
MAX_STEP = 1e12


def _dot(a, b) -> float:
    return float(sum(np.sum(x * y) for x, y in zip(a, b)))


def _norm(a) -> float:
    return float(np.sqrt(sum(np.sum(x * x) for x in a)))


@dataclass
class AscentResult:
    matrices: list
    value: float
    gradients: list
    residual: float
    iterations: int
    converged: bool


def maximize_projected(fun_grad, start, budget, tol=1e-10, max_iter=5000) -> AscentResult:
    """Maximize a smooth function over {X_k PSD, sum Tr X_k <= budget}.

    Args:
        fun_grad: callable mapping a list of symmetric matrices to
            (value, list of symmetric gradients).
        start: starting matrices; projected onto the set first.
        budget: total-power bound of the feasible set.
        tol: unit-step projected-gradient residual target, scaled by
            (1 + Frobenius norm of the iterate).
        max_iter: iteration cap.

    Returns:
        AscentResult; ``converged`` is False when the cap was hit.
    """
    x = list(project(start, budget).matrices)
    f, g = fun_grad(x)
    step = 1.0 / (1.0 + _norm(g))
    prev_x = None
    prev_g = None
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        ref = project([xi + gi for xi, gi in zip(x, g)], budget).matrices
        residual = _norm([ri - xi for ri, xi in zip(ref, x)])
        if residual <= tol * (1.0 + _norm(x)):
            return AscentResult(x, f, g, residual, it - 1, True)

        if prev_x is not None:
            s = [xi - pi for xi, pi in zip(x, prev_x)]
            y = [gi - pg for gi, pg in zip(g, prev_g)]
            curv = -_dot(s, y)  # nonnegative for concave objectives
            ss = _dot(s, s)
            if curv > 1e-30:
                step = min(max(ss / curv, MIN_STEP), MAX_STEP)

        accepted = False
        while step >= MIN_STEP:
            cand = list(project([xi + step * gi for xi, gi in zip(x, g)], budget).matrices)
            gain_ref = _dot(g, [ci - xi for ci, xi in zip(cand, x)])
            if gain_ref <= 0.0:
                # projection returned (numerically) the current point
                break
            fc, gc = fun_grad(cand)
            if fc >= f + ARMIJO_C1 * gain_ref:
                prev_x, prev_g = x, g
                x, f, g = cand, fc, gc
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no admissible ascent step left: numerically stationary
            return AscentResult(x, f, g, residual, it, True)
    return AscentResult(x, f, g, residual, max_iter, False)
