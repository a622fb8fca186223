"""Frobenius projection onto the coupled strategy set and PSD utilities.

The feasible set is {X_k PSD for all k, sum_k Tr X_k <= P}. Its Frobenius
projection decomposes per slot after eigendecomposition: a single shift s
is subtracted from every eigenvalue of every slot and the result clamped
at zero, with s = 0 when the clamped input is already inside the budget
and otherwise chosen by bisection so the clamped traces sum to P exactly.
That common shift is the exact KKT multiplier of the projection problem,
not a heuristic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._kernels import eigh_sym, eigvals_sym, trace_shift
from .rates import CovarianceProfile

__all__ = ["FeasibleSet", "project", "min_eigenvalue"]


@dataclass(frozen=True)
class FeasibleSet:
    """Shared constraint data: total power P and per-slot matrix sizes."""

    total_power: float
    dims: tuple

    def __init__(self, total_power: float, dims: Sequence[int]):
        total_power = float(total_power)
        if not (np.isfinite(total_power) and total_power > 0):
            raise ValueError("total power must be finite and positive")
        object.__setattr__(self, "total_power", total_power)
        object.__setattr__(self, "dims", tuple(int(d) for d in dims))


def project(matrices, feasible_set) -> CovarianceProfile:
    """Project symmetric matrices onto {X_k PSD, sum Tr X_k <= P}.

    Args:
        matrices: sequence of symmetric matrices (one per slot).
        feasible_set: FeasibleSet, or the total power as a bare float.

    Returns:
        CovarianceProfile of the unique Frobenius-nearest feasible point.
    """
    budget = (
        feasible_set.total_power
        if isinstance(feasible_set, FeasibleSet)
        else float(feasible_set)
    )
    eigs = []
    for m in matrices:
        arr = np.asarray(m, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        eigs.append(eigh_sym(arr))
    all_vals = np.concatenate([w for w, _ in eigs])
    shift = trace_shift(all_vals, budget)
    out = []
    for w, v in eigs:
        clamped = np.maximum(w - shift, 0.0)
        out.append((v * clamped) @ v.T)
    return CovarianceProfile(out)


def min_eigenvalue(matrix) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    return float(eigvals_sym(arr)[0])
