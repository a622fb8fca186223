"""Diagonal strict concavity probes and the underlying trace inequalities.

A weighted game is uniquely solvable (one normalized equilibrium per
weight vector) whenever the pseudo-gradient monotonicity gap

    Tr[(Qa - Qb)^T g(Qb, r) + (Qb - Qa)^T g(Qa, r)]

is strictly positive for every pair of distinct feasible profiles. The
universal quantifier is not decidable by enumeration, so ``sample_dsc``
probes it on seeded random pairs and reports the minimum observed gap;
a counterexample only means the sufficient condition failed, so the
uniqueness conclusion is then "inconclusive", never "non-unique".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._kernels import inv_pd
from .rates import CovarianceProfile, Game

__all__ = [
    "DSCReport",
    "pseudo_gradient",
    "dsc_gap",
    "sample_dsc",
    "trace_inequality",
    "trace_inequality_tight2",
]


@dataclass(frozen=True, eq=False)
class DSCReport:
    min_gap: float
    argmin_pair: tuple
    num_samples: int
    verdict: str  # "no-violation" | "counterexample"
    seed: Optional[int]

    @property
    def uniqueness_conclusion(self) -> str:
        if self.verdict == "no-violation":
            return "no violation found; consistent with a unique equilibrium"
        return "inconclusive: the sufficient condition failed on a sampled pair"


def pseudo_gradient(game: Game, profile, weights) -> list:
    """Stacked weighted own-gradients (r_1 grad_1 v_1, ..., r_K grad_K v_K)."""
    q = profile if isinstance(profile, CovarianceProfile) else CovarianceProfile(profile)
    game.check_profile(q)
    r = np.asarray(list(weights), dtype=np.float64)
    if r.shape != (game.num_users,) or np.any(r <= 0):
        raise ValueError("weights must be strictly positive, one per user")
    return game.pseudo_gradient(q, r)


def dsc_gap(game: Game, profile_a, profile_b, weights) -> float:
    """Monotonicity gap of the pseudo-gradient between two profiles.

    Symmetric in its two profile arguments; zero when they coincide and
    strictly positive everywhere iff the game is diagonally strictly
    concave for these weights.
    """
    qa = profile_a if isinstance(profile_a, CovarianceProfile) else CovarianceProfile(profile_a)
    qb = profile_b if isinstance(profile_b, CovarianceProfile) else CovarianceProfile(profile_b)
    g_a = pseudo_gradient(game, qa, weights)
    g_b = pseudo_gradient(game, qb, weights)
    gap = 0.0
    for k in range(game.num_users):
        diff = qa.matrices[k] - qb.matrices[k]
        gap += float(np.sum(diff * (g_b[k] - g_a[k])))
    return gap


def wishart_profile(dims, total_power: float, rng: np.random.Generator) -> CovarianceProfile:
    """Random PSD profile G^T G per slot, rescaled into the power simplex."""
    mats = []
    for d in dims:
        g = rng.normal(size=(d, d))
        mats.append(g @ g.T)
    total = sum(float(np.trace(m)) for m in mats)
    scale = rng.uniform(0.0, 1.0) * total_power / total
    return CovarianceProfile([m * scale for m in mats])


def sample_dsc(game: Game, weights, num_samples: int = 1000, seed: Optional[int] = None) -> DSCReport:
    """Probe the DSC gap on random feasible pairs.

    Args:
        game: game to probe.
        weights: player weights the gap is evaluated for.
        num_samples: number of sampled pairs.
        seed: RNG seed recorded in the report.

    Returns:
        DSCReport with the minimum gap, the minimizing pair and the verdict
        ("counterexample" iff the minimum gap is <= 0).
    """
    rng = np.random.default_rng(seed)
    r = np.asarray(list(weights), dtype=np.float64)
    dims = game.slot_dims
    budget = game.power_budget
    min_gap = np.inf
    argmin = None
    for _ in range(num_samples):
        qa = wishart_profile(dims, budget, rng)
        qb = wishart_profile(dims, budget, rng)
        gap = 0.0
        g_a = game.pseudo_gradient(qa, r)
        g_b = game.pseudo_gradient(qb, r)
        for k in range(game.num_users):
            diff = qa.matrices[k] - qb.matrices[k]
            gap += float(np.sum(diff * (g_b[k] - g_a[k])))
        if gap < min_gap:
            min_gap = gap
            argmin = (qa, qb)
    verdict = "no-violation" if min_gap > 0.0 else "counterexample"
    return DSCReport(
        min_gap=float(min_gap),
        argmin_pair=argmin,
        num_samples=num_samples,
        verdict=verdict,
        seed=seed,
    )


def _as_psd_list(mats):
    out = []
    for m in mats:
        arr = np.asarray(m, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        out.append(arr)
    return out


def trace_inequality(a_mats, b_mats) -> float:
    """Value of Tr{sum_k (A_k-B_k)[(sum_{l<=k} B_l)^-1 - (sum_{l<=k} A_l)^-1]}.

    Nonnegative for PSD inputs with positive-definite leading matrices,
    with equality only when A_k = B_k for every k.

    Raises ValueError when a leading partial sum is singular.
    """
    a_mats = _as_psd_list(a_mats)
    b_mats = _as_psd_list(b_mats)
    if len(a_mats) != len(b_mats):
        raise ValueError("A and B lists must have equal length")
    sum_a = np.zeros_like(a_mats[0])
    sum_b = np.zeros_like(b_mats[0])
    value = 0.0
    for a_k, b_k in zip(a_mats, b_mats):
        sum_a = sum_a + a_k
        sum_b = sum_b + b_k
        try:
            inv_b = inv_pd(sum_b)
            inv_a = inv_pd(sum_a)
        except np.linalg.LinAlgError as exc:
            raise ValueError("singular leading sums") from exc
        value += float(np.sum((a_k - b_k) * (inv_b - inv_a)))
    return value


def trace_inequality_tight2(a1, b1, a2, b2, w: float) -> float:
    """Two-matrix sharpening with a free positive parameter w.

    Value of Tr[(A1-B1)(B1^-1 - A1^-1)
               + 4 (A2-B2){(w B1 + B2)^-1 - (w A1 + A2)^-1}].
    """
    if not w > 0:
        raise ValueError("w must be positive")
    a1, b1, a2, b2 = _as_psd_list([a1, b1, a2, b2])
    try:
        term1 = float(np.sum((a1 - b1) * (inv_pd(b1) - inv_pd(a1))))
        term2 = float(np.sum((a2 - b2) * (inv_pd(w * b1 + b2) - inv_pd(w * a1 + a2))))
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular leading sums") from exc
    return term1 + 4.0 * term2
