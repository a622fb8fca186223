"""Normalized-equilibrium solver and KKT certification.

An equilibrium for weights r solves the fixed point Q = argmax_B f(B,Q,r)
with f(B,Q,r) = sum_i r_i v_i(Q_1,..,B_i,..,Q_K) over the coupled set
{B_i PSD, sum Tr B_i <= P}. The inner argmax is concave and separable
across users except for the trace coupling; it is solved by projected
gradient ascent, and the outer map is iterated with damping.

Certificates report the first-order conditions with a single shadow price
shared by all players: r_k grad_k v_k - lambda I + M_k = 0, M_k PSD,
Tr[M_k Q_k] = 0, sum Tr Q_k = P.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._kernels import eigvals_sym, inv_pd, logdet_pd
from ._optim import maximize_projected
from .channel import validate
from .rates import CovarianceProfile, Game

ACTIVE_TRACE_TOL = 1e-8

__all__ = [
    "NoEWeights",
    "SolveOptions",
    "EquilibriumCertificate",
    "ConvergenceError",
    "weighted_utility",
    "best_response",
    "solve_noe",
    "certify",
    "induced_weights",
    "initial_profile",
]


class ConvergenceError(RuntimeError):
    """Solver failed to converge; carries the last iterate for inspection."""

    def __init__(self, message, last_profile=None, residual=None, trajectory_tail=None):
        super().__init__(message)
        self.last_profile = last_profile
        self.residual = residual
        self.trajectory_tail = trajectory_tail or []


@dataclass(frozen=True)
class NoEWeights:
    """Strictly positive per-player weights of the weighted-utility game."""

    values: tuple

    def __init__(self, values: Sequence[float]):
        vals = tuple(float(v) for v in values)
        if not vals or any(not np.isfinite(v) or v <= 0 for v in vals):
            raise ValueError("weights must be finite and strictly positive")
        object.__setattr__(self, "values", vals)

    def normalized(self) -> "NoEWeights":
        """Rescale so the last player's weight is one."""
        return NoEWeights(tuple(v / self.values[-1] for v in self.values))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class SolveOptions:
    damping: float = 0.5
    max_iterations: int = 1000
    tol: float = 1e-8
    inner_tol: float = 1e-10
    inner_max_iterations: int = 20000
    seed: Optional[int] = None

    def __post_init__(self):
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must lie in (0, 1]")


def _as_weight_array(weights, num_users: int) -> np.ndarray:
    if isinstance(weights, NoEWeights):
        arr = weights.as_array()
    else:
        arr = np.asarray(list(weights), dtype=np.float64)
    if arr.shape != (num_users,):
        raise ValueError(f"expected {num_users} weights, got {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("weights must be finite and strictly positive")
    return arr


def initial_profile(game: Game, seed=None) -> CovarianceProfile:
    """Default start: scaled identities splitting the budget evenly, or a
    random PSD profile at full power when a seed is given."""
    dims = game.slot_dims
    budget = game.power_budget
    if seed is None:
        k = len(dims)
        return CovarianceProfile([budget / (k * d) * np.eye(d) for d in dims])
    rng = np.random.default_rng(seed)
    mats = []
    for d in dims:
        g = rng.normal(size=(d, d))
        mats.append(g @ g.T)
    total = sum(float(np.trace(m)) for m in mats)
    return CovarianceProfile([m * (budget / total) for m in mats])


def _term_values_grads(game: Game, basis, weights, mats, want_grad=True):
    """Weighted-utility terms of the inner problem: user i contributes
    r_i * (logdet(W_i + H_i B_i H_i^T) - logdet(W_i))."""
    value = 0.0
    grads = [] if want_grad else None
    for i in range(game.num_users):
        h = game.slot_channel(i)
        w = basis[i]
        covered = w + h @ mats[i] @ h.T
        value += weights[i] * (logdet_pd(covered) - logdet_pd(w))
        if want_grad:
            grad = weights[i] * (h.T @ inv_pd(covered) @ h)
            grads.append(0.5 * (grad + grad.T))
    return value, grads


def weighted_utility(response, profile, weights, game: Game) -> float:
    """f(B, Q, r): each user's rate evaluated with its own slot replaced.

    Args:
        response: candidate profile B (one slot per user).
        profile: anchor profile Q fixing everyone else's interference.
        weights: strictly positive player weights r.
        game: BroadcastGame or MultipleAccessGame.
    """
    b = response if isinstance(response, CovarianceProfile) else CovarianceProfile(response)
    q = profile if isinstance(profile, CovarianceProfile) else CovarianceProfile(profile)
    r = _as_weight_array(weights, game.num_users)
    game.check_profile(b)
    game.check_profile(q)
    basis = game.response_basis(q.matrices)
    value, _ = _term_values_grads(game, basis, r, b.matrices, want_grad=False)
    return value


def best_response(profile, weights, game: Game, opts: SolveOptions = None, start=None):
    """Joint weighted best response argmax_B f(B, Q, r) over the coupled set.

    Concave: each term is concave in its own block and the blocks couple
    only through the trace budget. Solved by projected gradient ascent with
    backtracking.

    Raises ConvergenceError when the inner iteration cap is exhausted.
    """
    opts = opts or SolveOptions()
    q = profile if isinstance(profile, CovarianceProfile) else CovarianceProfile(profile)
    r = _as_weight_array(weights, game.num_users)
    basis = game.response_basis(q.matrices)

    def fun_grad(mats):
        return _term_values_grads(game, basis, r, mats)

    init = list((start or q).matrices)
    res = maximize_projected(
        fun_grad, init, game.power_budget, tol=opts.inner_tol, max_iter=opts.inner_max_iterations
    )
    if not res.converged:
        gnorm = float(np.sqrt(sum(np.sum(g * g) for g in res.gradients)))
        raise ConvergenceError(
            f"best response did not converge within {opts.inner_max_iterations} iterations "
            f"(residual {res.residual:.3e}, gradient norm {gnorm:.3e})",
            last_profile=CovarianceProfile(res.matrices),
            residual=res.residual,
        )
    return CovarianceProfile(res.matrices)


def _single_player_response(game: Game, profile: CovarianceProfile, k: int, budget: float,
                            opts: SolveOptions):
    """Best value user k can reach alone with Tr B_k <= budget, others fixed."""
    h = game.slot_channel(k)
    w = game.response_basis(profile.matrices)[k]
    base = logdet_pd(w)
    if budget <= 0.0:
        dim = profile.matrices[k].shape[0]
        return 0.0, np.zeros((dim, dim))

    def fun_grad(mats):
        covered = w + h @ mats[0] @ h.T
        grad = h.T @ inv_pd(covered) @ h
        return logdet_pd(covered) - base, [0.5 * (grad + grad.T)]

    res = maximize_projected(
        fun_grad, [profile.matrices[k]], budget, tol=opts.inner_tol,
        max_iter=opts.inner_max_iterations,
    )
    return res.value, res.matrices[0]


@dataclass(frozen=True, eq=False)
class EquilibriumCertificate:
    """First-order evidence that a profile is a normalized equilibrium.

    All residual fields are nonnegative; ``max_residual`` aggregates them.
    multiplier matrices are M_k = lambda I - r_k grad_k v_k, so stationarity
    holds by construction and their minimum eigenvalues carry the PSD check.
    """

    shadow_price: float
    multipliers: tuple
    stationarity_residuals: np.ndarray
    multiplier_min_eigs: np.ndarray
    complementary_slackness: np.ndarray
    power_residual: float
    best_response_gaps: np.ndarray
    fixed_point_residual: float

    @property
    def psd_residuals(self) -> np.ndarray:
        return np.maximum(0.0, -self.multiplier_min_eigs)

    @property
    def max_residual(self) -> float:
        return float(
            max(
                self.stationarity_residuals.max(initial=0.0),
                self.psd_residuals.max(initial=0.0),
                self.complementary_slackness.max(initial=0.0),
                self.power_residual,
                self.best_response_gaps.max(initial=0.0),
            )
        )

    def ok(self, tol: float = 1e-6) -> bool:
        return self.max_residual <= tol


def certify(game: Game, profile, weights, opts: SolveOptions = None) -> EquilibriumCertificate:
    """Build the KKT certificate of a candidate normalized equilibrium.

    The shadow price is estimated as the largest eigenvalue of r_k grad_k
    v_k over players carrying power (the active player makes M_k = lambda I
    - r_k grad_k v_k tight). Best-response gaps are the per-player utility
    improvements of the joint weighted best response, clamped at zero.
    """
    opts = opts or SolveOptions()
    q = profile if isinstance(profile, CovarianceProfile) else CovarianceProfile(profile)
    r = _as_weight_array(weights, game.num_users)
    game.check_profile(q)

    k_users = game.num_users
    grads = [game.own_gradient(q, k) for k in range(k_users)]
    traces = np.array([float(np.trace(m)) for m in q.matrices])
    active = traces > ACTIVE_TRACE_TOL
    tops = np.array([float(eigvals_sym(r[k] * grads[k])[-1]) for k in range(k_users)])
    lam = float(tops[active].max()) if active.any() else float(tops.max())
    lam = max(lam, 0.0)

    multipliers = []
    stationarity = np.zeros(k_users)
    min_eigs = np.zeros(k_users)
    slackness = np.zeros(k_users)
    for k in range(k_users):
        m_k = lam * np.eye(q.matrices[k].shape[0]) - r[k] * grads[k]
        multipliers.append(m_k)
        stationarity[k] = float(np.linalg.norm(r[k] * grads[k] - lam * np.eye(m_k.shape[0]) + m_k))
        min_eigs[k] = float(eigvals_sym(m_k)[0])
        q_eff = q.matrices[k] if active[k] else np.zeros_like(q.matrices[k])
        slackness[k] = abs(float(np.trace(m_k @ q_eff)))
    power_residual = abs(game.power_budget - q.total_power)

    response = best_response(q, r, game, opts)
    basis = game.response_basis(q.matrices)
    gaps = np.zeros(k_users)
    for k in range(k_users):
        h = game.slot_channel(k)
        w = basis[k]
        v_now = logdet_pd(w + h @ q.matrices[k] @ h.T) - logdet_pd(w)
        v_best = logdet_pd(w + h @ response.matrices[k] @ h.T) - logdet_pd(w)
        gaps[k] = max(0.0, v_best - v_now)

    return EquilibriumCertificate(
        shadow_price=lam,
        multipliers=tuple(multipliers),
        stationarity_residuals=stationarity,
        multiplier_min_eigs=min_eigs,
        complementary_slackness=slackness,
        power_residual=power_residual,
        best_response_gaps=gaps,
        fixed_point_residual=q.distance(response),
    )


def solve_noe(game: Game, weights, opts: SolveOptions = None, start=None):
    """Damped fixed-point iteration Q <- (1-theta) Q + theta BR(Q).

    Args:
        game: BroadcastGame or MultipleAccessGame (sum power).
        weights: strictly positive player weights.
        opts: SolveOptions; the seed switches the start to a random PSD
            profile at full power.
        start: explicit starting profile overriding the default.

    Returns:
        (profile, certificate) on convergence of the fixed-point residual
        ||BR(Q) - Q||_F below opts.tol.

    Raises:
        ValueError: invalid channel.
        ConvergenceError: residual stayed above tol; carries the tail of
            the residual trajectory and the last iterate.
    """
    opts = opts or SolveOptions()
    report = validate(game.channel)
    if not report.ok:
        raise ValueError(f"invalid channel: {report}")
    r = _as_weight_array(weights, game.num_users)

    if start is not None:
        q = start if isinstance(start, CovarianceProfile) else CovarianceProfile(start)
    else:
        q = initial_profile(game, seed=opts.seed)
    theta = opts.damping
    residuals = []
    response = None
    for _ in range(opts.max_iterations):
        response = best_response(q, r, game, opts, start=response)
        residual = q.distance(response)
        residuals.append(residual)
        if residual <= opts.tol:
            return q, certify(game, q, r, opts)
        q = CovarianceProfile(
            [
                (1.0 - theta) * qm + theta * bm
                for qm, bm in zip(q.matrices, response.matrices)
            ]
        )
    raise ConvergenceError(
        f"fixed-point iteration did not reach tol={opts.tol} within "
        f"{opts.max_iterations} iterations (last residual {residuals[-1]:.3e})",
        last_profile=q,
        residual=residuals[-1],
        trajectory_tail=residuals[-10:],
    )


def induced_weights(game: Game, profile, active_tol: float = ACTIVE_TRACE_TOL) -> np.ndarray:
    """Weights under which a generalized equilibrium is a normalized one.

    With a single shared constraint, a point with per-player shadow prices
    mu_k is a normalized equilibrium for weights proportional to 1/mu_k.
    The estimate mu_k is the top eigenvalue of user k's own gradient;
    weights are normalized so the last user's weight is one.
    """
    q = profile if isinstance(profile, CovarianceProfile) else CovarianceProfile(profile)
    mus = []
    for k in range(game.num_users):
        top = float(eigvals_sym(game.own_gradient(q, k))[-1])
        if top <= 0:
            raise ValueError(f"user {k} has a vanishing gradient; weights undefined")
        mus.append(top)
    r = 1.0 / np.asarray(mus)
    return r / r[-1]
