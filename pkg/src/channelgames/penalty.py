"""Taxation reformulation: decoupled dynamics converging to equilibria.

With the equilibrium shadow price lambda* known, each player pays
(lambda*/r_k) max(0, -h(Q)) for violating the shared budget
h(Q) = P - sum Tr Q_i, and keeps only its individual constraints
(PSD plus a loose cap Tr Q_k <= P). Fixed points of the resulting
decoupled best-response dynamics are the normalized equilibria of the
coupled game; a larger weight means a smaller penalty share.

The penalized per-player problem is concave but kinked where the shared
budget becomes tight. Each best response is computed exactly by solving
the two smooth regimes separately (capped at the remaining budget, and
paying the linear overshoot price) and keeping the better candidate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._kernels import inv_pd, logdet_pd
from ._optim import maximize_projected
from .rates import CovarianceProfile, Game
from .solver import ConvergenceError, initial_profile

__all__ = ["PenaltyConfig", "PenaltyRunResult", "penalty_value", "run_penalty_game",
           "trajectory_to_csv"]


@dataclass(frozen=True)
class PenaltyConfig:
    """Shadow price, weights and iteration controls of the penalty game."""

    shadow_price: float
    weights: tuple
    max_iterations: int = 1000
    damping: float = 0.5
    tol: float = 1e-8
    inner_tol: float = 1e-10
    inner_max_iterations: int = 20000
    schedule: str = "sequential"  # or "simultaneous"

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.shadow_price < 0:
            raise ValueError("shadow price must be nonnegative")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be strictly positive")
        if self.schedule not in ("sequential", "simultaneous"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must lie in (0, 1]")


def penalty_value(cfg: PenaltyConfig, profile, p_tot: float) -> np.ndarray:
    """Per-player taxes (lambda*/r_k) max(0, -h(Q)), h(Q) = P - sum Tr Q_i.

    Zero exactly on the feasible set, linear in the violation beyond it,
    and smaller for players with larger weights.
    """
    q = profile if isinstance(profile, CovarianceProfile) else CovarianceProfile(profile)
    violation = max(0.0, q.total_power - float(p_tot))
    r = np.asarray(cfg.weights, dtype=np.float64)
    return cfg.shadow_price / r * violation


@dataclass(frozen=True, eq=False)
class PenaltyRunResult:
    profile: CovarianceProfile
    trajectory: tuple  # rows: (iteration, traces..., utilities..., penalties...)
    converged: bool
    iterations: int
    constraint_violation: float
    distance_to_reference: Optional[float]

    @property
    def is_equilibrium_candidate(self) -> bool:
        """False when the dynamics settled on a budget-violating point
        (e.g. with a zero shadow price there is no penalty pressure)."""
        return self.converged and self.constraint_violation <= 1e-8


def _penalized_best_response(game: Game, q: CovarianceProfile, k: int,
                             cfg: PenaltyConfig) -> np.ndarray:
    """Exact maximizer of v_k(B) - (lambda*/r_k) max(0, Tr B - budget_k)
    over {B PSD, Tr B <= P}, others' covariances fixed."""
    p_tot = game.power_budget
    price = cfg.shadow_price / cfg.weights[k]
    others = sum(float(np.trace(m)) for j, m in enumerate(q.matrices) if j != k)
    budget = p_tot - others
    h = game.slot_channel(k)
    w = game.response_basis(q.matrices)[k]
    base = logdet_pd(w)

    def rate_only(mats):
        covered = w + h @ mats[0] @ h.T
        g = h.T @ inv_pd(covered) @ h
        return logdet_pd(covered) - base, [0.5 * (g + g.T)]

    def rate_minus_price(mats):
        val, grads = rate_only(mats)
        dim = mats[0].shape[0]
        return val - price * float(np.trace(mats[0])), [grads[0] - price * np.eye(dim)]

    def penalized(mats):
        val, _ = rate_only(mats)
        overshoot = max(0.0, float(np.trace(mats[0])) - budget)
        return val - price * overshoot

    candidates = []
    if budget > 0.0:
        res_a = maximize_projected(rate_only, [q.matrices[k]], min(budget, p_tot),
                                   tol=cfg.inner_tol, max_iter=cfg.inner_max_iterations)
        candidates.append(res_a.matrices[0])
    else:
        candidates.append(np.zeros_like(q.matrices[k]))
    res_b = maximize_projected(rate_minus_price, [q.matrices[k]], p_tot,
                               tol=cfg.inner_tol, max_iter=cfg.inner_max_iterations)
    if float(np.trace(res_b.matrices[0])) >= budget - 1e-12:
        candidates.append(res_b.matrices[0])
    return max(candidates, key=lambda m: penalized([m]))


def run_penalty_game(game: Game, cfg: PenaltyConfig, start=None, reference=None):
    """Iterate damped decoupled best responses of the penalized utilities.

    Args:
        game: coupled game supplying utilities and the shared budget.
        cfg: penalty configuration; the shadow price is typically taken
            from an equilibrium certificate.
        start: starting profile (defaults to the even-split identity).
        reference: profile to measure the final distance against.

    Returns:
        PenaltyRunResult with the trajectory rows
        (iteration, per-player traces, per-player utilities, penalties).

    Raises:
        ConvergenceError: no fixed point within cfg.max_iterations.
    """
    if len(cfg.weights) != game.num_users:
        raise ValueError("one weight per player required")
    q = start if isinstance(start, CovarianceProfile) else (
        CovarianceProfile(start) if start is not None else initial_profile(game)
    )
    p_tot = game.power_budget
    theta = cfg.damping
    trajectory = []

    def record(it, prof):
        traces = [float(np.trace(m)) for m in prof.matrices]
        utils = list(game.rates(prof).values)
        taxes = list(penalty_value(cfg, prof, p_tot))
        trajectory.append((it, *traces, *utils, *taxes))

    record(0, q)
    converged = False
    iterations = 0
    for it in range(1, cfg.max_iterations + 1):
        iterations = it
        if cfg.schedule == "sequential":
            new = q
            for k in range(game.num_users):
                response = _penalized_best_response(game, new, k, cfg)
                damped = (1.0 - theta) * new.matrices[k] + theta * response
                new = new.replace(k, damped)
        else:
            responses = [
                _penalized_best_response(game, q, k, cfg)
                for k in range(game.num_users)
            ]
            new = CovarianceProfile(
                [(1.0 - theta) * m + theta * b for m, b in zip(q.matrices, responses)]
            )
        step = q.distance(new)
        q = new
        record(it, q)
        if step <= cfg.tol * (1.0 + np.sqrt(p_tot)):
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"penalty dynamics did not settle within {cfg.max_iterations} iterations",
            last_profile=q,
            trajectory_tail=trajectory[-10:],
        )
    violation = max(0.0, q.total_power - p_tot)
    dist = None
    if reference is not None:
        ref = reference if isinstance(reference, CovarianceProfile) else CovarianceProfile(reference)
        dist = q.distance(ref)
    return PenaltyRunResult(
        profile=q,
        trajectory=tuple(trajectory),
        converged=converged,
        iterations=iterations,
        constraint_violation=violation,
        distance_to_reference=dist,
    )


def trajectory_to_csv(result: PenaltyRunResult, fh, num_users: int) -> None:
    """Trajectory CSV: iteration, per-player trace, utility and penalty."""
    header = (
        ["iteration"]
        + [f"trace_{k + 1}" for k in range(num_users)]
        + [f"utility_{k + 1}" for k in range(num_users)]
        + [f"penalty_{k + 1}" for k in range(num_users)]
    )
    fh.write(",".join(header) + "\n")
    for row in result.trajectory:
        fh.write(",".join(f"{v:.12g}" for v in row) + "\n")
