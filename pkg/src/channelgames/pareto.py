"""Weighted sum-rate solutions, frontier sweeps and the weight mapping
between Pareto scalarization weights and equilibrium weights.

The regulator's problem max sum_i gamma_i v_i over the coupled set is
concave for the uplink exactly when the weights are nonincreasing along
the interference order. Downlink solves therefore route through the dual
uplink (transposed gains, reversed order) whenever the weights are
compatible, and fall back to multi-start projected gradient otherwise.

At a solution with all users carrying power, the regulator and equilibrium
first-order conditions coincide iff eta * r_k * Tr[grad_k v_k Q_k] =
sum_i gamma_i Tr[dv_i/dQ_k Q_k]; stacking rows in interference-order
positions gives the linear system eta b = A gamma with A upper triangular,
which is solved in either direction (users without power are removed
first, on the reduced game).
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._kernels import eigvals_sym, inv_pd, logdet_pd
from ._optim import maximize_projected
from .channel import BCChannel, ColoredNoise, MACChannel, OrderSpec, SumPower
from .duality import mac_to_bc
from .rates import (
    BroadcastGame,
    CovarianceProfile,
    Game,
    MultipleAccessGame,
    RateTuple,
)
from .solver import ACTIVE_TRACE_TOL, ConvergenceError, SolveOptions

__all__ = [
    "ParetoWeights",
    "WeightMapResult",
    "pareto_solve",
    "frontier_sweep",
    "sweep_to_csv",
    "weight_map_gamma_to_r",
    "weight_map_r_to_gamma",
    "two_user_closed_form",
    "pareto_kkt_residuals",
    "simplex_grid",
]

MULTISTART_SEEDS = 8


@dataclass(frozen=True)
class ParetoWeights:
    """Nonnegative scalarization weights on the probability simplex."""

    values: tuple

    def __init__(self, values: Sequence[float]):
        vals = np.asarray(list(values), dtype=np.float64)
        if vals.size == 0 or np.any(vals < -1e-12) or not np.all(np.isfinite(vals)):
            raise ValueError("weights must be finite and nonnegative")
        total = float(vals.sum())
        if abs(total - 1.0) > 1e-8:
            raise ValueError(f"weights must sum to one (got {total:.12g}); use normalize()")
        object.__setattr__(self, "values", tuple(float(v) for v in np.maximum(vals, 0.0)))

    @classmethod
    def normalize(cls, values: Sequence[float]) -> "ParetoWeights":
        vals = np.asarray(list(values), dtype=np.float64)
        return cls(vals / vals.sum())

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


def _as_gamma(gamma, num_users: int) -> np.ndarray:
    if isinstance(gamma, ParetoWeights):
        arr = gamma.as_array()
    else:
        arr = ParetoWeights(gamma).as_array()
    if arr.shape != (num_users,):
        raise ValueError(f"expected {num_users} weights, got {arr.shape}")
    return arr


def _is_concave_order(gamma: np.ndarray, order: OrderSpec) -> bool:
    seq = [gamma[u] for u in order]
    return all(a >= b - 1e-12 for a, b in zip(seq, seq[1:]))


def _mac_objective(game: MultipleAccessGame, gamma: np.ndarray):
    """Value/gradient of the uplink weighted sum rate. The gradient of user
    at position j accumulates (gamma_j - gamma_{j+1}) Phi_j from the right,
    where Phi_j is the inverse of the noise-plus-signal chain."""
    order = list(game.order)

    def fun_grad(mats):
        acc = game._noise_matrix()
        logs = [logdet_pd(acc)]
        chain = [acc]
        for u in order:
            h = game.channel.channels[u]
            acc = acc + h @ mats[u] @ h.T
            chain.append(acc)
            logs.append(logdet_pd(acc))
        value = sum(
            gamma[u] * (logs[j + 1] - logs[j]) for j, u in enumerate(order)
        )
        grads = [None] * game.num_users
        psi = None
        for j in range(len(order) - 1, -1, -1):
            u = order[j]
            phi = inv_pd(chain[j + 1])
            if psi is None:
                psi = gamma[u] * phi
            else:
                psi = psi + (gamma[u] - gamma[order[j + 1]]) * phi
            h = game.channel.channels[u]
            g = h.T @ psi @ h
            grads[u] = 0.5 * (g + g.T)
        return value, grads

    return fun_grad


def _bc_objective(game: BroadcastGame, gamma: np.ndarray):
    """Value/gradient of the downlink weighted sum rate (nonconcave in
    general): user k's gradient is its own covered inverse plus the
    cross terms of every user listed after it."""
    order = list(game.order)

    def fun_grad(mats):
        n_t = game.channel.tx_antennas
        cum = np.zeros((n_t, n_t))
        value = 0.0
        own = [None] * game.num_users
        delta = [None] * game.num_users
        for u in order:
            h = game.channel.channels[u]
            noise = game._noises[u]
            interf = noise + h @ cum @ h.T
            cum = cum + mats[u]
            covered = noise + h @ cum @ h.T
            value += gamma[u] * (logdet_pd(covered) - logdet_pd(interf))
            inv_cov = inv_pd(covered)
            own[u] = h.T @ inv_cov @ h
            delta[u] = h.T @ (inv_cov - inv_pd(interf)) @ h
        grads = [None] * game.num_users
        tail = np.zeros((n_t, n_t))
        for j in range(len(order) - 1, -1, -1):
            u = order[j]
            g = gamma[u] * own[u] + tail
            grads[u] = 0.5 * (g + g.T)
            tail = tail + gamma[u] * delta[u]
        return value, grads

    return fun_grad


def _weighted_objective(game: Game, gamma: np.ndarray):
    if isinstance(game, MultipleAccessGame):
        return _mac_objective(game, gamma)
    return _bc_objective(game, gamma)


def _multistart(game: Game, fun_grad, opts: SolveOptions):
    dims = game.slot_dims
    budget = game.power_budget
    k = len(dims)
    starts = [[budget / (k * d) * np.eye(d) for d in dims]]
    base_seed = 0 if opts.seed is None else int(opts.seed)
    for i in range(MULTISTART_SEEDS):
        rng = np.random.default_rng(base_seed + i)
        mats = []
        for d in dims:
            g = rng.normal(size=(d, d))
            mats.append(g @ g.T)
        total = sum(float(np.trace(m)) for m in mats)
        starts.append([m * (budget / total) for m in mats])
    best = None
    for start in starts:
        res = maximize_projected(
            fun_grad, start, budget, tol=opts.inner_tol, max_iter=opts.inner_max_iterations
        )
        if res.converged and (best is None or res.value > best.value):
            best = res
    if best is None:
        raise ConvergenceError("no multi-start run converged")
    return best


def pareto_solve(game: Game, gamma, opts: SolveOptions = None):
    """Maximize the gamma-weighted sum rate over the coupled feasible set.

    Downlink games with weights nonincreasing along the reversed order are
    solved in the dual uplink domain (where the objective is concave) and
    the maximizer is transformed back; incompatible weights trigger a
    nonconcavity warning and a best-effort multi-start solve.

    Returns:
        (profile, rates) with the profile saturating the power budget.
    """
    opts = opts or SolveOptions()
    gamma = _as_gamma(gamma, game.num_users)

    if isinstance(game, BroadcastGame):
        dual_order = game.order.reversed()
        if _is_concave_order(gamma, dual_order):
            return _bc_solve_via_dual(game, gamma, opts)
        warnings.warn(
            "weights increase along the decoding order: objective is not "
            "concave, falling back to multi-start projected gradient",
            stacklevel=2,
        )
        best = _multistart(game, _bc_objective(game, gamma), opts)
        profile = CovarianceProfile(best.matrices)
        return profile, game.rates(profile)

    fun_grad = _mac_objective(game, gamma)
    if _is_concave_order(gamma, game.order):
        res = maximize_projected(
            fun_grad,
            list(CovarianceProfile.zeros(game.slot_dims).matrices),
            game.power_budget,
            tol=opts.inner_tol,
            max_iter=opts.inner_max_iterations,
        )
        if not res.converged:
            raise ConvergenceError(
                f"weighted sum-rate solve did not converge (residual {res.residual:.3e})",
                residual=res.residual,
            )
    else:
        warnings.warn(
            "weights increase along the decoding order: objective is not "
            "concave, falling back to multi-start projected gradient",
            stacklevel=2,
        )
        res = _multistart(game, fun_grad, opts)
    profile = CovarianceProfile(res.matrices)
    return profile, game.rates(profile)


def _dual_uplink(game: BroadcastGame):
    """White-noise dual of a downlink game: transposed gains, reversed order."""
    channel = game.channel
    if isinstance(channel.noise, ColoredNoise):
        from .channel import to_white_noise

        channel = to_white_noise(channel, 1.0)
    mac = MACChannel(
        [h.T for h in channel.channels],
        channel.noise.level,
        SumPower(channel.power_budget),
    )
    return channel, MultipleAccessGame(mac, game.order.reversed())


def _bc_solve_via_dual(game: BroadcastGame, gamma: np.ndarray, opts: SolveOptions):
    white, dual = _dual_uplink(game)
    fun_grad = _mac_objective(dual, gamma)
    res = maximize_projected(
        fun_grad,
        list(CovarianceProfile.zeros(dual.slot_dims).matrices),
        dual.power_budget,
        tol=opts.inner_tol,
        max_iter=opts.inner_max_iterations,
    )
    if not res.converged:
        raise ConvergenceError(
            f"dual uplink solve did not converge (residual {res.residual:.3e})",
            residual=res.residual,
        )
    _, profile, _ = mac_to_bc(dual.channel, CovarianceProfile(res.matrices), dual.order)
    return profile, game.rates(profile)


def pareto_kkt_residuals(game: Game, gamma, profile) -> dict:
    """First-order residuals of the regulator problem at a candidate point.

    Returns a dict with the multiplier estimate ``mu`` and the PSD,
    complementary-slackness and power-saturation residuals.
    """
    gamma = _as_gamma(gamma, game.num_users)
    q = profile if isinstance(profile, CovarianceProfile) else CovarianceProfile(profile)
    fun_grad = _weighted_objective(game, gamma)
    _, grads = fun_grad(list(q.matrices))
    traces = np.array([float(np.trace(m)) for m in q.matrices])
    active = traces > ACTIVE_TRACE_TOL
    tops = np.array([float(eigvals_sym(g)[-1]) for g in grads])
    mu = float(tops[active].max()) if active.any() else float(tops.max())
    mu = max(mu, 0.0)
    psd = []
    slack = []
    for k, g in enumerate(grads):
        l_k = mu * np.eye(g.shape[0]) - g
        psd.append(max(0.0, -float(eigvals_sym(l_k)[0])))
        slack.append(abs(float(np.sum(l_k * q.matrices[k]))) if active[k] else 0.0)
    return {
        "mu": mu,
        "psd_residual": float(max(psd)),
        "slackness_residual": float(max(slack)),
        "power_residual": abs(game.power_budget - q.total_power),
    }


# ---------------------------------------------------------------------------
# gamma <-> r weight mapping
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WeightMapResult:
    """Outcome of mapping between scalarization and equilibrium weights.

    ``a_matrix``/``b_vector`` are indexed by interference-order position of
    the reduced (active-user) game; weight vectors are in user index space
    with NaN (r) or 0 (gamma) marking inactive users.
    """

    direction: str  # "gamma_to_r" | "r_to_gamma"
    a_matrix: np.ndarray
    b_vector: np.ndarray
    eta: float
    weights_r: np.ndarray
    weights_gamma: np.ndarray
    active_mask: np.ndarray
    status: str  # "ok" | "degenerate game"


def _reduced_game(game: Game, keep: list):
    """Sub-game on the kept users, preserving their relative order."""
    order = [u for u in game.order if u in keep]
    relabel = {u: i for i, u in enumerate(keep)}
    sub_order = [relabel[u] for u in order]
    if isinstance(game, BroadcastGame):
        ch = game.channel
        noise = ch.noise
        if isinstance(noise, ColoredNoise):
            noise = ColoredNoise([noise.covariances[u] for u in keep])
        sub = BCChannel([ch.channels[u] for u in keep], noise, ch.power_budget)
        return BroadcastGame(sub, sub_order)
    ch = game.channel
    sub = MACChannel(
        [ch.channels[u] for u in keep], ch.noise_level, SumPower(ch.power_budget)
    )
    return MultipleAccessGame(sub, sub_order)


def _order_space_system(game: Game, profile: CovarianceProfile):
    """A and c in interference-order positions: A[j, l] = Tr[dv_{u_l}/dQ_{u_j} Q_{u_j}],
    c[j] = Tr[grad v_{u_j} Q_{u_j}] = A[j, j]."""
    order = list(game.order)
    k = len(order)
    a = np.zeros((k, k))
    for j, u in enumerate(order):
        own = game.own_gradient(profile, u)
        a[j, j] = float(np.sum(own * profile.matrices[u]))
        for l in range(j + 1, k):
            cross = game.cross_gradient(profile, order[l], u)
            a[j, l] = float(np.sum(cross * profile.matrices[u]))
    return a, np.diag(a).copy()


def weight_map_gamma_to_r(game: Game, gamma, profile, order=None) -> WeightMapResult:
    """Equilibrium weights enforcing a given Pareto solution.

    Args:
        game: the game the profile solves (its order is used; ``order``
            overrides it).
        gamma: scalarization weights of the solved problem.
        profile: the Pareto-optimal profile for those weights.

    Returns:
        WeightMapResult with r normalized so the last active user in
        interference order has weight one. Users without power are removed
        and mapped on the reduced game; with a single active user the
        status is "degenerate game".

    Raises:
        ValueError: an active user has a singular rate-power coupling c_k.
    """
    if order is not None:
        game = type(game)(game.channel, order)
    gamma = _as_gamma(gamma, game.num_users)
    q = profile if isinstance(profile, CovarianceProfile) else CovarianceProfile(profile)
    game.check_profile(q)

    traces = np.array([float(np.trace(m)) for m in q.matrices])
    active_mask = traces > ACTIVE_TRACE_TOL
    keep = [u for u in range(game.num_users) if active_mask[u]]
    weights_r = np.full(game.num_users, np.nan)
    weights_gamma = gamma.copy()

    if len(keep) == 1 and game.num_users > 1:
        weights_r[keep[0]] = 1.0
        return WeightMapResult(
            "gamma_to_r", np.zeros((1, 1)), np.zeros(1), np.nan,
            weights_r, weights_gamma, active_mask, "degenerate game",
        )

    sub = _reduced_game(game, keep)
    sub_profile = CovarianceProfile([q.matrices[u] for u in keep])
    sub_gamma = gamma[keep]
    a, c = _order_space_system(sub, sub_profile)
    if np.any(np.abs(c) < 1e-14):
        raise ValueError("singular rate-power coupling c_k for an active user")
    rhs = a @ np.asarray([sub_gamma[u] for u in sub.order])
    eta = float(rhs[-1] / c[-1])
    if eta <= 0:
        raise ValueError(f"nonpositive multiplier ratio eta={eta:.3e}")
    r_pos = rhs / (eta * c)
    for j, u in enumerate(sub.order):
        weights_r[keep[u]] = r_pos[j]
    b = np.asarray([r_pos[j] * c[j] for j in range(len(keep))])
    return WeightMapResult(
        "gamma_to_r", a, b, eta, weights_r, weights_gamma, active_mask, "ok"
    )


def weight_map_r_to_gamma(game: Game, weights, profile, order=None) -> WeightMapResult:
    """Scalarization weights reproducing a given equilibrium profile.

    Solves A gamma = eta b with the simplex normalization appended; in the
    aligned-degraded regime with all users active, A is upper triangular
    with a nonnegative inverse so the recovered gamma is nonnegative.

    Raises:
        np.linalg.LinAlgError: singular system (condition number included).
    """
    if order is not None:
        game = type(game)(game.channel, order)
    r = np.asarray(list(weights), dtype=np.float64)
    if r.shape != (game.num_users,) or np.any(r <= 0):
        raise ValueError("weights must be strictly positive, one per user")
    q = profile if isinstance(profile, CovarianceProfile) else CovarianceProfile(profile)
    game.check_profile(q)

    traces = np.array([float(np.trace(m)) for m in q.matrices])
    active_mask = traces > ACTIVE_TRACE_TOL
    keep = [u for u in range(game.num_users) if active_mask[u]]
    weights_r = np.where(active_mask, r, np.nan)
    weights_gamma = np.zeros(game.num_users)

    if len(keep) == 1 and game.num_users > 1:
        weights_gamma[keep[0]] = 1.0
        return WeightMapResult(
            "r_to_gamma", np.zeros((1, 1)), np.zeros(1), np.nan,
            weights_r, weights_gamma, active_mask, "degenerate game",
        )

    sub = _reduced_game(game, keep)
    sub_profile = CovarianceProfile([q.matrices[u] for u in keep])
    a, c = _order_space_system(sub, sub_profile)
    m = len(keep)
    r_pos = np.asarray([r[keep[u]] for u in sub.order])
    b = r_pos * c
    # unknowns: gamma in order positions, then eta
    system = np.zeros((m + 1, m + 1))
    system[:m, :m] = a
    system[:m, m] = -b
    system[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    cond = np.linalg.cond(system)
    if not np.isfinite(cond) or cond > 1e14:
        raise np.linalg.LinAlgError(
            f"singular weight-map system (condition number {cond:.3e})"
        )
    sol = np.linalg.solve(system, rhs)
    gamma_pos, eta = sol[:m], float(sol[m])
    for j, u in enumerate(sub.order):
        weights_gamma[keep[u]] = gamma_pos[j]
    return WeightMapResult(
        "r_to_gamma", a, b, eta, weights_r, weights_gamma, active_mask, "ok"
    )


def two_user_closed_form(q1: float, q2: float, n1: float, n2: float,
                         p_tot: float, ratio: float,
                         direction: str = "gamma_to_r") -> float:
    """Scalar two-user closed-form weight-ratio conversion.

    At a power split (q1, q2) with q1 + q2 = p_tot on the scalar
    aligned-degraded channel, gamma_1/gamma_2 and r_1/r_2 differ by
    (q1+n1) q2 / ((q1+q2+n2)(q1+n2)); the two ratios coincide when the
    second user carries no power.
    """
    if abs(q1 + q2 - p_tot) > 1e-8 * max(1.0, p_tot):
        raise ValueError("closed form assumes the power budget is saturated")
    term = (q1 + n1) * q2 / ((q1 + q2 + n2) * (q1 + n2))
    if direction == "gamma_to_r":
        return ratio - term
    if direction == "r_to_gamma":
        return ratio + term
    raise ValueError(f"unknown direction {direction!r}")


# ---------------------------------------------------------------------------
# frontier sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SweepRow:
    gamma: np.ndarray
    profile: Optional[CovarianceProfile]
    rates: Optional[RateTuple]
    weights_r: Optional[np.ndarray]
    eta: float
    active_mask: Optional[np.ndarray]
    error: Optional[str] = None


@dataclass(frozen=True, eq=False)
class ParetoSweep:
    rows: tuple

    @property
    def num_failed(self) -> int:
        return sum(1 for row in self.rows if row.error is not None)


def simplex_grid(num_users: int, resolution: int) -> list:
    """Regular grid on the weight simplex; for two users this is
    ``resolution`` evenly spaced points from (1,0) to (0,1)."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    steps = resolution - 1
    grids = []
    for comp in itertools.combinations_with_replacement(range(num_users), steps):
        counts = np.bincount(comp, minlength=num_users)
        grids.append(counts / steps)
    return grids


def _sweep_point(args):
    game, gamma, opts = args
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            profile, rate_tuple = pareto_solve(game, gamma, opts)
        try:
            mapped = weight_map_gamma_to_r(game, gamma, profile)
            weights_r = mapped.weights_r
            eta = mapped.eta
            mask = mapped.active_mask
        except (ValueError, np.linalg.LinAlgError):
            weights_r, eta = None, np.nan
            traces = np.array([float(np.trace(m)) for m in profile.matrices])
            mask = traces > ACTIVE_TRACE_TOL
        return SweepRow(np.asarray(gamma), profile, rate_tuple, weights_r, eta, mask)
    except (ConvergenceError, ValueError) as exc:
        return SweepRow(np.asarray(gamma), None, None, None, np.nan, None, error=str(exc))


def frontier_sweep(game: Game, gammas=None, grid: int = None,
                   opts: SolveOptions = None, jobs: int = 1) -> ParetoSweep:
    """Solve the weighted sum-rate problem over a grid of weights.

    Args:
        gammas: explicit list of weight vectors; or
        grid: simplex grid resolution (two-user: number of points).
        jobs: worker processes; per-point seeds derive from opts.seed so the
            result is identical for any job count.

    Per-point failures are recorded in the rows, the sweep continues.
    """
    opts = opts or SolveOptions()
    if gammas is None:
        if grid is None:
            raise ValueError("provide either gammas or grid")
        gammas = simplex_grid(game.num_users, grid)
    seeds = [None if opts.seed is None else int(opts.seed) + i for i in range(len(gammas))]
    tasks = [
        (game, np.asarray(g, dtype=np.float64),
         SolveOptions(opts.damping, opts.max_iterations, opts.tol,
                      opts.inner_tol, opts.inner_max_iterations, seed))
        for g, seed in zip(gammas, seeds)
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    return ParetoSweep(tuple(rows))


def sweep_to_csv(sweep: ParetoSweep, fh) -> None:
    """Write a sweep as CSV: gamma_*, rate_*, r_*, eta, active_mask."""
    k = len(sweep.rows[0].gamma)
    header = (
        [f"gamma_{i + 1}" for i in range(k)]
        + [f"rate_{i + 1}" for i in range(k)]
        + [f"r_{i + 1}" for i in range(k)]
        + ["eta", "active_mask"]
    )
    fh.write(",".join(header) + "\n")
    for row in sweep.rows:
        cells = [f"{g:.12g}" for g in row.gamma]
        if row.error is not None:
            cells += ["nan"] * (2 * k + 1) + [""]
        else:
            cells += [f"{v:.12g}" for v in row.rates.values]
            if row.weights_r is None:
                cells += ["nan"] * k
            else:
                cells += [f"{v:.12g}" for v in row.weights_r]
            cells.append(f"{row.eta:.12g}")
            cells.append("".join("1" if a else "0" for a in row.active_mask))
        fh.write(",".join(cells) + "\n")
