"""Uplink/downlink covariance transformations and equilibrium equivalences.

The transform maps a feasible uplink profile to a downlink profile of the
transposed channels (and back) such that every user's rate and the total
transmit power are preserved exactly. Convention pinned here: the downlink
interference order is the REVERSE of the uplink interference order; only
the reversed order admits the power-preserving transform (see the scalar
worked example in the tests).

Each user is handled sequentially through the whitened effective channel
F_k = Sig_k^{-1/2} H_k^T Om_k^{-1/2}, where Om_k is the uplink
noise-plus-interference seen by user k and Sig_k its downlink counterpart;
rotating the whitened covariance between the two singular bases of F_k
swaps the roles of transmitter and receiver without changing the rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from ._kernels import eigh_sym, eigvals_sym
from .channel import (
    BCChannel,
    ColoredNoise,
    MACChannel,
    OrderSpec,
    SumPower,
    WhiteNoise,
    to_white_noise,
    validate,
)
from .rates import BroadcastGame, CovarianceProfile, Game, MultipleAccessGame
from .solver import SolveOptions, _single_player_response

__all__ = [
    "ScalingWeights",
    "DualityReport",
    "TransformError",
    "mac_to_bc",
    "bc_to_mac",
    "verify_individual_powers",
    "verify_scaled_budgets",
]

RATE_MATCH_TOL = 1e-8


class TransformError(RuntimeError):
    """Covariance transform failed to reproduce the source rates."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class ScalingWeights:
    """Strictly positive scalings of the shared trace constraint."""

    values: tuple

    def __init__(self, values: Sequence[float]):
        vals = tuple(float(v) for v in values)
        if not vals or any(not np.isfinite(v) or v <= 0 for v in vals):
            raise ValueError("scaling weights must be finite and positive")
        object.__setattr__(self, "values", vals)

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class DualityReport:
    source_profile: CovarianceProfile
    target_profile: CovarianceProfile
    source_rates: np.ndarray
    target_rates: np.ndarray
    rate_deltas: np.ndarray
    power_delta: float
    psd_residuals: np.ndarray
    source_order: OrderSpec
    target_order: OrderSpec

    @property
    def max_rate_delta(self) -> float:
        return float(self.rate_deltas.max(initial=0.0))


def _sqrt_pd(a):
    w, v = eigh_sym(a)
    w = np.maximum(w, 0.0)
    return (v * np.sqrt(w)) @ v.T


def _inv_sqrt_pd(a):
    w, v = eigh_sym(a)
    if w[0] <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return (v / np.sqrt(w)) @ v.T


def _sym(a):
    return 0.5 * (a + a.T)


def _embed(mat, size):
    """Copy the leading principal block into a (size, size) zero matrix;
    blocks beyond min(n_k, n_t) never enter the whitened rate."""
    out = np.zeros((size, size))
    m = min(mat.shape[0], size)
    out[:m, :m] = mat[:m, :m]
    return out


def _flip_cov(h_bc, omega, sigma, source_cov, to_bc: bool):
    """Rotate one user's covariance between the uplink and downlink games.

    h_bc is the downlink gain matrix (n_k x n_t); omega / sigma are the
    uplink / downlink noise-plus-interference matrices of this user.
    """
    iso = _inv_sqrt_pd(omega)
    isg = _inv_sqrt_pd(sigma)
    f = isg @ h_bc @ iso
    u, _, vt = np.linalg.svd(f)
    n_k, n_t = h_bc.shape
    if to_bc:
        ssq = _sqrt_pd(sigma)
        c = u.T @ (ssq @ source_cov @ ssq) @ u
        return _sym(iso @ (vt.T @ _embed(c, n_t) @ vt) @ iso)
    osq = _sqrt_pd(omega)
    d = vt @ (osq @ source_cov @ osq) @ vt.T
    return _sym(isg @ (u @ _embed(d, n_k) @ u.T) @ isg)


def mac_to_bc(mac: MACChannel, profile, order=None, tol: float = RATE_MATCH_TOL):
    """Transform an uplink profile into the rate-equivalent downlink profile.

    Args:
        mac: uplink channel (white noise); user k's gain is (n_r, n_k).
        profile: feasible uplink covariance profile.
        order: uplink interference order (identity when omitted).
        tol: maximum tolerated per-user rate mismatch.

    Returns:
        (bc_channel, bc_profile, report): the dual downlink channel has
        gains H_k^T, the same white noise level and the same sum power; its
        interference order (in the report) is the reverse of ``order``.

    Raises:
        TransformError: transformed rates beyond ``tol`` of the originals.
        ValueError: invalid channel or infeasible profile.
    """
    check = validate(mac)
    if not check.ok:
        raise ValueError(f"invalid channel: {check}")
    game = MultipleAccessGame(mac, order)
    q = profile if isinstance(profile, CovarianceProfile) else CovarianceProfile(profile)
    game.check_profile(q, feasible=True)
    order = game.order
    n0 = mac.noise_level
    n_r = mac.rx_antennas

    bc_channel = BCChannel(
        [h.T for h in mac.channels], WhiteNoise(n0), mac.power_budget
    )
    bc_order = order.reversed()

    omegas = game.response_basis(q.matrices)
    mats = [None] * mac.num_users
    bc_cum = np.zeros((n_r, n_r))
    for u in reversed(list(order)):
        h_bc = bc_channel.channels[u]
        n_k = h_bc.shape[0]
        sigma = n0 * np.eye(n_k) + h_bc @ bc_cum @ h_bc.T
        mats[u] = _flip_cov(h_bc, omegas[u], sigma, q.matrices[u], to_bc=True)
        bc_cum = bc_cum + mats[u]

    target = CovarianceProfile(mats)
    report = _build_report(game, q, BroadcastGame(bc_channel, bc_order), target)
    if report.max_rate_delta > tol:
        if all(d == 1 for d in q.dims) and n_r == 1:
            target = _scalar_rate_match_bc(bc_channel, bc_order, report.source_rates)
            report = _build_report(game, q, BroadcastGame(bc_channel, bc_order), target)
        if report.max_rate_delta > tol:
            raise TransformError(
                f"rate mismatch {report.max_rate_delta:.3e} exceeds {tol}", report
            )
    return bc_channel, target, report


def bc_to_mac(bc: BCChannel, profile, order=None, tol: float = RATE_MATCH_TOL):
    """Transform a downlink profile into the rate-equivalent uplink profile.

    Mirror of :func:`mac_to_bc`; colored downlink noise is whitened first
    (which changes no rate). The dual uplink uses the transposed gains, the
    reversed interference order and the same sum power budget.
    """
    check = validate(bc)
    if not check.ok:
        raise ValueError(f"invalid channel: {check}")
    if isinstance(bc.noise, ColoredNoise):
        bc = to_white_noise(bc, 1.0)
    game = BroadcastGame(bc, order)
    s = profile if isinstance(profile, CovarianceProfile) else CovarianceProfile(profile)
    game.check_profile(s, feasible=True)
    order = game.order
    n0 = bc.noise.level
    n_t = bc.tx_antennas

    mac_channel = MACChannel(
        [h.T for h in bc.channels], n0, SumPower(bc.power_budget)
    )
    mac_order = order.reversed()

    sigmas = game.response_basis(s.matrices)
    mats = [None] * bc.num_users
    mac_cum = n0 * np.eye(n_t)
    for u in mac_order:
        omega = mac_cum
        mats[u] = _flip_cov(bc.channels[u], omega, sigmas[u], s.matrices[u], to_bc=False)
        h_mac = mac_channel.channels[u]
        mac_cum = mac_cum + h_mac @ mats[u] @ h_mac.T

    target = CovarianceProfile(mats)
    report = _build_report(game, s, MultipleAccessGame(mac_channel, mac_order), target)
    if report.max_rate_delta > tol:
        raise TransformError(
            f"rate mismatch {report.max_rate_delta:.3e} exceeds {tol}", report
        )
    return mac_channel, target, report


def _build_report(source_game, source_profile, target_game, target_profile) -> DualityReport:
    v = np.asarray(source_game.rates(source_profile).values)
    u = np.asarray(target_game.rates(target_profile).values)
    psd = np.array(
        [max(0.0, -float(eigvals_sym(m)[0])) for m in target_profile.matrices]
    )
    return DualityReport(
        source_profile=source_profile,
        target_profile=target_profile,
        source_rates=v,
        target_rates=u,
        rate_deltas=np.abs(v - u),
        power_delta=abs(source_profile.total_power - target_profile.total_power),
        psd_residuals=psd,
        source_order=source_game.order,
        target_order=target_game.order,
    )


def _scalar_rate_match_bc(bc_channel, bc_order, rates) -> CovarianceProfile:
    """All-scalar fallback: match each user's rate by root finding, walking
    the reversed order so the interference term is already fixed."""
    n0 = bc_channel.noise.level
    mats = [None] * bc_channel.num_users
    cum = 0.0
    for u in bc_order:
        h2 = float(bc_channel.channels[u][0, 0]) ** 2
        base = n0 + h2 * cum
        target = float(rates[u])
        if h2 == 0.0:
            if target > 1e-14:
                raise TransformError(f"user {u} has a zero gain but positive rate")
            mats[u] = np.zeros((1, 1))
            continue

        def gap(s, base=base, h2=h2, target=target):
            return np.log1p(h2 * s / base) - target

        hi = 1.0
        while gap(hi) < 0.0 and hi < 1e12:
            hi *= 2.0
        s_val = 0.0 if target <= 0.0 else brentq(gap, 0.0, hi, xtol=1e-14)
        mats[u] = np.array([[s_val]])
        cum += s_val
    return CovarianceProfile(mats)


@dataclass(frozen=True, eq=False)
class IndividualPowerReport:
    """Per-player deviation gaps of a candidate point under the induced
    individual-power game and under the coupled game."""

    induced_powers: np.ndarray
    nep_gaps: np.ndarray
    gnep_gaps: np.ndarray

    def ok(self, tol: float = 1e-6) -> bool:
        return bool(self.nep_gaps.max(initial=0.0) <= tol and self.gnep_gaps.max(initial=0.0) <= tol)


def verify_individual_powers(game: Game, profile, opts: SolveOptions = None) -> IndividualPowerReport:
    """Check the NEP/GNEP equivalence at a candidate equilibrium.

    Builds the individual-power game with P_k = Tr Q_k and reports every
    player's best-response gap under (a) that decoupled budget and (b) the
    coupled budget P - sum_{j != k} Tr Q_j.
    """
    opts = opts or SolveOptions()
    q = profile if isinstance(profile, CovarianceProfile) else CovarianceProfile(profile)
    game.check_profile(q)
    k_users = game.num_users
    traces = np.array([float(np.trace(m)) for m in q.matrices])
    rates_now = np.asarray(game.rates(q).values)
    nep = np.zeros(k_users)
    gnep = np.zeros(k_users)
    total = game.power_budget
    for k in range(k_users):
        best_nep, _ = _single_player_response(game, q, k, float(traces[k]), opts)
        nep[k] = max(0.0, best_nep - rates_now[k])
        budget = total - float(traces.sum() - traces[k])
        best_gnep, _ = _single_player_response(game, q, k, budget, opts)
        gnep[k] = max(0.0, best_gnep - rates_now[k])
    return IndividualPowerReport(induced_powers=traces, nep_gaps=nep, gnep_gaps=gnep)


@dataclass(frozen=True, eq=False)
class ScaledBudgetEntry:
    alpha: tuple
    gaps: Optional[np.ndarray]
    skipped: bool
    note: str = ""


@dataclass(frozen=True, eq=False)
class ScaledBudgetReport:
    entries: tuple

    def ok(self, tol: float = 1e-6) -> bool:
        checked = [e for e in self.entries if not e.skipped]
        return bool(checked) and all(e.gaps.max(initial=0.0) <= tol for e in checked)


def verify_scaled_budgets(game: Game, profile, alphas, individual_powers=None,
                 opts: SolveOptions = None, feas_tol: float = 1e-9) -> ScaledBudgetReport:
    """Check that a point stays an equilibrium under scaled shared budgets.

    For each scaling alpha the shared constraint becomes
    sum_k Tr[Q_k]/alpha_k <= sum_k P_k/alpha_k, with P_k defaulting to
    Tr Q_k. Scalings for which the point itself is infeasible are skipped
    with a note.
    """
    opts = opts or SolveOptions()
    q = profile if isinstance(profile, CovarianceProfile) else CovarianceProfile(profile)
    game.check_profile(q)
    traces = np.array([float(np.trace(m)) for m in q.matrices])
    powers = traces if individual_powers is None else np.asarray(individual_powers, dtype=np.float64)
    rates_now = np.asarray(game.rates(q).values)
    entries = []
    for alpha in alphas:
        a = np.asarray(list(alpha), dtype=np.float64)
        rhs = float(np.sum(powers / a))
        lhs = float(np.sum(traces / a))
        if lhs > rhs + feas_tol * (1.0 + abs(rhs)):
            entries.append(ScaledBudgetEntry(tuple(a), None, True, "profile infeasible for this scaling"))
            continue
        gaps = np.zeros(game.num_users)
        for k in range(game.num_users):
            budget = float(a[k] * (rhs - (lhs - traces[k] / a[k])))
            best, _ = _single_player_response(game, q, k, budget, opts)
            gaps[k] = max(0.0, best - rates_now[k])
        entries.append(ScaledBudgetEntry(tuple(a), gaps, False))
    return ScaledBudgetReport(tuple(entries))
