"""Achievable-rate utilities and their matrix gradients.

Downlink rates assume interference pre-cancellation at the transmitter,
uplink rates successive cancellation at the receiver; in both cases the
j-th user of an :class:`~channelgames.channel.OrderSpec` is interfered by
exactly the users listed before it. All rates are natural logarithms
(nats) of determinant ratios, computed through Cholesky factorizations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from ._kernels import inv_pd, logdet_pd
from .channel import (
    BCChannel,
    MACChannel,
    OrderSpec,
    PSD_TOL,
    psd_violation,
)

RATE_CLAMP = 1e-12

__all__ = [
    "CovarianceProfile",
    "RateTuple",
    "BroadcastGame",
    "MultipleAccessGame",
    "bc_dpc_rates",
    "mac_sic_rates",
    "own_gradient",
    "cross_gradient",
]


@dataclass(frozen=True, eq=False)
class CovarianceProfile:
    """Strategy tuple: one symmetric PSD matrix per user."""

    matrices: tuple

    def __init__(self, matrices: Sequence):
        mats = []
        for k, m in enumerate(matrices):
            arr = np.array(m, dtype=np.float64)
            if arr.ndim == 0 or arr.shape == (1,):
                arr = arr.reshape(1, 1)
            if arr.ndim != 2:
                raise ValueError(f"Q_{k} must be a square matrix, got shape {arr.shape}")
            arr.setflags(write=False)
            mats.append(arr)
        object.__setattr__(self, "matrices", tuple(mats))

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> "CovarianceProfile":
        return cls([np.zeros((d, d)) for d in dims])

    @property
    def num_users(self) -> int:
        return len(self.matrices)

    @property
    def dims(self) -> tuple:
        return tuple(m.shape[0] for m in self.matrices)

    @property
    def total_power(self) -> float:
        return float(sum(np.trace(m) for m in self.matrices))

    def replace(self, k: int, matrix: np.ndarray) -> "CovarianceProfile":
        mats = list(self.matrices)
        mats[k] = matrix
        return CovarianceProfile(mats)

    def psd_violation(self, tol: float = PSD_TOL) -> float:
        return max(psd_violation(m, tol) for m in self.matrices)

    def check(self, dims=None, budget=None, tol: float = PSD_TOL) -> None:
        """Raise ValueError on shape mismatch, asymmetry or PSD/budget violation."""
        if dims is not None and self.dims != tuple(dims):
            raise ValueError(f"profile dims {self.dims} do not match game dims {tuple(dims)}")
        for k, m in enumerate(self.matrices):
            if m.shape[0] != m.shape[1]:
                raise ValueError(f"Q_{k} is not square")
            if not np.all(np.isfinite(m)):
                raise ValueError(f"Q_{k} has non-finite entries")
            if not np.allclose(m, m.T, atol=1e-10):
                raise ValueError(f"Q_{k} is not symmetric")
            if psd_violation(m, tol) > 0.0:
                raise ValueError(f"Q_{k} is not positive semidefinite")
        if budget is not None and self.total_power > budget + 1e-9:
            raise ValueError(
                f"profile power {self.total_power:.12g} exceeds budget {budget:.12g}"
            )

    def distance(self, other: "CovarianceProfile") -> float:
        """Stacked Frobenius distance."""
        return float(
            np.sqrt(
                sum(
                    float(np.sum((a - b) ** 2))
                    for a, b in zip(self.matrices, other.matrices)
                )
            )
        )

    def __iter__(self):
        return iter(self.matrices)

    def __getitem__(self, k: int) -> np.ndarray:
        return self.matrices[k]

    def __len__(self) -> int:
        return len(self.matrices)


@dataclass(frozen=True, eq=False)
class RateTuple:
    """Per-user achievable rates in nats; tiny negative rounding is clamped."""

    values: np.ndarray

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("rates must be finite")
        if arr.size and float(arr.min()) < -RATE_CLAMP:
            raise ValueError(f"negative rate beyond rounding tolerance: {arr.min()}")
        arr = np.maximum(arr, 0.0)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def sum(self) -> float:
        return float(self.values.sum())

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, k: int) -> float:
        return float(self.values[k])

    def __len__(self) -> int:
        return len(self.values)


def _as_order(order, num_users: int) -> OrderSpec:
    if order is None:
        return OrderSpec.identity(num_users)
    if not isinstance(order, OrderSpec):
        order = OrderSpec(order)
    if len(order) != num_users:
        raise ValueError(f"order covers {len(order)} users, channel has {num_users}")
    return order


class _GameBase:
    """Rate/gradient machinery shared by the downlink and uplink games."""

    @property
    def num_users(self) -> int:
        return self.channel.num_users

    @property
    def power_budget(self) -> float:
        return float(self.channel.power_budget)

    def slot_channel(self, k: int) -> np.ndarray:
        return self.channel.channels[k]

    def check_profile(self, profile: CovarianceProfile, feasible: bool = False) -> None:
        profile.check(
            dims=self.slot_dims, budget=self.power_budget if feasible else None
        )

    def rates(self, profile: CovarianceProfile) -> RateTuple:
        return RateTuple(self._rate_values(profile.matrices))

    def own_gradient(self, profile: CovarianceProfile, k: int) -> np.ndarray:
        w = self.response_basis(profile.matrices)[k]
        h = self.slot_channel(k)
        grad = h.T @ inv_pd(w + h @ profile.matrices[k] @ h.T) @ h
        return 0.5 * (grad + grad.T)

    def pseudo_gradient(self, profile: CovarianceProfile, weights) -> list:
        r = np.asarray(weights, dtype=np.float64)
        basis = self.response_basis(profile.matrices)
        out = []
        for k in range(self.num_users):
            h = self.slot_channel(k)
            grad = h.T @ inv_pd(basis[k] + h @ profile.matrices[k] @ h.T) @ h
            out.append(r[k] * 0.5 * (grad + grad.T))
        return out


@dataclass(frozen=True, eq=False)
class BroadcastGame(_GameBase):
    """Downlink game: receivers are players, strategies are the transmit
    covariances of their signals, coupled by the sum power budget."""

    channel: BCChannel
    order: OrderSpec

    def __init__(self, channel: BCChannel, order=None):
        object.__setattr__(self, "channel", channel)
        object.__setattr__(self, "order", _as_order(order, channel.num_users))
        object.__setattr__(
            self,
            "_noises",
            tuple(channel.noise_covariance(k) for k in range(channel.num_users)),
        )

    @property
    def slot_dims(self) -> tuple:
        return (self.channel.tx_antennas,) * self.num_users

    def _rate_values(self, mats) -> np.ndarray:
        n_t = self.channel.tx_antennas
        cum = np.zeros((n_t, n_t))
        rates = np.zeros(self.num_users)
        for u in self.order:
            h = self.channel.channels[u]
            noise = self._noises[u]
            interf = noise + h @ cum @ h.T
            cum = cum + mats[u]
            covered = noise + h @ cum @ h.T
            rates[u] = logdet_pd(covered) - logdet_pd(interf)
        return rates

    def response_basis(self, mats) -> list:
        """Per-user noise-plus-interference matrices with the user's own
        covariance removed; constant while only that user's slot varies."""
        n_t = self.channel.tx_antennas
        cum = np.zeros((n_t, n_t))
        basis = [None] * self.num_users
        for u in self.order:
            h = self.channel.channels[u]
            basis[u] = self._noises[u] + h @ cum @ h.T
            cum = cum + mats[u]
        return basis

    def cross_gradient_terms(self, mats) -> list:
        """For each user i, the matrix equal to d v_i / d Q_k for every user
        k listed before i, already mapped back to transmit space."""
        n_t = self.channel.tx_antennas
        cum = np.zeros((n_t, n_t))
        terms = [None] * self.num_users
        for u in self.order:
            h = self.channel.channels[u]
            noise = self._noises[u]
            interf = noise + h @ cum @ h.T
            cum = cum + mats[u]
            covered = noise + h @ cum @ h.T
            d = h.T @ (inv_pd(covered) - inv_pd(interf)) @ h
            terms[u] = 0.5 * (d + d.T)
        return terms

    def cross_gradient(self, profile: CovarianceProfile, i: int, k: int) -> np.ndarray:
        if self.order.position(k) > self.order.position(i):
            return np.zeros((self.channel.tx_antennas,) * 2)
        if k == i:
            return self.own_gradient(profile, k)
        return self.cross_gradient_terms(profile.matrices)[i]


@dataclass(frozen=True, eq=False)
class MultipleAccessGame(_GameBase):
    """Uplink game with a shared receiver: transmitters are players; under a
    sum power budget their strategy sets are coupled."""

    channel: MACChannel
    order: OrderSpec

    def __init__(self, channel: MACChannel, order=None):
        object.__setattr__(self, "channel", channel)
        object.__setattr__(self, "order", _as_order(order, channel.num_users))

    @property
    def slot_dims(self) -> tuple:
        return self.channel.tx_antennas

    def _noise_matrix(self) -> np.ndarray:
        return self.channel.noise_level * np.eye(self.channel.rx_antennas)

    def _rate_values(self, mats) -> np.ndarray:
        acc = self._noise_matrix()
        prev = logdet_pd(acc)
        rates = np.zeros(self.num_users)
        for u in self.order:
            h = self.channel.channels[u]
            acc = acc + h @ mats[u] @ h.T
            cur = logdet_pd(acc)
            rates[u] = cur - prev
            prev = cur
        return rates

    def response_basis(self, mats) -> list:
        acc = self._noise_matrix()
        basis = [None] * self.num_users
        for u in self.order:
            basis[u] = acc
            acc = acc + self.channel.channels[u] @ mats[u] @ self.channel.channels[u].T
        return basis

    def cumulative_inverses(self, mats) -> list:
        """Inverses of the noise-plus-signal chain: entry j is the inverse
        after absorbing the first j ordered users."""
        acc = self._noise_matrix()
        invs = [inv_pd(acc)]
        for u in self.order:
            acc = acc + self.channel.channels[u] @ mats[u] @ self.channel.channels[u].T
            invs.append(inv_pd(acc))
        return invs

    def cross_gradient(self, profile: CovarianceProfile, i: int, k: int) -> np.ndarray:
        dim_k = self.channel.tx_antennas[k]
        pos_i = self.order.position(i)
        if self.order.position(k) > pos_i:
            return np.zeros((dim_k, dim_k))
        invs = self.cumulative_inverses(profile.matrices)
        h_k = self.channel.channels[k]
        if k == i:
            grad = h_k.T @ invs[pos_i + 1] @ h_k
        else:
            grad = h_k.T @ (invs[pos_i + 1] - invs[pos_i]) @ h_k
        return 0.5 * (grad + grad.T)


Game = Union[BroadcastGame, MultipleAccessGame]


def _as_profile(q) -> CovarianceProfile:
    return q if isinstance(q, CovarianceProfile) else CovarianceProfile(q)


def bc_dpc_rates(channel: BCChannel, profile, order=None) -> RateTuple:
    """Per-user downlink rates with pre-cancellation along ``order``.

    Args:
        channel: broadcast channel (white or colored noise).
        profile: covariance profile, one (n_t, n_t) PSD matrix per user.
        order: interference order; identity when omitted.

    Returns:
        RateTuple of nonnegative rates in nats.
    """
    game = BroadcastGame(channel, order)
    profile = _as_profile(profile)
    game.check_profile(profile)
    return game.rates(profile)


def mac_sic_rates(channel: MACChannel, profile, order=None) -> RateTuple:
    """Per-user uplink rates under successive cancellation along ``order``."""
    game = MultipleAccessGame(channel, order)
    profile = _as_profile(profile)
    game.check_profile(profile)
    return game.rates(profile)


def _game_for(channel, order) -> Game:
    if isinstance(channel, BCChannel):
        return BroadcastGame(channel, order)
    if isinstance(channel, MACChannel):
        return MultipleAccessGame(channel, order)
    raise TypeError(f"unsupported channel type {type(channel).__name__}")


def own_gradient(channel, profile, order, k: int) -> np.ndarray:
    """Gradient of user k's rate with respect to its own covariance."""
    game = _game_for(channel, order)
    profile = _as_profile(profile)
    game.check_profile(profile)
    return game.own_gradient(profile, k)


def cross_gradient(channel, profile, order, i: int, k: int) -> np.ndarray:
    """Gradient of user i's rate with respect to user k's covariance.

    Exactly zero when k is listed after i in the interference order.
    """
    game = _game_for(channel, order)
    profile = _as_profile(profile)
    game.check_profile(profile)
    return game.cross_gradient(profile, i, k)
