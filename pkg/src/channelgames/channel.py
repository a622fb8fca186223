"""Channel models for downlink (BC) and uplink (MAC) power-allocation games.

Conventions used throughout the package:

* matrices are real; noise covariances are symmetric positive definite,
* user indices are 0-based,
* an :class:`OrderSpec` lists users in *interference order*: the j-th
  listed user is interfered by exactly the users listed before it. With
  the identity order, user 0 is interference-free. For the uplink this is
  the reverse of the chronological successive-cancellation order (the
  last listed user is decoded first).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from ._kernels import eigvals_sym

PSD_TOL = 1e-9


class ChannelFormatError(ValueError):
    """Raised when a JSON channel description is malformed."""


def _freeze(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def psd_violation(a: np.ndarray, tol: float = PSD_TOL) -> float:
    """How far a symmetric matrix is from being PSD under the package rule.

    Returns max(0, -(min eigenvalue) - tol*(1+trace)); zero means accepted.
    """
    scale = 1.0 + max(float(np.trace(a)), 0.0)
    return max(0.0, -float(eigvals_sym(a)[0]) - tol * scale)


def is_psd(a: np.ndarray, tol: float = PSD_TOL) -> bool:
    return psd_violation(a, tol) == 0.0


@dataclass(frozen=True)
class WhiteNoise:
    """White receiver noise with per-antenna power ``level``."""

    level: float

    def covariance(self, dim: int) -> np.ndarray:
        return self.level * np.eye(dim)


@dataclass(frozen=True, eq=False)
class ColoredNoise:
    """Per-user symmetric positive-definite noise covariances."""

    covariances: tuple

    def __init__(self, covariances: Sequence):
        object.__setattr__(
            self, "covariances", tuple(_freeze(c) for c in covariances)
        )


Noise = Union[WhiteNoise, ColoredNoise]


@dataclass(frozen=True)
class SumPower:
    total: float


@dataclass(frozen=True)
class IndividualPowers:
    levels: tuple

    def __init__(self, levels: Sequence[float]):
        object.__setattr__(self, "levels", tuple(float(p) for p in levels))

    @property
    def total(self) -> float:
        return sum(self.levels)


PowerMode = Union[SumPower, IndividualPowers]


@dataclass(frozen=True, eq=False)
class BCChannel:
    """Gaussian broadcast channel: one transmitter, K receivers.

    Attributes:
        channels: per-user gain matrices, user k of shape (n_k, n_t).
        noise: WhiteNoise(level) or ColoredNoise with one (n_k, n_k)
            covariance per user.
        power_budget: total transmit power shared by all users' signals.
    """

    channels: tuple
    noise: Noise
    power_budget: float

    def __init__(self, channels: Sequence, noise: Noise, power_budget: float):
        object.__setattr__(self, "channels", tuple(_freeze(h) for h in channels))
        object.__setattr__(self, "noise", noise)
        object.__setattr__(self, "power_budget", float(power_budget))

    @property
    def num_users(self) -> int:
        return len(self.channels)

    @property
    def tx_antennas(self) -> int:
        return int(self.channels[0].shape[1])

    @property
    def rx_antennas(self) -> tuple:
        return tuple(int(h.shape[0]) for h in self.channels)

    def noise_covariance(self, k: int) -> np.ndarray:
        if isinstance(self.noise, WhiteNoise):
            return self.noise.covariance(self.channels[k].shape[0])
        return self.noise.covariances[k]


@dataclass(frozen=True, eq=False)
class MACChannel:
    """Gaussian multiple-access channel: K transmitters, one receiver.

    Attributes:
        channels: per-user gain matrices, user k of shape (n_r, n_k).
        noise_level: white noise power at the common receiver.
        power: SumPower(total) for the jointly constrained game, or
            IndividualPowers(levels) for per-transmitter budgets.
    """

    channels: tuple
    noise_level: float
    power: PowerMode

    def __init__(self, channels: Sequence, noise_level: float, power: PowerMode):
        object.__setattr__(self, "channels", tuple(_freeze(h) for h in channels))
        object.__setattr__(self, "noise_level", float(noise_level))
        object.__setattr__(self, "power", power)

    @property
    def num_users(self) -> int:
        return len(self.channels)

    @property
    def rx_antennas(self) -> int:
        return int(self.channels[0].shape[0])

    @property
    def tx_antennas(self) -> tuple:
        return tuple(int(h.shape[1]) for h in self.channels)

    @property
    def power_budget(self) -> float:
        return float(self.power.total)


Channel = Union[BCChannel, MACChannel]


@dataclass(frozen=True)
class OrderSpec:
    """Permutation of users in interference order (0-based).

    The j-th listed user is interfered by exactly the users listed before
    it; the first listed user is interference-free.
    """

    users: tuple

    def __init__(self, users: Sequence[int]):
        object.__setattr__(self, "users", tuple(int(u) for u in users))
        if sorted(self.users) != list(range(len(self.users))):
            raise ValueError(f"not a permutation of 0..{len(self.users) - 1}: {self.users}")

    @classmethod
    def identity(cls, num_users: int) -> "OrderSpec":
        return cls(range(num_users))

    def reversed(self) -> "OrderSpec":
        return OrderSpec(self.users[::-1])

    def position(self, user: int) -> int:
        return self.users.index(user)

    def __len__(self) -> int:
        return len(self.users)

    def __iter__(self):
        return iter(self.users)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str) -> None:
        self.violations.append(message)

    def __str__(self) -> str:
        if self.ok:
            return "channel valid"
        return "; ".join(self.violations)


def _check_matrix(report, name, mat, shape=None):
    if mat.ndim != 2:
        report.add(f"{name} is not a matrix")
        return False
    if not np.all(np.isfinite(mat)):
        report.add(f"{name} has non-finite entries")
        return False
    if shape is not None and mat.shape != shape:
        report.add(f"dimension mismatch: {name} has shape {mat.shape}, expected {shape}")
        return False
    return True


def validate(channel: Channel) -> ValidationReport:
    """Check every structural invariant of a channel; empty report iff valid."""
    report = ValidationReport()
    if isinstance(channel, BCChannel):
        _validate_bc(channel, report)
    elif isinstance(channel, MACChannel):
        _validate_mac(channel, report)
    else:
        report.add(f"unknown channel type {type(channel).__name__}")
    return report


def _validate_bc(channel: BCChannel, report: ValidationReport) -> None:
    if channel.num_users < 1:
        report.add("channel has no users")
        return
    n_t = channel.channels[0].shape[1] if channel.channels[0].ndim == 2 else 0
    for k, h in enumerate(channel.channels):
        if _check_matrix(report, f"H_{k}", h) and h.shape[1] != n_t:
            report.add(
                f"dimension mismatch: H_{k} has {h.shape[1]} columns, expected {n_t}"
            )
    if isinstance(channel.noise, WhiteNoise):
        if not (np.isfinite(channel.noise.level) and channel.noise.level > 0):
            report.add("white noise level must be positive")
    else:
        covs = channel.noise.covariances
        if len(covs) != channel.num_users:
            report.add(
                f"expected {channel.num_users} noise covariances, got {len(covs)}"
            )
        for k, (cov, h) in enumerate(zip(covs, channel.channels)):
            nk = h.shape[0] if h.ndim == 2 else -1
            if not _check_matrix(report, f"N_{k}", cov, (nk, nk)):
                continue
            if not np.allclose(cov, cov.T, atol=1e-12):
                report.add(f"noise covariance N_{k} not symmetric")
            elif float(eigvals_sym(cov)[0]) <= 0.0:
                report.add(f"noise covariance N_{k} not positive definite")
    if not (np.isfinite(channel.power_budget) and channel.power_budget > 0):
        report.add("power budget must be finite and positive")


def _validate_mac(channel: MACChannel, report: ValidationReport) -> None:
    if channel.num_users < 1:
        report.add("channel has no users")
        return
    n_r = channel.channels[0].shape[0] if channel.channels[0].ndim == 2 else 0
    for k, h in enumerate(channel.channels):
        if _check_matrix(report, f"H_{k}", h) and h.shape[0] != n_r:
            report.add(f"dimension mismatch: H_{k} has {h.shape[0]} rows, expected {n_r}")
    if not (np.isfinite(channel.noise_level) and channel.noise_level > 0):
        report.add("noise level must be positive")
    if isinstance(channel.power, SumPower):
        if not (np.isfinite(channel.power.total) and channel.power.total > 0):
            report.add("power budget must be finite and positive")
    else:
        if len(channel.power.levels) != channel.num_users:
            report.add(
                f"expected {channel.num_users} power levels, got {len(channel.power.levels)}"
            )
        for k, p in enumerate(channel.power.levels):
            if not (np.isfinite(p) and p > 0):
                report.add(f"power level P_{k} must be positive")


def _inv_sqrt_pd(a: np.ndarray, name: str) -> np.ndarray:
    w, v = np.linalg.eigh(a)
    if w[0] <= 0.0:
        raise ValueError(f"singular noise covariance ({name})")
    return (v / np.sqrt(w)) @ v.T


def to_white_noise(channel: BCChannel, noise_level: float = 1.0) -> BCChannel:
    """Re-express a BC with white noise of power ``noise_level`` per antenna.

    Each gain matrix becomes sqrt(N0) * N_k^{-1/2} H_k, which leaves every
    user's rate unchanged for any transmit covariance profile.

    Raises ValueError if some noise covariance is singular.
    """
    if isinstance(channel.noise, WhiteNoise):
        if channel.noise.level == noise_level:
            return channel
        covs = [channel.noise.covariance(h.shape[0]) for h in channel.channels]
    else:
        covs = list(channel.noise.covariances)
    scaled = []
    for k, (h, cov) in enumerate(zip(channel.channels, covs)):
        scaled.append(np.sqrt(noise_level) * _inv_sqrt_pd(cov, f"N_{k}") @ h)
    return BCChannel(scaled, WhiteNoise(noise_level), channel.power_budget)


def is_aligned_degraded(channel: BCChannel, tol: float = PSD_TOL):
    """Detect the aligned-and-degraded structure of a BC.

    Aligned means every user has n_t antennas and an identity gain matrix;
    degraded means the noise covariances admit an ordering whose successive
    differences are PSD (up to ``tol``, scaled by 1+trace).

    Returns:
        (True, OrderSpec) with a valid degradedness ordering, weakest-noise
        user first, or (False, None).

    Sorting by trace is exhaustive here: the PSD order is transitive, so if
    any chain exists every pair is comparable, and comparable matrices with
    equal traces are equal.
    """
    k_users = channel.num_users
    n_t = channel.tx_antennas
    for h in channel.channels:
        if h.shape != (n_t, n_t) or not np.allclose(h, np.eye(n_t), atol=max(tol, 1e-12)):
            return False, None
    if isinstance(channel.noise, WhiteNoise):
        return True, OrderSpec.identity(k_users)
    covs = channel.noise.covariances
    order = sorted(range(k_users), key=lambda k: float(np.trace(covs[k])))
    for a, b in zip(order, order[1:]):
        if psd_violation(covs[b] - covs[a], tol) > 0.0:
            return False, None
    return True, OrderSpec(order)


# ---------------------------------------------------------------------------
# JSON channel description
# ---------------------------------------------------------------------------
#   {"type": "bc"|"mac",
#    "channels": [[[...]]],                      row-major nested arrays
#    "noise": {"white": N0} | {"covariances": [...]},
#    "power": {"sum": P} | {"individual": [...]}}


def channel_from_dict(doc: dict) -> Channel:
    if not isinstance(doc, dict):
        raise ChannelFormatError("channel description must be a JSON object")
    kind = doc.get("type")
    if kind not in ("bc", "mac"):
        raise ChannelFormatError(f"unknown channel type: {kind!r}")
    try:
        channels = [np.array(h, dtype=np.float64) for h in doc["channels"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ChannelFormatError(f"bad 'channels' entry: {exc}") from exc
    noise = doc.get("noise")
    power = doc.get("power")
    if not isinstance(noise, dict) or not isinstance(power, dict):
        raise ChannelFormatError("'noise' and 'power' must be objects")

    if kind == "bc":
        if "sum" not in power:
            raise ChannelFormatError("BC channels take a sum power budget")
        if "white" in noise:
            noise_obj: Noise = WhiteNoise(float(noise["white"]))
        elif "covariances" in noise:
            noise_obj = ColoredNoise([np.array(c, dtype=np.float64) for c in noise["covariances"]])
        else:
            raise ChannelFormatError("noise must specify 'white' or 'covariances'")
        return BCChannel(channels, noise_obj, float(power["sum"]))

    if "white" not in noise:
        raise ChannelFormatError("MAC channels take white noise only")
    if "sum" in power:
        mode: PowerMode = SumPower(float(power["sum"]))
    elif "individual" in power:
        mode = IndividualPowers([float(p) for p in power["individual"]])
    else:
        raise ChannelFormatError("power must specify 'sum' or 'individual'")
    return MACChannel(channels, float(noise["white"]), mode)


def channel_to_dict(channel: Channel) -> dict:
    if isinstance(channel, BCChannel):
        if isinstance(channel.noise, WhiteNoise):
            noise = {"white": channel.noise.level}
        else:
            noise = {"covariances": [c.tolist() for c in channel.noise.covariances]}
        return {
            "type": "bc",
            "channels": [h.tolist() for h in channel.channels],
            "noise": noise,
            "power": {"sum": channel.power_budget},
        }
    if isinstance(channel.power, SumPower):
        power = {"sum": channel.power.total}
    else:
        power = {"individual": list(channel.power.levels)}
    return {
        "type": "mac",
        "channels": [h.tolist() for h in channel.channels],
        "noise": {"white": channel.noise_level},
        "power": power,
    }


def load_channel(path) -> Channel:
    """Read a channel description from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ChannelFormatError(f"invalid JSON: {exc}") from exc
    return channel_from_dict(doc)
