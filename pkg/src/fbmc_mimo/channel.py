"""Statistical channel generation.

Small-scale fading follows the TDL-C delay profile with Rayleigh taps.
Large-scale fading for distributed antennas uses a COST-Hata style path loss
with log-normal shadowing on a wrap-around (torus) square.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

BOLTZMANN = 1.3e-23  # J/K, the rounded value used for the noise budget
MIN_DISTANCE_KM = 0.01


@dataclass(frozen=True)
class PowerDelayProfile:
    """Per-sample tap powers ``p[l]``."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.atleast_1d(np.asarray(self.taps, dtype=float))
        if taps.ndim != 1 or taps.size == 0:
            raise ValueError("PDP must be a nonempty 1-D sequence")
        if np.any(taps < 0) or not np.all(np.isfinite(taps)):
            raise ValueError("PDP taps must be finite and nonnegative")
        object.__setattr__(self, "taps", taps)

    @property
    def length(self) -> int:
        return self.taps.size

    @property
    def total_gain(self) -> float:
        return float(self.taps.sum())

    def padded(self, length: int) -> np.ndarray:
        if length < self.length:
            raise ValueError(f"cannot pad a {self.length}-tap PDP to {length}")
        return np.pad(self.taps, (0, length - self.length))


@dataclass(frozen=True)
class ChannelRealization:
    """Impulse responses ``h[k, i, l]`` with their generating statistics.

    Attributes
    ----------
    h : complex array (K, N, L)
    pdps : real array (K, N, L)
        Normalized PDP of each link (sums to one).
    betas : real array (K, N)
        Large-scale gain of each link.
    """

    h: np.ndarray
    pdps: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        if self.h.ndim != 3:
            raise ValueError("h must be indexed (user, antenna, delay)")
        if self.pdps.shape != self.h.shape or self.betas.shape != self.h.shape[:2]:
            raise ValueError("pdps/betas do not match the channel dimensions")

    @property
    def num_users(self) -> int:
        return self.h.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.h.shape[1]

    @property
    def length(self) -> int:
        return self.h.shape[2]

    def with_taps(self, h: np.ndarray) -> "ChannelRealization":
        """Same statistics, different responses (possibly longer)."""
        h = np.asarray(h, dtype=complex)
        extra = h.shape[-1] - self.length
        if extra < 0:
            raise ValueError("replacement responses cannot be shorter")
        pdps = np.pad(self.pdps, ((0, 0), (0, 0), (0, extra)))
        return ChannelRealization(h=h, pdps=pdps, betas=self.betas)


@lru_cache(maxsize=1)
def tdlc_table() -> tuple[np.ndarray, np.ndarray]:
    """Normalized delays and tap powers (dB) of the TDL-C model."""
    with resources.files("fbmc_mimo").joinpath("data/tdlc.txt").open() as fh:
        table = np.loadtxt(fh)
    delays, powers = table[:, 0].copy(), table[:, 1].copy()
    delays.setflags(write=False)
    powers.setflags(write=False)
    return delays, powers


def tdlc_pdp(rms_delay_ns: float, sample_rate_hz: float) -> PowerDelayProfile:
    """TDL-C profile scaled to ``rms_delay_ns`` and binned to the sample grid.

    Each tap lands on the nearest sample and powers sharing a bin add in the
    linear domain.  The result is normalized to unit total power.
    """
    if rms_delay_ns <= 0:
        raise ValueError(f"rms_delay_ns must be positive, got {rms_delay_ns}")
    if sample_rate_hz <= 0:
        raise ValueError(f"sample_rate_hz must be positive, got {sample_rate_hz}")
    delays, powers_db = tdlc_table()
    bins = np.rint(delays * rms_delay_ns * 1e-9 * sample_rate_hz).astype(int)
    taps = np.bincount(bins, weights=10.0 ** (powers_db / 10.0))
    return PowerDelayProfile(taps / taps.sum())


def draw_rms_delays(num: int, rng: np.random.Generator, low_ns: float = 90.0, high_ns: float = 110.0) -> np.ndarray:
    if not 0 < low_ns <= high_ns:
        raise ValueError(f"invalid RMS delay range [{low_ns}, {high_ns}]")
    return rng.uniform(low_ns, high_ns, size=num)


def stack_pdps(pdps) -> np.ndarray:
    """Zero-pad a sequence of profiles to a common length, shape (..., L)."""
    pdps = list(pdps)
    length = max(p.length for p in pdps)
    return np.stack([p.padded(length) for p in pdps])


def draw_channel(pdps, betas, rng: np.random.Generator) -> ChannelRealization:
    """Independent Rayleigh taps with ``E|h[k,i,l]|^2 = betas[k,i] * pdps[k,i,l]``.

    Parameters
    ----------
    pdps : real array broadcastable to (K, N, L)
        Normalized PDPs; a (K, 1, L) array shares the profile across antennas.
    betas : real array broadcastable to (K, N)
    rng : numpy.random.Generator
    """
    betas = np.asarray(betas, dtype=float)
    pdps = np.asarray(pdps, dtype=float)
    if np.any(betas < 0) or np.any(pdps < 0):
        raise ValueError("betas and pdps must be nonnegative")
    shape = np.broadcast_shapes(pdps.shape, betas.shape + (1,))
    pdps = np.broadcast_to(pdps, shape).copy()
    betas = np.broadcast_to(betas, shape[:2]).copy()
    std = np.sqrt(betas[..., None] * pdps / 2.0)
    h = std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return ChannelRealization(h=h, pdps=pdps, betas=betas)


def freq_response(h, m, num_subcarriers: int):
    """``H_m = sum_l h[l] exp(-j 2 pi m l / M)`` along the last axis of ``h``.

    ``m`` may be a scalar or an array of subcarrier indices; the result then
    gains a trailing axis of that shape.
    """
    h = np.asarray(h)
    if h.shape[-1] > num_subcarriers:
        raise ValueError(f"channel length {h.shape[-1]} exceeds M={num_subcarriers}")
    l = np.arange(h.shape[-1])
    kernel = np.exp(-2j * np.pi * np.multiply.outer(l, np.asarray(m)) / num_subcarriers)
    return np.tensordot(h, kernel, axes=([-1], [0]))


def freq_responses(h, num_subcarriers: int) -> np.ndarray:
    """All subcarrier responses, new trailing axis of length M."""
    h = np.asarray(h)
    if h.shape[-1] > num_subcarriers:
        raise ValueError(f"channel length {h.shape[-1]} exceeds M={num_subcarriers}")
    return np.fft.fft(h, num_subcarriers, axis=-1)


def cost_hata_beta(distance_km, shadow_db=0.0):
    """Large-scale gain ``10^((-135 - 35 log10 d - X) / 10)``; ``d`` floored at 10 m."""
    d = np.maximum(np.asarray(distance_km, dtype=float), MIN_DISTANCE_KM)
    return 10.0 ** ((-135.0 - 35.0 * np.log10(d) - np.asarray(shadow_db)) / 10.0)


def noise_variance(bandwidth_hz: float, noise_figure_db: float, temperature_k: float = 290.0) -> float:
    """Thermal noise power in watts, ``T * k_B * B * NF``."""
    if bandwidth_hz <= 0 or temperature_k <= 0:
        raise ValueError("bandwidth and temperature must be positive")
    return temperature_k * BOLTZMANN * bandwidth_hz * 10.0 ** (noise_figure_db / 10.0)


def torus_distance(a, b, side: float):
    """Euclidean distance on a square of edge ``side`` with wrap-around."""
    diff = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    diff = np.minimum(diff, side - diff)
    return np.hypot(diff[..., 0], diff[..., 1])


@dataclass(frozen=True)
class CellFreeGeometry:
    """APs on a regular grid and uniformly dropped users, positions in km."""

    ap_positions: np.ndarray
    user_positions: np.ndarray
    area_side: float
    antennas_per_ap: int

    @property
    def num_aps(self) -> int:
        return self.ap_positions.shape[0]

    @property
    def num_users(self) -> int:
        return self.user_positions.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.num_aps * self.antennas_per_ap

    @property
    def antenna_ap(self) -> np.ndarray:
        """AP index owning each antenna (contiguous blocks of Q)."""
        return np.repeat(np.arange(self.num_aps), self.antennas_per_ap)

    def distances(self) -> np.ndarray:
        """User-to-AP wrap-around distances, shape (K, N_AP), floored at 10 m."""
        d = torus_distance(self.user_positions[:, None, :], self.ap_positions[None, :, :], self.area_side)
        return np.maximum(d, MIN_DISTANCE_KM)


def ap_grid(n_ap: int, area_km: float) -> np.ndarray:
    side = int(round(np.sqrt(n_ap)))
    if side * side != n_ap:
        raise ValueError(f"n_ap={n_ap} is not a perfect square")
    spacing = area_km / side
    c = (np.arange(side) + 0.5) * spacing
    xx, yy = np.meshgrid(c, c, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def place_cellfree(
    n_ap: int,
    area_km: float,
    q_antennas: int,
    num_users: int,
    rng: np.random.Generator,
) -> CellFreeGeometry:
    if q_antennas < 1 or num_users < 1:
        raise ValueError("need at least one antenna per AP and one user")
    aps = ap_grid(n_ap, area_km)
    users = rng.uniform(0.0, area_km, size=(num_users, 2))
    return CellFreeGeometry(ap_positions=aps, user_positions=users, area_side=area_km, antennas_per_ap=q_antennas)


def cellfree_betas(geometry: CellFreeGeometry, rng: np.random.Generator, shadow_std_db: float = 8.0):
    """Per-antenna large-scale gains (K, N) and per-AP gains (K, N_AP).

    Shadowing is one real Gaussian per (user, AP), shared by the AP's antennas.
    """
    shadow = shadow_std_db * rng.standard_normal((geometry.num_users, geometry.num_aps))
    beta_ap = cost_hata_beta(geometry.distances(), shadow)
    return beta_ap[:, geometry.antenna_ap], beta_ap
