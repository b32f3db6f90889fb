"""Channel-estimation and reciprocity-calibration error models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization

DEFAULT_XI_RANGE = (0.98, 1.02)
DEFAULT_PHI_MAX = 2.0 * np.pi / 9.0


@dataclass(frozen=True)
class EstimationErrorModel:
    """Additive complex Gaussian estimation error on the first ``length`` taps.

    ``sigma_et2`` is the per-tap variance; the per-subcarrier variance is
    ``length * sigma_et2``.
    """

    sigma_et2: float
    length: int

    def __post_init__(self):
        if self.sigma_et2 < 0:
            raise ValueError(f"sigma_et2 must be nonnegative, got {self.sigma_et2}")
        if self.length < 1:
            raise ValueError("error model needs at least one tap")

    @property
    def sigma_ef2(self) -> float:
        return self.length * self.sigma_et2

    @classmethod
    def from_pilot_snr(cls, noise_var: float, num_users: int, length: int, pilot_boost_db: float = 10.0):
        """Per-tap error for pilots boosted ``pilot_boost_db`` above the data level.

        Uses ``sigma_et2 = noise_var / (K * L * boost)``.
        """
        boost = 10.0 ** (pilot_boost_db / 10.0)
        return cls(sigma_et2=noise_var / (num_users * length * boost), length=length)


@dataclass(frozen=True)
class CalibrationProfile:
    """Per-antenna, per-subcarrier transmit/receive chain gains.

    ``gains_t[i, m] = xi_t * exp(j phi_t)`` and ``impulse_t`` is its inverse DFT
    over the M subcarriers (likewise for the receive chain).
    """

    gains_t: np.ndarray
    gains_r: np.ndarray

    @property
    def num_subcarriers(self) -> int:
        return self.gains_t.shape[-1]

    @property
    def impulse_t(self) -> np.ndarray:
        return np.fft.ifft(self.gains_t, axis=-1)

    @property
    def impulse_r(self) -> np.ndarray:
        return np.fft.ifft(self.gains_r, axis=-1)

    @classmethod
    def ideal(cls, num_antennas: int, num_subcarriers: int):
        ones = np.ones((num_antennas, num_subcarriers), dtype=complex)
        return cls(gains_t=ones, gains_r=ones.copy())


def draw_calibration(
    num_antennas: int,
    num_subcarriers: int,
    rng: np.random.Generator,
    xi_range=DEFAULT_XI_RANGE,
    phi_max: float = DEFAULT_PHI_MAX,
) -> CalibrationProfile:
    """Independent uniform magnitude and phase errors per antenna, subcarrier and direction."""
    lo, hi = xi_range
    if not 0 <= lo <= hi or phi_max < 0:
        raise ValueError(f"invalid calibration ranges xi={xi_range}, phi_max={phi_max}")
    shape = (2, num_antennas, num_subcarriers)
    xi = rng.uniform(lo, hi, size=shape)
    phi = rng.uniform(-phi_max, phi_max, size=shape)
    gains = xi * np.exp(1j * phi)
    return CalibrationProfile(gains_t=gains[0], gains_r=gains[1])


def _effective_length(impulse: np.ndarray, energy_fraction: float) -> int:
    energy = np.cumsum(np.sum(np.abs(impulse.reshape(-1, impulse.shape[-1])) ** 2, axis=0))
    return int(np.searchsorted(energy, energy_fraction * energy[-1]) + 1)


def apply_reciprocity(
    channel: ChannelRealization,
    calibration: CalibrationProfile,
    direction: str,
    energy_fraction: float = 0.9999,
) -> ChannelRealization:
    """Convolve every antenna's channels with its chain impulse response.

    ``direction='downlink'`` uses the transmit chain and ``'uplink'`` the
    receive chain.  The calibration response is cut to the shortest prefix
    holding ``energy_fraction`` of its energy before convolving.
    """
    if direction == "downlink":
        c = calibration.impulse_t
    elif direction == "uplink":
        c = calibration.impulse_r
    else:
        raise ValueError(f"direction must be 'uplink' or 'downlink', got {direction!r}")
    if c.shape[0] != channel.num_antennas:
        raise ValueError("calibration and channel antenna counts differ")
    c = c[:, : _effective_length(c, energy_fraction)]
    n = channel.length + c.shape[-1] - 1
    h = np.fft.ifft(np.fft.fft(channel.h, n, axis=-1) * np.fft.fft(c, n, axis=-1), axis=-1)
    return channel.with_taps(h)


def add_estimation_error(
    channel: ChannelRealization,
    model: EstimationErrorModel,
    rng: np.random.Generator,
) -> ChannelRealization:
    """``h + dh`` with ``dh ~ CN(0, sigma_et2)`` on the first ``model.length`` taps."""
    if model.length > channel.length:
        raise ValueError("error model is longer than the channel")
    shape = channel.h.shape[:2] + (model.length,)
    dh = np.sqrt(model.sigma_et2 / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    h = channel.h.copy()
    h[..., : model.length] += dh
    return channel.with_taps(h)


@dataclass(frozen=True)
class LambdaStat:
    value: float


def lambda_stat(xi_range=DEFAULT_XI_RANGE, phi_max: float = DEFAULT_PHI_MAX) -> LambdaStat:
    """Mean chain gain ``E{xi} E{exp(j phi)}`` for uniform errors.

    With ``phi ~ U[-a, a]`` the phase average is ``sin(a) / a``.
    """
    lo, hi = xi_range
    return LambdaStat(value=0.5 * (lo + hi) * float(np.sinc(phi_max / np.pi)))
