"""SINR evaluation: analytic (transmultiplexer) and Monte-Carlo estimators, OFDM baseline, CDFs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_dsp import PrototypeFilter, analyze_grid, cascade_coefficients, oqam_phase, synthesize_stream
from .precoding import equivalent_channel

SINR_FLOOR_DB = -100.0
SINR_CAP_DB = 100.0


def to_db(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.clip(10.0 * np.log10(x), SINR_FLOOR_DB, SINR_CAP_DB)


@dataclass(frozen=True)
class SinrReport:
    """Per (user, subcarrier) signal, interference and noise powers (linear)."""

    signal: np.ndarray
    interference: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        for name in ("signal", "interference", "noise"):
            value = np.asarray(getattr(self, name), dtype=float)
            if np.any(value < 0):
                raise ValueError(f"{name} power must be nonnegative")
            object.__setattr__(self, name, value)

    @property
    def sinr(self) -> np.ndarray:
        den = self.interference + self.noise
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(den > 0, self.signal / np.where(den > 0, den, 1.0), np.where(self.signal > 0, np.inf, 0.0))

    @property
    def sir(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            i = self.interference
            return np.where(i > 0, self.signal / np.where(i > 0, i, 1.0), np.where(self.signal > 0, np.inf, 0.0))

    @property
    def sinr_db(self) -> np.ndarray:
        return to_db(self.sinr)

    @property
    def sir_db(self) -> np.ndarray:
        return to_db(self.sir)

    @property
    def mean_sinr_db(self) -> float:
        """Linear mean over all entries, in dB."""
        return float(to_db(np.mean(np.minimum(self.sinr, 10 ** (SINR_CAP_DB / 10)))))

    def user_sinr_db(self) -> np.ndarray:
        """Per-user SINR, linear mean over subcarriers (last axis)."""
        return to_db(np.mean(np.minimum(self.sinr, 10 ** (SINR_CAP_DB / 10)), axis=-1))

    def user_sir_db(self) -> np.ndarray:
        return to_db(np.mean(np.minimum(self.sir, 10 ** (SINR_CAP_DB / 10)), axis=-1))


@dataclass(frozen=True)
class LinkModel:
    """Everything between the data symbols and the receivers' analysis banks.

    Attributes
    ----------
    h_down : complex array (K, N, L)
        Downlink impulse responses.
    weights : complex array (M, N, K)
        Precoders with power allocation applied.
    fsp_taps : complex array (K, M, Lp)
        Half-symbol spaced prefilters; demodulation is delayed by ``Lp // 2``.
    noise_var : float
        Complex noise variance per receive sample.
    symbol_power : float
        ``E{d^2}`` of the real OQAM symbols.
    """

    h_down: np.ndarray
    weights: np.ndarray
    fsp_taps: np.ndarray
    noise_var: float
    symbol_power: float = 0.5

    @property
    def num_users(self) -> int:
        return self.h_down.shape[0]

    @property
    def num_subcarriers(self) -> int:
        return self.weights.shape[0]

    @property
    def delay(self) -> int:
        return self.fsp_taps.shape[-1] // 2


@dataclass(frozen=True)
class CascadePowers:
    """Desired coefficient ``Re g0`` and total interference ``sum (Re g)^2`` per (k, m)."""

    gain: np.ndarray
    interference: np.ndarray


def cascade_powers(
    eq_channels: np.ndarray,
    fsp_taps: np.ndarray,
    proto: PrototypeFilter,
    span: int = 1,
) -> CascadePowers:
    """Reduce transmultiplexer gains to desired and interference powers.

    Parameters
    ----------
    eq_channels : complex array (K, K', M, L)
        ``eq_channels[k, k', m]`` carries stream (k', m) to user k.
    fsp_taps : complex array (K', M, Lp)
    span : int
        Neighbouring subcarriers included on each side.
    """
    eq = np.asarray(eq_channels)
    K, _, M, _ = eq.shape
    delay = fsp_taps.shape[-1] // 2
    gain = np.empty((K, M))
    interference = np.empty((K, M))
    for k in range(K):
        slots, G = cascade_coefficients(eq[k], proto, span=span, delay=delay, prefilter=fsp_taps)
        re2 = np.real(G) ** 2  # (K', M, D, P)
        total = re2.sum(axis=(0, 3))  # (M', D)
        per_rx = np.zeros(M)
        for di, delta in enumerate(range(-span, span + 1)):
            per_rx += np.roll(total[:, di], delta)
        g0 = np.real(G[k, :, span, np.flatnonzero(slots == 0)[0]])
        gain[k] = g0
        interference[k] = np.maximum(per_rx - g0**2, 0.0)
    return CascadePowers(gain=gain, interference=interference)


def self_gains(self_channels: np.ndarray, fsp_taps: np.ndarray, proto: PrototypeFilter) -> np.ndarray:
    """Desired coefficient ``Re g0`` for channels (K, M, L) through their own prefilters."""
    delay = fsp_taps.shape[-1] // 2
    slots, G = cascade_coefficients(self_channels, proto, span=0, delay=delay, prefilter=fsp_taps)
    return np.real(G[..., 0, np.flatnonzero(slots == 0)[0]])


def analytic_sinr(
    powers: CascadePowers,
    noise_var: float,
    symbol_power: float = 1.0,
    noise_gain: float = 0.5,
    reference_gain: np.ndarray | None = None,
) -> SinrReport:
    """SINR from transmultiplexer coefficients.

    Without ``reference_gain`` the receiver is assumed to know its gain
    ``Re g0``: ``S = g0^2 E{d^2}``, ``I = sum (Re g)^2 E{d^2}`` and the noise
    after the unit-energy analysis filter and real part is ``noise_gain *
    noise_var``.

    With ``reference_gain`` the receiver scales by ``1 / g_ref`` instead and
    the error ``(g0 / g_ref - 1)^2 E{d^2}`` counts as interference.
    """
    g0 = powers.gain
    interf = powers.interference * symbol_power
    noise = np.broadcast_to(noise_gain * noise_var, g0.shape)
    if reference_gain is None:
        return SinrReport(signal=g0**2 * symbol_power, interference=interf, noise=noise)
    ref = np.asarray(reference_gain, dtype=float)
    ref = np.where(ref == 0, np.finfo(float).tiny, ref)
    bias = (g0 / ref - 1.0) ** 2 * symbol_power
    return SinrReport(
        signal=np.broadcast_to(symbol_power, g0.shape),
        interference=bias + interf / ref**2,
        noise=noise / ref**2,
    )


def link_sinr(link: LinkModel, proto: PrototypeFilter, span: int = 1, reference_gain=None) -> SinrReport:
    """Analytic SINR of a :class:`LinkModel`."""
    eq = equivalent_channel(link.weights, link.h_down)
    powers = cascade_powers(eq, link.fsp_taps, proto, span=span)
    return analytic_sinr(powers, link.noise_var, link.symbol_power, reference_gain=reference_gain)


def _filter_streams(streams: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Causal filtering along the slot axis: ``out[.., n] = sum_j taps[.., j] c[.., n - j]``."""
    out = np.zeros_like(streams)
    S = streams.shape[-1]
    for j in range(taps.shape[-1]):
        out[..., j:] += taps[..., j, None] * streams[..., : S - j]
    return out


def transmit_receive(link: LinkModel, proto: PrototypeFilter, symbols: np.ndarray, rng: np.random.Generator):
    """Send real symbols (F, K, M, S) through the physical chain.

    Returns demodulated symbols (F, K, M, S - delay), aligned with ``symbols``.
    """
    F, K, M, S = symbols.shape
    streams = symbols * oqam_phase(M, np.arange(S))
    streams = _filter_streams(streams, link.fsp_taps)
    per_antenna = np.einsum("mik,fkmn->fimn", link.weights, streams, optimize=True)
    x = synthesize_stream(per_antenna, proto)  # (F, N, T)
    T = x.shape[-1]
    L = link.h_down.shape[-1]
    nfft = 1 << int(np.ceil(np.log2(T + L - 1)))
    X = np.fft.fft(x, nfft, axis=-1)
    Hf = np.fft.fft(link.h_down, nfft, axis=-1)
    r = np.fft.ifft(np.einsum("fin,kin->fkn", X, Hf, optimize=True), axis=-1)
    if link.noise_var > 0:
        r = r + np.sqrt(link.noise_var / 2.0) * (rng.standard_normal(r.shape) + 1j * rng.standard_normal(r.shape))
    return analyze_grid(r, proto, S - link.delay, delay=link.delay)


def mc_sinr(
    link: LinkModel,
    proto: PrototypeFilter,
    num_frames: int,
    rng: np.random.Generator,
    slots_per_frame: int = 64,
    batch: int = 8,
    reference_gain: np.ndarray | None = None,
) -> SinrReport:
    """Symbol-level Monte-Carlo SINR.

    Random binary OQAM frames with ``E{d^2} = link.symbol_power`` are sent
    end to end.  Per (k, m) a scalar ``alpha`` is fitted by least squares over
    all frames and interior slots; ``S = alpha^2 E{d^2}`` and ``I + N`` is the
    residual variance.  With ``reference_gain`` the receiver scales by that
    gain instead of the fitted one and the whole error counts as distortion.
    """
    K, M = link.num_users, link.num_subcarriers
    L = link.h_down.shape[-1]
    guard = 2 * proto.overlap + link.fsp_taps.shape[-1] + int(np.ceil(L / proto.half_symbol)) + 1
    usable = slots_per_frame - link.delay - 2 * guard
    if usable < 1:
        raise ValueError(f"slots_per_frame={slots_per_frame} leaves no interior slots (guard {guard})")
    amp = np.sqrt(link.symbol_power)
    sxy = np.zeros((K, M))
    sxx = np.zeros((K, M))
    syy = np.zeros((K, M))
    done = 0
    while done < num_frames:
        f = min(batch, num_frames - done)
        d = amp * rng.choice((-1.0, 1.0), size=(f, K, M, slots_per_frame))
        dh = transmit_receive(link, proto, d, rng)
        sent = d[..., guard : guard + usable]
        got = dh[..., guard : guard + usable]
        sxy += np.sum(sent * got, axis=(0, 3))
        sxx += np.sum(sent * sent, axis=(0, 3))
        syy += np.sum(got * got, axis=(0, 3))
        done += f
    count = num_frames * usable
    if reference_gain is None:
        alpha = sxy / sxx
        err = (syy - 2 * alpha * sxy + alpha**2 * sxx) / count
        return SinrReport(signal=alpha**2 * link.symbol_power, interference=np.maximum(err, 0.0), noise=np.zeros_like(err))
    ref = np.asarray(reference_gain, dtype=float)
    err = (syy / ref**2 - 2 * sxy / ref + sxx) / count
    return SinrReport(signal=np.full_like(err, link.symbol_power), interference=np.maximum(err, 0.0), noise=np.zeros_like(err))


def ofdm_sinr(
    H_down: np.ndarray,
    weights: np.ndarray,
    noise_var: float,
    symbol_power: float = 1.0,
    reference_gain: np.ndarray | None = None,
) -> SinrReport:
    """Closed-form per-subcarrier SINR of CP-OFDM with flat subcarriers.

    Parameters
    ----------
    H_down : complex array (M, K, N)
        Downlink responses at the subcarrier centres.
    weights : complex array (M, N, K)
    reference_gain : complex array (K, M), optional
        Gain the receiver divides by; the genie gain ``G[k, k]`` otherwise.
    """
    G = H_down @ weights  # (M, K, K)
    p = np.abs(G) ** 2 * symbol_power
    desired = np.einsum("mkk->km", G)
    s = np.abs(desired) ** 2 * symbol_power
    i = np.einsum("mkj->km", p) - s
    noise = np.full_like(s, noise_var)
    if reference_gain is None:
        return SinrReport(signal=s, interference=np.maximum(i, 0.0), noise=noise)
    ref = np.asarray(reference_gain, dtype=complex)
    scale = np.abs(ref) ** 2
    bias = np.abs(desired / ref - 1.0) ** 2 * symbol_power
    return SinrReport(
        signal=np.full_like(s, symbol_power),
        interference=bias + np.maximum(i, 0.0) / scale,
        noise=noise / scale,
    )


@dataclass(frozen=True)
class EmpiricalCdf:
    values: np.ndarray
    probabilities: np.ndarray

    def quantile(self, q):
        return np.quantile(self.values, q)

    @property
    def median(self) -> float:
        return float(np.median(self.values))

    @property
    def iqr(self) -> float:
        lo, hi = np.quantile(self.values, [0.25, 0.75])
        return float(hi - lo)


def sir_cdf(values) -> EmpiricalCdf:
    """Empirical CDF, ``P(X <= values[i]) = (i + 1) / n`` on the sorted sample."""
    v = np.sort(np.ravel(np.asarray(values, dtype=float)))
    if v.size == 0:
        raise ValueError("CDF of an empty sample")
    return EmpiricalCdf(values=v, probabilities=np.arange(1, v.size + 1) / v.size)
