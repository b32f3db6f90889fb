"""Fractionally spaced prefilters (FSP).

Each (user, subcarrier) stream is filtered by a short filter with taps spaced
M/2 samples (one half-symbol) before precoding.  The taps are chosen so that
the cascade of prefilter and equivalent channel is flat, up to a delay of
``length // 2`` half-symbols, across the subcarrier band and the overlap with
its neighbours.

Tap index ``j`` of a bank sits at delay ``j * M/2``; the design target is a
pure delay of ``delay = length // 2`` taps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_dsp import PrototypeFilter


@dataclass(frozen=True)
class FspDesignSpec:
    """Weighted least-squares design settings.

    ``mode='zf'`` ignores ``noise_weight``; ``mode='mmse'`` uses it as the
    ridge term on the tap energy.  The band grid spans one subcarrier spacing
    on each side with ``points_per_spacing`` samples per spacing.
    """

    length: int = 5
    mode: str = "zf"
    noise_weight: float = 0.0
    points_per_spacing: int = 8

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"FSP length must be >= 1, got {self.length}")
        if self.mode not in ("zf", "mmse"):
            raise ValueError(f"FSP mode must be 'zf' or 'mmse', got {self.mode!r}")
        if self.noise_weight < 0:
            raise ValueError("noise_weight must be nonnegative")
        if self.points_per_spacing < 1:
            raise ValueError("points_per_spacing must be >= 1")

    @property
    def delay(self) -> int:
        return self.length // 2

    @property
    def ridge(self) -> float:
        return self.noise_weight if self.mode == "mmse" else 0.0


@dataclass(frozen=True)
class FspBank:
    """Prefilter taps ``(K, M, length)``; tap ``j`` sits at delay ``j * M/2``."""

    taps: np.ndarray

    @property
    def length(self) -> int:
        return self.taps.shape[-1]

    @property
    def delay(self) -> int:
        return self.length // 2

    def energy(self) -> np.ndarray:
        return np.sum(np.abs(self.taps) ** 2, axis=-1)

    @classmethod
    def identity(cls, num_users: int, num_subcarriers: int):
        return cls(taps=np.ones((num_users, num_subcarriers, 1), dtype=complex))


def band_grid(proto: PrototypeFilter, points_per_spacing: int = 8):
    """Frequency offsets ``nu`` (cycles/sample) across [-1/M, 1/M] and weights ``|F(nu)|^2``."""
    M = proto.num_subcarriers
    nu = np.arange(-points_per_spacing, points_per_spacing + 1) / (points_per_spacing * M)
    return nu, np.abs(proto.spectrum(nu)) ** 2


class SingularDesignError(ValueError):
    pass


def _band_response(h: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """DTFT of ``h`` (..., L) at ``freqs`` (..., G) with matching leading axes."""
    l = np.arange(h.shape[-1])
    kernel = np.exp(-2j * np.pi * freqs[..., :, None] * l)
    return np.einsum("...gl,...l->...g", kernel, h)


def design_fsp(target: np.ndarray, m, spec: FspDesignSpec, proto: PrototypeFilter) -> np.ndarray:
    """Prefilter taps for subcarrier(s) ``m`` flattening ``target``.

    Minimizes ``sum_nu w(nu) |A(m/M + nu) H(m/M + nu) - T(nu)|^2 + ridge * |a|^2``
    where ``A`` is the response of the half-symbol spaced taps and ``T`` a
    delay of ``spec.delay`` taps.

    Parameters
    ----------
    target : complex array (..., L)
        Full-rate impulse response(s) to flatten.
    m : int or int array broadcastable to ``target.shape[:-1]``
        Subcarrier index of each target.

    Returns
    -------
    complex array (..., spec.length)
    """
    target = np.asarray(target, dtype=complex)
    M, half = proto.num_subcarriers, proto.half_symbol
    m = np.broadcast_to(np.asarray(m), target.shape[:-1])
    nu, w = band_grid(proto, spec.points_per_spacing)
    centre = m[..., None] / M
    H = _band_response(target, centre + nu)  # (..., G)
    j = np.arange(spec.length)
    basis = np.exp(-2j * np.pi * (centre + nu)[..., :, None] * j * half)  # (..., G, J)
    T = np.exp(-2j * np.pi * (centre + nu) * spec.delay * half)  # (..., G)
    A = H[..., None] * basis
    AwH = np.conj(np.swapaxes(A, -1, -2)) * w
    gram = AwH @ A
    rhs = AwH @ T[..., None]
    if spec.ridge:
        gram = gram + spec.ridge * np.eye(spec.length)
    scale = np.trace(gram, axis1=-2, axis2=-1).real / spec.length
    if np.any(scale <= 0) or np.any(np.linalg.cond(gram) > 1e13):
        raise SingularDesignError("FSP normal equations are singular; use mode='mmse' with a positive noise_weight")
    return np.linalg.solve(gram, rhs)[..., 0]


def baseband_shift_fsp(baseband_taps: np.ndarray, m) -> np.ndarray:
    """Move subcarrier-0 taps to subcarrier ``m``.

    Tap ``n`` (counted from the centre tap) picks up ``exp(j pi m n)``.  A
    prefilter designed for a PDP ``p[l]`` and shifted this way equals the one
    designed for ``p[l] exp(j 2 pi l m / M)`` on subcarrier ``m``.
    """
    taps = np.asarray(baseband_taps, dtype=complex)
    L = taps.shape[-1]
    n = np.arange(L) - L // 2
    m = np.asarray(m)[..., None]
    return taps * np.where((m * n) % 2, -1.0, 1.0)


def pdp_bank(pdps: np.ndarray, num_subcarriers: int, spec: FspDesignSpec, proto: PrototypeFilter) -> FspBank:
    """Prefilters for every subcarrier from per-user baseband profiles (K, L)."""
    pdps = np.atleast_2d(np.asarray(pdps, dtype=complex))
    base = design_fsp(pdps, 0, spec, proto)  # (K, J)
    taps = baseband_shift_fsp(base[:, None, :], np.arange(num_subcarriers))
    return FspBank(taps=taps)


def equivalent_channel_bank(
    eq_channels: np.ndarray,
    spec: FspDesignSpec,
    proto: PrototypeFilter,
    unit_energy: bool = False,
) -> FspBank:
    """Prefilters designed on per-(user, subcarrier) self channels (K, M, L).

    Targets are scaled to unit RMS band magnitude first, so the ridge term
    means the same thing for every link.  With ``unit_energy`` the taps are
    normalized so prefiltering leaves the transmit power unchanged.
    """
    eq = np.asarray(eq_channels, dtype=complex)
    M = eq.shape[-2]
    nu, w = band_grid(proto, spec.points_per_spacing)
    m = np.arange(M)[:, None]
    H = _band_response(eq, np.broadcast_to(m / M + nu, eq.shape[:-1] + (nu.size,)))
    rms = np.sqrt(np.sum(w * np.abs(H) ** 2, axis=-1) / w.sum())
    if np.any(rms == 0):
        raise ValueError("an equivalent channel vanished across its band")
    taps = design_fsp(eq / rms[..., None], np.arange(M), spec, proto)
    if unit_energy:
        taps = taps / np.linalg.norm(taps, axis=-1, keepdims=True)
    else:
        taps = taps / rms[..., None]
    return FspBank(taps=taps)


def phase_only_bank(eq_channels: np.ndarray) -> FspBank:
    """Single-tap bank undoing the phase of each self channel at its subcarrier centre."""
    eq = np.asarray(eq_channels, dtype=complex)
    M = eq.shape[-2]
    centre = _band_response(eq, np.broadcast_to((np.arange(M) / M)[:, None], eq.shape[:-1] + (1,)))[..., 0]
    mag = np.abs(centre)
    taps = np.where(mag > 0, np.conj(centre) / np.where(mag > 0, mag, 1.0), 1.0)
    return FspBank(taps=taps[..., None])


def correction_factor(lam: float, sigma_ef2: float, q: float = 1.0, beta: float = 1.0) -> float:
    """Gain ``sqrt(q) lam^2 / (beta + sigma_ef2)`` that imperfect CSI imposes on the equivalent channel."""
    denom = beta + sigma_ef2
    if denom <= 0:
        raise ValueError("beta + sigma_ef2 must be positive")
    return float(np.sqrt(q) * lam**2 / denom)


def correction_factor_normalized(lam: float, sigma_ef2: float) -> float:
    """Same factor for a normalized channel, ``lam^2 / (1 + sigma_ef2)``."""
    return correction_factor(lam, sigma_ef2)


def corrected_pdp_colocated(pdp, q: float, beta: float, lam: float, sigma_ef2: float) -> np.ndarray:
    """Profile scaled by :func:`correction_factor`."""
    return correction_factor(lam, sigma_ef2, q, beta) * np.asarray(pdp)


def corrected_eqch_cellfree(
    h_hat_eq: np.ndarray,
    q: np.ndarray,
    betas: np.ndarray,
    lam: float,
    sigma_et2: float,
    sigma_ef2: float,
    num_taps: int,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Remove the estimation-error bias from estimated equivalent channels.

    For ``k == k'`` the first ``num_taps`` taps of ``h_hat_eq[k, k, m]`` lose
    ``lam sigma_et2 sum_i sqrt(q[k, i]) / (sum_i beta[k, i] + N_k sigma_ef2)
    * exp(j 2 pi l m / M)``, with sums over the antennas serving ``k`` and
    ``N_k`` their number.  Cross-user channels are returned unchanged.

    Parameters
    ----------
    h_hat_eq : complex array (K, K, M, L)
    q, betas : arrays (K, N)
    mask : bool array (K, N), optional
    """
    h = np.array(h_hat_eq, dtype=complex, copy=True)
    K, _, M, L = h.shape
    q = np.asarray(q, dtype=float)
    betas = np.asarray(betas, dtype=float)
    mask = np.ones_like(q, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    n_k = mask.sum(axis=1)
    amp = lam * sigma_et2 * np.sum(np.sqrt(q) * mask, axis=1) / (np.sum(betas * mask, axis=1) + n_k * sigma_ef2)
    taps = min(num_taps, L)
    l = np.arange(taps)
    rot = np.exp(2j * np.pi * np.outer(np.arange(M), l) / M)  # (M, taps)
    idx = np.arange(K)
    h[idx, idx, :, :taps] -= amp[:, None, None] * rot
    return h


def estimate_pdp(h_hat: np.ndarray, sigma_et2: float = 0.0, debias: bool = False) -> np.ndarray:
    """Per-user profile ``mean_i |h_hat[k, i, l]|^2`` from (K, N, L) estimates.

    With ``debias`` the estimation-error floor ``sigma_et2`` is subtracted
    and negative taps clipped to zero.
    """
    p = np.mean(np.abs(np.asarray(h_hat)) ** 2, axis=1)
    if debias:
        p = np.maximum(p - sigma_et2, 0.0)
    return p


def estimate_downlink_gain(received, sent) -> float:
    """Least-squares scalar ``sum(r s) / sum(s^2)``."""
    r = np.asarray(received, dtype=float)
    s = np.asarray(sent, dtype=float)
    energy = float(np.sum(s * s))
    if energy == 0:
        raise ValueError("pilots carry no energy")
    return float(np.sum(r * s)) / energy
