"""Per-subcarrier linear precoders, power allocation and AP selection.

Channel matrices are ``H[k, i]`` (user by antenna).  Precoders are physical
N x K matrices: antenna ``i`` sends ``sum_k P[i, k] s_k``, so user ``k``
receives ``(H @ P)[k, :] @ s``.  Functions accept stacks with any number of
leading (subcarrier) axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RankDeficientError(ValueError):
    """Raised when a ZF inverse would be numerically meaningless."""

    def __init__(self, condition_number: float):
        super().__init__(f"H H^H is rank deficient (condition number {condition_number:.3g})")
        self.condition_number = condition_number


_MAX_CONDITION = 1e12


def _hermitian(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def mrt(H: np.ndarray) -> np.ndarray:
    """Maximum-ratio precoder ``H^H D^{-1}`` with ``D = diag(sum_i |H[k, i]|^2)``."""
    H = np.asarray(H, dtype=complex)
    gains = np.sum(np.abs(H) ** 2, axis=-1)
    if np.any(gains == 0):
        raise ValueError("MRT undefined for a user with an all-zero channel")
    return _hermitian(H) / gains[..., None, :]


def zf(H: np.ndarray) -> np.ndarray:
    """Zero-forcing precoder ``H^H (H H^H)^{-1}``, so that ``H P = I``."""
    H = np.asarray(H, dtype=complex)
    K, N = H.shape[-2:]
    if N < K:
        raise ValueError(f"ZF needs at least as many antennas as users (N={N}, K={K})")
    gram = H @ _hermitian(H)
    cond = np.linalg.cond(gram)
    worst = float(np.max(cond))
    if not np.isfinite(worst) or worst > _MAX_CONDITION:
        raise RankDeficientError(worst)
    return _hermitian(np.linalg.solve(gram, H))


def asymptotic_precoder(H: np.ndarray, betas, mode: str = "colocated") -> np.ndarray:
    """Large-array limit of MRT/ZF.

    Column ``k`` is ``conj(H[k, :]) / (N beta_k)`` for co-located arrays
    (``betas`` of shape (K,)) and ``conj(H[k, :]) / sum_i beta[k, i]`` for
    distributed antennas (``betas`` of shape (K, N)).
    """
    H = np.asarray(H, dtype=complex)
    betas = np.asarray(betas, dtype=float)
    N = H.shape[-1]
    if mode == "colocated":
        norm = N * betas
    elif mode == "cellfree":
        norm = betas.sum(axis=-1)
    else:
        raise ValueError(f"mode must be 'colocated' or 'cellfree', got {mode!r}")
    if np.any(norm <= 0):
        raise ValueError("large-scale gains must be positive")
    return _hermitian(H) / norm


def support_zf(H: np.ndarray, mask: np.ndarray, normalize: bool = True) -> np.ndarray:
    """ZF restricted to each user's serving antennas.

    Column ``k`` uses only antennas in ``mask[k]``: it is column ``k`` of the
    pseudo-inverse of ``H[:, mask[k]]``, which nulls the other users when
    enough antennas serve ``k`` and is the least-squares compromise otherwise.
    With ``normalize`` each column is scaled to unit power averaged over the
    leading (subcarrier) axes.

    Parameters
    ----------
    H : complex array (..., K, N)
    mask : bool array (K, N)
    """
    H = np.asarray(H, dtype=complex)
    mask = np.asarray(mask, dtype=bool)
    K, N = H.shape[-2:]
    if mask.shape != (K, N):
        raise ValueError("mask must be (K, N)")
    P = np.zeros(H.shape[:-2] + (N, K), dtype=complex)
    for k in range(K):
        idx = np.flatnonzero(mask[k])
        if idx.size == 0:
            raise ValueError(f"user {k} has no serving antennas")
        P[..., idx, k] = np.linalg.pinv(H[..., :, idx])[..., :, k]
    if normalize:
        power = np.mean(np.sum(np.abs(P) ** 2, axis=-2).reshape(-1, K), axis=0)
        if np.any(power == 0):
            raise ValueError("a precoder column vanished")
        P = P / np.sqrt(power)
    return P


@dataclass(frozen=True)
class PowerAllocation:
    """Transmit powers ``q[k, i]`` in watts (per user and antenna)."""

    q: np.ndarray
    p_max: float
    nu: float | None = None
    gamma: float | None = None

    def antenna_power(self, precoder_gains=None) -> np.ndarray:
        """``sum_k q[k, i] g[k, i]``; ``g`` defaults to ones."""
        g = 1.0 if precoder_gains is None else np.asarray(precoder_gains)
        return np.sum(self.q * g, axis=0)


def fractional_power(
    betas: np.ndarray,
    nu: float,
    gamma: float,
    p_max: float,
    mask: np.ndarray | None = None,
    precoder_gains: np.ndarray | None = None,
) -> PowerAllocation:
    """Fractional power allocation.

    ``q[k, i] ~ b[k, i] / (S_k^nu * (sum_k' b[k', i] / S_k'^nu)^gamma)`` with
    ``S_k = sum_i b[k, i]``, where ``b`` is ``betas`` zeroed outside each
    user's service set.  One global constant then makes the largest
    per-antenna power ``sum_k q[k, i] g[k, i]`` equal ``p_max``.

    Parameters
    ----------
    betas : array (K, N)
    precoder_gains : array (K, N), optional
        Mean squared precoder magnitude ``|P[i, k]|^2`` per link, so the
        budget refers to radiated power.  Defaults to ones.
    """
    betas = np.asarray(betas, dtype=float)
    if np.any(betas <= 0):
        raise ValueError("large-scale gains must be positive")
    b = betas if mask is None else np.where(mask, betas, 0.0)
    totals = b.sum(axis=1, keepdims=True)
    if np.any(totals == 0):
        raise ValueError("a user has an empty service set")
    per_user = b / totals**nu
    load = per_user.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.where(b > 0, per_user / load**gamma, 0.0)
    g = np.ones_like(raw) if precoder_gains is None else np.asarray(precoder_gains, dtype=float)
    peak = np.max(np.sum(raw * g, axis=0))
    if peak <= 0:
        raise ValueError("allocation has no radiating antenna")
    return PowerAllocation(q=raw * (p_max / peak), p_max=p_max, nu=nu, gamma=gamma)


def max_power(precoder_gains: np.ndarray, p_max: float) -> PowerAllocation:
    """Every active antenna radiates ``p_max``: ``q[k, i] = p_max / sum_k' g[k', i]``."""
    g = np.asarray(precoder_gains, dtype=float)
    load = g.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore"):
        q = np.where(load > 0, p_max / load, 0.0)
    return PowerAllocation(q=np.broadcast_to(q, g.shape).copy(), p_max=p_max)


@dataclass(frozen=True)
class ServiceSets:
    """Serving antennas per user, kept at AP and antenna granularity."""

    ap_mask: np.ndarray
    antennas_per_ap: int
    threshold_db: float

    @property
    def mask(self) -> np.ndarray:
        """Antenna-level mask (K, N_AP * Q)."""
        return np.repeat(self.ap_mask, self.antennas_per_ap, axis=1)

    @property
    def ap_counts(self) -> np.ndarray:
        return self.ap_mask.sum(axis=1)

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.mask[k])


def ap_select(uplink_snr_db: np.ndarray, threshold_db: float, antennas_per_ap: int = 1) -> ServiceSets:
    """APs whose uplink SNR reaches ``threshold_db``; the best AP if none does."""
    snr = np.asarray(uplink_snr_db, dtype=float)
    ap_mask = snr >= threshold_db
    empty = ~ap_mask.any(axis=1)
    ap_mask[empty, np.argmax(snr[empty], axis=1)] = True
    return ServiceSets(ap_mask=ap_mask, antennas_per_ap=antennas_per_ap, threshold_db=threshold_db)


def combine_weights(precoders: np.ndarray, q) -> np.ndarray:
    """Apply powers to precoder columns, ``W[..., i, k] = sqrt(q[k, i]) P[..., i, k]``.

    ``q`` may be per user (K,), per link (K, N) or a scalar.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim == 2:
        q = q.T
    return np.sqrt(q) * precoders


def equivalent_channel(weights: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Equivalent channels ``h_eq[k, k', m, l] = sum_i W_m[i, k'] h[k, i, l]``.

    Parameters
    ----------
    weights : complex array (M, N, K)
        Precoders with powers applied (see :func:`combine_weights`).
    h : complex array (K, N, L)
        Downlink impulse responses.
    """
    return np.einsum("mij,kil->kjml", weights, h, optimize=True)
