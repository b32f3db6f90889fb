"""Scenario pipeline: one Monte-Carlo trial from channel draw to SINR reports."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import channel as chn
from . import fsp as fspm
from . import impairments as imp
from . import metrics as met
from . import precoding as pre
from .config import ScenarioConfig
from .core_dsp import PrototypeFilter, design_prototype


class NumericalFailure(RuntimeError):
    """A trial produced non-finite results or an unusable precoder."""


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


def subcarrier_gains(h: np.ndarray, num_subcarriers: int) -> np.ndarray:
    """Channel responses at the M subcarrier centres, any length ``L``.

    Taps are folded modulo M first, which leaves the DFT samples unchanged.
    Returns shape ``h.shape[:-1] + (M,)``.
    """
    h = np.asarray(h)
    L = h.shape[-1]
    pad = (-L) % num_subcarriers
    folded = np.pad(h, [(0, 0)] * (h.ndim - 1) + [(0, pad)]).reshape(h.shape[:-1] + (-1, num_subcarriers)).sum(axis=-2)
    return np.fft.fft(folded, axis=-1)


def _freq_matrix(h: np.ndarray, M: int) -> np.ndarray:
    """(K, N, L) impulse responses to (M, K, N) matrices."""
    return np.moveaxis(subcarrier_gains(h, M), -1, 0)


def _self_channels(weights: np.ndarray, h: np.ndarray) -> np.ndarray:
    """``sum_i W_m[i, k] h[k, i, l]`` for every user, shape (K, M, L)."""
    return np.einsum("mik,kil->kml", weights, h, optimize=True)


def _shifted(profile: np.ndarray, M: int) -> np.ndarray:
    """Per-subcarrier modulated copies ``p[k, l] exp(j 2 pi l m / M)``, shape (K, M, L)."""
    l = np.arange(profile.shape[-1])
    rot = np.exp(2j * np.pi * np.outer(np.arange(M), l) / M)
    return profile[:, None, :] * rot


@dataclass
class TrialResult:
    """Per-user (K,) SINR/SIR in dB for each transmission scheme, plus bookkeeping."""

    sinr_db: dict = field(default_factory=dict)
    sir_db: dict = field(default_factory=dict)
    sinr_linear: dict = field(default_factory=dict)
    ap_counts: np.ndarray | None = None
    antenna_power_ratio: float = float("nan")
    links: dict = field(default_factory=dict)

    def add(self, name: str, report: met.SinrReport) -> None:
        lin = np.minimum(report.sinr, 10 ** (met.SINR_CAP_DB / 10))
        if not np.all(np.isfinite(lin)):
            raise NumericalFailure(f"non-finite SINR in {name}")
        self.sinr_linear[name] = lin
        self.sinr_db[name] = report.user_sinr_db()
        self.sir_db[name] = report.user_sir_db()


@dataclass(frozen=True)
class _Imperfections:
    h_down: np.ndarray
    h_est: np.ndarray
    lam: float
    sigma_et2: float
    sigma_ef2: float
    est_length: int


def _impair(cfg: ScenarioConfig, ch: chn.ChannelRealization, noise_ref: float, rng) -> _Imperfections:
    K, N, L = ch.h.shape
    recip = cfg.impairment in ("reciprocity", "both")
    est = cfg.impairment in ("est_error", "both")
    if recip:
        cal = imp.draw_calibration(N, cfg.num_subcarriers, rng, cfg.xi_range, cfg.phi_max)
        down = imp.apply_reciprocity(ch, cal, "downlink")
        up = imp.apply_reciprocity(ch, cal, "uplink")
        lam = imp.lambda_stat(cfg.xi_range, cfg.phi_max).value
    else:
        down, up, lam = ch, ch, 1.0
    sigma_et2 = 0.0
    if est:
        if cfg.sigma_et2 is not None:
            model = imp.EstimationErrorModel(cfg.sigma_et2, L)
        else:
            model = imp.EstimationErrorModel.from_pilot_snr(noise_ref, K, L, cfg.pilot_boost_db)
        up = imp.add_estimation_error(up, model, rng)
        sigma_et2 = model.sigma_et2
    return _Imperfections(
        h_down=down.h, h_est=up.h, lam=lam, sigma_et2=sigma_et2, sigma_ef2=L * sigma_et2, est_length=L
    )


def _pilot_reference(rng, powers: met.CascadePowers, noise: float, symbol_power: float, slots: int) -> np.ndarray:
    """Per-user gain estimated from one block of pilots on every subcarrier.

    The least-squares estimate over ``slots * M`` pilots equals the mean
    true gain plus Gaussian error whose variance follows from the
    interference-plus-noise seen by those pilots.
    """
    g = powers.gain
    M = g.shape[-1]
    dist = powers.interference * symbol_power + 0.5 * noise
    var = np.sum(dist, axis=-1) / (slots * M * M * symbol_power)
    est = g.mean(axis=-1) + np.sqrt(var) * rng.standard_normal(g.shape[0])
    return np.repeat(est[:, None], M, axis=1)


def colocated_trial(cfg: ScenarioConfig, trial: int, proto: PrototypeFilter, keep_links: bool = False) -> TrialResult:
    rng = trial_rng(cfg.seed, trial)
    K, N, M = cfg.num_users, cfg.num_antennas, cfg.num_subcarriers
    noise = 10.0 ** (-cfg.snr_db / 10.0)
    rms = chn.draw_rms_delays(K, rng, *cfg.rms_delay_ns)
    pdps = chn.stack_pdps([chn.tdlc_pdp(r, cfg.sample_rate_hz) for r in rms])
    ch = chn.draw_channel(pdps[:, None, :], np.ones((K, N)), rng)
    errs = _impair(cfg, ch, noise, rng)

    H_est = _freq_matrix(errs.h_est, M)
    P = pre.zf(H_est) if cfg.precoder == "zf" else pre.mrt(H_est)

    if cfg.pdp_source == "estimated":
        model_pdp = fspm.estimate_pdp(errs.h_est[..., : errs.est_length], errs.sigma_et2, cfg.debias_pdp)
    else:
        model_pdp = pdps
    if cfg.compensation == "statistical":
        model_scale = fspm.correction_factor(errs.lam, errs.sigma_ef2)
    else:
        model_scale = 1.0
    model_profile = model_scale * model_pdp

    spec = fspm.FspDesignSpec(cfg.fsp_length, cfg.fsp_mode, cfg.fsp_noise_weight, cfg.fsp_grid_points)
    banks = {"fbmc_1tap": fspm.FspBank.identity(K, M)}
    if cfg.use_fsp:
        banks = {"fbmc_fsp": fspm.pdp_bank(model_profile, M, spec, proto), **banks}

    col_power = np.sum(np.abs(P) ** 2, axis=1)  # (M, K)
    result = TrialResult()
    for name, bank in banks.items():
        c = np.sqrt(K * M / np.sum(bank.energy().T * col_power))
        W = c * P
        link = met.LinkModel(errs.h_down, W, bank.taps, noise)
        eq = pre.equivalent_channel(W, errs.h_down)
        powers = met.cascade_powers(eq, bank.taps, proto, span=cfg.subcarrier_span)
        result.add(name, met.analytic_sinr(powers, noise, link.symbol_power))
        if cfg.impairment != "perfect":
            if cfg.compensation == "downlink_pilot":
                ref = _pilot_reference(rng, powers, noise, link.symbol_power, cfg.downlink_pilot_slots)
            else:
                ref = met.self_gains(c * _shifted(model_profile, M), bank.taps, proto)
            result.add(name + "_rx", met.analytic_sinr(powers, noise, link.symbol_power, reference_gain=ref))
        else:
            ref = None
        if keep_links:
            result.links[name] = (link, ref)

    c_o = np.sqrt(K * M / np.sum(col_power))
    W_o = c_o * P
    H_down = _freq_matrix(errs.h_down, M)
    result.add("ofdm", met.ofdm_sinr(H_down, W_o, noise))
    if cfg.impairment != "perfect":
        if cfg.compensation == "downlink_pilot":
            G = np.einsum("mkk->km", H_down @ W_o)
            dist = met.ofdm_sinr(H_down, W_o, noise)
            err_var = np.sum(dist.interference + dist.noise, axis=-1) / (cfg.downlink_pilot_slots * M * M)
            z = np.sqrt(err_var / 2) * (rng.standard_normal(K) + 1j * rng.standard_normal(K))
            ref_o = np.repeat((G.mean(axis=-1) + z)[:, None], M, axis=1)
        else:
            ref_o = np.full((K, M), c_o * model_scale, dtype=complex)
        result.add("ofdm_rx", met.ofdm_sinr(H_down, W_o, noise, reference_gain=ref_o))
    return result


def cellfree_trial(cfg: ScenarioConfig, trial: int, proto: PrototypeFilter, keep_links: bool = False) -> TrialResult:
    rng = trial_rng(cfg.seed, trial)
    K, M = cfg.num_users, cfg.num_subcarriers
    geo = chn.place_cellfree(cfg.num_aps, cfg.area_km, cfg.antennas_per_ap, K, rng)
    betas, beta_ap = chn.cellfree_betas(geo, rng, cfg.shadow_std_db)
    rms = chn.draw_rms_delays(K * cfg.num_aps, rng, *cfg.rms_delay_ns)
    ap_pdps = chn.stack_pdps([chn.tdlc_pdp(r, cfg.sample_rate_hz) for r in rms]).reshape(K, cfg.num_aps, -1)
    pdps = ap_pdps[:, geo.antenna_ap, :]
    ch = chn.draw_channel(pdps, betas, rng)
    noise = chn.noise_variance(cfg.bandwidth_hz, cfg.noise_figure_db, cfg.temperature_k)
    # estimation error in channel units: pilots arrive with the user's power
    errs = _impair(cfg, ch, noise / cfg.ue_power_w, rng)

    snr_db = 10.0 * np.log10(cfg.ue_power_w * beta_ap / noise)
    sets = pre.ap_select(snr_db, cfg.ap_threshold_db, cfg.antennas_per_ap)
    mask = sets.mask

    H_est = _freq_matrix(errs.h_est, M)
    P = pre.support_zf(H_est, mask, normalize=False)
    gains = np.mean(np.abs(P) ** 2, axis=0).T  # (K, N)
    if cfg.power_allocation == "fractional":
        alloc = pre.fractional_power(betas, cfg.nu, cfg.gamma, cfg.p_max_w, mask=mask, precoder_gains=gains)
    else:
        alloc = pre.max_power(gains, cfg.p_max_w)
    W = pre.combine_weights(P, alloc.q)

    model_self = _self_channels(W, errs.h_est)
    if cfg.compensation in ("statistical", "correction_term") and errs.sigma_et2 > 0:
        full = pre.equivalent_channel(W, errs.h_est)
        full = fspm.corrected_eqch_cellfree(
            full, alloc.q, betas, errs.lam, errs.sigma_et2, errs.sigma_ef2, errs.est_length, mask
        )
        model_self = np.einsum("kkml->kml", full)

    spec = fspm.FspDesignSpec(cfg.fsp_length, cfg.fsp_mode, cfg.fsp_noise_weight, cfg.fsp_grid_points)
    one_tap = fspm.phase_only_bank(model_self)
    banks = {"fbmc_1tap": one_tap}
    if cfg.use_fsp:
        banks = {"fbmc_fsp": fspm.equivalent_channel_bank(model_self, spec, proto, unit_energy=True), **banks}

    result = TrialResult(ap_counts=sets.ap_counts, antenna_power_ratio=float(np.max(alloc.antenna_power(gains)) / cfg.p_max_w))
    for name, bank in banks.items():
        link = met.LinkModel(errs.h_down, W, bank.taps, noise)
        eq = pre.equivalent_channel(W, errs.h_down)
        powers = met.cascade_powers(eq, bank.taps, proto, span=cfg.subcarrier_span)
        result.add(name, met.analytic_sinr(powers, noise, link.symbol_power))
        ref = None
        if cfg.impairment != "perfect":
            ref = met.self_gains(model_self, bank.taps, proto)
            result.add(name + "_rx", met.analytic_sinr(powers, noise, link.symbol_power, reference_gain=ref))
        if keep_links:
            result.links[name] = (link, ref)

    H_down = _freq_matrix(errs.h_down, M)
    result.add("ofdm", met.ofdm_sinr(H_down, W, noise))
    if cfg.impairment != "perfect":
        ref_o = np.einsum("mkk->km", H_est @ W)
        result.add("ofdm_rx", met.ofdm_sinr(H_down, W, noise, reference_gain=ref_o))
    return result


def run_trial(cfg: ScenarioConfig, trial: int, proto: PrototypeFilter | None = None, keep_links: bool = False) -> TrialResult:
    proto = proto or design_prototype(cfg.num_subcarriers, cfg.overlap)
    try:
        with np.errstate(over="raise", invalid="raise"):
            if cfg.mode == "colocated":
                return colocated_trial(cfg, trial, proto, keep_links)
            return cellfree_trial(cfg, trial, proto, keep_links)
    except (FloatingPointError, np.linalg.LinAlgError, pre.RankDeficientError, fspm.SingularDesignError) as exc:
        raise NumericalFailure(f"trial {trial}: {exc}") from exc


def _run_chunk(args):
    cfg, trials = args
    proto = design_prototype(cfg.num_subcarriers, cfg.overlap)
    return [run_trial(cfg, t, proto) for t in trials]


@dataclass
class ScenarioResult:
    """All trials of one configuration."""

    config: ScenarioConfig
    trials: list

    def schemes(self) -> list:
        return list(self.trials[0].sinr_db)

    def mean_sinr_db(self, scheme: str) -> float:
        """Linear mean over trials, users and subcarriers, in dB."""
        values = np.concatenate([t.sinr_linear[scheme].ravel() for t in self.trials])
        return float(met.to_db(values.mean()))

    def user_sinr_db(self, scheme: str) -> np.ndarray:
        return np.concatenate([t.sinr_db[scheme] for t in self.trials])

    def user_sir_db(self, scheme: str) -> np.ndarray:
        return np.concatenate([t.sir_db[scheme] for t in self.trials])

    def mean_ap_count(self) -> float:
        counts = [t.ap_counts for t in self.trials if t.ap_counts is not None]
        return float(np.mean(np.concatenate(counts))) if counts else float("nan")

    def max_antenna_power_ratio(self) -> float:
        return float(np.nanmax([t.antenna_power_ratio for t in self.trials]))

    def summary(self) -> dict:
        out = {f"sinr_db_{name}": self.mean_sinr_db(name) for name in self.schemes()}
        if self.config.mode == "cellfree":
            out["mean_serving_aps"] = self.mean_ap_count()
            out["max_antenna_power_ratio"] = self.max_antenna_power_ratio()
        return out


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Run ``cfg.trials`` independent trials, in parallel when ``cfg.threads > 1``.

    Each trial seeds its own generator from ``(seed, trial)``, so results do
    not depend on the worker count.
    """
    trials = list(range(cfg.trials))
    if cfg.threads == 1:
        results = _run_chunk((cfg, trials))
    else:
        chunks = [trials[i :: cfg.threads] for i in range(cfg.threads)]
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            parts = list(pool.map(_run_chunk, [(cfg, c) for c in chunks]))
        by_index = {}
        for chunk, part in zip(chunks, parts):
            by_index.update(zip(chunk, part))
        results = [by_index[t] for t in trials]
    return ScenarioResult(config=cfg, trials=results)
