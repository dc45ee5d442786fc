"""Achievable sum-rates in bits/s/Hz.

Three families of evaluators live here:

* large-array closed forms for the collocated and distributed schemes and
  their rate gap;
* the per-stream SINR model of a user that decodes each RF chain
  separately, both from an explicit split of the received signal and from
  the closed SINR expression (the two must agree);
* Monte Carlo sum-rates with MMSE-SIC receivers for the distributed hybrid
  scheme and the collocated fully digital benchmark.

Energies are linear (mW) and ``noise_var`` is the per-antenna noise power
in the same unit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamforming import (
    BeamformerSet,
    design_beamformers,
    downlink_equivalent,
    link_components,
    svd_digital_precoder,
    uplink_beams,
    zf_digital_precoder,
)
from .channel import ArrayGeometry, steering_matrix, steering_vector
from .estimation import beam_sweep, beams_from_reports, dft_codebook, estimate_stacked_channel, orthogonal_pilots
from .numerics import as_matrix, log_det_capacity, svd

__all__ = [
    "PowerBudget",
    "SinrBreakdown",
    "dbm_to_mw",
    "rate_bs_closed_form",
    "rate_sbs_closed_form",
    "rate_gap",
    "sbs_svd_rate",
    "sinr_breakdown",
    "sinr_closed_form",
    "sumrate_sinr",
    "mmse_sic_rate",
    "distributed_sumrate",
    "collocated_sumrate",
    "sumrate_mc",
    "PRECODERS",
    "CSI_MODES",
]

PRECODERS = ("svd_per_user", "zf_stacked")
CSI_MODES = ("genie", "estimated")


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


@dataclass(frozen=True)
class PowerBudget:
    """Total transmit power split equally over users, then over SBSs."""

    total_power: float
    n_users: int
    n_sbs: int

    def __post_init__(self):
        if self.total_power < 0:
            raise ValueError("total_power must be non-negative")
        if self.n_users < 1 or self.n_sbs < 1:
            raise ValueError("n_users and n_sbs must be >= 1")

    @property
    def per_user_energy(self) -> float:
        return self.total_power / self.n_users

    @property
    def per_sbs_stream_energy(self) -> float:
        return self.total_power / (self.n_users * self.n_sbs)


@dataclass(frozen=True)
class SinrBreakdown:
    """Per-stream powers after the user combiner."""

    desired: float
    scattering: float
    co_channel: float
    inter_user: float
    noise: float

    @property
    def sinr(self) -> float:
        return self.desired / (self.scattering + self.co_channel + self.inter_user + self.noise)


def rate_bs_closed_form(n_sbs, m, p, path_loss, energies, noise_var) -> float:
    """``sum_k log2(1 + loss_k N M P E_k / sigma^2)`` for the collocated array.

    ``path_loss`` and ``energies`` are scalars (one user) or per-user sequences.
    """
    loss, energy = np.broadcast_arrays(np.atleast_1d(path_loss), np.atleast_1d(energies))
    return float(np.sum(np.log2(1.0 + loss * n_sbs * m * p * energy / noise_var)))


def rate_sbs_closed_form(n_sbs, m, p, path_loss, energies, noise_var) -> float:
    """``sum_k sum_i log2(1 + loss_ik M P E_ik / sigma^2)`` for the distributed scheme.

    ``path_loss`` and ``energies`` broadcast to ``n_sbs x n_users``; scalars
    and 1-D inputs mean one user.
    """
    loss = np.asarray(path_loss, dtype=float)
    energy = np.asarray(energies, dtype=float)
    loss = loss.reshape(-1, 1) if loss.ndim == 1 else loss
    energy = energy.reshape(-1, 1) if energy.ndim == 1 else energy
    shape = np.broadcast_shapes((n_sbs, 1), loss.shape, energy.shape)
    snr = np.broadcast_to(loss, shape) * m * p * np.broadcast_to(energy, shape) / noise_var
    return float(np.sum(np.log2(1.0 + snr)))


def sbs_svd_rate(links, stream_energy: float, noise_var: float) -> float:
    """Fully digital SVD rate of one user over its stacked SBS channels.

    ``links`` are the user's ``N`` channel realizations (``M x P`` each),
    stacked into ``N M x P``; the ``N`` strongest modes each carry
    ``stream_energy``.
    """
    stacked = np.vstack([c.matrix for c in links])
    s = svd(stacked).s[: len(links)]
    return float(np.sum(np.log2(1.0 + stream_energy * s**2 / noise_var)))


def rate_gap(k_users: int, n_sbs: int, snr_per_user) -> tuple[float, float]:
    """Distributed minus collocated closed-form rate, exact and high-SNR forms.

    ``snr_per_user`` is ``loss * E_BS,k * M * P / sigma^2`` (scalar or one
    value per user).
    """
    snr = np.broadcast_to(np.asarray(snr_per_user, dtype=float), (k_users,))
    if np.any(snr <= 0):
        raise ValueError("SNR must be positive")
    n = float(n_sbs)
    exact = np.sum(n * np.log2(1.0 + snr / n) - np.log2(1.0 + n * snr))
    approx = np.sum((n - 1.0) * np.log2(1.0 + snr / n)) - 2.0 * k_users * np.log2(n)
    return float(exact), float(approx)


def _energy_grid(energies, n: int, k: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(energies, dtype=float), (n, k))


def sinr_breakdown(
    channels,
    beams: BeamformerSet,
    stream: tuple[int, int],
    energies,
    noise_var: float,
    sbs_geom: ArrayGeometry,
    user_geom: ArrayGeometry,
) -> SinrBreakdown:
    """Split the signal on RF chain ``i`` of user ``k`` into its five parts.

    ``stream = (k, i)``: user ``k`` decoding the stream that SBS ``i``
    sends it. ``energies[j, t]`` is the symbol energy SBS ``j`` spends on
    user ``t`` (a scalar applies to all). The strongest-path and scattered
    parts of every link are treated as separate contributions; the
    scattered part of the desired link counts as interference.
    """
    k, i = stream
    n, n_users = len(channels), len(channels[0])
    energy = _energy_grid(energies, n, n_users)
    f_hat = beams.user[k].matrix[:, i]
    desired = scattering = co_channel = inter_user = 0.0
    for j in range(n):
        strong, scattered = link_components(channels[j][k], beams.sbs[j].matrix[:, k], sbs_geom, user_geom)
        strong_pow = abs(np.vdot(f_hat, strong)) ** 2 * energy[j, k]
        if j == i:
            desired = strong_pow
        else:
            co_channel += strong_pow
        scattering += abs(np.vdot(f_hat, scattered)) ** 2 * energy[j, k]
        for t in range(n_users):
            if t != k:
                leak = channels[j][k].matrix.T @ beams.sbs[j].matrix[:, t]
                inter_user += abs(np.vdot(f_hat, leak)) ** 2 * energy[j, t]
    noise = noise_var * float(np.vdot(f_hat, f_hat).real)
    return SinrBreakdown(float(desired), float(scattering), float(co_channel), float(inter_user), noise)


def _los_fraction(ratio: float) -> float:
    return 1.0 if np.isinf(ratio) else ratio / (ratio + 1.0)


def sinr_closed_form(
    channels,
    beams: BeamformerSet,
    stream: tuple[int, int],
    energies,
    noise_var: float,
    sbs_geom: ArrayGeometry,
    user_geom: ArrayGeometry,
    mode: str = "full",
) -> float:
    """Per-stream SINR from the closed expression in path parameters.

    Assumes the strongest-path beams of :func:`design_beamformers`.
    ``mode="upper_bound_b"`` drops the scattering and inter-user terms.
    """
    if mode not in ("full", "upper_bound_b"):
        raise ValueError("mode must be 'full' or 'upper_bound_b'")
    k, i = stream
    n, n_users = len(channels), len(channels[0])
    energy = _energy_grid(energies, n, n_users)
    m, p = sbs_geom.num_antennas, user_geom.num_antennas
    paths = [channels[j][k].path_set for j in range(n)]
    loss = [channels[j][k].path_loss for j in range(n)]
    # unit-modulus strongest-path steering vectors at the user
    h1 = [steering_vector(user_geom, ps.aoa_user[0]) for ps in paths]

    desired = _los_fraction(paths[i].power_ratio) * loss[i] * m * p * energy[i, k]
    co_channel = (m / p) * sum(
        loss[j] * _los_fraction(paths[j].power_ratio) * abs(h1[i] @ h1[j].conj()) ** 2 * energy[j, k]
        for j in range(n)
        if j != i
    )
    interference = co_channel
    if mode == "full":
        f_hat = beams.user[k].matrix[:, i]
        for j, ps in enumerate(paths):
            if ps.n_cl > 1:
                f_sbs = beams.sbs[j].matrix[:, k]
                a = steering_matrix(sbs_geom, ps.aoa_sbs[1:])
                b = steering_matrix(user_geom, ps.aoa_user[1:])
                # normalized scattered component: the 1/(ratio+1) share is factored out
                h_s = np.sqrt((ps.power_ratio + 1.0) / ps.n_cl) * (b.conj() @ (ps.gains[1:] * (a.T @ f_sbs)))
                interference += loss[j] / (ps.power_ratio + 1.0) * abs(np.vdot(f_hat, h_s)) ** 2 * energy[j, k]
            for t in range(n_users):
                if t != k:
                    leak = channels[j][k].matrix.T @ beams.sbs[j].matrix[:, t]
                    interference += abs(np.vdot(f_hat, leak)) ** 2 * energy[j, t]
    return float(desired / (interference + noise_var))


def sumrate_sinr(
    channels,
    beams: BeamformerSet,
    energies,
    noise_var: float,
    sbs_geom: ArrayGeometry,
    user_geom: ArrayGeometry,
    mode: str = "full",
) -> float:
    """Sum over users and RF chains of ``log2(1 + SINR)`` from :func:`sinr_closed_form`."""
    n, n_users = len(channels), len(channels[0])
    return float(
        sum(
            np.log2(1.0 + sinr_closed_form(channels, beams, (k, i), energies, noise_var, sbs_geom, user_geom, mode))
            for k in range(n_users)
            for i in range(n)
        )
    )


def mmse_sic_rate(h_eq_user, f_user, symbol_energy: float, n_sbs: int, noise_var: float) -> float:
    """MMSE-SIC objective ``log2 det(I + E/(N sigma^2) F^H H H^H F)``.

    ``h_eq_user`` is the user's ``P x N`` downlink equivalent channel,
    ``f_user`` its ``P x N_D`` analog combiner and ``symbol_energy`` the
    per-user energy, shared equally by the ``N`` SBS streams.
    """
    f = f_user.matrix if hasattr(f_user, "matrix") else as_matrix(f_user, "f_user")
    h = as_matrix(h_eq_user, "h_eq_user")
    return log_det_capacity(f.conj().T @ h, symbol_energy / n_sbs, noise_var)


def _logdet2(mat: np.ndarray) -> float:
    return float(2.0 * np.sum(np.log2(np.diag(np.linalg.cholesky(mat)).real)))


def _sic_rate(signal: np.ndarray, interference: np.ndarray, noise_var: float, noise_gram=None) -> float:
    """Rate of an MMSE-SIC receiver against Gaussian interference.

    ``signal`` and ``interference`` hold one energy-scaled column per
    stream. ``noise_gram`` is the combiner Gram matrix ``F^H F`` (identity
    when None); its null space carries no information and is projected out.
    """
    if noise_gram is not None:
        lam, vec = np.linalg.eigh(noise_gram)
        keep = lam > 1e-12 * lam[-1]
        whiten = (vec[:, keep] / np.sqrt(lam[keep])).conj().T
        signal, interference = whiten @ signal, whiten @ interference
    q = noise_var * np.eye(signal.shape[0]) + interference @ interference.conj().T
    return _logdet2(q + signal @ signal.conj().T) - _logdet2(q)


def _multiuser_rate(d_true, precoder, owners, energies, noise_var, combiner_grams, rows_per_user) -> float:
    """Sum of per-user MMSE-SIC rates for a linear precoder over a stacked channel."""
    owners = np.asarray(owners)
    amp = np.sqrt(np.asarray(energies, dtype=float))
    total = 0.0
    for k, gram in enumerate(combiner_grams):
        g = d_true[k * rows_per_user:(k + 1) * rows_per_user] @ precoder * amp
        total += _sic_rate(g[:, owners == k], g[:, owners != k], noise_var, gram)
    return total


def distributed_sumrate(
    channels,
    budget: PowerBudget,
    noise_var: float,
    sbs_geom: ArrayGeometry,
    user_geom: ArrayGeometry,
    precoder: str = "svd_per_user",
    csi: str = "genie",
    rng: np.random.Generator | None = None,
    oversampling: int = 2,
) -> float:
    """Sum-rate of the distributed hybrid scheme for one channel draw.

    Analog beams follow the strongest paths (``csi="genie"``) or the
    outcome of a codebook beam sweep (``csi="estimated"``). The digital
    precoder is designed from the equivalent CSI and the rate is evaluated
    on the true channel with per-user MMSE-SIC receivers; other users'
    streams count as Gaussian interference.
    """
    if precoder not in PRECODERS:
        raise ValueError(f"precoder must be one of {PRECODERS}")
    if csi not in CSI_MODES:
        raise ValueError(f"csi must be one of {CSI_MODES}")
    n, k = len(channels), len(channels[0])
    e_s = budget.per_sbs_stream_energy

    if csi == "genie":
        beams = design_beamformers(channels, sbs_geom, user_geom)
        d_true = downlink_equivalent(channels, beams)
        d_csi = d_true
    else:
        if rng is None:
            raise ValueError("estimated CSI needs an rng")
        sbs_cb = dft_codebook(sbs_geom.num_antennas, oversampling, sbs_geom.spacing_ratio, "sbs")
        user_cb = dft_codebook(user_geom.num_antennas, oversampling, user_geom.spacing_ratio, "user")
        reports = beam_sweep(channels, sbs_cb, user_cb, noise_var, rng, symbol_energy=e_s)
        beams = beams_from_reports(reports, sbs_cb, user_cb, n)
        d_true = downlink_equivalent(channels, beams)
        up = uplink_beams(beams)
        pilots = orthogonal_pilots(k * n)
        pilot_energy = e_s if e_s > 0 else 1.0
        d_csi = estimate_stacked_channel(channels, up.sbs, up.user, pilots, pilot_energy, noise_var, rng).T

    grams = [f.matrix.conj().T @ f.matrix for f in beams.user]
    if precoder == "zf_stacked":
        w = zf_digital_precoder(d_csi)
        owners = np.repeat(np.arange(k), n)
        energies = np.full(k * n, budget.per_user_energy / n)
        return _multiuser_rate(d_true, w, owners, energies, noise_var, grams, n)

    # per-user SVD on the combined equivalent channel; user t's streams ride
    # on the SBS RF chains (j, t)
    streams = n
    w = np.zeros((n * k, k * streams), dtype=complex)
    for t in range(k):
        cols = np.arange(n) * k + t
        h_eq = d_csi[t * n:(t + 1) * n][:, cols]
        w[np.ix_(cols, np.arange(t * streams, (t + 1) * streams))] = svd_digital_precoder(h_eq, streams)
    owners = np.repeat(np.arange(k), streams)
    energies = np.full(k * streams, budget.per_user_energy / streams)
    return _multiuser_rate(d_true, w, owners, energies, noise_var, grams, n)


def collocated_sumrate(channels, budget: PowerBudget, noise_var: float) -> float:
    """Sum-rate of the fully digital collocated array for one channel draw.

    ``channels[k]`` is user ``k``'s ``N M x P`` channel. Each user is
    precoded onto the right singular vectors of its nonzero modes, every
    mode carrying the per-user energy, and decoded with MMSE-SIC across
    all ``P`` antennas with the other users' streams as interference.
    """
    e = budget.per_user_energy
    links = [c.matrix.T for c in channels]  # P x NM downlink channels
    precoders = []
    for g in links:
        res = svd(g)
        rank = int(np.count_nonzero(res.s > 1e-10 * res.s[0])) if res.s[0] > 0 else 1
        precoders.append(res.v[:, :rank])
    total = 0.0
    amp = np.sqrt(e)
    for k, g in enumerate(links):
        own = amp * (g @ precoders[k])
        others = [amp * (g @ w) for t, w in enumerate(precoders) if t != k]
        intf = np.hstack(others) if others else np.zeros((g.shape[0], 0))
        total += _sic_rate(own, intf, noise_var)
    return total


def sumrate_mc(channels, scheme: str, budget: PowerBudget, noise_var: float, **kwargs) -> float:
    """Dispatch to :func:`distributed_sumrate` or :func:`collocated_sumrate`."""
    if scheme == "distributed_hybrid":
        return distributed_sumrate(channels, budget, noise_var, **kwargs)
    if scheme == "collocated_digital":
        return collocated_sumrate(channels, budget, noise_var)
    raise ValueError(f"unknown scheme {scheme!r}")
