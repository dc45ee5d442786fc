"""Three-step acquisition of the stacked equivalent channel.

1. Beam sweep: every SBS/user pair measures reference-signal power over a
   transmit and receive codebook and keeps the best pair.
2. Beam report: each user keeps its ``n_d`` strongest SBS links; the chosen
   beams become the analog beamformers.
3. Uplink pilots: every user RF chain sends a distinct row of a DFT pilot
   matrix and the SBSs form a least-squares estimate of the equivalent
   channel seen through the chosen beams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamforming import AnalogBeamformer, BeamformerSet, stacked_equivalent_channel
from .channel import ArrayGeometry, steering_matrix

__all__ = [
    "Codebook",
    "BeamReport",
    "PilotMatrix",
    "dft_codebook",
    "beam_sweep",
    "beams_from_reports",
    "orthogonal_pilots",
    "estimate_stacked_channel",
]


@dataclass(frozen=True)
class Codebook:
    """Candidate analog beams, one unit-norm column each."""

    vectors: np.ndarray
    side: str = "sbs"

    def __len__(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class BeamReport:
    """What one user feeds back after the sweep, strongest link first."""

    user: int
    sbs: np.ndarray
    tx_beam: np.ndarray
    rx_beam: np.ndarray
    energy: np.ndarray


@dataclass(frozen=True)
class PilotMatrix:
    """``L x L`` unit-modulus pilots with ``Phi^H Phi = L I``; row ``r`` belongs to RF chain ``r``."""

    matrix: np.ndarray

    @property
    def length(self) -> int:
        return self.matrix.shape[0]


def dft_codebook(num_antennas: int, oversampling: int = 1, spacing_ratio: float = 0.5, side: str = "sbs") -> Codebook:
    """Steering beams on a uniform grid of ``cos(angle)`` over ``[-1, 1)``.

    With half-wavelength spacing and ``oversampling == 1`` the beams are the
    columns of a (phase-rotated) unitary DFT matrix.
    """
    if num_antennas < 1 or oversampling < 1:
        raise ValueError("num_antennas and oversampling must be >= 1")
    size = num_antennas * oversampling
    cosines = -1.0 + 2.0 * np.arange(size) / size
    angles = np.arccos(cosines)
    geom = ArrayGeometry(num_antennas, spacing_ratio)
    return Codebook(steering_matrix(geom, angles) / np.sqrt(num_antennas), side)


def beam_sweep(
    channels,
    sbs_codebook: Codebook,
    user_codebook: Codebook,
    noise_var: float,
    rng: np.random.Generator,
    symbol_energy: float = 1.0,
    n_d: int | None = None,
) -> list[BeamReport]:
    """Exhaustive transmit/receive beam search on every link.

    The measured energy of a beam pair is ``|w^H H^T c sqrt(E) + n|^2`` with
    ``n ~ CN(0, noise_var)``. Each user reports its ``n_d`` strongest links
    (all links when ``n_d`` is None).
    """
    if noise_var < 0:
        raise ValueError("noise_var must be non-negative")
    n, k = len(channels), len(channels[0])
    n_d = n if n_d is None else n_d
    if not 1 <= n_d <= n:
        raise ValueError(f"n_d must be in [1, {n}]")
    tx, rx = sbs_codebook.vectors, user_codebook.vectors
    reports = []
    for u in range(k):
        best = []
        for j in range(n):
            gain = rx.conj().T @ channels[j][u].matrix.T @ tx  # rx beams x tx beams
            noise = np.sqrt(noise_var / 2) * (
                rng.standard_normal(gain.shape) + 1j * rng.standard_normal(gain.shape)
            )
            energy = np.abs(np.sqrt(symbol_energy) * gain + noise) ** 2
            r, c = np.unravel_index(np.argmax(energy), energy.shape)
            best.append((energy[r, c], j, c, r))
        best.sort(key=lambda item: (-item[0], item[1]))
        best = best[:n_d]
        reports.append(
            BeamReport(
                user=u,
                sbs=np.array([b[1] for b in best]),
                tx_beam=np.array([b[2] for b in best]),
                rx_beam=np.array([b[3] for b in best]),
                energy=np.array([b[0] for b in best]),
            )
        )
    return reports


def beams_from_reports(
    reports: list[BeamReport], sbs_codebook: Codebook, user_codebook: Codebook, n_sbs: int
) -> BeamformerSet:
    """Turn beam reports into analog beamformers.

    Every user must report every SBS (``n_d == n_sbs``); user RF chain ``i``
    is then pointed at SBS ``i``.
    """
    k = len(reports)
    tx = np.zeros((n_sbs, k), dtype=int)
    rx = np.zeros((k, n_sbs), dtype=int)
    for rep in reports:
        if sorted(rep.sbs.tolist()) != list(range(n_sbs)):
            raise ValueError("each user must report one beam pair per SBS")
        for j, c, r in zip(rep.sbs, rep.tx_beam, rep.rx_beam):
            tx[j, rep.user] = c
            rx[rep.user, j] = r
    sbs = [AnalogBeamformer(sbs_codebook.vectors[:, tx[j]], "sbs") for j in range(n_sbs)]
    user = [AnalogBeamformer(user_codebook.vectors[:, rx[u]], "user") for u in range(k)]
    return BeamformerSet(sbs, user)


def orthogonal_pilots(length: int) -> PilotMatrix:
    """DFT pilot matrix ``Phi[r, n] = exp(-2j pi r n / L)``."""
    if length < 1:
        raise ValueError("pilot length must be >= 1")
    idx = np.arange(length)
    return PilotMatrix(np.exp(-2j * np.pi * np.outer(idx, idx) / length))


def estimate_stacked_channel(
    true_channels,
    f_sbs_all,
    f_user_all,
    pilots: PilotMatrix,
    pilot_energy: float,
    noise_var: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Least-squares estimate of the uplink stacked equivalent channel.

    The SBS RF chains observe ``Y = H_eq sqrt(E_p) Phi^T + N`` with i.i.d.
    ``CN(0, noise_var)`` noise, and the estimate is
    ``Y conj(Phi) / (L sqrt(E_p))``. The beam lists are the uplink
    (receive-side) beams.
    """
    if pilot_energy <= 0:
        raise ValueError("pilot_energy must be positive")
    h_eq = stacked_equivalent_channel(true_channels, f_sbs_all, f_user_all)
    phi = pilots.matrix
    if phi.shape[0] != h_eq.shape[1]:
        raise ValueError(
            f"pilot length {phi.shape[0]} does not match the {h_eq.shape[1]} user RF chains"
        )
    length = phi.shape[0]
    y = np.sqrt(pilot_energy) * h_eq @ phi.T
    if noise_var > 0:
        y = y + np.sqrt(noise_var / 2) * (
            rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        )
    return y @ phi.conj() / (length * np.sqrt(pilot_energy))
