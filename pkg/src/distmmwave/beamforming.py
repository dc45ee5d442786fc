"""Analog beamformers, equivalent channels and digital precoders.

Conventions
-----------
Channels are stored transmitter-antennas x user-antennas (``M x P``). On the
downlink an SBS sends ``x`` through beam ``f`` and user antennas see
``H.T @ f * x``; RF chain ``i`` of a user combines with ``f_hat^H``.

Each SBS owns one RF chain (and one beam) per user, and each user points
one RF chain at each SBS, so ``n_r == n_users`` and ``n_d == n_sbs``.

TDD reciprocity: the uplink receive beams are the complex conjugates of
the downlink beams, which makes the downlink equivalent channel the plain
transpose of the uplink stacked channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ArrayGeometry, ChannelRealization, PathSet, steering_vector
from .numerics import RankDeficientError, as_matrix, log_det_capacity, pseudo_inverse, svd

__all__ = [
    "AnalogBeamformer",
    "BeamformerSet",
    "sbs_analog_beamformer",
    "user_analog_beamformer",
    "equivalent_link_channel",
    "link_components",
    "equivalent_user_channel",
    "stacked_equivalent_channel",
    "design_beamformers",
    "uplink_beams",
    "downlink_equivalent",
    "svd_digital_precoder",
    "zf_digital_precoder",
    "codebook_user_beamformer_search",
]

_MODULUS_TOL = 1e-12


@dataclass(frozen=True)
class AnalogBeamformer:
    """Phase-only beamforming matrix, antennas x RF chains.

    Every entry has magnitude ``antennas ** -0.5`` so each column has unit norm.
    """

    matrix: np.ndarray
    side: str

    def __post_init__(self):
        if self.side not in ("sbs", "user"):
            raise ValueError("side must be 'sbs' or 'user'")
        mat = as_matrix(self.matrix, "beamformer")
        object.__setattr__(self, "matrix", mat)
        target = 1.0 / np.sqrt(mat.shape[0])
        if np.max(np.abs(np.abs(mat) - target)) > _MODULUS_TOL:
            raise ValueError("analog beamformer entries must have constant modulus 1/sqrt(antennas)")

    @property
    def num_antennas(self) -> int:
        return self.matrix.shape[0]

    @property
    def rf_chains(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class BeamformerSet:
    """Analog beams for a whole system.

    ``sbs[j]`` is ``M x n_users``: column ``t`` carries the stream for user
    ``t``. ``user[k]`` is ``P x n_sbs``: column ``i`` listens to SBS ``i``.
    """

    sbs: list[AnalogBeamformer]
    user: list[AnalogBeamformer]


def _beam_matrix(f) -> np.ndarray:
    return f.matrix if isinstance(f, AnalogBeamformer) else as_matrix(f)


def sbs_analog_beamformer(path_set: PathSet, sbs_geom: ArrayGeometry) -> np.ndarray:
    """Beam matched to the strongest path: ``conj(a(theta_1)) / sqrt(M)``."""
    if path_set.n_cl < 1:
        raise ValueError("path set is empty")
    a1 = steering_vector(sbs_geom, path_set.aoa_sbs[0])
    return a1.conj() / np.sqrt(sbs_geom.num_antennas)


def user_analog_beamformer(strongest_path) -> np.ndarray:
    """Combiner for the strongest arriving path: ``conj(h) / sqrt(P)``.

    ``strongest_path`` is the user-side steering vector of that path.
    """
    h = np.asarray(strongest_path, dtype=complex).ravel()
    if np.max(np.abs(np.abs(h) - 1.0)) > 1e-9:
        raise ValueError("strongest_path must have unit-modulus entries")
    return h.conj() / np.sqrt(len(h))


def equivalent_link_channel(h: ChannelRealization, f_sbs) -> np.ndarray:
    """Downlink channel seen through one SBS beam, ``H^T f`` (length ``P``)."""
    f = np.asarray(f_sbs, dtype=complex).ravel()
    if f.shape[0] != h.matrix.shape[0]:
        raise ValueError(
            f"beam has {f.shape[0]} entries but the channel has {h.matrix.shape[0]} transmit antennas"
        )
    return h.matrix.T @ f


def link_components(
    h: ChannelRealization, f_sbs, sbs_geom: ArrayGeometry, user_geom: ArrayGeometry
) -> tuple[np.ndarray, np.ndarray]:
    """Split ``H^T f`` into its strongest-path and scattered parts.

    The strongest-path part is rebuilt from the path parameters and the
    scattered part is the remainder of the actual matrix product, so their
    sum equals :func:`equivalent_link_channel`. Both include the path loss.
    """
    total = equivalent_link_channel(h, f_sbs)
    ps = h.path_set
    a1 = steering_vector(sbs_geom, ps.aoa_sbs[0])
    b1 = steering_vector(user_geom, ps.aoa_user[0])
    f = np.asarray(f_sbs, dtype=complex).ravel()
    strong = np.sqrt(h.path_loss / ps.n_cl) * ps.gains[0] * (a1 @ f) * b1.conj()
    return strong, total - strong


def equivalent_user_channel(links) -> np.ndarray:
    """Concatenate per-SBS link vectors into a ``P x N`` matrix, SBS order kept."""
    cols = [np.asarray(v, dtype=complex).ravel() for v in links]
    if len({c.shape[0] for c in cols}) != 1:
        raise ValueError("all link vectors must have the same length")
    return np.stack(cols, axis=1)


def stacked_equivalent_channel(channels, f_sbs_all, f_user_all) -> np.ndarray:
    """Uplink equivalent channel of the whole system.

    Block ``(i, k)`` is ``F_sbs[i]^H @ H[i][k] @ F_user[k]``; the result is
    ``(N * N_R) x (K * N_D)``.
    """
    sbs = [_beam_matrix(f) for f in f_sbs_all]
    users = [_beam_matrix(f) for f in f_user_all]
    n, k = len(sbs), len(users)
    if len(channels) != n or any(len(row) != k for row in channels):
        raise ValueError("channels must be indexed [sbs][user] matching the beamformer lists")
    n_r, n_d = sbs[0].shape[1], users[0].shape[1]
    if n * n_r != k * n_d:
        raise ValueError(
            f"RF-chain balance N*N_R = K*N_D violated: {n}*{n_r} != {k}*{n_d}"
        )
    rows = [
        np.hstack([sbs[i].conj().T @ channels[i][u].matrix @ users[u] for u in range(k)])
        for i in range(n)
    ]
    return np.vstack(rows)


def design_beamformers(
    channels, sbs_geom: ArrayGeometry, user_geom: ArrayGeometry
) -> BeamformerSet:
    """Strongest-path beams at every SBS and user (genie angle knowledge)."""
    n, k = len(channels), len(channels[0])
    sbs = [
        AnalogBeamformer(
            np.stack([sbs_analog_beamformer(channels[j][t].path_set, sbs_geom) for t in range(k)], 1),
            "sbs",
        )
        for j in range(n)
    ]
    user = [
        AnalogBeamformer(
            np.stack(
                [
                    user_analog_beamformer(steering_vector(user_geom, channels[i][u].path_set.aoa_user[0]))
                    for i in range(n)
                ],
                1,
            ),
            "user",
        )
        for u in range(k)
    ]
    return BeamformerSet(sbs, user)


def uplink_beams(beams: BeamformerSet) -> BeamformerSet:
    """Reciprocal uplink beams (element-wise conjugates of the downlink ones)."""
    return BeamformerSet(
        [AnalogBeamformer(f.matrix.conj(), "sbs") for f in beams.sbs],
        [AnalogBeamformer(f.matrix.conj(), "user") for f in beams.user],
    )


def downlink_equivalent(channels, beams: BeamformerSet) -> np.ndarray:
    """Downlink channel from all SBS RF chains to all user RF chains.

    Entry ``[(k, i), (j, t)]`` is ``f_hat[k][:, i]^H H[j][k]^T f[j][:, t]``:
    rows are user RF chains (user-major), columns SBS RF chains (SBS-major).
    """
    n, k = len(channels), len(channels[0])
    blocks = [
        np.hstack([beams.user[u].matrix.conj().T @ channels[j][u].matrix.T @ beams.sbs[j].matrix for j in range(n)])
        for u in range(k)
    ]
    return np.vstack(blocks)


def svd_digital_precoder(h_eq, num_streams: int) -> np.ndarray:
    """Right singular vectors of the ``num_streams`` strongest modes (orthonormal columns)."""
    h_eq = as_matrix(h_eq, "h_eq")
    if not 1 <= num_streams <= min(h_eq.shape):
        raise ValueError(f"num_streams must be in [1, {min(h_eq.shape)}]")
    return svd(h_eq).v[:, :num_streams]


def zf_digital_precoder(h) -> np.ndarray:
    """Zero-forcing precoder with unit-norm columns.

    ``h`` is receive streams x transmit RF chains; ``h @ W`` is diagonal.

    Raises
    ------
    RankDeficientError
        If ``h`` does not have full row rank.
    """
    h = as_matrix(h, "h")
    s = svd(h).s
    if h.shape[0] > h.shape[1] or s[0] == 0 or s[h.shape[0] - 1] < 1e-10 * s[0]:
        raise RankDeficientError("zero-forcing needs a full-row-rank equivalent channel")
    w = pseudo_inverse(h)
    return w / np.linalg.norm(w, axis=0)


def codebook_user_beamformer_search(
    h_eq_user,
    codebook,
    n_d: int,
    symbol_energy: float,
    n_sbs: int,
    noise_var: float,
) -> tuple[AnalogBeamformer, float]:
    """Greedy column-by-column search of the MMSE-SIC objective.

    ``h_eq_user`` is the ``P x N`` downlink equivalent channel of one user
    and ``codebook`` a ``P x C`` matrix of candidate beams. At each step the
    candidate that most increases ``log2 det(I + E/(N sigma^2) F^H H H^H F)``
    is appended; ties go to the lower index.

    Returns the selected beamformer (columns in selection order) and its
    objective value.
    """
    h = as_matrix(h_eq_user, "h_eq_user")
    cb = _beam_matrix(codebook)
    if cb.shape[1] < n_d:
        raise ValueError("codebook must hold at least n_d beams")
    energy = symbol_energy / n_sbs
    chosen: list[int] = []
    value = 0.0
    for _ in range(n_d):
        best, best_val = -1, -np.inf
        for c in range(cb.shape[1]):
            if c in chosen:
                continue
            f = cb[:, chosen + [c]]
            val = log_det_capacity(f.conj().T @ h, energy, noise_var)
            if val > best_val:
                best, best_val = c, val
        chosen.append(best)
        value = best_val
    return AnalogBeamformer(cb[:, chosen], "user"), float(value)
