"""Simulation of distributed small-cell hybrid mmWave downlinks.

Modules: :mod:`numerics` (SVD, log-det), :mod:`channel` (clustered ULA
channels), :mod:`beamforming` (analog beams, equivalent channels, digital
precoders), :mod:`estimation` (beam sweep and pilot-based estimation),
:mod:`rate` (closed forms, SINR and Monte Carlo sum-rates),
:mod:`experiments` (seeded sweeps) and :mod:`cli`.
"""

__version__ = "0.1.0"
