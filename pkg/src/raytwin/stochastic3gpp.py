"""Stochastic baseline channel with probabilistic LoS switching.

Log-distance losses on top of a distance-dependent LoS probability.  The
LoS state is redrawn independently per packet, which reproduces the rigid
LoS/NLoS alternation (and the bimodal gain distribution) this family is
known for; the deterministic engine exists to remove exactly that
artifact.  All constants besides the LoS-probability curve are
non-normative defaults and are exposed in the scenario file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import C_LIGHT
from .errors import NonPositiveDistance
from .raychannel import ChannelSummary
from .streams import DOM_CHANNEL, stream


@dataclass(frozen=True)
class StochasticParams:
    fc: float = 5.89e9
    los_exponent: float = 2.0  # path-loss exponent, referenced at 1 m
    nlos_excess_db: float = 15.0
    shadow_sigma_los_db: float = 3.0
    shadow_sigma_nlos_db: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.shadow_sigma_los_db < 0 or self.shadow_sigma_nlos_db < 0:
            raise ValueError("shadowing sigmas must be >= 0")

    @property
    def fspl_1m_db(self) -> float:
        lam = C_LIGHT / self.fc
        return 20.0 * math.log10(4.0 * math.pi / lam)


def p_los(d: float) -> float:
    """LoS probability: min(18/d, 1)(1 - e^(-d/36)) + e^(-d/36), in [0, 1]."""
    if d <= 0:
        raise NonPositiveDistance(f"distance must be > 0, got {d}")
    e = math.exp(-d / 36.0)
    p = min(18.0 / d, 1.0) * (1.0 - e) + e
    return min(max(p, 0.0), 1.0)


def sample_channel(d: float, params: StochasticParams, rng: np.random.Generator,
                   injected_los: int | None = None) -> ChannelSummary:
    """One per-packet channel draw.

    The LoS state comes from a Bernoulli(p_los(d)) draw, or from
    ``injected_los`` when the deterministic engine's flag is injected for
    a fair comparison.  The injected mode consumes no Bernoulli draw.
    """
    if d <= 0:
        raise NonPositiveDistance(f"distance must be > 0, got {d}")
    if injected_los is None:
        los = int(rng.random() < p_los(d))
    else:
        los = int(injected_los)
    sigma = params.shadow_sigma_los_db if los else params.shadow_sigma_nlos_db
    shadow = rng.normal(0.0, sigma) if sigma > 0 else 0.0
    loss_db = params.fspl_1m_db + 10.0 * params.los_exponent * math.log10(d)
    if not los:
        loss_db += params.nlos_excess_db
    gain_db = -loss_db - shadow
    return ChannelSummary(10.0 ** (gain_db / 10.0), d / C_LIGHT, los)


def packet_stream(seed: int, tx_id: int, rx_id: int, packet_index: int) -> np.random.Generator:
    """The per-link, per-packet stream used for every channel draw."""
    return stream(seed, DOM_CHANNEL, tx_id, rx_id, packet_index)
