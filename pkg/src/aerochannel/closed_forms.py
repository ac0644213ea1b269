"""Closed-form infection rates for the basic Z-channel scenarios.

Every formula has an explicit channel counterpart (``*_channel`` builders)
so that the closed form can be compared with the exact evaluator in
:mod:`aerochannel.dmc`.  For the two-source and ternary models the closed
forms are the printed sums of single-source terms; the exact per-output
information of the joint channel differs from them in general.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import dmc


def _check_prob(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


def neg_plog2p(p: float) -> float:
    """-p log2 p with the 0 log 0 = 0 convention."""
    if p <= 0.0:
        return 0.0
    return -p * math.log2(p)


@dataclass(frozen=True)
class ZParams:
    p1: float
    q1: float

    def __post_init__(self):
        _check_prob("p1", self.p1)
        _check_prob("q1", self.q1)


@dataclass(frozen=True)
class TwoPartyParams:
    p1: float
    q1: float
    p2: float = 0.0
    q2: float = 0.0

    def __post_init__(self):
        for name in ("p1", "q1", "p2", "q2"):
            _check_prob(name, getattr(self, name))


@dataclass(frozen=True)
class RelayParams:
    p1: float
    q1: float
    q2: float
    boost: Optional[float] = None
    delay_exceeds_incubation: bool = False

    def __post_init__(self):
        for name in ("p1", "q1", "q2"):
            _check_prob(name, getattr(self, name))
        if self.boost is not None:
            _check_prob("boost", self.boost)


def mi_z(params: ZParams) -> float:
    """Infection rate of the point-to-point Z channel, -q1 p1 log2 p1."""
    return params.q1 * neg_plog2p(params.p1)


def mi_z_max(q1: float = 1.0) -> float:
    """Peak of :func:`mi_z` over p1, attained at p1 = 1/e."""
    return q1 * neg_plog2p(1.0 / math.e)


def mi_two_tx(params: TwoPartyParams) -> float:
    return params.q1 * neg_plog2p(params.p1) + params.q2 * neg_plog2p(params.p2)


def mi_two_rx(params: TwoPartyParams) -> tuple[float, float]:
    """Rates at two receivers sharing one source; ``p2`` is ignored."""
    h = neg_plog2p(params.p1)
    return params.q1 * h, params.q2 * h


def mi_passive_relay_eq7(params: RelayParams) -> float:
    """Passive relay rate in its literal published form, -q2 (p1 q1) log2(p1 q1).

    This is the second hop driven by p_Y(1) = p1 q1.  It can exceed the
    first-hop rate (p1=q1=0.5, q2=1 gives 0.5 > 0.25); use
    :func:`mi_relay_end_to_end` for the quantity of the composed channel.
    """
    if params.delay_exceeds_incubation:
        raise ValueError("passive relaying requires delay_exceeds_incubation=False")
    return params.q2 * neg_plog2p(params.p1 * params.q1)


def mi_relay_end_to_end(params: RelayParams) -> float:
    """Rate at the second receiver through the composed Z channel (crossover q1 q2)."""
    if params.delay_exceeds_incubation:
        raise ValueError("passive relaying requires delay_exceeds_incubation=False")
    return mi_z(ZParams(params.p1, params.q1 * params.q2))


def mi_active_relay(params: RelayParams) -> float:
    """Relay that re-emits with its own infection probability ``boost``."""
    if not params.delay_exceeds_incubation:
        raise ValueError("active relaying requires delay_exceeds_incubation=True")
    if params.boost is None:
        raise ValueError("active relaying needs the relay emission probability 'boost'")
    return params.q2 * neg_plog2p(params.boost)


def mi_ternary(params: TwoPartyParams) -> float:
    if params.p1 + params.p2 > 1.0 + dmc.SUM_TOL:
        raise ValueError(f"p1 + p2 must not exceed 1 (got {params.p1 + params.p2})")
    return mi_two_tx(params)


def relay_chain(p1: float, qs) -> float:
    """Rate at the end of a chain of passive relays with crossover probabilities ``qs``."""
    return mi_z(ZParams(p1, float(np.prod(qs))))


# -- explicit channels ------------------------------------------------------

def z_scenario(params: ZParams):
    return dmc.z_channel(params.q1), dmc.binary_input(params.p1)


def two_tx_channel(params: TwoPartyParams):
    """Two independent binary sources, one receiver infected if either hit lands.

    Inputs are the pairs ``x1x2``; output 1 is the infection event.
    """
    labels = ["00", "01", "10", "11"]
    rows = []
    for lab in labels:
        x1, x2 = int(lab[0]), int(lab[1])
        miss = (1.0 - params.q1 * x1) * (1.0 - params.q2 * x2)
        rows.append([miss, 1.0 - miss])
    p = {
        "00": (1 - params.p1) * (1 - params.p2),
        "01": (1 - params.p1) * params.p2,
        "10": params.p1 * (1 - params.p2),
        "11": params.p1 * params.p2,
    }
    channel = dmc.DmcChannel.from_matrix(rows, labels, ["0", "1"])
    p_x = dmc.InputDistribution([p[lab] for lab in labels])
    return channel, p_x


def two_rx_channel(params: TwoPartyParams):
    """One source, two receivers hit independently; outputs are the pairs ``y1y2``."""
    q1, q2 = params.q1, params.q2
    rows = [
        [1.0, 0.0, 0.0, 0.0],
        [(1 - q1) * (1 - q2), (1 - q1) * q2, q1 * (1 - q2), q1 * q2],
    ]
    channel = dmc.DmcChannel.from_matrix(rows, ["0", "1"], ["00", "01", "10", "11"])
    return channel, dmc.binary_input(params.p1)


def marginal_receiver(channel: dmc.DmcChannel, position: int) -> dmc.DmcChannel:
    """Collapse a multi-receiver channel (outputs labelled by digit strings) to one receiver."""
    out = channel.output.labels
    symbols = sorted({lab[position] for lab in out})
    t = np.zeros((channel.input.cardinality, len(symbols)))
    for j, lab in enumerate(out):
        t[:, symbols.index(lab[position])] += channel.transitions[:, j]
    return dmc.DmcChannel.from_matrix(t, channel.input.labels, symbols)


def relay_channels(params: RelayParams):
    """First hop X->Y and second hop Y->Z as Z channels, plus the source distribution."""
    first = dmc.z_channel(params.q1)
    second = dmc.z_channel(params.q2)
    return first, second, dmc.binary_input(params.p1)


def ternary_channel(params: TwoPartyParams):
    """Inputs: non-infectious, infected aerosol, infected droplet."""
    if params.p1 + params.p2 > 1.0 + dmc.SUM_TOL:
        raise ValueError(f"p1 + p2 must not exceed 1 (got {params.p1 + params.p2})")
    rows = [[1.0, 0.0], [1 - params.q1, params.q1], [1 - params.q2, params.q2]]
    channel = dmc.DmcChannel.from_matrix(rows, ["0", "1", "2"], ["0", "1"])
    p0 = max(0.0, 1.0 - params.p1 - params.p2)
    return channel, dmc.InputDistribution([p0, params.p1, params.p2])
