"""Discrete memoryless channels and the mutual-information bookkeeping on them.

All information quantities are returned in bits.  Terms whose joint
probability is zero are skipped (``0 * log 0 = 0``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

SUM_TOL = 1e-12


@dataclass(frozen=True)
class EventAlphabet:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(label) for label in self.labels)
        if not labels:
            raise ValueError("alphabet must contain at least one event")
        if len(set(labels)) != len(labels):
            raise ValueError(f"alphabet labels must be unique: {labels}")
        object.__setattr__(self, "labels", labels)

    @property
    def cardinality(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(str(label))

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True, eq=False)
class InputDistribution:
    """Probability mass over an alphabet (used for inputs and for output marginals)."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("distribution must be a non-empty vector")
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValueError(f"probabilities must lie in [0, 1]: {probs}")
        if abs(probs.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities must sum to 1 (got {probs.sum()!r})")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def __len__(self):
        return self.probs.size

    def __eq__(self, other):
        return isinstance(other, InputDistribution) and np.array_equal(self.probs, other.probs)


@dataclass(frozen=True, eq=False)
class DmcChannel:
    input: EventAlphabet
    output: EventAlphabet
    transitions: np.ndarray

    def __post_init__(self):
        t = np.array(self.transitions, dtype=float)
        shape = (self.input.cardinality, self.output.cardinality)
        if t.shape != shape:
            raise ValueError(f"transition matrix has shape {t.shape}, expected {shape}")
        if np.any(t < 0) or np.any(t > 1):
            raise ValueError("transition probabilities must lie in [0, 1]")
        rows = t.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > SUM_TOL):
            raise ValueError(f"transition rows must sum to 1 (got {rows})")
        t.setflags(write=False)
        object.__setattr__(self, "transitions", t)

    @classmethod
    def from_matrix(cls, transitions, inputs: Sequence[str] | None = None,
                    outputs: Sequence[str] | None = None) -> "DmcChannel":
        t = np.asarray(transitions, dtype=float)
        inputs = inputs if inputs is not None else [str(i) for i in range(t.shape[0])]
        outputs = outputs if outputs is not None else [str(j) for j in range(t.shape[1])]
        return cls(EventAlphabet(tuple(inputs)), EventAlphabet(tuple(outputs)), t)

    @property
    def shape(self) -> tuple[int, int]:
        return self.transitions.shape

    def __eq__(self, other):
        return (isinstance(other, DmcChannel) and self.input == other.input
                and self.output == other.output
                and np.array_equal(self.transitions, other.transitions))


@dataclass(frozen=True)
class InfectiousSet:
    members: tuple[int, ...]

    def __post_init__(self):
        members = tuple(int(m) for m in self.members)
        if len(set(members)) != len(members):
            raise ValueError(f"duplicate infectious output indices: {members}")
        object.__setattr__(self, "members", members)

    def validate(self, channel: DmcChannel) -> None:
        n_out = channel.output.cardinality
        for m in self.members:
            if not 0 <= m < n_out:
                raise IndexError(f"infectious output index {m} outside 0..{n_out - 1}")


def _as_set(infectious: InfectiousSet | Iterable[int]) -> InfectiousSet:
    if isinstance(infectious, InfectiousSet):
        return infectious
    return InfectiousSet(tuple(infectious))


def _check_dims(channel: DmcChannel, p_x: InputDistribution) -> None:
    if len(p_x) != channel.input.cardinality:
        raise ValueError(
            f"input distribution has {len(p_x)} entries but the channel has "
            f"{channel.input.cardinality} inputs")


def output_marginal(channel: DmcChannel, p_x: InputDistribution) -> InputDistribution:
    """p_Y(y_j) = sum_i p_X(x_i) p(y_j | x_i)."""
    _check_dims(channel, p_x)
    p_y = p_x.probs @ channel.transitions
    # rounding can leave p_y a few ulps off 1 or outside [0, 1]
    p_y = np.clip(p_y, 0.0, 1.0)
    return InputDistribution(p_y)


def _terms(channel: DmcChannel, p_x: InputDistribution) -> np.ndarray:
    """Matrix of summands p(x) p(y|x) log2(p(y|x) / p(y)), zero where the joint is zero."""
    _check_dims(channel, p_x)
    t = channel.transitions
    joint = p_x.probs[:, None] * t
    p_y = p_x.probs @ t
    out = np.zeros_like(joint)
    mask = joint > 0
    # joint > 0 implies p_y > 0; a log difference avoids overflow for subnormal p_y
    py = np.broadcast_to(p_y, joint.shape)[mask]
    out[mask] = joint[mask] * (np.log2(t[mask]) - np.log2(py))
    return out


def mutual_information(channel: DmcChannel, p_x: InputDistribution) -> float:
    """Average mutual information I(X;Y) in bits."""
    mi = float(_terms(channel, p_x).sum())
    # tiny negative values are rounding noise around an independent channel
    return max(mi, 0.0)


def per_output_mi(channel: DmcChannel, p_x: InputDistribution, output_index: int) -> float:
    """Contribution I(X; Y=y_j) of a single output event.

    Equals p(y_j) times the divergence of p(x|y_j) from p(x), so it is
    non-negative; the terms over x are not individually.
    """
    n_out = channel.output.cardinality
    if not 0 <= output_index < n_out:
        raise IndexError(f"output index {output_index} outside 0..{n_out - 1}")
    return float(_terms(channel, p_x)[:, output_index].sum())


def per_output_mi_all(channel: DmcChannel, p_x: InputDistribution) -> np.ndarray:
    return _terms(channel, p_x).sum(axis=0)


def infection_rate(channel: DmcChannel, p_x: InputDistribution,
                   infectious: InfectiousSet | Iterable[int]) -> float:
    """Infection rate R in bit per channel event; an empty set gives 0."""
    infectious = _as_set(infectious)
    infectious.validate(channel)
    if not infectious.members:
        return 0.0
    contributions = per_output_mi_all(channel, p_x)
    return float(contributions[list(infectious.members)].sum())


def mutual_infection(rate: float, n: int) -> float:
    if n < 0:
        raise ValueError("number of events must be non-negative")
    return n * rate


def linear_infection_measure(channel: DmcChannel, p_x: InputDistribution,
                             infectious: InfectiousSet | Iterable[int]) -> float:
    """Probability that a channel event lands in the infectious output set."""
    infectious = _as_set(infectious)
    infectious.validate(channel)
    _check_dims(channel, p_x)
    if not infectious.members:
        return 0.0
    cols = channel.transitions[:, list(infectious.members)].sum(axis=1)
    return float(min(max(p_x.probs @ cols, 0.0), 1.0))


def cascade(first: DmcChannel, second: DmcChannel) -> DmcChannel:
    """Serial composition X -> Y -> Z."""
    if first.output != second.input:
        raise ValueError(
            f"cannot cascade: output alphabet {first.output.labels} does not match "
            f"input alphabet {second.input.labels}")
    t = first.transitions @ second.transitions
    t = np.clip(t, 0.0, 1.0)
    t = t / t.sum(axis=1, keepdims=True)
    return DmcChannel(first.input, second.output, t)


def z_channel(q: float) -> DmcChannel:
    """Binary Z channel: input 1 reaches output 1 with probability ``q``, input 0 never does."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    return DmcChannel.from_matrix([[1.0, 0.0], [1.0 - q, q]], ["0", "1"], ["0", "1"])


def binary_input(p1: float) -> InputDistribution:
    if not 0.0 <= p1 <= 1.0:
        raise ValueError(f"p1 must lie in [0, 1], got {p1}")
    return InputDistribution([1.0 - p1, p1])


# -- serialization ---------------------------------------------------------

def to_document(channel: DmcChannel, p_x: InputDistribution | None = None) -> dict:
    doc = {
        "inputs": list(channel.input.labels),
        "outputs": list(channel.output.labels),
        "p_x": None if p_x is None else p_x.probs.tolist(),
        "transitions": channel.transitions.tolist(),
    }
    return doc


def from_document(doc: dict) -> tuple[DmcChannel, InputDistribution | None]:
    missing = {"inputs", "outputs", "transitions"} - set(doc)
    if missing:
        raise ValueError(f"channel document lacks fields {sorted(missing)}")
    channel = DmcChannel.from_matrix(doc["transitions"], doc["inputs"], doc["outputs"])
    p_x = doc.get("p_x")
    if p_x is not None:
        p_x = InputDistribution(p_x)
        _check_dims(channel, p_x)
    return channel, p_x


def dumps(channel: DmcChannel, p_x: InputDistribution | None = None) -> str:
    return json.dumps(to_document(channel, p_x), indent=2)


def loads(text: str) -> tuple[DmcChannel, InputDistribution | None]:
    return from_document(json.loads(text))
