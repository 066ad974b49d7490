"""Photon-pair emission, loss and coincidence detection.

The apparatus is reduced to a per-pulse categorical draw:

* a true pair reaches both detectors with probability ``mu * eta_a * eta_b``;
* an accidental coincidence (photons from two different pairs) occurs with
  probability ``mu**2 * eta_a * eta_b`` when the accidental model is on;
* otherwise nothing is registered.

Rounds are i.i.d., so long runs are generated sparsely from geometric gaps
between events instead of visiting every pulse.  A coincidence lands in the
central (phase-basis) peak with probability ``central_fraction`` and in a
side (time-basis) peak otherwise.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .quantum_core import (
    DomainError,
    ElementStateKind,
    EmptySampleError,
    MeasurementSetting,
    TIME_BASIS,
    element_state,
    outcome_probabilities,
    sample_outcomes,
)

__all__ = [
    "ChannelParams",
    "DetectionRecord",
    "CoincidenceEvent",
    "CoincidenceEvents",
    "BasisSchedule",
    "probability_table",
    "transmit_round",
    "sample_event_rounds",
    "measure_events",
    "simulate_detection_stream",
    "simulate_sparse_stream",
    "car_estimate",
    "write_records",
    "read_records",
]


@dataclass(frozen=True)
class ChannelParams:
    """Source brightness, arm transmittances and detector clock.

    Defaults: ``mu = 0.02`` pairs per pulse (CAR of 1/mu = 50) and 1.6 %
    transmittance per arm (18 dB of chip, coupling, filtering and detection
    loss) on a 2.5 GHz pulse clock.
    """

    mu: float = 0.02
    eta_a: float = 0.016
    eta_b: float = 0.016
    clock_rate: float = 2.5e9
    accidentals: bool = True
    central_fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.mu <= 1.0:
            raise DomainError(f"mu must lie in (0, 1], got {self.mu!r}")
        for name in ("eta_a", "eta_b"):
            eta = getattr(self, name)
            if not 0.0 < eta <= 1.0:
                raise DomainError(f"{name} must lie in (0, 1], got {eta!r}")
        if not self.clock_rate > 0:
            raise DomainError("clock_rate must be positive")
        if not 0.0 < self.central_fraction <= 1.0:
            raise DomainError("central_fraction must lie in (0, 1]")

    @classmethod
    def lossless(cls, central_fraction: float = 1.0) -> "ChannelParams":
        return cls(mu=1.0, eta_a=1.0, eta_b=1.0, accidentals=False, central_fraction=central_fraction)

    @classmethod
    def with_survival(cls, survival: float, mu: float = 0.02, **kw) -> "ChannelParams":
        """Symmetric arms chosen so that ``mu * eta_a * eta_b == survival``."""
        eta = math.sqrt(survival / mu)
        return cls(mu=mu, eta_a=eta, eta_b=eta, **kw)

    @classmethod
    def calibrated_to_rate(
        cls, coincidence_rate: float, clock_rate: float = 2.5e9, mu: float = 0.02, **kw
    ) -> "ChannelParams":
        """Symmetric arms giving ``coincidence_rate`` true coincidences per second."""
        return cls.with_survival(coincidence_rate / clock_rate, mu=mu, clock_rate=clock_rate, **kw)

    @property
    def heralding_product(self) -> float:
        return self.eta_a * self.eta_b

    @property
    def p_true(self) -> float:
        return self.mu * self.eta_a * self.eta_b

    @property
    def p_accidental(self) -> float:
        if not self.accidentals:
            return 0.0
        return min(self.mu**2 * self.eta_a * self.eta_b, 1.0 - self.p_true)

    @property
    def p_event(self) -> float:
        return self.p_true + self.p_accidental

    @property
    def coincidence_rate(self) -> float:
        return self.clock_rate * self.p_true

    @property
    def expected_car(self) -> float:
        return math.inf if self.p_accidental == 0 else self.p_true / self.p_accidental


@dataclass(frozen=True)
class DetectionRecord:
    round_index: int
    basis: MeasurementSetting
    outcome: str  # "+" or "-"
    peak: str  # "central" or "side"


@dataclass(frozen=True)
class CoincidenceEvent:
    round_index: int
    outcome_a: str
    outcome_b: str
    true_pair: bool
    central: bool = True


@dataclass
class CoincidenceEvents:
    """Column store of coincidence events, sorted by round index.

    ``outcome_*`` hold 0 for ``+`` and 1 for ``-``.  ``basis_*`` index into
    ``settings_a`` / ``settings_b``; side-peak events were measured in the
    time basis regardless of the interferometer setting.  ``emitted`` is the
    controller's trit for the round and is simulation truth, never public.
    """

    round_index: np.ndarray
    basis_a: np.ndarray
    basis_b: np.ndarray
    outcome_a: np.ndarray
    outcome_b: np.ndarray
    central: np.ndarray
    true_pair: np.ndarray
    emitted: np.ndarray
    settings_a: tuple[MeasurementSetting, ...]
    settings_b: tuple[MeasurementSetting, ...]
    n_rounds: int = 0

    def __len__(self) -> int:
        return int(self.round_index.size)

    def subset(self, mask) -> "CoincidenceEvents":
        cols = {
            name: getattr(self, name)[mask]
            for name in (
                "round_index", "basis_a", "basis_b", "outcome_a",
                "outcome_b", "central", "true_pair", "emitted",
            )
        }
        return CoincidenceEvents(
            **cols, settings_a=self.settings_a, settings_b=self.settings_b, n_rounds=self.n_rounds
        )

    def events(self) -> Iterator[CoincidenceEvent]:
        for i in range(len(self)):
            yield CoincidenceEvent(
                int(self.round_index[i]),
                "+-"[self.outcome_a[i]],
                "+-"[self.outcome_b[i]],
                bool(self.true_pair[i]),
                bool(self.central[i]),
            )

    def records(self, user: str) -> list[DetectionRecord]:
        basis = self.basis_a if user == "a" else self.basis_b
        settings = self.settings_a if user == "a" else self.settings_b
        outcome = self.outcome_a if user == "a" else self.outcome_b
        out = []
        for i in range(len(self)):
            central = bool(self.central[i])
            out.append(
                DetectionRecord(
                    int(self.round_index[i]),
                    settings[basis[i]] if central else TIME_BASIS,
                    "+-"[outcome[i]],
                    "central" if central else "side",
                )
            )
        return out


@dataclass
class BasisSchedule:
    """Per-round basis choices: indices into a tuple of settings."""

    settings: tuple[MeasurementSetting, ...]
    choice: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))

    @classmethod
    def constant(cls, setting: MeasurementSetting, n: int) -> "BasisSchedule":
        return cls((setting,), np.zeros(n, dtype=np.int8))

    @classmethod
    def from_menu(cls, settings: Sequence[MeasurementSetting], probs, n: int, rng) -> "BasisSchedule":
        choice = rng.choice(len(settings), size=n, p=np.asarray(probs, dtype=float))
        return cls(tuple(settings), choice.astype(np.int8))

    def __len__(self) -> int:
        return int(self.choice.size)


def probability_table(settings_a, settings_b, v: float) -> np.ndarray:
    """Born probabilities indexed ``[trit, basis_a, basis_b, outcome]``."""
    table = np.empty((3, len(settings_a), len(settings_b), 4))
    for kind in ElementStateKind:
        rho = element_state(kind, v)
        for i, a in enumerate(settings_a):
            for j, b in enumerate(settings_b):
                table[kind, i, j] = outcome_probabilities(rho, a, b)
    return table


def _time_basis_table(v: float) -> np.ndarray:
    return np.stack(
        [outcome_probabilities(element_state(k, v), TIME_BASIS, TIME_BASIS) for k in ElementStateKind]
    )


def transmit_round(
    state_kind: ElementStateKind | int,
    v: float,
    bases: tuple[MeasurementSetting, MeasurementSetting],
    params: ChannelParams,
    rng: np.random.Generator,
    round_index: int = 0,
) -> CoincidenceEvent | None:
    """Simulate one pulse; returns the coincidence it produced, if any."""
    u = rng.random()
    if u >= params.p_event:
        return None
    true_pair = u < params.p_true
    central = params.central_fraction >= 1.0 or rng.random() < params.central_fraction
    if true_pair:
        a, b = bases if central else (TIME_BASIS, TIME_BASIS)
        probs = outcome_probabilities(element_state(state_kind, v), a, b)
    else:
        probs = np.full(4, 0.25)
    idx = int(sample_outcomes(probs, rng)[0])
    return CoincidenceEvent(round_index, "+-"[idx >> 1], "+-"[idx & 1], bool(true_pair), bool(central))


def sample_event_rounds(n_rounds: int, params: ChannelParams, rng: np.random.Generator):
    """Round indices that register a coincidence, and whether each is a true pair."""
    p = params.p_event
    if p >= 1.0:
        rounds = np.arange(n_rounds, dtype=np.int64)
    else:
        chunks = []
        last = -1
        while True:
            expected = (n_rounds - last) * p
            batch = int(expected + 6.0 * math.sqrt(expected + 1.0) + 16)
            pos = last + np.cumsum(rng.geometric(p, size=batch), dtype=np.int64)
            inside = pos[pos < n_rounds]
            chunks.append(inside)
            if inside.size < pos.size:
                break
            last = int(pos[-1])
        rounds = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
    if params.p_accidental == 0.0:
        true_pair = np.ones(rounds.size, dtype=bool)
    else:
        true_pair = rng.random(rounds.size) < params.p_true / p
    return rounds, true_pair


def measure_events(
    round_index: np.ndarray,
    true_pair: np.ndarray,
    emitted: np.ndarray,
    schedule_a: BasisSchedule,
    schedule_b: BasisSchedule,
    v: float,
    params: ChannelParams,
    rng: np.random.Generator,
    n_rounds: int = 0,
) -> CoincidenceEvents:
    """Sample outcomes for already-located events.

    ``schedule_*.choice`` and ``emitted`` are aligned with ``round_index``.
    """
    n = round_index.size
    ia = np.asarray(schedule_a.choice, dtype=np.int64)
    ib = np.asarray(schedule_b.choice, dtype=np.int64)
    emitted = np.asarray(emitted, dtype=np.uint8)
    if not (ia.size == ib.size == emitted.size == n):
        raise ValueError("schedules and emitted trits must align with the events")
    if params.central_fraction >= 1.0:
        central = np.ones(n, dtype=bool)
    else:
        central = rng.random(n) < params.central_fraction
    probs = probability_table(schedule_a.settings, schedule_b.settings, v)[emitted, ia, ib]
    probs[~central] = _time_basis_table(v)[emitted[~central]]
    probs[~true_pair] = 0.25
    idx = sample_outcomes(probs, rng)
    return CoincidenceEvents(
        round_index=np.asarray(round_index, dtype=np.int64),
        basis_a=ia.astype(np.int8),
        basis_b=ib.astype(np.int8),
        outcome_a=(idx >> 1).astype(np.uint8),
        outcome_b=(idx & 1).astype(np.uint8),
        central=central,
        true_pair=np.asarray(true_pair, dtype=bool),
        emitted=emitted,
        settings_a=tuple(schedule_a.settings),
        settings_b=tuple(schedule_b.settings),
        n_rounds=n_rounds,
    )


def simulate_detection_stream(
    trits,
    schedule_a: BasisSchedule,
    schedule_b: BasisSchedule,
    v: float,
    params: ChannelParams,
    rng: np.random.Generator,
) -> CoincidenceEvents:
    """Coincidences for an explicit per-round trit string and basis schedules."""
    t = np.asarray(getattr(trits, "trits", trits), dtype=np.uint8)
    if not len(schedule_a) == len(schedule_b) == t.size:
        raise ValueError("basis schedules must have one entry per trit")
    rounds, true_pair = sample_event_rounds(t.size, params, rng)
    sa = BasisSchedule(schedule_a.settings, schedule_a.choice[rounds])
    sb = BasisSchedule(schedule_b.settings, schedule_b.choice[rounds])
    return measure_events(rounds, true_pair, t[rounds], sa, sb, v, params, rng, n_rounds=t.size)


def simulate_sparse_stream(
    source,
    n_rounds: int,
    menu_a: tuple[Sequence[MeasurementSetting], Sequence[float]],
    menu_b: tuple[Sequence[MeasurementSetting], Sequence[float]],
    v: float,
    params: ChannelParams,
    rng: np.random.Generator,
) -> CoincidenceEvents:
    """Coincidences over ``n_rounds`` pulses without visiting silent rounds.

    ``source`` reports the modulation trit at a round index; bases are drawn
    from each user's ``(settings, probabilities)`` menu.  Basis choices of
    rounds without a detection never influence anything, so only the
    detected rounds are drawn.
    """
    rounds, true_pair = sample_event_rounds(n_rounds, params, rng)
    emitted = source.trits_at(rounds)
    sa = BasisSchedule.from_menu(menu_a[0], menu_a[1], rounds.size, rng)
    sb = BasisSchedule.from_menu(menu_b[0], menu_b[1], rounds.size, rng)
    return measure_events(rounds, true_pair, emitted, sa, sb, v, params, rng, n_rounds=n_rounds)


def car_estimate(events) -> float:
    """True-pair to accidental coincidence ratio; ``inf`` without accidentals.

    ``events`` may also be a boolean array of true-pair flags.
    """
    if isinstance(events, CoincidenceEvents):
        flags = events.true_pair
    elif isinstance(events, np.ndarray) and events.dtype == bool:
        flags = events
    else:
        flags = np.fromiter((e.true_pair for e in events), dtype=bool)
    if flags.size == 0:
        raise EmptySampleError("no coincidence events")
    n_true = int(flags.sum())
    n_acc = int(flags.size - n_true)
    return math.inf if n_acc == 0 else n_true / n_acc


RECORD_HEADER = "round_index,user,basis_mrad,outcome,peak"


def write_records(events: CoincidenceEvents, fh=None) -> str | None:
    """Line-oriented detection records, two lines (users a, b) per event.

    ``basis_mrad`` is the interferometer setting in integer milliradians;
    ``peak`` is ``C`` (central, phase basis) or ``S`` (side, time basis).
    """
    own = fh is None
    out = io.StringIO() if own else fh
    out.write(RECORD_HEADER + "\n")
    mrad_a = np.array([s.milliradians for s in events.settings_a], dtype=np.int64)
    mrad_b = np.array([s.milliradians for s in events.settings_b], dtype=np.int64)
    for i in range(len(events)):
        r = int(events.round_index[i])
        peak = "C" if events.central[i] else "S"
        out.write(f"{r},a,{mrad_a[events.basis_a[i]]},{'+-'[events.outcome_a[i]]},{peak}\n")
        out.write(f"{r},b,{mrad_b[events.basis_b[i]]},{'+-'[events.outcome_b[i]]},{peak}\n")
    return out.getvalue() if own else None


def read_records(text: str) -> dict[str, list[tuple[int, int, str, str]]]:
    """Parse :func:`write_records` output into per-user tuples."""
    users: dict[str, list[tuple[int, int, str, str]]] = {"a": [], "b": []}
    lines = text.strip().splitlines()
    if not lines or lines[0] != RECORD_HEADER:
        raise ValueError("missing detection record header")
    for line in lines[1:]:
        r, user, mrad, outcome, peak = line.split(",")
        if outcome not in "+-" or peak not in ("C", "S"):
            raise ValueError(f"malformed record: {line!r}")
        users[user].append((int(r), int(mrad), outcome, peak))
    return users
