"""Attacks on the controlled source.

Three adversaries are modelled:

* a pair of collaborating unauthorised taps who both measure ``X`` and
  read the modulation sign off their coincidence ports, then fold the
  observations to find a repeating modulation pattern;
* a blind guesser, whose expected control correlation has a closed form;
* malicious measurement devices that record every basis and outcome and
  later replay the public post-processing (the memory attack).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .channel_sim import CoincidenceEvents
from .modulation import TritString
from .protocol import (
    InconclusiveError,
    SessionResult,
    _index_of,
    privacy_amplify,
    reconcile,
)
from .quantum_core import SIGMA_X, DomainError

__all__ = [
    "TapObservation",
    "TapObservations",
    "PatternHypothesis",
    "MemoryLog",
    "PublicPostprocessing",
    "AttackReport",
    "tap_infer_signs",
    "fold_and_vote",
    "recover_repeated_pattern",
    "blind_guess_expected_U",
    "blind_guess_expected_U_exact",
    "brute_force_expected_U",
    "brute_force_expected_U_exact",
    "memory_attack_reconstruct",
]

UNKNOWN = -1
MAX_BRUTE_FORCE_N = 24


@dataclass(frozen=True)
class TapObservation:
    round_index: int
    inferred_sign: int  # 0 correlated ports, 1 anticorrelated, -1 unknown


@dataclass
class TapObservations:
    round_index: np.ndarray
    sign: np.ndarray  # int8, UNKNOWN for side-peak events

    def __len__(self) -> int:
        return int(self.round_index.size)

    def __iter__(self):
        for r, s in zip(self.round_index.tolist(), self.sign.tolist()):
            yield TapObservation(r, s)

    def known(self) -> "TapObservations":
        keep = self.sign != UNKNOWN
        return TapObservations(self.round_index[keep], self.sign[keep])


def tap_infer_signs(events: CoincidenceEvents) -> TapObservations:
    """Sign 0 for a ``++``/``--`` coincidence and 1 for ``+-``/``-+``.

    Both taps must have measured ``X`` on every round.  Side-peak events
    carry no phase information and are marked unknown.
    """
    ia = _index_of(events.settings_a, SIGMA_X)
    ib = _index_of(events.settings_b, SIGMA_X)
    if ia is None or ib is None or np.any(events.basis_a != ia) or np.any(events.basis_b != ib):
        raise ValueError("tap inference needs both taps fixed to the X basis")
    sign = (events.outcome_a ^ events.outcome_b).astype(np.int8)
    sign[~events.central] = UNKNOWN
    return TapObservations(events.round_index.copy(), sign)


@dataclass(frozen=True)
class PatternHypothesis:
    period: int
    recovered: np.ndarray
    confidence: float

    def __post_init__(self):
        if self.period < 1 or len(self.recovered) != self.period:
            raise ValueError("recovered string length must equal the period")

    def unfold(self, n: int) -> np.ndarray:
        return self.recovered[np.arange(n) % self.period]


def fold_and_vote(observations: TapObservations, period: int):
    """Majority vote per residue class.

    Returns ``(recovered_bits, votes_per_position, mean_margin)`` where the
    margin of a position is ``|ones - zeros| / votes``.
    """
    obs = observations.known()
    pos = obs.round_index % period
    votes = np.bincount(pos, minlength=period)
    ones = np.bincount(pos, weights=obs.sign, minlength=period)
    zeros = votes - ones
    with np.errstate(invalid="ignore", divide="ignore"):
        margin = np.where(votes > 0, np.abs(ones - zeros) / np.maximum(votes, 1), 0.0)
    recovered = (ones > zeros).astype(np.uint8)
    return recovered, votes, float(margin.mean())


def recover_repeated_pattern(
    observations: TapObservations,
    max_period: int,
    min_votes: int = 50,
    confidence_floor: float = 0.9,
    slack: float = 0.05,
) -> PatternHypothesis | None:
    """Search periods ``1..max_period`` for a repeating sign pattern.

    Only periods with at least ``min_votes`` at every position compete.
    Multiples of the true period score the same, so the shortest period
    within ``slack`` of the best score wins.  Returns ``None`` when that
    score is below ``confidence_floor``.
    """
    scores = {}
    for period in range(1, max_period + 1):
        recovered, votes, margin = fold_and_vote(observations, period)
        if votes.min() >= min_votes:
            scores[period] = (margin, recovered)
    if not scores:
        raise InconclusiveError(
            f"no period up to {max_period} collects {min_votes} votes per position"
        )
    best = max(m for m, _ in scores.values())
    if best < confidence_floor:
        return None
    period = min(p for p, (m, _) in scores.items() if m >= best - slack)
    margin, recovered = scores[period]
    return PatternHypothesis(period, recovered, margin)


def blind_guess_expected_U_exact(n: int) -> Fraction:
    """Expected ``|U|`` of a uniformly guessed ``n``-bit decoding string.

    ``(1 / (2**(n-1) n)) * sum_{i=0}^{n//2} C(n, i) (n - 2i)``, with the
    value 1 for ``n`` in {0, 1}.
    """
    if n < 0:
        raise DomainError("n must be non-negative")
    if n <= 1:
        return Fraction(1)
    total = sum(math.comb(n, i) * (n - 2 * i) for i in range(n // 2 + 1))
    return Fraction(total, 2 ** (n - 1) * n)


def blind_guess_expected_U(n: int) -> float:
    return float(blind_guess_expected_U_exact(n))


def brute_force_expected_U_exact(n: int) -> Fraction:
    """Mean of ``|U|`` over all ``2**n`` guesses against an all-zero string."""
    if n < 0:
        raise DomainError("n must be non-negative")
    if n > MAX_BRUTE_FORCE_N:
        raise ValueError(f"refusing to enumerate 2**{n} guesses (limit n <= {MAX_BRUTE_FORCE_N})")
    if n == 0:
        return Fraction(1)
    guesses = np.arange(2**n, dtype=np.uint32)
    ones = np.zeros(guesses.size, dtype=np.int64)
    for k in range(n):
        ones += (guesses >> k) & 1
    # each guess: U = (n - 2 * differing) / n
    total = int(np.abs(n - 2 * ones).sum())
    return Fraction(total, n * 2**n)


def brute_force_expected_U(n: int) -> float:
    return float(brute_force_expected_U_exact(n))


@dataclass
class MemoryLog:
    """What the users' own devices could record: bases, outcomes and timing."""

    round_index: np.ndarray
    basis_a: np.ndarray
    basis_b: np.ndarray
    outcome_a: np.ndarray
    outcome_b: np.ndarray
    central: np.ndarray
    settings_a: tuple
    settings_b: tuple

    @classmethod
    def from_events(cls, events: CoincidenceEvents) -> "MemoryLog":
        return cls(
            events.round_index.copy(),
            events.basis_a.copy(),
            events.basis_b.copy(),
            events.outcome_a.copy(),
            events.outcome_b.copy(),
            events.central.copy(),
            events.settings_a,
            events.settings_b,
        )


@dataclass(frozen=True)
class PublicPostprocessing:
    """Post-processing data announced over the public channel."""

    sifted_length: int
    recon_seed: int
    pa_seed: int
    amplification_ratio: float
    flip_user: str

    @classmethod
    def from_result(cls, result: SessionResult) -> "PublicPostprocessing":
        return cls(
            sifted_length=0 if result.key_a is None else len(result.key_a),
            recon_seed=result.recon_seed,
            pa_seed=result.pa_seed,
            amplification_ratio=result.config.amplification_ratio,
            flip_user=result.config.flip_user,
        )


@dataclass
class AttackReport:
    scheme: str
    agreement: float
    attacker_key_length: int
    true_key_length: int
    candidate_rounds: int
    confidence: float = math.nan
    recovered_period: int | None = None

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "agreement": self.agreement,
            "attacker_key_length": self.attacker_key_length,
            "true_key_length": self.true_key_length,
            "candidate_rounds": self.candidate_rounds,
            "confidence": None if math.isnan(self.confidence) else self.confidence,
            "recovered_period": self.recovered_period,
        }


def memory_attack_reconstruct(
    log: MemoryLog,
    public: PublicPostprocessing,
    true_final_key: np.ndarray,
    scheme: str = "twofold",
    rng: np.random.Generator | None = None,
    decoding: TritString | None = None,
) -> tuple[np.ndarray, AttackReport]:
    """Rebuild the final key from recorded outcomes and public post-processing.

    The sign ``a XOR b`` of each key round reveals whether ``|phi+>`` or
    ``|phi->`` was sent, which is all the decoding the onefold scheme needs.
    Under the twofold scheme mixed-state rounds look the same, so the
    attacker cannot tell which rounds the users dropped; it keeps a random
    subset of the announced size.  ``decoding`` hands the attacker the true
    decoding string on the logged rounds instead.
    """
    if scheme not in ("onefold", "twofold"):
        raise ValueError("scheme must be 'onefold' or 'twofold'")
    rng = rng if rng is not None else np.random.default_rng(0)
    ia = _index_of(log.settings_a, SIGMA_X)
    ib = _index_of(log.settings_b, SIGMA_X)
    key_rounds = np.flatnonzero(log.central & (log.basis_a == ia) & (log.basis_b == ib))
    oa = log.outcome_a[key_rounds]
    ob = log.outcome_b[key_rounds]
    if decoding is not None:
        d = np.asarray(decoding.trits if isinstance(decoding, TritString) else decoding)[key_rounds]
        keep = d != 2
        flip = (d[keep] == 1).astype(np.uint8)
        oa, ob = oa[keep], ob[keep]
    else:
        flip = oa ^ ob
        surplus = oa.size - public.sifted_length
        if surplus > 0:
            keep = np.sort(rng.choice(oa.size, size=public.sifted_length, replace=False))
            oa, ob, flip = oa[keep], ob[keep], flip[keep]
    if public.flip_user == "a":
        key_a, key_b = oa ^ flip, ob
    else:
        key_a, key_b = oa, ob ^ flip
    ra, _, _, _ = reconcile(key_a, key_b, seed=public.recon_seed, max_qber=1.0)
    final = privacy_amplify(ra, public.amplification_ratio, public.pa_seed) if ra.size else ra
    m = min(final.size, np.asarray(true_final_key).size)
    agreement = float(np.mean(final[:m] == np.asarray(true_final_key)[:m])) if m else math.nan
    report = AttackReport(
        scheme=scheme if decoding is None else f"{scheme}+decoding",
        agreement=agreement,
        attacker_key_length=int(final.size),
        true_key_length=int(np.asarray(true_final_key).size),
        candidate_rounds=int(key_rounds.size),
    )
    return final, report
