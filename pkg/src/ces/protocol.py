"""The controlled-entanglement-source session: controller, users and post-processing.

A session runs in six stages: agree on configuration and seed token,
distribute element states according to the modulation string, measure,
announce bases and sift, certify with the CHSH test after decoding, and
finally sift, reconcile and amplify the key.

Decoding convention: the user named by ``SessionConfig.flip_user`` XORs
their outcome with the decoding trit on binary rounds; rounds whose decoding
trit is 2 are dropped by both users.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .channel_sim import ChannelParams, CoincidenceEvents, simulate_sparse_stream
from .modulation import (
    ConfigurationError,
    KeystreamTrits,
    ModulationParams,
    RepeatedPattern,
    SeedToken,
    TritString,
    control_correlation_U,
    entropy_of_correlation,
)
from .quantum_core import (
    CHSH_TERMS,
    SIGMA_X,
    SIGMA_X_MINUS_Y,
    SIGMA_X_PLUS_Y,
    SIGMA_Y,
    CorrelationEstimate,
    ElementStateKind,
    MeasurementSetting,
    correlation_from_counts,
)

__all__ = [
    "SetupError",
    "ExhaustionError",
    "DecodingDenied",
    "InconclusiveError",
    "RefusalError",
    "ReconciliationAbort",
    "Verdict",
    "BasisMenu",
    "SessionConfig",
    "Controller",
    "User",
    "Session",
    "SessionTranscript",
    "SiftResult",
    "CertificationReport",
    "SiftedKey",
    "SessionResult",
    "session_setup",
    "basis_sift",
    "derive_decoding_string",
    "certify_chsh",
    "sift_key",
    "reconcile",
    "privacy_amplify",
    "toeplitz_diagonals",
    "run_session",
]


class SetupError(RuntimeError):
    """Parties disagree on the session configuration or seed token."""


class ExhaustionError(RuntimeError):
    """A round beyond the session's trit budget was requested."""


class DecodingDenied(PermissionError):
    """A decoding string was requested without the seed."""


class InconclusiveError(RuntimeError):
    """Too few test rounds to evaluate the CHSH combination."""


class RefusalError(RuntimeError):
    """A key was requested from a session that did not certify."""


class ReconciliationAbort(RuntimeError):
    """Error rate above the reconciliation threshold."""


class Verdict(str, enum.Enum):
    CERTIFIED = "certified"
    ABORT = "abort"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class BasisMenu:
    settings: tuple[MeasurementSetting, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.settings) != len(self.probs) or not self.settings:
            raise ConfigurationError("basis menu needs one probability per setting")
        if abs(sum(self.probs) - 1.0) > 1e-9 or min(self.probs) < 0:
            raise ConfigurationError("basis probabilities must be non-negative and sum to 1")

    @classmethod
    def user_a(cls) -> "BasisMenu":
        return cls((SIGMA_X, SIGMA_Y), (0.5, 0.5))

    @classmethod
    def user_b(cls, test_fraction: float = 0.5) -> "BasisMenu":
        """``X+Y`` and ``X-Y`` share ``test_fraction``; the rest goes to the key basis ``X``."""
        t = test_fraction
        return cls((SIGMA_X_PLUS_Y, SIGMA_X_MINUS_Y, SIGMA_X), (t / 2, t / 2, 1.0 - t))

    @classmethod
    def single(cls, setting: MeasurementSetting) -> "BasisMenu":
        return cls((setting,), (1.0,))

    @classmethod
    def uniform(cls, *settings: MeasurementSetting) -> "BasisMenu":
        return cls(tuple(settings), tuple(1.0 / len(settings) for _ in settings))

    def as_tuple(self):
        return self.settings, self.probs

    def to_dict(self) -> dict:
        return {"angles": [s.angle for s in self.settings], "probs": list(self.probs)}

    @classmethod
    def from_dict(cls, d: dict) -> "BasisMenu":
        return cls(tuple(MeasurementSetting(a) for a in d["angles"]), tuple(d["probs"]))


@dataclass
class SessionConfig:
    """Everything the parties agree on before distribution starts."""

    seed: SeedToken
    modulation: ModulationParams = field(default_factory=ModulationParams)
    rounds: int = 10**10
    visibility: float = 0.961
    channel: ChannelParams = field(default_factory=ChannelParams)
    test_fraction: float = 0.5
    menu_a: BasisMenu | None = None
    menu_b: BasisMenu | None = None
    abort_threshold_sigma: float = 3.0
    min_test_rounds: int = 20
    flip_user: str = "a"
    max_qber: float = 0.11
    amplification_ratio: float = 0.5
    sim_seed: int = 0
    # False keeps decoding-trit-2 rounds in the CHSH test, where they dilute S by (1 - p)
    omit_mixed_rounds: bool = True
    # fixed pattern repeated end to end instead of keystream expansion
    pattern: TritString | None = None

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigurationError("rounds must be at least 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigurationError("test_fraction must lie in (0, 1)")
        if self.flip_user not in ("a", "b"):
            raise ConfigurationError("flip_user must be 'a' or 'b'")
        if not 0.0 < self.amplification_ratio <= 1.0:
            raise ConfigurationError("amplification_ratio must lie in (0, 1]")
        if self.menu_a is None:
            self.menu_a = BasisMenu.user_a()
        if self.menu_b is None:
            self.menu_b = BasisMenu.user_b(self.test_fraction)

    def to_dict(self) -> dict:
        """Public parameters; the seed is represented by its token id only."""
        return {
            "seed_token": self.seed.token_id,
            "modulation": {"p_target": self.modulation.p_target, "rule": self.modulation.rule.value},
            "rounds": self.rounds,
            "visibility": self.visibility,
            "channel": asdict(self.channel),
            "test_fraction": self.test_fraction,
            "menu_a": self.menu_a.to_dict(),
            "menu_b": self.menu_b.to_dict(),
            "abort_threshold_sigma": self.abort_threshold_sigma,
            "min_test_rounds": self.min_test_rounds,
            "flip_user": self.flip_user,
            "max_qber": self.max_qber,
            "amplification_ratio": self.amplification_ratio,
            "sim_seed": self.sim_seed,
            "omit_mixed_rounds": self.omit_mixed_rounds,
            "pattern_length": None if self.pattern is None else len(self.pattern),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionConfig":
        """Build from a parsed configuration document.

        ``seed`` is ``{"token_id": ..., "key_hex": ...}``; every other key is
        optional and mirrors the dataclass fields.
        """
        d = dict(d)
        try:
            s = d.pop("seed")
            seed = SeedToken.from_hex(s["token_id"], s["key_hex"])
        except (KeyError, TypeError) as exc:
            raise ConfigurationError("configuration needs seed.token_id and seed.key_hex") from exc
        kw: dict = {"seed": seed}
        if "modulation" in d:
            kw["modulation"] = ModulationParams(**d.pop("modulation"))
        if "channel" in d:
            kw["channel"] = ChannelParams(**d.pop("channel"))
        for name in ("menu_a", "menu_b"):
            if name in d:
                kw[name] = BasisMenu.from_dict(d.pop(name))
        if "pattern" in d:
            kw["pattern"] = TritString.from_text(d.pop("pattern"))
        d.pop("user_seeds", None)
        known = {
            "rounds", "visibility", "test_fraction", "abort_threshold_sigma", "min_test_rounds",
            "flip_user", "max_qber", "amplification_ratio", "sim_seed", "omit_mixed_rounds",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
        kw.update(d)
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "SessionConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


class Controller:
    """Owns the modulation string and decides the element state per round."""

    def __init__(self, config: SessionConfig):
        self.config = config
        self.budget = config.rounds
        if config.pattern is not None:
            self.source = RepeatedPattern(config.pattern)
        else:
            # expansion is lazy: trits are produced only for rounds asked about
            self.source = KeystreamTrits(config.seed, config.modulation)

    def emit(self, round_index: int) -> ElementStateKind:
        if not 0 <= round_index < self.budget:
            raise ExhaustionError(f"round {round_index} outside the budget of {self.budget}")
        return ElementStateKind.from_trit(int(self.source.trits_at([round_index])[0]))

    def trits_at(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.budget):
            raise ExhaustionError("round index outside the trit budget")
        return self.source.trits_at(idx)


@dataclass
class User:
    name: str
    seed: SeedToken | None
    menu: BasisMenu


@dataclass
class SiftResult:
    """Event positions per basis combination, limited to central-peak events."""

    chsh: dict[tuple[int, int], np.ndarray]
    key: np.ndarray
    discarded: np.ndarray


@dataclass
class SessionTranscript:
    events: CoincidenceEvents
    config: SessionConfig

    def __len__(self) -> int:
        return len(self.events)

    @property
    def round_index(self) -> np.ndarray:
        return self.events.round_index

    def public_announcements(self, sift: "SiftResult | None" = None) -> dict:
        """Bases of every surviving round and the disclosed test outcomes."""
        ev = self.events
        sift = sift if sift is not None else basis_sift(self)
        test = np.sort(np.concatenate([v for v in sift.chsh.values()] or [np.zeros(0, np.int64)]))
        return {
            "round_index": ev.round_index.tolist(),
            "basis_a_mrad": [ev.settings_a[i].milliradians for i in ev.basis_a],
            "basis_b_mrad": [ev.settings_b[i].milliradians for i in ev.basis_b],
            "peak": ["C" if c else "S" for c in ev.central],
            "test_round_index": ev.round_index[test].tolist(),
            "test_outcome_a": ev.outcome_a[test].tolist(),
            "test_outcome_b": ev.outcome_b[test].tolist(),
        }


@dataclass
class Session:
    config: SessionConfig
    controller: Controller
    users: dict[str, User]

    def distribute_and_measure(self) -> SessionTranscript:
        cfg = self.config
        rng = np.random.default_rng(cfg.sim_seed)
        events = simulate_sparse_stream(
            self.controller,
            cfg.rounds,
            self.users["a"].menu.as_tuple(),
            self.users["b"].menu.as_tuple(),
            cfg.visibility,
            cfg.channel,
            rng,
        )
        return SessionTranscript(events, cfg)

    def decoding_string(self, user: str, transcript: SessionTranscript) -> TritString:
        u = self.users[user]
        if self.config.pattern is not None:
            return TritString(RepeatedPattern(self.config.pattern).trits_at(transcript.round_index), "decoding")
        return derive_decoding_string(transcript.round_index, u.seed, self.config.modulation)


def session_setup(config: SessionConfig, user_seeds: dict[str, SeedToken | None] | None = None) -> Session:
    """Stage 1: check every user presents the controller's seed token."""
    seeds = {"a": config.seed, "b": config.seed}
    if user_seeds:
        seeds.update(user_seeds)
    for name, seed in seeds.items():
        if seed is not None and seed.token_id != config.seed.token_id:
            raise SetupError(
                f"user {name} holds token {seed.token_id!r}, controller uses {config.seed.token_id!r}"
            )
    users = {
        "a": User("a", seeds["a"], config.menu_a),
        "b": User("b", seeds["b"], config.menu_b),
    }
    return Session(config, Controller(config), users)


def basis_sift(transcript: SessionTranscript) -> SiftResult:
    """Stage 4: group central-peak events by basis combination."""
    ev = transcript.events
    chsh: dict[tuple[int, int], np.ndarray] = {}
    key_a = _index_of(ev.settings_a, SIGMA_X)
    key_b = _index_of(ev.settings_b, SIGMA_X)
    used = np.zeros(len(ev), dtype=bool)
    for a, b, _ in CHSH_TERMS:
        ia, ib = _index_of(ev.settings_a, a), _index_of(ev.settings_b, b)
        if ia is None or ib is None:
            chsh[(_label(a), _label(b))] = np.zeros(0, dtype=np.int64)
            continue
        sel = ev.central & (ev.basis_a == ia) & (ev.basis_b == ib)
        chsh[(_label(a), _label(b))] = np.flatnonzero(sel)
        used |= sel
    if key_a is not None and key_b is not None:
        key_sel = ev.central & (ev.basis_a == key_a) & (ev.basis_b == key_b)
    else:
        key_sel = np.zeros(len(ev), dtype=bool)
    used |= key_sel
    return SiftResult(chsh=chsh, key=np.flatnonzero(key_sel), discarded=np.flatnonzero(~used))


def _index_of(settings, target: MeasurementSetting) -> int | None:
    for i, s in enumerate(settings):
        if not s.time_basis and math.isclose(s.angle, target.angle, abs_tol=1e-12):
            return i
    return None


def _label(s: MeasurementSetting) -> str:
    return s.label()


def derive_decoding_string(round_indices, seed: SeedToken | None, params: ModulationParams) -> TritString:
    """Stage 5: modulation trits at the detected rounds, from the seed."""
    if seed is None:
        raise DecodingDenied("no seed: the decoding string cannot be derived")
    return TritString(KeystreamTrits(seed, params).trits_at(round_indices), "decoding")


@dataclass
class CertificationReport:
    correlations: dict[tuple[str, str], CorrelationEstimate]
    S: float
    stderr: float
    U: float
    N: int
    B: float
    p_effective: float
    verdict: Verdict
    threshold_sigma: float

    @property
    def sign(self) -> int:
        return 1 if self.S >= 0 else -1

    @property
    def margin_sigma(self) -> float:
        return (abs(self.S) - 2.0) / self.stderr if self.stderr > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "S_mod": self.S,
            "stderr": self.stderr,
            "sign": self.sign,
            "U": self.U,
            "N": self.N,
            "B": self.B,
            "p_effective": self.p_effective,
            "verdict": self.verdict.value,
            "correlations": {
                f"{a},{b}": {"E": c.E, "stderr": c.stderr, "n": c.total}
                for (a, b), c in self.correlations.items()
            },
        }


def _decoding_array(decoding, n: int) -> np.ndarray:
    d = decoding.trits if isinstance(decoding, TritString) else np.asarray(decoding, dtype=np.uint8)
    if d.size != n:
        raise ValueError(f"decoding string has {d.size} trits for {n} detected rounds")
    return d


def _decoded_outcomes(ev: CoincidenceEvents, d: np.ndarray, flip_user: str):
    flip = (d == 1).astype(np.uint8)
    oa, ob = ev.outcome_a, ev.outcome_b
    if flip_user == "a":
        return oa ^ flip, ob
    return oa, ob ^ flip


def certify_chsh(
    transcript: SessionTranscript,
    decoding,
    sift: SiftResult | None = None,
) -> CertificationReport:
    """Stage 5: CHSH test on the disclosed rounds after decoding.

    ``decoding`` holds one trit per detected round.  Rounds where it is 2
    are dropped (kept unflipped when ``omit_mixed_rounds`` is off), rounds
    where it is 1 have the designated user's outcome flipped.  ``U``, ``N`` and ``p_effective`` in the report compare the
    decoding string with what the controller actually emitted on the
    analysed rounds.
    """
    cfg = transcript.config
    ev = transcript.events
    d = _decoding_array(decoding, len(ev))
    sift = sift if sift is not None else basis_sift(transcript)
    oa, ob = _decoded_outcomes(ev, d, cfg.flip_user)
    correlations = {}
    s_val = 0.0
    var = 0.0
    analysed = []
    for (a, b, sign), (combo, pos) in zip(CHSH_TERMS, sift.chsh.items()):
        if cfg.omit_mixed_rounds:
            pos = pos[d[pos] != 2]
        if pos.size < cfg.min_test_rounds:
            raise InconclusiveError(
                f"combination {combo} has {pos.size} test rounds, need {cfg.min_test_rounds}"
            )
        idx = 2 * oa[pos].astype(np.int64) + ob[pos]
        n_pp, n_pm, n_mp, n_mm = np.bincount(idx, minlength=4)
        est = correlation_from_counts(n_pp, n_pm, n_mp, n_mm)
        correlations[combo] = est
        s_val += sign * est.E
        var += est.stderr**2
        analysed.append(pos)
    stderr = math.sqrt(var)
    pos = np.concatenate(analysed)
    emitted = ev.emitted[pos]
    p_eff = float(np.mean(emitted == 2)) if pos.size else 0.0
    try:
        u, n = control_correlation_U(np.where(d[pos] == 2, 0, d[pos]).astype(np.uint8), emitted)
    except ValueError:
        u, n = math.nan, 0
    b = entropy_of_correlation(u) if not math.isnan(u) else math.nan
    ok = abs(s_val) - 2.0 > cfg.abort_threshold_sigma * stderr
    return CertificationReport(
        correlations=correlations,
        S=s_val,
        stderr=stderr,
        U=u,
        N=n,
        B=b,
        p_effective=p_eff,
        verdict=Verdict.CERTIFIED if ok else Verdict.ABORT,
        threshold_sigma=cfg.abort_threshold_sigma,
    )


@dataclass
class SiftedKey:
    bits: np.ndarray
    round_indices: np.ndarray

    def __len__(self) -> int:
        return int(self.bits.size)


def sift_key(
    transcript: SessionTranscript,
    decoding,
    report: CertificationReport,
    sift: SiftResult | None = None,
) -> tuple[SiftedKey, SiftedKey]:
    """Stage 6: raw keys from same-basis rounds, trit-2 rounds dropped."""
    if report.verdict is not Verdict.CERTIFIED:
        raise RefusalError(f"session verdict is {report.verdict.value}; no key is produced")
    ev = transcript.events
    d = _decoding_array(decoding, len(ev))
    sift = sift if sift is not None else basis_sift(transcript)
    pos = sift.key[d[sift.key] != 2]
    oa, ob = _decoded_outcomes(ev, d, transcript.config.flip_user)
    rounds = ev.round_index[pos]
    return SiftedKey(oa[pos].copy(), rounds), SiftedKey(ob[pos].copy(), rounds.copy())


def _parities(bits: np.ndarray, block: int) -> np.ndarray:
    n = bits.size
    padded = np.zeros(-(-n // block) * block, dtype=np.uint8)
    padded[:n] = bits
    return np.bitwise_xor.reduce(padded.reshape(-1, block), axis=1)


def reconcile(
    key_a,
    key_b,
    seed: int = 0,
    max_qber: float = 0.11,
    max_passes: int = 64,
) -> tuple[np.ndarray, np.ndarray, int, float]:
    """Parity-block reconciliation correcting ``key_b`` towards ``key_a``.

    Each pass applies a public random permutation, compares block parities
    and runs a halving search inside every block whose parities differ,
    which locates and flips one error.  Block size starts at ``0.73/qber``
    and doubles each pass.  Passes repeat until the keys agree.

    The error rate is taken as known (an ideal estimate from a sacrificed
    sample, not counted in the disclosure).  Returns
    ``(key_a, corrected_key_b, disclosed_bits, qber)``.
    """
    a = np.asarray(getattr(key_a, "bits", key_a), dtype=np.uint8)
    b = np.asarray(getattr(key_b, "bits", key_b), dtype=np.uint8).copy()
    if a.shape != b.shape:
        raise ValueError("keys must be aligned and of equal length")
    n = a.size
    if n == 0:
        return a.copy(), b, 0, 0.0
    errors = int(np.count_nonzero(a != b))
    qber = errors / n
    if qber > max_qber:
        raise ReconciliationAbort(f"error rate {qber:.4f} above {max_qber}")
    if errors == 0:
        return a.copy(), b, 0, qber
    rng = np.random.default_rng(seed)
    block = max(4, min(n, int(0.73 / qber)))
    disclosed = 0
    for _ in range(max_passes):
        if np.array_equal(a, b):
            break
        perm = rng.permutation(n)
        pa, pb = a[perm], b[perm]
        diff = np.flatnonzero(_parities(pa, block) != _parities(pb, block))
        disclosed += -(-n // block)
        for blk in diff:
            lo, hi = int(blk) * block, min(int(blk + 1) * block, n)
            # halving search: the half holding an odd error count is kept
            while hi - lo > 1:
                mid = (lo + hi) // 2
                disclosed += 1
                if np.bitwise_xor.reduce(pa[lo:mid]) != np.bitwise_xor.reduce(pb[lo:mid]):
                    hi = mid
                else:
                    lo = mid
            b[perm[lo]] ^= 1
        block = min(n, 2 * block)
    else:
        if not np.array_equal(a, b):
            raise ReconciliationAbort(f"keys still differ after {max_passes} passes")
    return a.copy(), b, disclosed, qber


def toeplitz_diagonals(n_in: int, n_out: int, pa_seed: int) -> np.ndarray:
    """The ``n_in + n_out - 1`` bits defining a random binary Toeplitz matrix."""
    return np.random.default_rng(pa_seed).integers(0, 2, size=n_in + n_out - 1, dtype=np.uint8)


def privacy_amplify(key, compression_ratio: float, pa_seed: int = 0, diagonals=None) -> np.ndarray:
    """Compress ``key`` with a seeded Toeplitz hash to ``floor(ratio * len)`` bits.

    Output bit ``i`` is ``sum_j T[i, j] x[j] mod 2`` with
    ``T[i, j] = diagonals[i - j + n - 1]``.  Passing ``diagonals`` overrides the
    seeded matrix (a single 1 at index ``n - 1`` gives the identity).
    """
    x = np.asarray(getattr(key, "bits", key), dtype=np.uint8)
    n = x.size
    if n == 0:
        raise ValueError("cannot amplify an empty key")
    if not 0.0 < compression_ratio <= 1.0:
        raise ValueError("compression_ratio must lie in (0, 1]")
    m = int(math.floor(compression_ratio * n))
    if m == 0:
        return np.zeros(0, dtype=np.uint8)
    diag = toeplitz_diagonals(n, m, pa_seed) if diagonals is None else np.asarray(diagonals, np.uint8)
    if diag.size != n + m - 1:
        raise ValueError(f"need {n + m - 1} diagonal bits, got {diag.size}")
    full = fftconvolve(diag.astype(float), x.astype(float))
    counts = np.rint(full[n - 1 : n - 1 + m]).astype(np.int64)
    return (counts & 1).astype(np.uint8)


@dataclass
class SessionResult:
    config: SessionConfig
    transcript: SessionTranscript
    sift: SiftResult
    decoding: TritString
    report: CertificationReport | None
    verdict: Verdict
    key_a: SiftedKey | None = None
    key_b: SiftedKey | None = None
    qber: float = math.nan
    disclosed: int = 0
    final_key_a: np.ndarray | None = None
    final_key_b: np.ndarray | None = None
    pa_seed: int = 0
    recon_seed: int = 0
    error: str = ""

    def summary(self) -> dict:
        rep = self.report.to_dict() if self.report is not None else {}
        return {
            "verdict": self.verdict.value,
            "S_mod": rep.get("S_mod"),
            "stderr": rep.get("stderr"),
            "U": rep.get("U"),
            "N": rep.get("N"),
            "B": rep.get("B"),
            "p_effective": rep.get("p_effective"),
            "coincidences": len(self.transcript),
            "sifted_key_length": 0 if self.key_a is None else len(self.key_a),
            "final_key_length": 0 if self.final_key_a is None else int(self.final_key_a.size),
            "error_rate": None if math.isnan(self.qber) else self.qber,
            "disclosed_bits": self.disclosed,
            "keys_equal": bool(
                self.final_key_a is not None and np.array_equal(self.final_key_a, self.final_key_b)
            ),
            "detail": self.error,
        }


def run_session(
    config: SessionConfig,
    user_seed: SeedToken | None = None,
    decoding_user: str | None = None,
) -> SessionResult:
    """Execute all six stages.

    ``user_seed`` replaces the seed held by both users (an unauthorised
    pair presenting a wrong key under the right token id).
    """
    seeds = None if user_seed is None else {"a": user_seed, "b": user_seed}
    session = session_setup(config, seeds)
    transcript = session.distribute_and_measure()
    sift = basis_sift(transcript)
    decoding = session.decoding_string(decoding_user or config.flip_user, transcript)
    try:
        report = certify_chsh(transcript, decoding, sift)
    except InconclusiveError as exc:
        return SessionResult(config, transcript, sift, decoding, None, Verdict.INCONCLUSIVE, error=str(exc))
    result = SessionResult(config, transcript, sift, decoding, report, report.verdict)
    if report.verdict is not Verdict.CERTIFIED:
        return result
    key_a, key_b = sift_key(transcript, decoding, report, sift)
    result.key_a, result.key_b = key_a, key_b
    if len(key_a) == 0:
        return result
    ss = np.random.SeedSequence(config.sim_seed).spawn(2)
    result.recon_seed = recon_seed = int(ss[0].generate_state(1)[0])
    result.pa_seed = int(ss[1].generate_state(1)[0])
    try:
        ra, rb, disclosed, qber = reconcile(key_a, key_b, seed=recon_seed, max_qber=config.max_qber)
    except ReconciliationAbort as exc:
        result.verdict = Verdict.ABORT
        result.error = str(exc)
        return result
    result.qber, result.disclosed = qber, disclosed
    result.final_key_a = privacy_amplify(ra, config.amplification_ratio, result.pa_seed)
    result.final_key_b = privacy_amplify(rb, config.amplification_ratio, result.pa_seed)
    return result
