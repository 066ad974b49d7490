"""Keystream expansion, ternary modulation strings and control statistics.

The controller and every legitimate user expand the same preshared seed
with AES in counter mode.  The resulting bits are mapped onto trits
``0 -> |phi+>``, ``1 -> |phi->``, ``2 -> R``.  Two mappings are provided:

* the pair rule: bits are read two at a time, ``11`` becomes a single trit
  ``2`` and every other pair is copied through as two trits;
* the target-p rule: every trit consumes one 32-bit keystream word, which
  makes trit ``k`` addressable without expanding the prefix.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .quantum_core import DomainError

__all__ = [
    "ConfigurationError",
    "KeystreamUnderflow",
    "AlignmentError",
    "EmptyComparisonError",
    "SeedToken",
    "Keystream",
    "AesCtrKeystream",
    "ScriptedKeystream",
    "TritString",
    "TritRule",
    "ModulationParams",
    "expand_stream",
    "bits_to_trits_paper_rule",
    "trits_to_bits_paper_rule",
    "bits_to_trits_target_p",
    "words_to_trits_target_p",
    "control_correlation_U",
    "binary_entropy",
    "entropy_of_correlation",
    "correlation_from_entropy",
    "predicted_E_mod",
    "predicted_S_mod",
    "ModulationSource",
    "KeystreamTrits",
    "RepeatedPattern",
]

BLOCK_BITS = 128
WORD_BITS = 32
WORDS_PER_BLOCK = BLOCK_BITS // WORD_BITS
_PAIR_CHUNK_BITS = 1 << 22


class ConfigurationError(ValueError):
    """Invalid seed or modulation configuration."""


class KeystreamUnderflow(RuntimeError):
    """More keystream was needed than was supplied."""


class AlignmentError(ValueError):
    """Two strings that must be position-aligned have different lengths."""


class EmptyComparisonError(ValueError):
    """No positions were left to compare."""


@dataclass(frozen=True)
class SeedToken:
    token_id: str
    key_material: bytes

    def __post_init__(self):
        key = bytes(self.key_material)
        if len(key) not in (16, 32):
            raise ConfigurationError(
                f"seed key must be 16 or 32 bytes, got {len(key)} (token {self.token_id!r})"
            )
        object.__setattr__(self, "key_material", key)

    @classmethod
    def from_hex(cls, token_id: str, key_hex: str) -> "SeedToken":
        try:
            key = bytes.fromhex(key_hex)
        except ValueError as exc:
            raise ConfigurationError(f"seed {token_id!r}: key is not valid hex") from exc
        return cls(token_id, key)

    def __repr__(self) -> str:
        # never echo key material
        return f"SeedToken(token_id={self.token_id!r}, bits={8 * len(self.key_material)})"


class Keystream(Protocol):
    """Keyed deterministic bit source with random access by bit offset."""

    def bits(self, start: int, n: int) -> np.ndarray: ...


class AesCtrKeystream:
    """AES counter-mode keystream (encryption of an all-zero plaintext).

    The counter is a 128-bit big-endian integer that starts at
    ``initial_counter`` and increments once per 16-byte block.  Bits are
    taken most significant first within each byte.
    """

    def __init__(self, key: bytes | SeedToken, initial_counter: int | bytes = 0):
        if isinstance(key, SeedToken):
            key = key.key_material
        if len(key) not in (16, 32):
            raise ConfigurationError(f"AES key must be 16 or 32 bytes, got {len(key)}")
        if isinstance(initial_counter, (bytes, bytearray)):
            if len(initial_counter) != 16:
                raise ConfigurationError("initial counter block must be 16 bytes")
            initial_counter = int.from_bytes(initial_counter, "big")
        self._key = bytes(key)
        self._counter0 = int(initial_counter) % (1 << BLOCK_BITS)

    def _counter_block(self, block_index: int) -> bytes:
        return ((self._counter0 + block_index) % (1 << BLOCK_BITS)).to_bytes(16, "big")

    def keystream_bytes(self, start_byte: int, n_bytes: int) -> bytes:
        if start_byte < 0 or n_bytes < 0:
            raise ValueError("negative keystream range")
        if n_bytes == 0:
            return b""
        first_block, skip = divmod(start_byte, 16)
        n_blocks = -(-(skip + n_bytes) // 16)
        enc = Cipher(algorithms.AES(self._key), modes.CTR(self._counter_block(first_block))).encryptor()
        raw = enc.update(bytes(16 * n_blocks)) + enc.finalize()
        return raw[skip : skip + n_bytes]

    def bits(self, start: int, n: int) -> np.ndarray:
        if n <= 0:
            return np.zeros(0, dtype=np.uint8)
        first_byte, skip = divmod(start, 8)
        n_bytes = -(-(skip + n) // 8)
        raw = np.frombuffer(self.keystream_bytes(first_byte, n_bytes), dtype=np.uint8)
        return np.unpackbits(raw)[skip : skip + n]

    def words(self, indices) -> np.ndarray:
        """32-bit big-endian keystream words at arbitrary word indices."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            return np.zeros(0, dtype=np.uint32)
        blocks, where = np.unique(idx // WORDS_PER_BLOCK, return_inverse=True)
        counters = b"".join(self._counter_block(int(b)) for b in blocks)
        enc = Cipher(algorithms.AES(self._key), modes.ECB()).encryptor()
        table = np.frombuffer(enc.update(counters) + enc.finalize(), dtype=">u4")
        table = table.reshape(-1, WORDS_PER_BLOCK)
        return table[where.ravel(), idx % WORDS_PER_BLOCK].astype(np.uint32)


class ScriptedKeystream:
    """Fixed bit sequence served through the keystream interface (for tests)."""

    def __init__(self, bits):
        self._bits = np.asarray(bits, dtype=np.uint8).ravel()

    def bits(self, start: int, n: int, *, partial: bool = False) -> np.ndarray:
        if start + n > self._bits.size and not partial:
            raise KeystreamUnderflow(
                f"scripted keystream holds {self._bits.size} bits, requested up to {start + n}"
            )
        return self._bits[start : start + n].copy()

    def words(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        out = np.empty(idx.size, dtype=np.uint32)
        for i, k in enumerate(idx.ravel()):
            chunk = self.bits(int(k) * WORD_BITS, WORD_BITS)
            out[i] = int("".join(map(str, chunk)), 2)
        return out


def expand_stream(seed: SeedToken, n_bits: int, keystream: Keystream | None = None) -> np.ndarray:
    """First ``n_bits`` of the seed's keystream as a uint8 array of 0/1."""
    if n_bits < 0:
        raise ValueError("n_bits must be non-negative")
    ks = keystream if keystream is not None else AesCtrKeystream(seed.key_material)
    return ks.bits(0, n_bits)


class TritString:
    """Sequence over {0, 1, 2}; ``role`` is ``"modulation"`` or ``"decoding"``."""

    __slots__ = ("trits", "role")

    def __init__(self, trits, role: str = "modulation"):
        t = np.asarray(trits, dtype=np.int64).ravel()
        if t.size and (t.min() < 0 or t.max() > 2):
            raise DomainError("trits must lie in {0, 1, 2}")
        self.trits = t.astype(np.uint8)
        self.role = role

    def __len__(self) -> int:
        return int(self.trits.size)

    def __iter__(self):
        return iter(self.trits.tolist())

    def __getitem__(self, item):
        if isinstance(item, slice) or np.ndim(item):
            return TritString(self.trits[item], self.role)
        return int(self.trits[item])

    def __eq__(self, other) -> bool:
        if isinstance(other, TritString):
            return np.array_equal(self.trits, other.trits)
        return np.array_equal(self.trits, np.asarray(other))

    def __repr__(self) -> str:
        text = self.to_text()
        if len(text) > 40:
            text = text[:37] + "..."
        return f"TritString({text!r}, role={self.role!r})"

    def to_text(self) -> str:
        return (self.trits + ord("0")).tobytes().decode("ascii")

    @classmethod
    def from_text(cls, text: str, role: str = "modulation") -> "TritString":
        raw = np.frombuffer(text.strip().encode("ascii"), dtype=np.uint8)
        if raw.size and (raw.min() < ord("0") or raw.max() > ord("2")):
            raise DomainError("trit text may only contain the characters 0, 1, 2")
        return cls(raw - ord("0"), role)

    def counts(self) -> np.ndarray:
        return np.bincount(self.trits, minlength=3)


class TritRule(str, enum.Enum):
    PAPER_PAIR = "pair"
    TARGET_P = "target_p"


@dataclass(frozen=True)
class ModulationParams:
    p_target: float = 0.2
    rule: TritRule = TritRule.TARGET_P

    def __post_init__(self):
        object.__setattr__(self, "rule", TritRule(self.rule))
        if not 0.0 <= self.p_target < 1.0:
            raise ConfigurationError(f"p_target must lie in [0, 1), got {self.p_target!r}")

    @property
    def p_expected(self) -> float:
        """Long-run fraction of trit 2 produced by the rule."""
        if self.rule is TritRule.PAPER_PAIR:
            return 1.0 / 7.0
        return self._threshold / 2.0**32

    @property
    def _threshold(self) -> int:
        return int(math.floor(self.p_target * 2.0**32))


def bits_to_trits_paper_rule(bits) -> TritString:
    """Pair rule: ``11 -> 2``; ``00``, ``01``, ``10`` are copied as two trits.

    A trailing odd bit is dropped.
    """
    b = np.asarray(bits, dtype=np.uint8).ravel()
    pairs = b[: b.size - (b.size % 2)].reshape(-1, 2)
    is_two = (pairs[:, 0] & pairs[:, 1]).astype(bool)
    lengths = np.where(is_two, 1, 2)
    starts = np.cumsum(lengths) - lengths
    out = np.empty(int(lengths.sum()), dtype=np.uint8)
    out[starts[is_two]] = 2
    keep = starts[~is_two]
    out[keep] = pairs[~is_two, 0]
    out[keep + 1] = pairs[~is_two, 1]
    return TritString(out)


def trits_to_bits_paper_rule(trits) -> np.ndarray:
    """Inverse of the pair rule for a string produced by it."""
    t = trits.trits if isinstance(trits, TritString) else np.asarray(trits, dtype=np.uint8)
    out = []
    i = 0
    n = t.size
    # walk the string: a 2 is one pair, otherwise two binary trits are one pair
    is_two = t == 2
    while i < n:
        if is_two[i]:
            out.extend((1, 1))
            i += 1
        else:
            if i + 1 >= n or is_two[i + 1]:
                raise DomainError(f"trit string is not a pair-rule image (position {i})")
            out.extend((int(t[i]), int(t[i + 1])))
            i += 2
    return np.asarray(out, dtype=np.uint8)


def words_to_trits_target_p(words, p_target: float) -> np.ndarray:
    """Map 32-bit words to trits: ``2`` below the threshold, else the word's low bit."""
    w = np.asarray(words, dtype=np.uint32)
    threshold = int(math.floor(p_target * 2.0**32))
    out = (w & 1).astype(np.uint8)
    out[w.astype(np.uint64) < threshold] = 2
    return out


def bits_to_trits_target_p(bits, params: ModulationParams, n_trits: int | None = None) -> TritString:
    """Target-p rule over a bit string; each trit consumes 32 bits."""
    b = np.asarray(bits, dtype=np.uint8).ravel()
    available = b.size // WORD_BITS
    if n_trits is None:
        n_trits = available
    if n_trits > available:
        raise KeystreamUnderflow(
            f"{n_trits} trits need {n_trits * WORD_BITS} bits, only {b.size} supplied"
        )
    words = np.packbits(b[: n_trits * WORD_BITS].reshape(-1, 8), axis=1).ravel()
    words = words.view(">u4").astype(np.uint32) if n_trits else np.zeros(0, np.uint32)
    return TritString(words_to_trits_target_p(words, params.p_target))


def control_correlation_U(t_u, t_d) -> tuple[float, int]:
    """Control correlation between a user's string and the decoding string.

    Positions where ``t_d`` holds a 2 are dropped; on the rest the statistic
    is the mean of ``(-1)**(t_u XOR t_d)``.  Returns ``(U, N)``.
    """
    u = t_u.trits if isinstance(t_u, TritString) else np.asarray(t_u, dtype=np.uint8)
    d = t_d.trits if isinstance(t_d, TritString) else np.asarray(t_d, dtype=np.uint8)
    if u.shape != d.shape:
        raise AlignmentError(f"strings have lengths {u.size} and {d.size}")
    keep = d != 2
    n = int(keep.sum())
    if n == 0:
        raise EmptyComparisonError("no positions left after omitting trit 2")
    uu = u[keep]
    if uu.size and uu.max() > 1:
        raise DomainError("user string holds trit 2 at a position the decoding string keeps")
    differ = int(np.count_nonzero(uu ^ d[keep]))
    return (n - 2 * differ) / n, n


def binary_entropy(x: float) -> float:
    """``h(x) = -x log2 x - (1-x) log2(1-x)`` with ``h(0) = h(1) = 0``."""
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"binary entropy argument must lie in [0, 1], got {x!r}")
    if x in (0.0, 1.0):
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def entropy_of_correlation(u: float) -> float:
    """``B = h((1 + U) / 2)``."""
    if abs(u) > 1.0:
        raise DomainError(f"|U| must not exceed 1, got {u!r}")
    return binary_entropy((1.0 + u) / 2.0)


def correlation_from_entropy(b: float, tol: float = 1e-15) -> float:
    """Invert ``B = h((1 + U)/2)`` on the ``U >= 0`` branch by bisection."""
    if not 0.0 <= b <= 1.0:
        raise DomainError(f"entropy must lie in [0, 1] bits, got {b!r}")
    lo, hi = 0.5, 1.0  # h decreases from 1 to 0 on this interval
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if binary_entropy(mid) > b:
            lo = mid
        else:
            hi = mid
    return 2.0 * (0.5 * (lo + hi)) - 1.0


def _check_modulation_domain(u: float, p: float) -> None:
    if abs(u) > 1.0:
        raise DomainError(f"|U| must not exceed 1, got {u!r}")
    if not 0.0 <= p < 1.0:
        raise DomainError(f"p must lie in [0, 1), got {p!r}")


def predicted_E_mod(u: float, p: float, e: float) -> float:
    """Modulated correlation ``U (1 - p) E``."""
    _check_modulation_domain(u, p)
    if abs(e) > 1.0:
        raise DomainError(f"|E| must not exceed 1, got {e!r}")
    return u * (1.0 - p) * e


def predicted_S_mod(u: float, p: float) -> float:
    """Modulated CHSH value ``2 sqrt(2) (1 - p) U``."""
    _check_modulation_domain(u, p)
    return 2.0 * math.sqrt(2.0) * (1.0 - p) * u


class ModulationSource(Protocol):
    """Anything that can report the modulation trit at given round indices."""

    def trits_at(self, indices) -> np.ndarray: ...


class KeystreamTrits:
    """Modulation string derived from a seed; addressable by round index."""

    def __init__(self, seed: SeedToken, params: ModulationParams, keystream: Keystream | None = None):
        self.seed = seed
        self.params = params
        self.keystream = keystream if keystream is not None else AesCtrKeystream(seed.key_material)

    def trits_at(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64).ravel()
        if idx.size == 0:
            return np.zeros(0, dtype=np.uint8)
        if idx.min() < 0:
            raise ValueError("round indices must be non-negative")
        if self.params.rule is TritRule.TARGET_P:
            return words_to_trits_target_p(self.keystream.words(idx), self.params.p_target)
        return self._pair_rule_trits(idx)

    def _pair_rule_trits(self, idx: np.ndarray) -> np.ndarray:
        order = np.argsort(idx, kind="stable")
        sorted_idx = idx[order]
        out = np.empty(idx.size, dtype=np.uint8)
        need = int(sorted_idx[-1]) + 1
        produced = 0
        bit_pos = 0
        cursor = 0
        # the pair rule has variable rate, so the prefix must be walked in order
        while produced < need:
            # 7/4 trits per bit pair on average; ask for a little more than that
            request = min(_PAIR_CHUNK_BITS, 2 * (int((need - produced) / 1.75 * 1.05) + 32))
            bits = self._read(bit_pos, request)
            if bits.size < 2:
                raise KeystreamUnderflow(
                    f"keystream exhausted after {produced} trits; {need} required"
                )
            chunk = bits_to_trits_paper_rule(bits).trits
            bit_pos += bits.size - (bits.size % 2)
            end = produced + chunk.size
            stop = int(np.searchsorted(sorted_idx, end, side="left"))
            out[order[cursor:stop]] = chunk[sorted_idx[cursor:stop] - produced]
            cursor = stop
            produced = end
        return out

    def _read(self, start: int, n: int) -> np.ndarray:
        if isinstance(self.keystream, ScriptedKeystream):
            return self.keystream.bits(start, n, partial=True)
        return self.keystream.bits(start, n)

    def string(self, n: int) -> TritString:
        return TritString(self.trits_at(np.arange(n)))


class RepeatedPattern:
    """A finite trit string repeated end to end."""

    def __init__(self, pattern):
        self.pattern = pattern if isinstance(pattern, TritString) else TritString(pattern)
        if len(self.pattern) == 0:
            raise ConfigurationError("pattern must not be empty")

    def trits_at(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64).ravel()
        return self.pattern.trits[idx % len(self.pattern)]

    def string(self, n: int) -> TritString:
        return TritString(self.trits_at(np.arange(n)))

