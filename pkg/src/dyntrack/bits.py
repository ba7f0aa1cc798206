"""Fixed-length bitstrings and Hamming geometry.

A :class:`Bitstring` packs its bits into a single Python integer, position 0
being the most significant of the ``n`` bits.  Equality and Hamming distance
are then word-wise operations (``xor`` followed by a popcount).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Bitstring",
    "hamming",
    "in_ball",
    "sample_at_distance",
    "all_ones",
    "random_bitstring",
    "pack_rows",
    "unpack_rows",
]


class Bitstring:
    """Immutable bit vector of fixed length ``n``."""

    __slots__ = ("_n", "_value")

    def __init__(self, n: int, value: int = 0):
        n = int(n)
        if n < 1:
            raise ValueError(f"bitstring length must be positive, got {n}")
        value = int(value)
        if value < 0 or value >> n:
            raise ValueError(f"value does not fit in {n} bits")
        object.__setattr__(self, "_n", n)
        object.__setattr__(self, "_value", value)

    def __setattr__(self, name, value):
        raise AttributeError("Bitstring is immutable")

    # construction -------------------------------------------------------

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> Bitstring:
        bits = list(bits)
        value = 0
        for b in bits:
            b = int(b)
            if b not in (0, 1):
                raise ValueError(f"bits must be 0 or 1, got {b}")
            value = (value << 1) | b
        return cls(len(bits), value)

    @classmethod
    def from_str(cls, text: str) -> Bitstring:
        """Parse the canonical text form, e.g. ``"0101"``."""
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"not a bitstring: {text!r}")
        return cls(len(text), int(text, 2))

    @classmethod
    def from_hex(cls, text: str, n: int) -> Bitstring:
        """Inverse of :meth:`to_hex`."""
        ndigits = -(-n // 4)
        if len(text) != ndigits:
            raise ValueError(f"expected {ndigits} hex digits for n={n}, got {len(text)}")
        padded = int(text, 16)
        pad = 4 * ndigits - n
        if padded & ((1 << pad) - 1):
            raise ValueError("nonzero padding bits in hex form")
        return cls(n, padded >> pad)

    @classmethod
    def parse(cls, text: str, n: int | None = None) -> Bitstring:
        """Accept either the ``"0101"`` form or hex (``n`` required for hex)."""
        text = text.strip()
        if n is not None and len(text) == n and not set(text) - {"0", "1"}:
            return cls.from_str(text)
        if n is None:
            return cls.from_str(text)
        return cls.from_hex(text, n)

    @classmethod
    def from_array(cls, arr) -> Bitstring:
        return cls.from_bits(np.asarray(arr).astype(np.uint8).tolist())

    # accessors -----------------------------------------------------------

    @property
    def n(self) -> int:
        return self._n

    @property
    def value(self) -> int:
        return self._value

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple(int(c) for c in str(self))

    def __len__(self) -> int:
        return self._n

    def __getitem__(self, i: int) -> int:
        if i < 0:
            i += self._n
        if not 0 <= i < self._n:
            raise IndexError(i)
        return (self._value >> (self._n - 1 - i)) & 1

    def __iter__(self):
        return iter(self.bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Bitstring):
            return NotImplemented
        return self._n == other._n and self._value == other._value

    def __hash__(self) -> int:
        return hash((self._n, self._value))

    def __str__(self) -> str:
        return format(self._value, f"0{self._n}b")

    def __repr__(self) -> str:
        s = str(self)
        if len(s) > 40:
            s = s[:37] + "..."
        return f"Bitstring({s!r})"

    def to_hex(self) -> str:
        """Hex form; bit 0 is the most significant bit of the first digit."""
        ndigits = -(-self._n // 4)
        pad = 4 * ndigits - self._n
        return format(self._value << pad, f"0{ndigits}x")

    def to_array(self) -> np.ndarray:
        return np.frombuffer(str(self).encode(), dtype=np.uint8) - ord("0")

    def flip(self, mask: int) -> Bitstring:
        return Bitstring(self._n, self._value ^ mask)

    def count_ones(self) -> int:
        return self._value.bit_count()


def _check_same_length(x: Bitstring, y: Bitstring) -> None:
    if x.n != y.n:
        raise ValueError(f"length mismatch: {x.n} != {y.n}")


def hamming(x: Bitstring, y: Bitstring) -> int:
    _check_same_length(x, y)
    return (x.value ^ y.value).bit_count()


def in_ball(x: Bitstring, center: Bitstring, r: int) -> bool:
    """True iff ``x`` lies in the Hamming ball of radius ``r`` around ``center``."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    return hamming(x, center) <= r


def sample_at_distance(center: Bitstring, distance: int, rng: np.random.Generator) -> Bitstring:
    """Uniform draw from the strings at exactly ``distance`` from ``center``.

    Picks a uniform ``distance``-subset of positions with a partial
    Fisher-Yates shuffle and flips them.
    """
    n = center.n
    if not 0 < distance <= n:
        raise ValueError(f"distance must be in [1, {n}], got {distance}")
    positions = _random_subset(n, distance, rng)
    mask = 0
    for p in positions:
        mask |= 1 << (n - 1 - p)
    return Bitstring(n, center.value ^ mask)


def _random_subset(n: int, k: int, rng: np.random.Generator) -> list[int]:
    # partial Fisher-Yates over a lazily materialised permutation
    swapped: dict[int, int] = {}
    draws = rng.integers(0, n - np.arange(k), size=k) if k else []
    out = []
    for i in range(k):
        j = i + int(draws[i])
        vi = swapped.get(i, i)
        vj = swapped.get(j, j)
        swapped[j] = vi
        out.append(vj)
    return out


def all_ones(n: int) -> Bitstring:
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    return Bitstring(n, (1 << n) - 1)


def random_bitstring(n: int, rng: np.random.Generator) -> Bitstring:
    return Bitstring.from_bits(rng.integers(0, 2, size=n).tolist())


def pack_rows(bits: np.ndarray) -> np.ndarray:
    """Pack a (m, n) 0/1 array into bytes, bit 0 in the high bit of byte 0."""
    return np.packbits(np.asarray(bits, dtype=np.uint8), axis=-1)


def unpack_rows(packed: np.ndarray, n: int) -> np.ndarray:
    return np.unpackbits(packed, axis=-1, count=n)


def packed_to_hex(row: Sequence[int] | np.ndarray, n: int) -> str:
    return bytes(np.asarray(row, dtype=np.uint8)).hex()[: -(-n // 4)]


def int_to_packed(value: int, n: int) -> bytes:
    nbytes = -(-n // 8)
    return (value << (8 * nbytes - n)).to_bytes(nbytes, "big")
