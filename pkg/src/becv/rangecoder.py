"""Byte-oriented range coder with 16-bit frequency tables.

Classic carry-propagating design: 32-bit range, a cached byte plus a run of
pending 0xFF bytes that absorb carries out of the 33-bit low register. The
encoder and decoder renormalize a byte at a time, so total frequency mass
must stay below 2^24; all tables here use exactly 2^16.

Symbols live in a clipped alphabet [-CLIP, CLIP] plus an escape slot at
index 0; escaped magnitudes are coded as order-0 exp-Golomb bits plus a
sign bit through the same coder, so arbitrarily large outliers stay exact.
"""

from __future__ import annotations

from bisect import bisect_right

import numpy as np

from .errors import CorruptBitstreamError

_MASK32 = 0xFFFFFFFF
_TOP = 1 << 24

TOTAL_BITS = 16
TOTAL = 1 << TOTAL_BITS

CLIP = 64                      # residual alphabet is [-64 .. 64]
ESCAPE = 0                     # alphabet index of the escape slot
ALPHABET = 2 * CLIP + 2        # escape + 129 residuals
_GOLOMB_MAX_ZEROS = 48


class RangeEncoder:
    def __init__(self):
        self._low = 0
        self._range = _MASK32
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()

    def encode(self, cum_lo: int, cum_hi: int, total: int = TOTAL) -> None:
        r = self._range // total
        self._low += r * cum_lo
        self._range = r * (cum_hi - cum_lo)
        while self._range < _TOP:
            self._range = (self._range << 8) & _MASK32
            self._shift_low()

    def encode_bit(self, bit: int) -> None:
        half = TOTAL >> 1
        if bit:
            self.encode(half, TOTAL)
        else:
            self.encode(0, half)

    def _shift_low(self) -> None:
        low = self._low
        if low < 0xFF000000 or low > _MASK32:
            carry = low >> 32
            out = self._out
            out.append((self._cache + carry) & 0xFF)
            if self._cache_size > 1:
                out.extend(bytes([(0xFF + carry) & 0xFF]) * (self._cache_size - 1))
            self._cache = (low >> 24) & 0xFF
            self._cache_size = 0
        self._cache_size += 1
        self._low = (low << 8) & _MASK32

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift_low()
        return bytes(self._out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self._range = _MASK32
        self._code = 0
        self._byte()  # leading byte is the encoder's initial zero cache
        for _ in range(4):
            self._code = (self._code << 8) | self._byte()
        self._r = 1

    def _byte(self) -> int:
        if self._pos >= len(self._data):
            raise CorruptBitstreamError("range payload exhausted (truncated stream)")
        b = self._data[self._pos]
        self._pos += 1
        return b

    def decode_target(self, total: int = TOTAL) -> int:
        self._r = self._range // total
        t = self._code // self._r
        return total - 1 if t >= total else t

    def decode_update(self, cum_lo: int, cum_hi: int) -> None:
        r = self._r
        self._code -= r * cum_lo
        self._range = r * (cum_hi - cum_lo)
        while self._range < _TOP:
            self._range = (self._range << 8) & _MASK32
            self._code = ((self._code << 8) | self._byte()) & _MASK32

    def decode_bit(self) -> int:
        half = TOTAL >> 1
        bit = 1 if self.decode_target() >= half else 0
        if bit:
            self.decode_update(half, TOTAL)
        else:
            self.decode_update(0, half)
        return bit

    def consumed(self) -> int:
        return self._pos


def quantize_pmf(pmf: np.ndarray, total: int = TOTAL) -> list[int]:
    """Quantize a pmf to an integer cumulative table summing exactly to total.

    Every entry gets frequency >= 1; leftover mass goes to the largest
    fractional parts (ties broken by index), so the table is deterministic.
    """
    p = np.asarray(pmf, dtype=np.float64)
    if p.ndim != 1 or len(p) < 1:
        raise ValueError("pmf must be a non-empty vector")
    if len(p) > total:
        raise ValueError("alphabet larger than the frequency budget")
    p = np.maximum(p, 0.0)
    s = p.sum()
    p = np.full_like(p, 1.0 / len(p)) if s <= 0 else p / s
    budget = total - len(p)
    scaled = p * budget
    base = np.floor(scaled).astype(np.int64)
    frac = scaled - base
    rem = budget - int(base.sum())
    if rem > 0:
        order = np.lexsort((np.arange(len(p)), -frac))
        base[order[:rem]] += 1
    freq = base + 1
    cum = [0]
    acc = 0
    for f in freq.tolist():
        acc += int(f)
        cum.append(acc)
    assert cum[-1] == total
    return cum


def _encode_golomb(enc: RangeEncoder, value: int) -> None:
    # order-0 exp-Golomb of a non-negative value; the cap mirrors the decoder
    n = value + 1
    nbits = n.bit_length()
    if nbits - 1 > _GOLOMB_MAX_ZEROS:
        raise ValueError(f"escape magnitude {value} exceeds the coder's range")
    for _ in range(nbits - 1):
        enc.encode_bit(0)
    for i in range(nbits - 1, -1, -1):
        enc.encode_bit((n >> i) & 1)


def _decode_golomb(dec: RangeDecoder) -> int:
    zeros = 0
    while dec.decode_bit() == 0:
        zeros += 1
        if zeros > _GOLOMB_MAX_ZEROS:
            raise CorruptBitstreamError("escape magnitude out of range (corrupt stream)")
    n = 1
    for _ in range(zeros):
        n = (n << 1) | dec.decode_bit()
    return n - 1


def encode_symbols(symbols, tables: list[list[int]], table_idx=None) -> bytes:
    """Range-encode integer symbols, one cumulative table per symbol.

    tables are cumulative arrays over the escape+clipped alphabet; table_idx
    selects the table per symbol (all zeros when omitted).
    """
    sym = np.asarray(symbols, dtype=np.int64).ravel()
    if table_idx is None:
        idx = np.zeros(len(sym), dtype=np.int64)
    else:
        idx = np.asarray(table_idx, dtype=np.int64).ravel()
        if idx.shape != sym.shape:
            raise ValueError("table_idx must match symbols")
    enc = RangeEncoder()
    for s, ti in zip(sym.tolist(), idx.tolist()):
        cum = tables[ti]
        if -CLIP <= s <= CLIP:
            a = s + CLIP + 1
            enc.encode(cum[a], cum[a + 1])
        else:
            enc.encode(cum[ESCAPE], cum[ESCAPE + 1])
            enc.encode_bit(1 if s < 0 else 0)
            _encode_golomb(enc, abs(s) - CLIP - 1)
    return enc.finish()


def decode_symbols(data: bytes, count: int, tables: list[list[int]], table_idx=None) -> np.ndarray:
    """Exact inverse of encode_symbols for `count` symbols."""
    if table_idx is None:
        idx = np.zeros(count, dtype=np.int64)
    else:
        idx = np.asarray(table_idx, dtype=np.int64).ravel()
        if len(idx) != count:
            raise ValueError("table_idx must match count")
    dec = RangeDecoder(data)
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        cum = tables[int(idx[i])]
        f = dec.decode_target()
        a = bisect_right(cum, f) - 1
        dec.decode_update(cum[a], cum[a + 1])
        if a == ESCAPE:
            sign = dec.decode_bit()
            mag = _decode_golomb(dec) + CLIP + 1
            out[i] = -mag if sign else mag
        else:
            out[i] = a - CLIP - 1
    return out
