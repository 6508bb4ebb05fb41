"""Exact arithmetic in GF(q) for prime powers q <= 256, backed by lookup tables.

Elements are integer codes 0..q-1.  For q = p^e with e > 1 the code is the
base-p digit encoding of the polynomial representative, reduced modulo a
fixed irreducible polynomial (the one with the smallest digit encoding, so
codes are reproducible across runs).  Code 0 is the additive identity and
code 1 the multiplicative identity.

Fields are immutable after construction and cached per order, so they can
be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FqlinError

MAX_ORDER = 256


class NotAPrimePower(FqlinError, ValueError):
    pass


class DivisionByZero(FqlinError, ZeroDivisionError):
    pass


def _prime_power(q: int) -> tuple[int, int]:
    """Factor q as p^e with p prime, or raise NotAPrimePower."""
    if not isinstance(q, (int, np.integer)) or q < 2 or q > MAX_ORDER:
        raise NotAPrimePower(f"field order must be a prime power in [2, {MAX_ORDER}], got {q!r}")
    q = int(q)
    p = next(c for c in range(2, q + 1) if q % c == 0)  # smallest factor is prime
    e, t = 0, q
    while t % p == 0:
        t //= p
        e += 1
    if t != 1:
        raise NotAPrimePower(f"{q} is not a prime power")
    return p, e


def _digits(code: int, p: int, length: int) -> list[int]:
    out = []
    for _ in range(length):
        out.append(code % p)
        code //= p
    return out


def _poly_mod(a: list[int], b: list[int], p: int) -> list[int]:
    """Remainder of polynomial a modulo monic b, coefficients ascending, over GF(p)."""
    r = list(a)
    db = len(b) - 1
    for deg in range(len(r) - 1, db - 1, -1):
        c = r[deg] % p
        if c:
            for i in range(db + 1):
                r[deg - db + i] = (r[deg - db + i] - c * b[i]) % p
    return [c % p for c in r[:db]]


def _is_irreducible(poly: list[int], p: int) -> bool:
    e = len(poly) - 1
    if e == 1:
        return True
    for d in range(1, e // 2 + 1):
        for code in range(p**d):
            divisor = _digits(code, p, d) + [1]
            if not any(_poly_mod(poly, divisor, p)):
                return False
    return True


def _least_irreducible(p: int, e: int) -> tuple[int, ...]:
    """Monic irreducible polynomial of degree e over GF(p) with least digit code."""
    if e == 1:
        return (0, 1)
    for code in range(p**e):
        poly = _digits(code, p, e) + [1]
        if _is_irreducible(poly, p):
            return tuple(poly)
    raise AssertionError(f"no irreducible polynomial of degree {e} over GF({p})")


def _build_tables(p: int, e: int, modulus: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    q = p**e
    codes = np.arange(q, dtype=np.int64)
    digits = np.empty((q, e), dtype=np.int64)
    tmp = codes.copy()
    for i in range(e):
        digits[:, i] = tmp % p
        tmp //= p
    weights = p ** np.arange(e, dtype=np.int64)

    if e == 1:
        add = (codes[:, None] + codes[None, :]) % p
        mul = (codes[:, None] * codes[None, :]) % p
        return add.astype(np.uint8), mul.astype(np.uint8)

    sums = (digits[:, None, :] + digits[None, :, :]) % p
    add = (sums * weights).sum(axis=2)

    conv = np.zeros((q, q, 2 * e - 1), dtype=np.int64)
    for i in range(e):
        for j in range(e):
            conv[:, :, i + j] += digits[:, None, i] * digits[None, :, j]
    low = np.asarray(modulus[:-1], dtype=np.int64)  # x^e = -(low-degree part)
    for deg in range(2 * e - 2, e - 1, -1):
        lead = conv[:, :, deg].copy()
        conv[:, :, deg] = 0
        conv[:, :, deg - e : deg] -= lead[:, :, None] * low[None, None, :]
    mul = ((conv[:, :, :e] % p) * weights).sum(axis=2)
    return add.astype(np.uint8), mul.astype(np.uint8)


class FiniteField:
    """GF(q) with dense add/mul/neg/inv tables over integer element codes."""

    def __init__(self, q: int):
        p, e = _prime_power(q)
        self.q = int(q)
        self.p = p
        self.e = e
        self.modulus = _least_irreducible(p, e)
        self.add_table, self.mul_table = _build_tables(p, e, self.modulus)

        idx = np.nonzero(self.add_table == 0)
        self.neg_table = np.empty(q, dtype=np.uint8)
        self.neg_table[idx[0]] = idx[1]

        self.inv_table = np.zeros(q, dtype=np.uint8)
        rows, cols = np.nonzero(self.mul_table == 1)
        self.inv_table[rows] = cols

        self._flat_add = np.ascontiguousarray(self.add_table.reshape(-1))
        self._flat_mul = np.ascontiguousarray(self.mul_table.reshape(-1))
        digits = np.empty((q, e), dtype=np.int64)
        tmp = np.arange(q, dtype=np.int64)
        for i in range(e):
            digits[:, i] = tmp % p
            tmp //= p
        self._digit_table = digits
        self._weights = p ** np.arange(e, dtype=np.int64)

    # scalar operations on element codes -------------------------------

    def add(self, a: int, b: int) -> int:
        return int(self.add_table[a, b])

    def sub(self, a: int, b: int) -> int:
        return int(self.add_table[a, self.neg_table[b]])

    def mul(self, a: int, b: int) -> int:
        return int(self.mul_table[a, b])

    def neg(self, a: int) -> int:
        return int(self.neg_table[a])

    def inv(self, a: int) -> int:
        if a == 0:
            raise DivisionByZero("0 has no multiplicative inverse")
        return int(self.inv_table[a])

    def pow(self, a: int, n: int) -> int:
        if n < 0:
            a, n = self.inv(a), -n
        out, base = 1, int(a)
        while n:
            if n & 1:
                out = self.mul(out, base)
            base = self.mul(base, base)
            n >>= 1
        return out

    def element(self, code: int) -> "FieldElement":
        if not 0 <= code < self.q:
            raise ValueError(f"code {code} out of range for GF({self.q})")
        return FieldElement(self, int(code))

    def elements(self):
        return (FieldElement(self, c) for c in range(self.q))

    # vectorised operations on arrays of element codes ------------------

    def vadd(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        if self.e == 1:
            return (x.astype(np.int64) + y) % self.p
        if self.p == 2:
            return np.bitwise_xor(x, y)
        return self._flat_add[x.astype(np.int64) * self.q + y]

    def vneg(self, x):
        x = np.asarray(x)
        if self.e == 1:
            return (-x.astype(np.int64)) % self.p
        if self.p == 2:
            return x.copy()
        return self.neg_table[x]

    def vsub(self, x, y):
        return self.vadd(x, self.vneg(y))

    def vmul(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        if self.e == 1:
            return (x.astype(np.int64) * y) % self.p
        return self._flat_mul[x.astype(np.int64) * self.q + y]

    def vmul_scalar(self, c, x):
        x = np.asarray(x)
        if self.e == 1:
            return (int(c) * x.astype(np.int64)) % self.p
        return self.mul_table[int(c)][x]

    def vsum(self, x, axis=None):
        """Field sum of an array of codes along an axis (None: over all entries)."""
        x = np.asarray(x)
        if self.e == 1:
            return np.asarray(x, dtype=np.int64).sum(axis=axis) % self.p
        if self.p == 2:
            if axis is None:
                return np.bitwise_xor.reduce(x, axis=None)
            return np.bitwise_xor.reduce(x, axis=axis)
        d = self._digit_table[x]
        ax = tuple(range(x.ndim)) if axis is None else axis
        s = d.sum(axis=ax) % self.p
        return (s * self._weights).sum(axis=-1)

    def vdot(self, x, y) -> int:
        return int(self.vsum(self.vmul(x, y)))

    def __repr__(self):
        return f"FiniteField(q={self.q})"

    def __eq__(self, other):
        return isinstance(other, FiniteField) and other.q == self.q

    def __hash__(self):
        return hash(("FiniteField", self.q))


@dataclass(frozen=True)
class FieldElement:
    """Value-type wrapper around an element code, with operator sugar."""

    field: FiniteField
    code: int

    def _check(self, other: "FieldElement") -> None:
        if not isinstance(other, FieldElement):
            raise TypeError(f"expected FieldElement, got {type(other).__name__}")
        if other.field.q != self.field.q:
            raise ValueError(f"elements of GF({self.field.q}) and GF({other.field.q}) do not mix")

    def __add__(self, other):
        self._check(other)
        return FieldElement(self.field, self.field.add(self.code, other.code))

    def __sub__(self, other):
        self._check(other)
        return FieldElement(self.field, self.field.sub(self.code, other.code))

    def __mul__(self, other):
        self._check(other)
        return FieldElement(self.field, self.field.mul(self.code, other.code))

    def __neg__(self):
        return FieldElement(self.field, self.field.neg(self.code))

    def inv(self) -> "FieldElement":
        return FieldElement(self.field, self.field.inv(self.code))

    def __truediv__(self, other):
        self._check(other)
        return self * other.inv()

    def __repr__(self):
        return f"GF({self.field.q}):{self.code}"


_FIELD_CACHE: dict[int, FiniteField] = {}


def make_field(q: int) -> FiniteField:
    """Return the cached GF(q) instance, constructing it on first use."""
    p, e = _prime_power(q)
    q = int(p**e)
    field = _FIELD_CACHE.get(q)
    if field is None:
        field = FiniteField(q)
        _FIELD_CACHE[q] = field
    return field
