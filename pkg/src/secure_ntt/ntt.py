"""Modular arithmetic and the behavioural (golden) cyclic NTT.

The forward transform is the in-place iterative Cooley-Tukey loop nest with
half-length ``hl`` starting at ``n/2``.  Twiddles live in ``w_mem`` in natural
order (``entries[e] = omega**e``); the twiddle for block ``j`` is fetched at
``bit_reverse(j, log2(n) - 1)``, which is what the hardware Bit_Reverser does.
The result comes out in bit-reversed order: ``raw[bit_reverse(t)] = a(omega**t)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence


class NttError(ValueError):
    pass


class NoRootError(NttError):
    pass


class ParameterMismatch(NttError):
    pass


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def log2(n: int) -> int:
    if not is_power_of_two(n):
        raise NttError(f"n={n} is not a power of two")
    return n.bit_length() - 1


def find_primitive_root(n: int, q: int) -> int:
    """Smallest g with g**n == 1 and g**(n/2) == -1 (mod q)."""
    if n < 2 or not is_power_of_two(n):
        raise NttError(f"n={n} must be a power of two >= 2")
    if (q - 1) % n:
        raise NoRootError(f"no primitive {n}-th root of unity mod {q}: {n} does not divide {q - 1}")
    for g in range(2, q):
        if pow(g, n, q) == 1 and pow(g, n // 2, q) == q - 1:
            return g
    raise NoRootError(f"no primitive {n}-th root of unity mod {q}")


def bit_reverse(v: int, bits: int) -> int:
    if not 0 <= v < (1 << bits):
        raise NttError(f"index {v} does not fit in {bits} bits")
    r = 0
    for _ in range(bits):
        r = (r << 1) | (v & 1)
        v >>= 1
    return r


class Barrett:
    """Barrett reducer for inputs below q**2.

    The shift is ``2*w`` with ``w = q.bit_length()`` (12 for q = 3329), so
    ``m = floor(4**w / q)`` and a single conditional subtraction suffices.
    """

    def __init__(self, q: int):
        self.q = q
        self.width = q.bit_length()
        self.shift = 2 * self.width
        self.m = (1 << self.shift) // q

    def reduce(self, x: int) -> int:
        q = self.q
        if not 0 <= x < q * q:
            raise NttError(f"barrett input {x} outside [0, q^2) for q={q}")
        r = x - ((x * self.m) >> self.shift) * q
        if r >= q:
            r -= q
        return r


@lru_cache(maxsize=None)
def barrett_for(q: int) -> Barrett:
    return Barrett(q)


def barrett_reduce(x: int, q: int = 3329) -> int:
    return barrett_for(q).reduce(x)


def butterfly(u: int, a_k1: int, w: int, q: int) -> tuple[int, int]:
    v = barrett_reduce(a_k1 * w, q)
    return (u + v) % q, (u - v + q) % q


def addr_gen(i: int, j: int, k: int, hl: int) -> tuple[int, int, int]:
    """Addresses for butterfly (i, j, k) with stage half-length hl.

    Returns ``(k0, k1, widx)``; ``n`` is implied by ``hl * 2**(i+1)``.
    """
    if hl < 1 or not is_power_of_two(hl) or i < 0:
        raise NttError(f"bad stage parameters i={i} hl={hl}")
    if not 0 <= j < (1 << i) or not 0 <= k < hl:
        raise NttError(f"index out of range: i={i} j={j} k={k} hl={hl}")
    k0 = j * 2 * hl + k
    return k0, k0 + hl, bit_reverse(j, i + log2(hl))


@dataclass(frozen=True)
class NttParams:
    n: int
    q: int
    omega: int
    omega_inv: int
    n_inv: int

    def __post_init__(self):
        n, q, w = self.n, self.q, self.omega
        if n < 2 or not is_power_of_two(n):
            raise NttError(f"n={n} must be a power of two >= 2")
        if (q - 1) % n:
            raise NttError(f"n={n} does not divide q-1={q - 1}")
        if pow(w, n, q) != 1 or pow(w, n // 2, q) != q - 1:
            raise NttError(f"omega={w} is not a primitive {n}-th root mod {q}")
        if w * self.omega_inv % q != 1 or n * self.n_inv % q != 1:
            raise NttError("inconsistent inverses")

    @classmethod
    def create(cls, n: int, q: int, omega: int | None = None) -> "NttParams":
        if omega is None:
            omega = find_primitive_root(n, q)
        return cls(n, q, omega, pow(omega, -1, q), pow(n, -1, q))

    @property
    def stages(self) -> int:
        return log2(self.n)

    @property
    def butterflies(self) -> int:
        """(n/2) * log2(n): one butterfly issued per active clock."""
        return self.n // 2 * self.stages


KYBER = NttParams.create(256, 3329)


@dataclass(frozen=True)
class TwiddleTable:
    entries: tuple[int, ...]
    inverse_entries: tuple[int, ...]

    @classmethod
    def build(cls, p: NttParams) -> "TwiddleTable":
        fwd = tuple(pow(p.omega, e, p.q) for e in range(p.n))
        inv = tuple(pow(p.omega_inv, e, p.q) for e in range(p.n))
        return cls(fwd, inv)


@lru_cache(maxsize=None)
def twiddles(p: NttParams) -> TwiddleTable:
    return TwiddleTable.build(p)


@dataclass(frozen=True)
class Butterfly:
    index: int
    stage: int
    block: int
    k: int
    k0: int
    k1: int
    widx: int


@lru_cache(maxsize=None)
def schedule(n: int) -> tuple[Butterfly, ...]:
    """Issue order of every butterfly, stage by stage, block by block."""
    out = []
    hl = n // 2
    for i in range(log2(n)):
        for j in range(1 << i):
            for k in range(hl):
                k0, k1, widx = addr_gen(i, j, k, hl)
                out.append(Butterfly(len(out), i, j, k, k0, k1, widx))
        hl //= 2
    return tuple(out)


def iter_stage(n: int, stage: int) -> Iterator[Butterfly]:
    return (b for b in schedule(n) if b.stage == stage)


def check_poly(a: Sequence[int], p: NttParams) -> list[int]:
    if len(a) != p.n:
        raise ParameterMismatch(f"polynomial has {len(a)} coefficients, expected {p.n}")
    out = [int(c) for c in a]
    for c in out:
        if not 0 <= c < p.q:
            raise ParameterMismatch(f"coefficient {c} outside [0, {p.q})")
    return out


def ntt_behavioral(a: Sequence[int], p: NttParams) -> list[int]:
    """Forward transform in raw (bit-reversed) output order."""
    A = check_poly(a, p)
    q = p.q
    w = twiddles(p).entries
    red = barrett_for(q).reduce
    for b in schedule(p.n):
        u = A[b.k0]
        v = red(A[b.k1] * w[b.widx])
        A[b.k0] = (u + v) % q
        A[b.k1] = (u - v) % q
    return A


def intt_behavioral(abar: Sequence[int], p: NttParams) -> list[int]:
    """Inverse of :func:`ntt_behavioral` (Gentleman-Sande, then scale by n^-1)."""
    A = check_poly(abar, p)
    q = p.q
    winv = twiddles(p).inverse_entries
    red = barrett_for(q).reduce
    for b in reversed(schedule(p.n)):
        u, v = A[b.k0], A[b.k1]
        A[b.k0] = (u + v) % q
        A[b.k1] = red((u - v) % q * winv[b.widx])
    return [red(c * p.n_inv) for c in A]


def to_natural_order(raw: Sequence[int], p: NttParams) -> list[int]:
    """Reorder raw output so that ``out[t] = a(omega**t)``."""
    L = p.stages
    return [raw[bit_reverse(t, L)] for t in range(p.n)]


def from_natural_order(nat: Sequence[int], p: NttParams) -> list[int]:
    L = p.stages
    raw = [0] * p.n
    for t in range(p.n):
        raw[bit_reverse(t, L)] = nat[t]
    return raw


def pointwise(a: Sequence[int], b: Sequence[int], q: int) -> list[int]:
    return [x * y % q for x, y in zip(a, b)]
