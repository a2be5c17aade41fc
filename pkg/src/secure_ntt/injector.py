"""Fault emulation: the 10-bit gate word F_r applied to the control roster.

A 0 bit in ``F_r`` marks the attacked signal.  Stuck-at-0 ANDs the word onto
the signals (as the injector's AND gates do); stuck-at-1 ORs in the
complement so the attacked line is forced high.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .signals import ALL, BIT, NSIG, ROSTER, ControlSignalVector


class InjectorError(ValueError):
    pass


class StuckMode(str, Enum):
    SA0 = "stuck-at-0"
    SA1 = "stuck-at-1"

    @classmethod
    def parse(cls, text: "str | int | StuckMode") -> "StuckMode":
        if isinstance(text, StuckMode):
            return text
        t = str(text).lower()
        if t in ("0", "sa0", "stuck-at-0"):
            return cls.SA0
        if t in ("1", "sa1", "stuck-at-1"):
            return cls.SA1
        raise InjectorError(f"unknown stuck-at mode {text!r}")


class Persistence(str, Enum):
    SINGLE = "single-cycle"
    PERMANENT = "permanent-from-cycle"


def encode_pattern(r_s: int) -> int:
    """Gate word for pattern ``r_s``: bit ``b`` of ``r_s`` drives roster signal ``b``."""
    if not 0 <= r_s <= ALL:
        raise InjectorError(f"R_s={r_s} outside [0, {ALL}]")
    return r_s


def pattern_str(f_r: int) -> str:
    """Render msb first, e.g. 766 -> '1011111110'."""
    return format(f_r, f"0{NSIG}b")


def attacked(f_r: int) -> list[str]:
    return [ROSTER[b] for b in range(NSIG) if not f_r >> b & 1]


def word_for(signals: Sequence[str]) -> int:
    """Gate word that attacks exactly ``signals``."""
    w = ALL
    for s in signals:
        if s not in BIT:
            raise InjectorError(f"unknown signal {s!r}")
        w &= ~BIT[s]
    return w


def gate_word(sig: int, f_r: int, mode: StuckMode) -> int:
    if mode is StuckMode.SA0:
        return sig & f_r
    return sig | (~f_r & ALL)


def gate(sig: ControlSignalVector, f_r: int, mode: StuckMode | str, active: bool = True) -> ControlSignalVector:
    if not active:
        return sig
    return ControlSignalVector.from_word(gate_word(sig.to_word(), f_r, StuckMode.parse(mode)))


@dataclass(frozen=True)
class FaultPlan:
    r_t: int
    r_s: int
    mode: StuckMode = StuckMode.SA0
    persistence: Persistence = Persistence.SINGLE
    slot_scope: int | None = None

    def __post_init__(self):
        if not 0 <= self.r_t <= 1023:
            raise InjectorError(f"R_t={self.r_t} outside [0, 1023]")
        encode_pattern(self.r_s)
        object.__setattr__(self, "mode", StuckMode.parse(self.mode))
        object.__setattr__(self, "persistence", Persistence(self.persistence))

    @property
    def f_r(self) -> int:
        return encode_pattern(self.r_s)

    @classmethod
    def on(cls, signal: str, cycle: int, mode: StuckMode | str = StuckMode.SA0, **kw) -> "FaultPlan":
        return cls(cycle, word_for([signal]), StuckMode.parse(mode), **kw)

    @classmethod
    def draw(cls, rng: random.Random, mode: StuckMode, horizon: int = 1024) -> "FaultPlan":
        """Random (R_t, R_s) pair as the host draws them."""
        return cls(rng.randrange(horizon), rng.randrange(1 << NSIG), mode)

    def to_dict(self) -> dict:
        return {
            "r_t": self.r_t,
            "r_s": self.r_s,
            "f_r": pattern_str(self.f_r),
            "mode": self.mode.value,
            "persistence": self.persistence.value,
            "slot_scope": self.slot_scope,
        }


@dataclass(frozen=True)
class DelayPlan:
    """Timing Trojan: the Barrett delay line stalls for ``extra`` clocks at ``cycle``.

    The stalled unit back-pressures the CTRL, so every control line holds its
    value for the extra clocks.
    """

    cycle: int
    extra: int = 1

    def __post_init__(self):
        if self.cycle < 0 or self.extra < 1:
            raise InjectorError("delay plan needs cycle >= 0 and extra >= 1")


def is_effective(plan: FaultPlan, trace: Sequence[int | ControlSignalVector]) -> bool:
    """Does gating at ``plan.r_t`` change any signal of the fault-free trace?

    A permanent plan is effective if it changes any cycle from ``r_t`` on.
    """
    if plan.r_t >= len(trace):
        raise InjectorError(f"trace of {len(trace)} cycles does not cover R_t={plan.r_t}")
    cycles = [plan.r_t] if plan.persistence is Persistence.SINGLE else range(plan.r_t, len(trace))
    for c in cycles:
        w = trace[c]
        if isinstance(w, ControlSignalVector):
            w = w.to_word()
        if gate_word(w, plan.f_r, plan.mode) != w:
            return True
    return False
