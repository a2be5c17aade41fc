"""Control-flow-integrity and clock-cycle-count monitors.

Both monitors see only the signals as they arrive at the sub-components
(after any Trojan gating) plus the CTRL's own CSR.  The RSR is a shadow shift
register fed by the observed ``rd_en``; it is never reset by ``ctrl_rst``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ntt import is_power_of_two, log2
from .signals import (
    BARRETT_DONE,
    BARRETT_RST,
    BARRETT_STRT,
    CSR0,
    CSR1,
    CSR2,
    CSR3,
    FULL,
    NSIG,
    POLYMEM_CE,
    RD_EN,
    ROSTER,
    UV_RST,
    UV_STRT,
    WR_EN,
    shift_in,
)


def rsr_step(rsr: int, rd_en_observed: bool) -> int:
    return shift_in(rsr, rd_en_observed)


def barrett_cfi_check(sig: int, csr: int, rsr: int) -> bool:
    strt = bool(sig & BARRETT_STRT)
    ok = (
        strt == (not sig & BARRETT_RST)
        and bool(csr & (CSR1 | CSR2)) == strt
        and bool(rsr & (CSR1 | CSR2)) == strt
        and bool(sig & BARRETT_DONE) == bool(sig & WR_EN)
    )
    return not ok


def polymem_cfi_check(sig: int, rsr: int) -> bool:
    r3 = bool(rsr & CSR3)
    r0 = bool(rsr & CSR0)
    ok = (
        bool(sig & RD_EN) == r3
        and bool(sig & WR_EN) == r0
        and bool(sig & POLYMEM_CE) == (r0 or r3)
    )
    return not ok


def uv_cfi_check(sig: int, csr: int, rsr: int) -> bool:
    strt = bool(sig & UV_STRT)
    rst = bool(sig & UV_RST)
    if rsr == FULL:
        third = strt == (not rst)
    else:
        # fill/drain: uv_strt and uv_rst legitimately disagree, so check each
        # against the shadow schedule instead
        third = strt == bool(rsr & CSR0) and rst == (not rsr & CSR3)
    ok = (
        bool(csr & CSR3) == bool(rsr & CSR3)
        and bool(csr & CSR0) == bool(rsr & CSR0)
        and third
    )
    return not ok


def combine_cfi(b: bool, p: bool, u: bool) -> bool:
    # active-high flags: any sub-detector raises cfi_fault
    return b or p or u


@dataclass
class FaultFlags:
    barrett_cfi: bool = False
    polymem_cfi: bool = False
    uv_cfi: bool = False
    cfi_fault: bool = False
    ccc_fault: bool = False
    cycle_raised: dict[str, int] = field(default_factory=dict)
    cfi_cycles: int = 0

    def raise_flag(self, name: str, cycle: int) -> None:
        setattr(self, name, True)
        self.cycle_raised.setdefault(name, cycle)

    @property
    def any(self) -> bool:
        return self.cfi_fault or self.ccc_fault

    def to_dict(self) -> dict:
        return {
            "barrett_cfi": self.barrett_cfi,
            "polymem_cfi": self.polymem_cfi,
            "uv_cfi": self.uv_cfi,
            "cfi_fault": self.cfi_fault,
            "ccc_fault": self.ccc_fault,
            "cycle_raised": dict(self.cycle_raised),
            "cfi_cycles": self.cfi_cycles,
        }


def segment_counts(butterflies: int) -> dict[str, int]:
    """Golden assertion tally for a pipeline pass issuing ``butterflies`` reads.

    A pass lasts ``butterflies + 4`` cycles (fill, issue, drain, done).
    """
    m = butterflies
    length = m + 4
    return {
        "rd_en": m,
        "wr_en": m,
        "polymem_ce": m + 3,
        "ctrl_rst": 0,
        "ubuff_rst": 0,
        "barrett_rst": length - (m + 1),
        "barrett_strt": m + 1,
        "barrett_done": m,
        "uv_rst": length - m,
        "uv_strt": m,
    }


def expected_counts(n: int) -> dict[str, int]:
    if not is_power_of_two(n) or n < 2:
        raise ValueError(f"n={n} must be a power of two >= 2")
    return segment_counts(n // 2 * log2(n))


# a U-buffer clear can corrupt butterflies that retire before any rollback,
# so its tally survives one (a ctrl_rst is always caught by CFI first)
_CARRIED = tuple(b for b, name in enumerate(ROSTER) if name == "ubuff_rst")
# active-high signals that must hold one unbroken window per pass
_CONTIGUOUS = tuple(
    b
    for b, name in enumerate(ROSTER)
    if name in ("rd_en", "wr_en", "polymem_ce", "barrett_strt", "barrett_done", "uv_strt")
)


@dataclass
class CccState:
    """Clock cycle counter.

    Observed words are histogrammed per cycle; per-signal tallies are only
    materialised at check time.  With ``strict`` each signal's assertions must
    also form one unbroken window.
    """

    expected: dict[str, int]
    strict: bool = False
    hist: dict[int, int] = field(default_factory=dict)
    carried: list[int] = field(default_factory=lambda: [0] * NSIG)
    first: list[int] = field(default_factory=lambda: [-1] * NSIG)
    last: list[int] = field(default_factory=lambda: [-1] * NSIG)
    start_cycle: int = 0

    @classmethod
    def for_butterflies(cls, butterflies: int, strict: bool = False) -> "CccState":
        return cls(segment_counts(butterflies), strict)

    def observe(self, word: int, cycle: int) -> None:
        h = self.hist
        h[word] = h.get(word, 0) + 1
        if self.strict:
            for b in _CONTIGUOUS:
                if word >> b & 1:
                    if self.first[b] < 0:
                        self.first[b] = cycle
                    self.last[b] = cycle

    def observed_counts(self) -> dict[str, int]:
        tally = list(self.carried)
        for word, cnt in self.hist.items():
            for b in range(NSIG):
                if word >> b & 1:
                    tally[b] += cnt
        return dict(zip(ROSTER, tally))

    def restart(self, butterflies: int, cycle: int) -> None:
        """Begin a new pass after a rollback; reset-line tallies carry over."""
        obs = self.observed_counts()
        carried = [0] * NSIG
        for b in _CARRIED:
            carried[b] = obs[ROSTER[b]]
        self.expected = segment_counts(butterflies)
        self.hist = {}
        self.carried = carried
        self.first = [-1] * NSIG
        self.last = [-1] * NSIG
        self.start_cycle = cycle

    def mismatches(self) -> dict[str, tuple[int, int]]:
        obs = self.observed_counts()
        bad = {k: (obs[k], v) for k, v in self.expected.items() if obs[k] != v}
        if self.strict:
            for b in _CONTIGUOUS:
                name = ROSTER[b]
                if self.first[b] >= 0 and self.last[b] - self.first[b] + 1 != obs[name]:
                    bad.setdefault(name, (obs[name], self.expected[name]))
        return bad


def ccc_check(ccc: CccState) -> bool:
    return bool(ccc.mismatches())


@dataclass(frozen=True)
class MonitorSet:
    """Which detectors are wired in; a disabled detector never raises."""

    cfi: bool = True
    ccc: bool = True
    strict_ccc: bool = False

    @classmethod
    def none(cls) -> "MonitorSet":
        return cls(False, False)


def cfi_word_check(sig: int, csr: int, rsr: int) -> tuple[bool, bool, bool]:
    return (
        barrett_cfi_check(sig, csr, rsr),
        polymem_cfi_check(sig, rsr),
        uv_cfi_check(sig, csr, rsr),
    )

