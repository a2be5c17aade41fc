"""The ten monitored control/status signals and CSR-derived control logic.

Signals are packed into a 10-bit word internally; bit ``b`` of the word is the
``b``-th roster entry, which is also the bit of the injector's gate word
``F_r`` that drives it (``F_r[0]`` gates ``rd_en``).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

ROSTER = (
    "rd_en",
    "wr_en",
    "polymem_ce",
    "ctrl_rst",
    "ubuff_rst",
    "barrett_rst",
    "barrett_strt",
    "barrett_done",
    "uv_rst",
    "uv_strt",
)
NSIG = len(ROSTER)
ALL = (1 << NSIG) - 1

RD_EN, WR_EN, POLYMEM_CE, CTRL_RST, UBUFF_RST, BARRETT_RST, BARRETT_STRT, BARRETT_DONE, UV_RST, UV_STRT = (
    1 << b for b in range(NSIG)
)
BIT = {name: 1 << b for b, name in enumerate(ROSTER)}

# CSR bit masks; bit 3 is the msb (read stage), bit 0 the write stage.
CSR3, CSR2, CSR1, CSR0 = 8, 4, 2, 1
FULL = 0b1111


def shift_in(reg: int, msb: int) -> int:
    """Right shift a 4-bit register, filling bit 3 with ``msb``."""
    return (8 if msb else 0) | (reg >> 1)


def _derive(csr: int, rst: bool) -> int:
    c3 = bool(csr & CSR3)
    c0 = bool(csr & CSR0)
    mid = bool(csr & (CSR1 | CSR2))
    w = 0
    if c3:
        w |= RD_EN
    else:
        w |= UV_RST
    if c0:
        w |= WR_EN | UV_STRT | BARRETT_DONE
    if c0 or c3:
        w |= POLYMEM_CE
    if mid:
        w |= BARRETT_STRT
    else:
        w |= BARRETT_RST
    if rst:
        w |= CTRL_RST | UBUFF_RST
    return w


_DERIVED = tuple(_derive(c, r) for r in (False, True) for c in range(16))


def derive_word(csr: int, rst: bool = False) -> int:
    """Fault-free signal word; ``barrett_done`` follows ``CSR[0]`` here."""
    return _DERIVED[16 * bool(rst) + csr]


@dataclass(frozen=True)
class ControlSignalVector:
    rd_en: bool = False
    wr_en: bool = False
    polymem_ce: bool = False
    ctrl_rst: bool = False
    ubuff_rst: bool = False
    barrett_rst: bool = False
    barrett_strt: bool = False
    barrett_done: bool = False
    uv_rst: bool = False
    uv_strt: bool = False

    @classmethod
    def from_word(cls, word: int) -> "ControlSignalVector":
        return cls(*(bool(word >> b & 1) for b in range(NSIG)))

    def to_word(self) -> int:
        return sum(1 << b for b, f in enumerate(fields(self)) if getattr(self, f.name))

    def __str__(self) -> str:
        return " ".join(f"{name}={int(getattr(self, name))}" for name in ROSTER)


def derive_controls(csr: int, rst: bool = False) -> ControlSignalVector:
    return ControlSignalVector.from_word(derive_word(csr, rst))


def csr_str(reg: int) -> str:
    return format(reg, "04b")


def parse_csr(text: str) -> int:
    if len(text) != 4 or set(text) - {"0", "1"}:
        raise ValueError(f"CSR literal must be 4 binary digits, got {text!r}")
    return int(text, 2)


def golden_csr(cycle: int, butterflies: int) -> int:
    """CSR during ``cycle`` (0-based, counted from activation) in a clean run."""
    reg = 0
    for b in range(4):
        c = cycle - (3 - b)
        if 0 <= c < butterflies:
            reg |= 1 << b
    return reg


def golden_words(butterflies: int) -> list[int]:
    """Fault-free signal word for every cycle of a run of ``butterflies`` issues."""
    return [derive_word(golden_csr(c, butterflies)) for c in range(butterflies + 4)]
