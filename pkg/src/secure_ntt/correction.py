"""Bit-patcher table, risk scoring and the repeat / reload / relocate policy."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Sequence

from .injector import FaultPlan

if TYPE_CHECKING:
    from .pipeline import SecureNtt


class CorrectionError(ValueError):
    pass


class RollbackError(CorrectionError):
    pass


KINDS = ("cfi", "ccc")


@dataclass(frozen=True)
class Thresholds:
    cfi_th_reld: int = 256
    cfi_th_relc: int = 512
    ccc_th_reld: int = 256
    ccc_th_relc: int = 512

    def __post_init__(self):
        if not self.cfi_th_reld < self.cfi_th_relc:
            raise CorrectionError("cfi_th_reld must be below cfi_th_relc")
        if not self.ccc_th_reld < self.ccc_th_relc:
            raise CorrectionError("ccc_th_reld must be below ccc_th_relc")

    def for_kind(self, kind: str) -> tuple[int, int]:
        if kind == "cfi":
            return self.cfi_th_reld, self.cfi_th_relc
        if kind == "ccc":
            return self.ccc_th_reld, self.ccc_th_relc
        raise CorrectionError(f"unknown fault kind {kind!r}")

    @classmethod
    def parse(cls, text: str) -> "Thresholds":
        parts = [int(x) for x in text.split(",")]
        if len(parts) != 4:
            raise CorrectionError("thresholds need four values: cfi_reld,cfi_relc,ccc_reld,ccc_relc")
        return cls(*parts)

    def to_list(self) -> list[int]:
        return [self.cfi_th_reld, self.cfi_th_relc, self.ccc_th_reld, self.ccc_th_relc]


DEFAULT_THRESHOLDS = Thresholds()
SCALED_THRESHOLDS = Thresholds(8, 16, 8, 16)
PRESETS = {"fidelity": DEFAULT_THRESHOLDS, "scaled": SCALED_THRESHOLDS}


@dataclass(frozen=True)
class Latencies:
    """Simulated costs in integer nanoseconds."""

    cycle_ns: int = 10
    reload_ns: int = 150_000
    relocate_ns: int = 256_000

    def __post_init__(self):
        if min(self.cycle_ns, self.reload_ns, self.relocate_ns) < 0:
            raise CorrectionError("latencies must be non-negative")


class MeasureKind(str, Enum):
    REPEAT = "RepeatLoop"
    RELOAD = "ReloadAndRepeat"
    RELOCATE = "RelocateAndRepeat"


_ORDER = {MeasureKind.REPEAT: 0, MeasureKind.RELOAD: 1, MeasureKind.RELOCATE: 2}


@dataclass(frozen=True)
class Measure:
    kind: MeasureKind
    cost_ns: int
    fault: str = "cfi"
    slot_from: int = 0
    slot_to: int = 0
    cycle: int = -1
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "cost_ns": self.cost_ns,
            "fault": self.fault,
            "slot_from": self.slot_from,
            "slot_to": self.slot_to,
            "cycle": self.cycle,
            "note": self.note,
        }


@dataclass
class SlotRecord:
    slot_id: int
    nr: int = 0
    ncfi: int = 0
    nccc: int = 0
    risk: float | None = None
    configured: bool = False
    trojan_profile: tuple[FaultPlan, ...] = ()

    def count(self, kind: str) -> int:
        if kind == "cfi":
            return self.ncfi
        if kind == "ccc":
            return self.nccc
        raise CorrectionError(f"unknown fault kind {kind!r}")

    def rate(self, kind: str) -> float:
        return self.count(kind) / self.nr if self.nr else 0.0

    def to_dict(self) -> dict:
        return {
            "slot_id": self.slot_id,
            "nr": self.nr,
            "ncfi": self.ncfi,
            "nccc": self.nccc,
            "risk": self.risk,
            "configured": self.configured,
            "trojan_profile": [p.to_dict() for p in self.trojan_profile],
        }


def _check_weights(w_cfi: float, w_ccc: float) -> None:
    if w_cfi < 0 or w_ccc < 0 or w_cfi + w_ccc <= 0:
        raise CorrectionError(f"weights ({w_cfi}, {w_ccc}) must be non-negative and not both zero")


def _risk(records: Sequence[SlotRecord], i: int, w_cfi: float, w_ccc: float) -> float | None:
    rec = records[i]
    if rec.nr == 0:
        return None
    total = 0.0
    for kind, w in (("cfi", w_cfi), ("ccc", w_ccc)):
        mx = max((r.rate(kind) for r in records if r.nr), default=0.0)
        if mx > 0:
            total += w * rec.rate(kind) / mx
    return total


class PatcherTable:
    """Per-slot run and fault ledger.  Every operation holds one lock."""

    def __init__(self, m: int = 4, weights: tuple[float, float] = (0.5, 0.5)):
        if m < 1:
            raise CorrectionError(f"slot count m={m} must be >= 1")
        _check_weights(*weights)
        self.weights = tuple(weights)
        self.records = [SlotRecord(i) for i in range(m)]
        self.lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.records)

    def _rec(self, slot: int) -> SlotRecord:
        if not 0 <= slot < len(self.records):
            raise CorrectionError(f"unknown slot {slot}")
        return self.records[slot]

    def _recompute(self) -> None:
        # table maxima shift with every update, so every slot's score moves
        for i, r in enumerate(self.records):
            r.risk = _risk(self.records, i, *self.weights)

    def add_run(self, slot: int) -> None:
        with self.lock:
            self._rec(slot).nr += 1
            self._recompute()

    def record_fault(self, slot: int, kind: str) -> int:
        """Bump the slot's counter for ``kind``; returns the new count."""
        with self.lock:
            rec = self._rec(slot)
            if kind == "cfi":
                rec.ncfi += 1
            elif kind == "ccc":
                rec.nccc += 1
            else:
                raise CorrectionError(f"unknown fault kind {kind!r}")
            self._recompute()
            return rec.count(kind)

    def configure(self, slot: int) -> None:
        with self.lock:
            self._rec(slot).configured = True

    def relocate(self, old: int, new: int) -> None:
        with self.lock:
            self._rec(old).configured = False
            rec = self._rec(new)
            rec.configured = True
            rec.nr += 1
            self._recompute()

    def select_slot(self, exclude: Sequence[int] = ()) -> int:
        with self.lock:
            return select_slot(self.records, exclude)

    def snapshot(self) -> list[dict]:
        with self.lock:
            return [r.to_dict() for r in self.records]


def record_fault(table: PatcherTable, slot: int, kind: str) -> PatcherTable:
    table.record_fault(slot, kind)
    return table


def risk(table: PatcherTable | Sequence[SlotRecord], i: int, w_cfi: float = 0.5, w_ccc: float = 0.5) -> float:
    """Composite risk of slot ``i``; a kind nobody has faulted on contributes 0."""
    _check_weights(w_cfi, w_ccc)
    records = table.records if isinstance(table, PatcherTable) else table
    if not 0 <= i < len(records):
        raise CorrectionError(f"unknown slot {i}")
    r = _risk(records, i, w_cfi, w_ccc)
    if r is None:
        raise CorrectionError(f"risk undefined for slot {i} with no runs")
    return r


def risk_general(
    counts: Sequence[Sequence[int]], runs: Sequence[int], weights: Sequence[float], i: int
) -> float:
    """Risk over any number of fault kinds: ``counts[k][s]`` is kind k on slot s."""
    if len(counts) != len(weights):
        raise CorrectionError("need one weight per fault kind")
    if runs[i] == 0:
        raise CorrectionError(f"risk undefined for slot {i} with no runs")
    total = 0.0
    for row, w in zip(counts, weights):
        rates = [c / r for c, r in zip(row, runs) if r]
        mx = max(rates, default=0.0)
        if mx > 0:
            total += w * (row[i] / runs[i]) / mx
    return total


def choose_measure(count: int, th: Thresholds, kind: str = "cfi") -> MeasureKind:
    reld, relc = th.for_kind(kind)
    if count > relc:
        return MeasureKind.RELOCATE
    if count > reld:
        return MeasureKind.RELOAD
    return MeasureKind.REPEAT


def _rank(r: SlotRecord) -> tuple:
    # unrun slots rank last; then lower risk, more runs, lower id
    return (r.nr == 0, r.risk if r.risk is not None else 0.0, -r.nr, r.slot_id)


def select_slot(records: Sequence[SlotRecord] | PatcherTable, exclude: Sequence[int] = ()) -> int:
    if isinstance(records, PatcherTable):
        return records.select_slot(exclude)
    cands = [r for r in records if r.slot_id not in exclude]
    if not cands:
        raise CorrectionError("no selectable slot")
    return min(cands, key=_rank).slot_id


def rollback(state: "SecureNtt") -> "SecureNtt":
    if not state.pending_fault:
        raise RollbackError("rollback requested with no flagged fault")
    state.rollback()
    return state


class Corrector:
    """Host-side policy agent driving the patcher table for one campaign."""

    def __init__(
        self,
        m: int = 4,
        thresholds: Thresholds = DEFAULT_THRESHOLDS,
        weights: tuple[float, float] = (0.5, 0.5),
        latencies: Latencies = Latencies(),
        trojan_profiles: dict[int, Sequence[FaultPlan]] | None = None,
        max_measures: int = 4096,
        table: PatcherTable | None = None,
    ):
        self.table = table or PatcherTable(m, weights)
        self.thresholds = thresholds
        self.latencies = latencies
        self.max_measures = max_measures
        for slot, plans in (trojan_profiles or {}).items():
            self.table._rec(slot).trojan_profile = tuple(plans)
        self.active = 0
        self.table.configure(0)
        self.log: list[Measure] = []

    def profiles(self) -> dict[int, tuple[FaultPlan, ...]]:
        return {r.slot_id: r.trojan_profile for r in self.table.records if r.trojan_profile}

    def begin_run(self) -> None:
        self.table.add_run(self.active)

    def handle(self, kind: str, state: "SecureNtt") -> Measure:
        count = self.table.record_fault(self.active, kind)
        mk = choose_measure(count, self.thresholds, kind)
        m = apply_measure(mk, self, state, kind)
        self.log.append(m)
        return m

    def reset(self) -> None:
        self.active = 0
        self.log.clear()


def apply_measure(mk: MeasureKind, ctx: Corrector, state: "SecureNtt", fault: str = "cfi") -> Measure:
    """Carry out one measure on ``state``; returns it with its simulated cost."""
    lat = ctx.latencies
    old = ctx.active
    note = ""
    if mk is MeasureKind.RELOCATE:
        try:
            new = ctx.table.select_slot(exclude=[old])
        except CorrectionError:
            mk, note = MeasureKind.RELOAD, "no alternative slot: relocate degraded to reload"
        else:
            ctx.table.relocate(old, new)
            ctx.active = new
            state.slot = new
    if mk is MeasureKind.RELOAD:
        state.clear_transient()
    cost = {
        MeasureKind.REPEAT: lat.cycle_ns,
        MeasureKind.RELOAD: lat.reload_ns,
        MeasureKind.RELOCATE: lat.relocate_ns,
    }[mk]
    cycle = state.cycle - 1
    if fault == "ccc":
        # the count check fires after completion, so the whole transform reruns
        cost += (state.N + 4) * lat.cycle_ns
        state.restart_full()
    else:
        rollback(state)
    return Measure(mk, cost, fault, old, ctx.active, cycle, note)


def measure_rank(mk: MeasureKind) -> int:
    return _ORDER[mk]
