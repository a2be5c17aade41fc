"""Cycle-accurate five-stage Secure NTT.

Stage 0 (address generation) runs whenever the NTT is out of reset; the other
four stages are enabled by the CSR bits::

    CSR[3]  read A[k0], A[k1], w          (rd_en)
    CSR[2]  Barrett stage 1: a_k1 * w      (barrett_strt)
    CSR[1]  Barrett stage 2: reduce -> V   (barrett_strt)
    CSR[0]  U +/- V, mask, write back      (wr_en, uv_strt)

Cycles are counted from activation starting at 0, so a clean pass occupies
``N + 4`` clocks for ``N = (n/2) log2 n`` butterflies: 1028 for n = 256.

Memory is write-first within a clock.  For n < 16 a stage can start reading a
word whose producer is still inside the Barrett stages; the read port then
takes the value from a bypass off the in-flight butterfly.  For n >= 16 the
addressing never needs it.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

from .injector import DelayPlan, FaultPlan, Persistence, StuckMode, gate_word
from .masking import LocalMask, MaskMode, unmask_image
from .monitors import CccState, FaultFlags, MonitorSet, cfi_word_check
from .ntt import NttParams, barrett_for, check_poly, schedule, twiddles
from .signals import (
    BARRETT_DONE,
    BARRETT_RST,
    BARRETT_STRT,
    CSR3,
    CTRL_RST,
    POLYMEM_CE,
    RD_EN,
    ROSTER,
    UBUFF_RST,
    UV_RST,
    UV_STRT,
    WR_EN,
    ControlSignalVector,
    derive_word,
    shift_in,
)

if TYPE_CHECKING:
    from .correction import Corrector, Measure


class PipelineError(RuntimeError):
    pass


# (valid, butterfly id, k0, k1, U, A[k1], w)
_RR_EMPTY = (False, -1, 0, 0, 0, 0, 1)
# (valid, butterfly id, k0, k1, payload)
_REG_EMPTY = (False, -1, 0, 0, 0)
# (butterfly id, k0, k1, U+V, U-V)
_UV_EMPTY = (-1, 0, 0, 0, 0)

UNDO_MARGIN = 1  # worst-case CFI detection latency (ctrl_rst), in clocks


@dataclass
class StepResult:
    cycle: int
    csr: int
    rsr: int
    nominal: int
    observed: int
    cfi: bool = False
    events: list[str] = field(default_factory=list)

    @property
    def signals(self) -> ControlSignalVector:
        return ControlSignalVector.from_word(self.observed)


@dataclass
class TraceRow:
    cycle: int
    csr: int
    rsr: int
    nominal: int
    observed: int

    def to_dict(self) -> dict:
        return {
            "cycle": self.cycle,
            "csr": format(self.csr, "04b"),
            "rsr": format(self.rsr, "04b"),
            "signals": format(self.observed, "010b"),
            "gated": self.nominal != self.observed,
        }


class SecureNtt:
    """Mutable pipeline state plus the per-clock transition."""

    def __init__(
        self,
        params: NttParams,
        mask: MaskMode | str = MaskMode.OFF,
        seed: int | None = 0,
        monitors: MonitorSet = MonitorSet(),
        debug: bool = False,
        ring: int = 16,
    ):
        self.p = params
        self.q = params.q
        self.width = params.q.bit_length()
        self.N = params.butterflies
        sch = schedule(params.n)
        self._k0 = [b.k0 for b in sch]
        self._k1 = [b.k1 for b in sch]
        self._widx = [b.widx for b in sch]
        self._sched = sch
        self.w = twiddles(params)
        self._red = barrett_for(params.q).reduce
        self.lm = LocalMask(mask, self.w, seed)
        self.monitors = monitors
        self.debug = debug
        self.trace: deque[TraceRow] | list[TraceRow] = [] if debug else deque(maxlen=ring)
        self.plans: list[FaultPlan] = []
        self.delays: list[DelayPlan] = []
        self.cleared: set[int] = set()
        self.profiles: dict[int, Sequence[FaultPlan]] = {}
        self.slot = 0
        self.loaded = False
        self.finished = True

    # ---------------------------------------------------------------- setup

    def load(self, poly: Sequence[int]) -> None:
        """Latch the input through the interconnect and deassert rst."""
        a = check_poly(poly, self.p)
        self.input = list(a)
        self.mem = list(a)
        self.tag = [0] * self.p.n
        self.prov = bytearray(self.p.n)
        self.cycle = 0
        self.rst = False
        self.lm.begin_run()
        self.flags = FaultFlags()
        self.events: list[tuple[int, str]] = []
        self.stats = {"reads": 0, "unmasked_reads": 0, "writes": 0, "forwards": 0, "rollbacks": 0, "restarts": 0}
        if self.debug:
            self.read_log: list[tuple[int, int, int]] = []
            self.write_log: list[dict] = []
        self.loaded = True
        self._reset_pass(0)
        self.pass_start = 0

    def _reset_pass(self, resume: int) -> None:
        if resume == 0:
            self.retired = bytearray(self.N)
            self.low = 0
            self.retire_log: deque = deque(maxlen=32)
        self.issue_ptr = resume
        self.csr = 0
        self.rsr = 0
        self.rr = _RR_EMPTY
        self.reg1 = _REG_EMPTY
        self.reg2 = _REG_EMPTY
        self.ubuf0 = 0
        self.ubuf1 = 0
        self.uv = _UV_EMPTY
        self.stall_left = 0
        self.pending_fault = False
        m = self.N - resume
        if resume == 0 or not hasattr(self, "ccc"):
            self.ccc = CccState.for_butterflies(m, self.monitors.strict_ccc)
        else:
            self.ccc.restart(m, self.cycle)
        self.finished = m == 0
        if self.finished:
            self.ccc.expected = dict.fromkeys(self.ccc.expected, 0)
        self.pass_start = self.cycle
        self.pass_limit = 4 * (m + 4) + 64

    # ------------------------------------------------------------- accessors

    @property
    def loop_ptr(self) -> tuple[int, int, int, int]:
        """(i, j, k, hl) of the next butterfly the CTRL will issue."""
        if self.issue_ptr >= self.N:
            return (self.p.stages, 0, 0, 0)
        b = self._sched[self.issue_ptr]
        return (b.stage, b.block, b.k, self.p.n >> (b.stage + 1))

    @property
    def u_buffer(self) -> tuple[int, int]:
        return (self.ubuf0, self.ubuf1)

    def output(self) -> list[int]:
        """poly_mem with the local masks stripped (raw transform order)."""
        return unmask_image(self.mem, self.tag, self.w, self.q)

    # ----------------------------------------------------------------- clock

    def _gate(self, c: int, word: int) -> int:
        for idx, pl in enumerate(self.plans):
            if pl.persistence is Persistence.SINGLE:
                if c != pl.r_t:
                    continue
            elif c < pl.r_t or idx in self.cleared or (pl.slot_scope is not None and pl.slot_scope != self.slot):
                continue
            word = gate_word(word, pl.f_r, pl.mode)
        for pl in self.profiles.get(self.slot, ()):
            if c >= pl.r_t:
                word = gate_word(word, pl.f_r, pl.mode)
        return word

    def _read(self, a: int) -> int:
        x = self.mem[a]
        t = self.tag[a]
        if t:
            x = x * self.w.inverse_entries[t] % self.q
        return x

    def _bypass(self, a: int) -> int | None:
        """Value of ``a`` from a butterfly still in the Barrett stages, if any."""
        # called after this clock's Barrett update: reg2 and reg1 hold the
        # two butterflies whose results have not reached poly_mem yet
        q = self.q
        valid, bid, k0, k1, v = self.reg2
        if valid and (a == k0 or a == k1):
            u = self.ubuf1
            return (u + v) % q if a == k0 else (u - v) % q
        valid, bid, k0, k1, prod = self.reg1
        if valid and (a == k0 or a == k1):
            v = self._red(prod)
            u = self.ubuf0
            return (u + v) % q if a == k0 else (u - v) % q
        return None

    def step(self, gate: tuple[int, StuckMode] | None = None) -> StepResult:
        """Advance one clock.  ``gate`` applies an extra (F_r, mode) this cycle."""
        if not self.loaded:
            raise PipelineError("no polynomial loaded")
        c = self.cycle
        if self.finished:
            return StepResult(c, self.csr, self.rsr, 0, 0, events=["finished: step ignored"])
        ev: list[str] = []

        for d in self.delays:
            if d.cycle == c:
                self.stall_left += d.extra
                ev.append(f"barrett stall x{d.extra}")
        stalled = self.stall_left > 0
        if stalled:
            self.stall_left -= 1
        else:
            self.csr = shift_in(self.csr, self.issue_ptr < self.N and not self.rst)
        csr = self.csr

        nominal = derive_word(csr, self.rst) & ~BARRETT_DONE
        if self.reg2[0]:
            nominal |= BARRETT_DONE
        obs = nominal
        if self.plans or self.profiles:
            obs = self._gate(c, obs)
        if gate is not None:
            obs = gate_word(obs, gate[0], gate[1])
        if obs != nominal:
            ev.append(f"gated {format(nominal, '010b')} -> {format(obs, '010b')}")

        if not stalled:
            self._datapath(c, csr, obs, ev)

        # monitors: RSR is clocked every cycle from the observed rd_en
        self.rsr = rsr = shift_in(self.rsr, obs & RD_EN)
        cfi = False
        if self.monitors.cfi:
            b, pm, u = cfi_word_check(obs, csr, rsr)
            if b or pm or u:
                cfi = True
                fl = self.flags
                fl.cfi_cycles += 1
                for name, hit in (("barrett_cfi", b), ("polymem_cfi", pm), ("uv_cfi", u)):
                    if hit:
                        fl.raise_flag(name, c)
                fl.raise_flag("cfi_fault", c)
                self.pending_fault = True
                ev.append("cfi_fault")
        if self.monitors.ccc:
            self.ccc.observe(obs, c)
        self.trace.append(TraceRow(c, csr, rsr, nominal, obs))
        for e in ev:
            self.events.append((c, e))
        self.cycle = c + 1

        if not stalled and self.csr == 0 and self.issue_ptr >= self.N:
            self.finished = True
        elif self.cycle - self.pass_start > self.pass_limit:
            self.finished = True
            self.events.append((c, "pass aborted: cycle budget exhausted"))
            self.ccc.expected = dict(self.ccc.expected, aborted=1)
        return StepResult(c, csr, rsr, nominal, obs, cfi, ev)

    def _datapath(self, c: int, csr: int, obs: int, ev: list[str]) -> None:
        q = self.q
        mem, tag, prov = self.mem, self.tag, self.prov

        # write stage first: memory is write-first within a clock
        if obs & UV_STRT:
            valid, bid, k0, k1, v = self.reg2
            u = self.ubuf1
            self.uv = (bid if valid else -1, k0, k1, (u + v) % q, (u - v) % q)
        elif obs & UV_RST:
            self.uv = _UV_EMPTY
        if obs & WR_EN and obs & POLYMEM_CE:
            bid, k0, k1, s, d = self.uv
            r = self.lm.next_index()
            wr = self.w.entries[r]
            m0, m1 = s * wr % q, d * wr % q
            if m0 >> self.width or m1 >> self.width:
                raise PipelineError(f"coefficient wider than {self.width} bits at cycle {c}")
            self.retire_log.append((c, bid, k0, mem[k0], tag[k0], prov[k0], k1, mem[k1], tag[k1], prov[k1]))
            masked = self.lm.mode is not MaskMode.OFF
            mem[k0], tag[k0], prov[k0] = m0, r, masked
            mem[k1], tag[k1], prov[k1] = m1, r, masked
            self.stats["writes"] += 1
            if bid >= 0:
                self.retired[bid] = 1
                while self.low < self.N and self.retired[self.low]:
                    self.low += 1
            if self.debug:
                self.write_log.append(
                    {"cycle": c, "id": bid, "k0": k0, "k1": k1, "sum": s, "diff": d, "r": r,
                     "stored": (m0, m1), "u": self.ubuf1}
                )

        # Barrett delay line and the free-running U buffer
        rr = self.rr
        if obs & BARRETT_RST:
            self.reg1 = self.reg2 = _REG_EMPTY
        elif obs & BARRETT_STRT:
            v1, b1, a1, a2, prod = self.reg1
            self.reg2 = (v1, b1, a1, a2, self._red(prod))
            self.reg1 = (rr[0], rr[1], rr[2], rr[3], rr[5] * rr[6])
        if obs & UBUFF_RST:
            self.ubuf0 = self.ubuf1 = 0
        else:
            self.ubuf1 = self.ubuf0
            self.ubuf0 = rr[4]

        # read stage; the CTRL advances its loop whenever it issues
        bid = -1
        if csr & CSR3:
            bid = self.issue_ptr
            self.issue_ptr += 1
        if obs & RD_EN and obs & POLYMEM_CE:
            at = bid if bid >= 0 else min(self.issue_ptr, self.N - 1)
            k0, k1, widx = self._k0[at], self._k1[at], self._widx[at]
            u = self._bypass(k0)
            a1 = self._bypass(k1)
            if u is not None or a1 is not None:
                self.stats["forwards"] += 1
            if u is None:
                u = self._read(k0)
            if a1 is None:
                a1 = self._read(k1)
            self.stats["reads"] += 1
            if not (prov[k0] and prov[k1]):
                self.stats["unmasked_reads"] += 1
            self.rr = (True, bid, k0, k1, u, a1, self.w.entries[widx])
            if self.debug:
                self.read_log.append((c, bid, u))
        else:
            # read port idle: registers keep stale data, marked invalid
            self.rr = (False, -1) + rr[2:]

        if obs & CTRL_RST:
            self.csr = 0
            self.issue_ptr = 0
            ev.append("ctrl reset")

    # -------------------------------------------------------------- recovery

    def rollback(self) -> int:
        """Discard in-flight work and replay from the earliest unretired butterfly.

        Writes made from one clock before the flagged cycle onward are undone
        from the interconnect buffer.  Returns the resume index.
        """
        flagged = self.cycle - 1
        horizon = flagged - UNDO_MARGIN
        log = self.retire_log
        while log and log[-1][0] >= horizon:
            _, bid, k0, o0, t0, p0, k1, o1, t1, p1 = log.pop()
            self.mem[k1], self.tag[k1], self.prov[k1] = o1, t1, p1
            self.mem[k0], self.tag[k0], self.prov[k0] = o0, t0, p0
            if bid >= 0:
                self.retired[bid] = 0
                self.low = min(self.low, bid)
        resume = self.low
        self.stats["rollbacks"] += 1
        self.events.append((flagged, f"rollback to butterfly {resume}"))
        self._reset_pass(resume)
        return resume

    def restart_full(self) -> None:
        """Re-run the whole transform from the buffered input."""
        self.mem = list(self.input)
        self.tag = [0] * self.p.n
        self.prov = bytearray(self.p.n)
        self.stats["restarts"] += 1
        self.events.append((self.cycle, "full restart from input buffer"))
        del self.ccc
        self._reset_pass(0)

    def clear_transient(self) -> None:
        """Reload of the same bitstream: drops permanent upsets bound to this slot."""
        for idx, pl in enumerate(self.plans):
            if pl.persistence is Persistence.PERMANENT and pl.slot_scope in (None, self.slot):
                self.cleared.add(idx)


@dataclass
class RunOutcome:
    output: list[int]
    memory: list[int]
    tags: list[int]
    cycles: int
    nominal_cycles: int
    flags: FaultFlags
    measures: list["Measure"]
    sim_time_ns: int
    trace: list[TraceRow]
    events: list[tuple[int, str]]
    stats: dict[str, int]
    slot: int
    ccc_mismatches: dict[str, tuple[int, int]] = field(default_factory=dict)
    golden: list[int] | None = None
    completed: bool = True

    @property
    def golden_equal(self) -> bool | None:
        return None if self.golden is None else self.output == self.golden

    @property
    def unmasked_read_fraction(self) -> float:
        r = self.stats.get("reads", 0)
        return self.stats.get("unmasked_reads", 0) / r if r else 0.0

    def to_dict(self, with_trace: bool = True) -> dict:
        d = {
            "cycles": self.cycles,
            "nominal_cycles": self.nominal_cycles,
            "sim_time_ns": self.sim_time_ns,
            "flags": self.flags.to_dict(),
            "measures": [m.to_dict() for m in self.measures],
            "ccc_mismatches": {k: list(v) for k, v in self.ccc_mismatches.items()},
            "stats": dict(self.stats),
            "slot": self.slot,
            "completed": self.completed,
            "golden_equal": self.golden_equal,
            "output": list(self.output),
        }
        if with_trace:
            d["trace"] = [t.to_dict() for t in self.trace]
            d["events"] = [[c, e] for c, e in self.events]
        return d


def run(
    poly: Sequence[int],
    params: NttParams,
    plans: Sequence[FaultPlan] | FaultPlan | None = None,
    monitors: MonitorSet = MonitorSet(),
    corrector: "Corrector | None" = None,
    *,
    delays: Sequence[DelayPlan] = (),
    mask: MaskMode | str = MaskMode.OFF,
    seed: int | None = 0,
    debug: bool = False,
    golden: Sequence[int] | None = None,
    cycle_ns: int = 10,
    max_passes: int = 64,
    engine: SecureNtt | None = None,
) -> RunOutcome:
    """One NTT on the pipeline, with optional Trojans, monitors and correction."""
    if isinstance(plans, FaultPlan):
        plans = [plans]
    eng = engine or SecureNtt(params, mask, seed, monitors, debug)
    eng.plans = list(plans or ())
    eng.delays = list(delays)
    eng.cleared = set()
    eng.load(poly)
    measures: list[Measure] = []
    if corrector is not None:
        eng.slot = corrector.active
        eng.profiles = corrector.profiles()
        corrector.begin_run()
        cycle_ns = corrector.latencies.cycle_ns
    nominal = eng.N + 4
    mismatches: dict[str, tuple[int, int]] = {}
    completed = True
    passes = 0
    while True:
        while not eng.finished:
            res = eng.step()
            if res.cfi and corrector is not None:
                if len(measures) >= corrector.max_measures:
                    completed = False
                    break
                measures.append(corrector.handle("cfi", eng))
        if not completed:
            break
        passes += 1
        bad = eng.ccc.mismatches() if monitors.ccc else {}
        if bad:
            mismatches = bad
            eng.flags.raise_flag("ccc_fault", eng.cycle - 1)
            eng.events.append((eng.cycle - 1, "ccc_fault " + ",".join(sorted(bad))))
            if corrector is None:
                break
            if passes >= max_passes or len(measures) >= corrector.max_measures:
                completed = False
                break
            measures.append(corrector.handle("ccc", eng))
            continue
        break
    out = eng.output()
    return RunOutcome(
        output=out,
        memory=list(eng.mem),
        tags=list(eng.tag),
        cycles=eng.cycle,
        nominal_cycles=nominal,
        flags=eng.flags,
        measures=measures,
        sim_time_ns=nominal * cycle_ns + sum(m.cost_ns for m in measures),
        trace=list(eng.trace),
        events=eng.events,
        stats=dict(eng.stats),
        slot=eng.slot,
        ccc_mismatches=mismatches,
        golden=list(golden) if golden is not None else None,
        completed=completed,
    )


def signal_counts(trace: Sequence[TraceRow]) -> dict[str, int]:
    out = dict.fromkeys(ROSTER, 0)
    for row in trace:
        for b, name in enumerate(ROSTER):
            if row.observed >> b & 1:
                out[name] += 1
    return out

