"""Seeded Kyber-shaped fault-injection campaigns and their reports."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, fields
from typing import Any, Mapping

from .correction import PRESETS, Corrector, CorrectionError, Latencies, MeasureKind, Thresholds
from .injector import FaultPlan, InjectorError, Persistence, StuckMode, is_effective
from .masking import MaskMode
from .monitors import MonitorSet
from .ntt import NttError, NttParams, ntt_behavioral
from .pipeline import run
from .signals import golden_words

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


_ROWS = {
    "KeyGen": ("x", "x", 0),
    "Encap": ("x", "x", 1),
    "Decap": ("x", "x", "x", 1, 1),
}
_SCALE = {512: 2, 768: 3, 1024: 4}


@dataclass(frozen=True)
class KyberProfile:
    variant: int
    blocks: tuple[tuple[str, tuple[int, ...]], ...]

    @property
    def total(self) -> int:
        return sum(sum(rows) for _, rows in self.blocks)


def kyber_profile(variant: int) -> KyberProfile:
    """NTT runs per sample for each block row of a Kyber variant."""
    if variant not in _SCALE:
        raise ConfigError("variant", f"unknown Kyber variant {variant!r}; expected 512, 768 or 1024")
    k = _SCALE[variant]
    blocks = tuple((ph, tuple(k if r == "x" else r for r in rows)) for ph, rows in _ROWS.items())
    return KyberProfile(variant, blocks)


@dataclass(frozen=True)
class CampaignConfig:
    variants: tuple[int, ...] = (512, 768, 1024)
    samples: int = 64
    seed: int = 0
    m: int = 4
    thresholds: Thresholds = PRESETS["fidelity"]
    weights: tuple[float, float] = (0.5, 0.5)
    latencies: Latencies = Latencies()
    stuck: str = "both"
    persistence: str = Persistence.SINGLE.value
    rate: float = 1.0
    mask: str = MaskMode.PER_WRITE.value
    trojan_profiles: Mapping[int, tuple[FaultPlan, ...]] = field(default_factory=dict)
    n: int = 256
    q: int = 3329

    def validate(self) -> "CampaignConfig":
        if not self.variants:
            raise ConfigError("variants", "at least one variant required")
        for v in self.variants:
            kyber_profile(v)
        if not isinstance(self.samples, int) or self.samples < 1:
            raise ConfigError("samples", f"must be an integer >= 1, got {self.samples!r}")
        if not isinstance(self.m, int) or self.m < 1:
            raise ConfigError("slots", f"must be an integer >= 1, got {self.m!r}")
        if len(self.weights) != 2 or min(self.weights) < 0 or sum(self.weights) <= 0:
            raise ConfigError("weights", f"need two non-negative weights, got {self.weights!r}")
        if self.stuck not in ("0", "1", "both"):
            raise ConfigError("stuck", f"must be 0, 1 or both, got {self.stuck!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError("rate", f"must lie in [0, 1], got {self.rate!r}")
        try:
            MaskMode(self.mask)
        except ValueError:
            raise ConfigError("mask", f"must be per-write, per-run or off, got {self.mask!r}") from None
        try:
            Persistence(self.persistence)
        except ValueError:
            raise ConfigError("persistence", f"unknown persistence {self.persistence!r}") from None
        for slot in self.trojan_profiles:
            if not 0 <= slot < self.m:
                raise ConfigError("trojan_profiles", f"slot {slot} outside [0, {self.m})")
        try:
            NttParams.create(self.n, self.q)
        except NttError as e:
            raise ConfigError("n", str(e)) from None
        return self

    def to_dict(self) -> dict:
        return {
            "variants": list(self.variants),
            "samples": self.samples,
            "seed": self.seed,
            "slots": self.m,
            "thresholds": self.thresholds.to_list(),
            "weights": list(self.weights),
            "latencies": {f.name: getattr(self.latencies, f.name) for f in fields(Latencies)},
            "stuck": self.stuck,
            "persistence": self.persistence,
            "rate": self.rate,
            "mask": self.mask,
            "trojan_profiles": {str(k): [p.to_dict() for p in v] for k, v in sorted(self.trojan_profiles.items())},
            "n": self.n,
            "q": self.q,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CampaignConfig":
        """Build from a JSON-shaped mapping; unknown keys are rejected."""
        known = {"variants", "variant", "samples", "seed", "slots", "m", "thresholds", "weights",
                 "latencies", "stuck", "persistence", "rate", "mask", "trojan_profiles", "n", "q"}
        extra = set(d) - known
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown config key")
        kw: dict[str, Any] = {}
        if "variant" in d:
            v = d["variant"]
            kw["variants"] = tuple(v) if isinstance(v, (list, tuple)) else (v,)
        if "variants" in d:
            kw["variants"] = tuple(d["variants"])
        try:
            kw["variants"] = tuple(int(v) for v in kw.get("variants", cls.variants))
        except (TypeError, ValueError):
            raise ConfigError("variants", "must be integers") from None
        for key in ("samples", "seed", "n", "q"):
            if key in d:
                kw[key] = _int(d[key], key)
        if "slots" in d or "m" in d:
            kw["m"] = _int(d.get("slots", d.get("m")), "slots")
        if "thresholds" in d:
            kw["thresholds"] = parse_thresholds(d["thresholds"])
        if "weights" in d:
            kw["weights"] = parse_weights(d["weights"])
        if "latencies" in d:
            lat = d["latencies"]
            try:
                kw["latencies"] = Latencies(**{k: int(v) for k, v in lat.items()})
            except (TypeError, ValueError, CorrectionError) as e:
                raise ConfigError("latencies", str(e)) from None
        if "stuck" in d:
            kw["stuck"] = str(d["stuck"])
        if "persistence" in d:
            kw["persistence"] = str(d["persistence"])
        if "rate" in d:
            try:
                kw["rate"] = float(d["rate"])
            except (TypeError, ValueError):
                raise ConfigError("rate", f"not a number: {d['rate']!r}") from None
        if "mask" in d:
            kw["mask"] = str(d["mask"])
        if "trojan_profiles" in d:
            kw["trojan_profiles"] = _parse_profiles(d["trojan_profiles"])
        return cls(**kw).validate()


def _int(v: Any, key: str) -> int:
    if isinstance(v, bool):
        raise ConfigError(key, f"must be an integer, got {v!r}")
    try:
        return int(v)
    except (TypeError, ValueError):
        raise ConfigError(key, f"must be an integer, got {v!r}") from None


def parse_thresholds(v: Any) -> Thresholds:
    if isinstance(v, str) and v in PRESETS:
        return PRESETS[v]
    try:
        parts = [int(x) for x in (v.split(",") if isinstance(v, str) else v)]
        if len(parts) != 4:
            raise ValueError("need four values")
        return Thresholds(*parts)
    except (TypeError, ValueError, CorrectionError) as e:
        raise ConfigError("thresholds", f"{e} (expected 'fidelity', 'scaled' or a,b,c,d)") from None


def parse_weights(v: Any) -> tuple[float, float]:
    try:
        parts = [float(x) for x in (v.split(",") if isinstance(v, str) else v)]
    except (TypeError, ValueError):
        raise ConfigError("weights", f"not numeric: {v!r}") from None
    if len(parts) != 2:
        raise ConfigError("weights", "need exactly two values wc,ww")
    return parts[0], parts[1]


def _parse_profiles(v: Any) -> dict[int, tuple[FaultPlan, ...]]:
    out = {}
    try:
        for slot, plans in dict(v).items():
            out[int(slot)] = tuple(
                FaultPlan(
                    int(p.get("r_t", 0)),
                    int(p["r_s"]),
                    StuckMode.parse(p.get("mode", "0")),
                    Persistence.PERMANENT,
                )
                for p in plans
            )
    except (TypeError, ValueError, KeyError, InjectorError) as e:
        raise ConfigError("trojan_profiles", f"bad profile: {e}") from None
    return out


@dataclass
class BlockStats:
    phase: str
    row: int
    per_sample: int
    runs: int = 0
    injected: int = 0
    effective: int = 0
    detected: int = 0
    corrected: int = 0
    false_positives: int = 0
    golden_mismatches: int = 0
    measures: dict[str, int] = field(default_factory=lambda: {k.value: 0 for k in MeasureKind})
    sim_time_ns: int = 0
    clock_cycles: int = 0

    @property
    def detection_eff(self) -> float | None:
        return 100.0 * self.detected / self.effective if self.effective else None

    @property
    def correction_eff(self) -> float | None:
        return 100.0 * self.corrected / self.effective if self.effective else None

    def merge(self, other: "BlockStats") -> None:
        for k in ("runs", "injected", "effective", "detected", "corrected", "false_positives",
                  "golden_mismatches", "sim_time_ns", "clock_cycles"):
            setattr(self, k, getattr(self, k) + getattr(other, k))
        for k, v in other.measures.items():
            self.measures[k] = self.measures.get(k, 0) + v

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "row": self.row,
            "per_sample": self.per_sample,
            "runs": self.runs,
            "injected": self.injected,
            "effective": self.effective,
            "detected": self.detected,
            "corrected": self.corrected,
            "false_positives": self.false_positives,
            "golden_mismatches": self.golden_mismatches,
            "measures": dict(self.measures),
            "sim_time_ns": self.sim_time_ns,
            "clock_cycles": self.clock_cycles,
            "detection_eff": self.detection_eff,
            "correction_eff": self.correction_eff,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BlockStats":
        names = {f.name for f in fields(cls)}
        return cls(**{k: (dict(v) if k == "measures" else v) for k, v in d.items() if k in names})


@dataclass
class VariantReport:
    variant: int
    samples: int
    per_sample: int
    blocks: list[BlockStats]
    patcher_table: list[dict] = field(default_factory=list)

    @property
    def totals(self) -> BlockStats:
        t = BlockStats("Total", -1, self.per_sample)
        for b in self.blocks:
            t.merge(b)
        return t

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "samples": self.samples,
            "per_sample": self.per_sample,
            "blocks": [b.to_dict() for b in self.blocks],
            "totals": self.totals.to_dict(),
            "patcher_table": self.patcher_table,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "VariantReport":
        return cls(d["variant"], d["samples"], d["per_sample"],
                   [BlockStats.from_dict(b) for b in d["blocks"]], list(d.get("patcher_table", [])))


@dataclass
class Report:
    config: dict
    variants: list[VariantReport] = field(default_factory=list)

    @property
    def golden_mismatches(self) -> int:
        return sum(v.totals.golden_mismatches for v in self.variants)

    @property
    def sim_time_ns(self) -> int:
        return sum(v.totals.sim_time_ns for v in self.variants)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.config.get("seed"),
            "config": self.config,
            "variants": [v.to_dict() for v in self.variants],
            "sim_time_ns": self.sim_time_ns,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Report":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')!r}")
        return cls(dict(d["config"]), [VariantReport.from_dict(v) for v in d["variants"]])


def run_key(seed: int, variant: int, sample: int, block: str, run_idx: int) -> str:
    return f"{seed}:{variant}:{sample}:{block}:{run_idx}"


def run_campaign(cfg: CampaignConfig, progress=None) -> Report:
    """Every NTT run of every sample, one drawn Trojan activation per run.

    Samples execute in order because each corrective measure reads the
    patcher table left by the previous runs.
    """
    cfg.validate()
    p = NttParams.create(cfg.n, cfg.q)
    trace = golden_words(p.butterflies)
    horizon = p.butterflies
    monitors = MonitorSet()
    report = Report(cfg.to_dict())
    for variant in cfg.variants:
        prof = kyber_profile(variant)
        corr = Corrector(cfg.m, cfg.thresholds, cfg.weights, cfg.latencies, dict(cfg.trojan_profiles))
        blocks = [BlockStats(ph, r, cnt) for ph, rows in prof.blocks for r, cnt in enumerate(rows)]
        for s in range(cfg.samples):
            for bs in blocks:
                for k in range(bs.per_sample):
                    rng = random.Random(run_key(cfg.seed, variant, s, f"{bs.phase}{bs.row}", k))
                    _one_run(rng, p, cfg, trace, horizon, monitors, corr, bs)
            if progress:
                progress(variant, s + 1, cfg.samples)
        report.variants.append(
            VariantReport(variant, cfg.samples, prof.total, blocks, corr.table.snapshot())
        )
    return report


def _one_run(rng, p, cfg, trace, horizon, monitors, corr, bs: BlockStats) -> None:
    a = [rng.randrange(p.q) for _ in range(p.n)]
    plan = None
    if rng.random() < cfg.rate:
        pol = cfg.stuck if cfg.stuck != "both" else rng.choice("01")
        plan = FaultPlan(rng.randrange(horizon), rng.randrange(1024), StuckMode.parse(pol),
                         Persistence(cfg.persistence))
    golden = ntt_behavioral(a, p)
    out = run(a, p, plan, monitors, corr, mask=cfg.mask, seed=rng.getrandbits(64), golden=golden)
    bs.runs += 1
    bs.sim_time_ns += out.sim_time_ns
    bs.clock_cycles += out.cycles
    for m in out.measures:
        bs.measures[m.kind.value] += 1
    ok = out.completed and out.output == golden
    if not ok:
        bs.golden_mismatches += 1
    if plan is None:
        bs.false_positives += out.flags.any
        return
    bs.injected += 1
    if is_effective(plan, trace):
        bs.effective += 1
        if out.flags.any:
            bs.detected += 1
            if ok:
                bs.corrected += 1
    elif out.flags.any:
        bs.false_positives += 1


def _pct(x: float | None) -> str:
    return "-" if x is None else f"{x:.2f}".rstrip("0").rstrip(".")


def render_table(r: Report) -> str:
    """Table-2-shaped grid: one row per block entry, one column group per variant."""
    if not r.variants:
        return "(empty campaign)\n"
    head = ["Block", "Samples"]
    for v in r.variants:
        head += [f"K{v.variant} #NTT/blk", f"K{v.variant} runs", f"K{v.variant} eff.",
                 f"K{v.variant} det%", f"K{v.variant} corr%"]
    rows = []
    nblocks = len(r.variants[0].blocks)
    last = None
    for i in range(nblocks):
        b0 = r.variants[0].blocks[i]
        row = [b0.phase if b0.phase != last else "", str(r.variants[0].samples) if b0.phase != last else ""]
        last = b0.phase
        for v in r.variants:
            b = v.blocks[i]
            row += [str(b.per_sample), str(b.runs), str(b.effective), _pct(b.detection_eff), _pct(b.correction_eff)]
        rows.append(row)
    tot = ["Total", str(3 * r.variants[0].samples)]
    for v in r.variants:
        t = v.totals
        tot += [str(v.per_sample), str(t.runs), str(t.effective), _pct(t.detection_eff), _pct(t.correction_eff)]
    rows.append(tot)
    widths = [max(len(x[i]) for x in [head] + rows) for i in range(len(head))]

    def fmt(row):
        return "  ".join(c.rjust(w) if j else c.ljust(w) for j, (c, w) in enumerate(zip(row, widths)))

    lines = [fmt(head), "-" * len(fmt(head))] + [fmt(x) for x in rows]
    lines.append("")
    for v in r.variants:
        t = v.totals
        ms = ", ".join(f"{k}={n}" for k, n in t.measures.items())
        lines.append(
            f"Kyber-{v.variant}: {ms}; false positives {t.false_positives}; "
            f"golden mismatches {t.golden_mismatches}; simulated time {t.sim_time_ns} ns"
        )
        lines.append("  patcher: " + "; ".join(
            f"slot {s['slot_id']} NR={s['nr']} cfi={s['ncfi']} ccc={s['nccc']} R={_risk_str(s['risk'])}"
            + (" *" if s["configured"] else "")
            for s in v.patcher_table
        ))
    return "\n".join(lines) + "\n"


def _risk_str(r: float | None) -> str:
    return "-" if r is None else f"{r:.3f}"


def emit_report(r: Report, fmt: str = "json") -> str:
    if fmt in ("json", "machine"):
        return json.dumps(r.to_dict(), sort_keys=True, indent=2) + "\n"
    if fmt in ("table", "human"):
        return render_table(r)
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(text: str) -> Report:
    return Report.from_dict(json.loads(text))
