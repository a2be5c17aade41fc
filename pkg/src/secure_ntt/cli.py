"""Command line: ``secure-ntt {run,ntt,inject,report}``."""

from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import replace

from .campaign import CampaignConfig, ConfigError, emit_report, parse_report, parse_thresholds, parse_weights, run_campaign
from .correction import Corrector, CorrectionError
from .injector import FaultPlan, InjectorError, StuckMode, attacked, pattern_str, word_for
from .masking import MaskMode
from .monitors import MonitorSet
from .ntt import NttError, NttParams, intt_behavioral, ntt_behavioral, to_natural_order
from .pipeline import run

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2


def _campaign_args(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="JSON config file; flags override its keys")
    sp.add_argument("--variant", action="append", choices=["512", "768", "1024"],
                    help="Kyber variant (repeatable; default all three)")
    sp.add_argument("--samples", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--slots", type=int)
    sp.add_argument("--thresholds", help="fidelity (256/512), scaled (8/16), or cfi_reld,cfi_relc,ccc_reld,ccc_relc")
    sp.add_argument("--weights", help="w_cfi,w_ccc")
    sp.add_argument("--stuck", choices=["0", "1", "both"])
    sp.add_argument("--mask", choices=[m.value for m in MaskMode])
    sp.add_argument("--rate", type=float, help="injection probability per NTT run")
    sp.add_argument("--out", help="write the report here instead of stdout")
    sp.add_argument("--format", choices=["json", "table"], default="json")
    sp.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="secure-ntt", description="Secure NTT pipeline simulator and fault campaigns")
    sub = ap.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("run", help="run a seeded fault-injection campaign")
    _campaign_args(sp)

    sp = sub.add_parser("ntt", help="transform one polynomial")
    sp.add_argument("--n", type=int, default=256)
    sp.add_argument("--q", type=int, default=3329)
    sp.add_argument("--input", help="comma-separated coefficients (default: random)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mode", choices=["golden", "pipeline"], default="pipeline")
    sp.add_argument("--mask", choices=[m.value for m in MaskMode], default="off")
    sp.add_argument("--order", choices=["raw", "natural"], default="raw")
    sp.add_argument("--inverse", action="store_true", help="apply the golden inverse instead")

    sp = sub.add_parser("inject", help="one run with a single Trojan activation")
    sp.add_argument("--n", type=int, default=256)
    sp.add_argument("--q", type=int, default=3329)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--signal", action="append", help="attacked signal name (repeatable)")
    g.add_argument("--r-s", type=int, dest="r_s", help="raw 10-bit pattern R_s")
    sp.add_argument("--cycle", type=int, required=True, help="R_t, clock counted from activation")
    sp.add_argument("--stuck", choices=["0", "1"], default="0")
    sp.add_argument("--input", help="comma-separated coefficients (default: random)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mask", choices=[m.value for m in MaskMode], default="off")
    sp.add_argument("--no-correct", action="store_true")
    sp.add_argument("--full-trace", action="store_true")

    sp = sub.add_parser("report", help="re-render a saved report")
    sp.add_argument("path")
    sp.add_argument("--format", choices=["json", "table"], default="table")
    return ap


def load_config(args: argparse.Namespace) -> CampaignConfig:
    d: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError("config", str(e)) from None
        if not isinstance(d, dict):
            raise ConfigError("config", "top level must be an object")
    cfg = CampaignConfig.from_dict(d)
    over: dict = {}
    if args.variant:
        over["variants"] = tuple(int(v) for v in args.variant)
    for key in ("samples", "seed", "stuck", "mask", "rate"):
        v = getattr(args, key)
        if v is not None:
            over[key] = v
    if args.slots is not None:
        over["m"] = args.slots
    if args.thresholds:
        over["thresholds"] = parse_thresholds(args.thresholds)
    if args.weights:
        over["weights"] = parse_weights(args.weights)
    return replace(cfg, **over).validate()


def _write(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    cfg = load_config(args)

    def progress(variant, done, total):
        if not args.quiet:
            print(f"Kyber-{variant}: sample {done}/{total}", file=sys.stderr)

    rep = run_campaign(cfg, progress)
    _write(emit_report(rep, args.format), args.out)
    if rep.golden_mismatches:
        print(f"error: {rep.golden_mismatches} run(s) differ from the golden model", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _params(args) -> NttParams:
    try:
        return NttParams.create(args.n, args.q)
    except NttError as e:
        raise ConfigError("n", str(e)) from None


def _poly(args, p: NttParams) -> list[int]:
    if args.input:
        try:
            return [int(x) for x in args.input.split(",")]
        except ValueError:
            raise ConfigError("input", "coefficients must be integers") from None
    rng = random.Random(args.seed)
    return [rng.randrange(p.q) for _ in range(p.n)]


def cmd_ntt(args) -> int:
    p = _params(args)
    a = _poly(args, p)
    try:
        if args.inverse:
            out, cycles = intt_behavioral(a, p), None
        elif args.mode == "golden":
            out, cycles = ntt_behavioral(a, p), None
        else:
            o = run(a, p, monitors=MonitorSet(), mask=args.mask, seed=args.seed)
            out, cycles = o.output, o.cycles
    except NttError as e:
        raise ConfigError("input", str(e)) from None
    if args.order == "natural" and not args.inverse:
        out = to_natural_order(out, p)
    doc = {"n": p.n, "q": p.q, "omega": p.omega, "order": args.order, "output": out}
    if cycles is not None:
        doc["cycles"] = cycles
    print(json.dumps(doc))
    return EXIT_OK


def cmd_inject(args) -> int:
    p = _params(args)
    a = _poly(args, p)
    try:
        r_s = word_for(args.signal) if args.signal else args.r_s
        plan = FaultPlan(args.cycle, r_s, StuckMode.parse(args.stuck))
    except InjectorError as e:
        raise ConfigError("signal", str(e)) from None
    corr = None if args.no_correct else Corrector()
    golden = ntt_behavioral(a, p)
    o = run(a, p, plan, MonitorSet(), corr, mask=args.mask, seed=args.seed, debug=args.full_trace, golden=golden)
    print(f"plan: R_t={plan.r_t} F_r={pattern_str(plan.f_r)} {plan.mode.value} on {', '.join(attacked(plan.f_r)) or '-'}")
    print("cycle  csr   rsr   signals     gated")
    for row in o.trace:
        print(f"{row.cycle:5d}  {row.csr:04b}  {row.rsr:04b}  {row.observed:010b}  {'*' if row.nominal != row.observed else ''}")
    print("flags:", json.dumps(o.flags.to_dict(), sort_keys=True))
    for c, e in o.events:
        print(f"  [{c}] {e}")
    for m in o.measures:
        print(f"measure: {m.kind.value} cost {m.cost_ns} ns")
    print(f"cycles {o.cycles}  simulated {o.sim_time_ns} ns  golden {'equal' if o.golden_equal else 'DIFFERENT'}")
    return EXIT_OK if o.golden_equal or args.no_correct else EXIT_INVARIANT


def cmd_report(args) -> int:
    try:
        with open(args.path, encoding="utf-8") as fh:
            rep = parse_report(fh.read())
    except (OSError, ValueError, KeyError) as e:
        raise ConfigError("path", f"cannot read report: {e}") from None
    sys.stdout.write(emit_report(rep, args.format))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "ntt": cmd_ntt, "inject": cmd_inject, "report": cmd_report}[args.cmd]
    try:
        return handler(args)
    except (ConfigError, CorrectionError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
