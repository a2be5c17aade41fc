"""Cycle-accurate Secure NTT with fault monitors, masking and adaptive correction."""

from .campaign import CampaignConfig, KyberProfile, Report, emit_report, kyber_profile, parse_report, run_campaign
from .correction import (
    Corrector,
    Latencies,
    Measure,
    MeasureKind,
    PatcherTable,
    SlotRecord,
    Thresholds,
    choose_measure,
    risk,
    select_slot,
)
from .injector import DelayPlan, FaultPlan, Persistence, StuckMode
from .masking import MaskMode
from .monitors import MonitorSet
from .ntt import KYBER, NttParams, intt_behavioral, ntt_behavioral
from .pipeline import RunOutcome, SecureNtt, run

__version__ = "0.1.0"

__all__ = [
    "CampaignConfig", "KyberProfile", "Report", "emit_report", "kyber_profile", "parse_report", "run_campaign",
    "Corrector", "Latencies", "Measure", "MeasureKind", "PatcherTable", "SlotRecord", "Thresholds",
    "choose_measure", "risk", "select_slot",
    "DelayPlan", "FaultPlan", "Persistence", "StuckMode", "MaskMode", "MonitorSet",
    "KYBER", "NttParams", "intt_behavioral", "ntt_behavioral",
    "RunOutcome", "SecureNtt", "run",
]
