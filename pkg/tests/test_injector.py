import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from secure_ntt.injector import (
    DelayPlan,
    FaultPlan,
    InjectorError,
    Persistence,
    StuckMode,
    attacked,
    encode_pattern,
    gate,
    gate_word,
    is_effective,
    pattern_str,
    word_for,
)
from secure_ntt.signals import ALL, ControlSignalVector, golden_words

TRACE = golden_words(1024)


def test_encode_examples():
    assert pattern_str(encode_pattern(766)) == "1011111110"
    assert pattern_str(encode_pattern(1023)) == "1111111111"
    assert pattern_str(encode_pattern(0)) == "0000000000"
    assert attacked(766) == ["rd_en", "uv_rst"]
    with pytest.raises(InjectorError):
        encode_pattern(1024)


def test_gate_examples():
    s = ControlSignalVector(rd_en=True, wr_en=False)
    assert gate(s, ALL, "stuck-at-0") == s
    assert gate(s, word_for(["rd_en"]), StuckMode.SA0).rd_en is False
    assert gate(s, word_for(["wr_en"]), StuckMode.SA1).wr_en is True
    assert gate(s, 0, StuckMode.SA0, active=False) == s


@given(st.integers(0, ALL), st.integers(0, ALL), st.sampled_from(list(StuckMode)))
def test_gate_properties(sig, f_r, mode):
    g = gate_word(sig, f_r, mode)
    assert gate_word(sig, ALL, mode) == sig
    assert (g & f_r) == (sig & f_r)  # untouched bits unchanged
    assert gate_word(g, f_r, mode) == g
    assert 0 <= g <= ALL


def test_is_effective_examples():
    assert is_effective(FaultPlan.on("rd_en", 500), TRACE)
    small = golden_words(12)  # rd_en is low over the drain, cycles 12..15
    assert not is_effective(FaultPlan.on("rd_en", 13), small)
    assert is_effective(FaultPlan.on("rd_en", 13, "1"), small)
    with pytest.raises(InjectorError):
        is_effective(FaultPlan.on("rd_en", 16), small)
    for c in (0, 500, 1023):
        assert not is_effective(FaultPlan(c, ALL, StuckMode.SA0), TRACE)
        assert not is_effective(FaultPlan(c, ALL, StuckMode.SA1), TRACE)


def test_is_effective_permanent():
    late = FaultPlan.on("ctrl_rst", 1000, "0", persistence=Persistence.PERMANENT)
    assert not is_effective(late, TRACE)
    assert is_effective(FaultPlan.on("rd_en", 1000, "0", persistence="permanent-from-cycle"), TRACE)


def test_plan_validation_and_draw():
    with pytest.raises(InjectorError):
        FaultPlan(1024, 0)
    with pytest.raises(InjectorError):
        FaultPlan(0, -1)
    with pytest.raises(InjectorError):
        word_for(["nope"])
    with pytest.raises(InjectorError):
        StuckMode.parse("2")
    with pytest.raises(InjectorError):
        DelayPlan(-1)
    r1, r2 = random.Random(5), random.Random(5)
    assert FaultPlan.draw(r1, StuckMode.SA1) == FaultPlan.draw(r2, StuckMode.SA1)
    d = FaultPlan(3, 766, "1").to_dict()
    assert d["f_r"] == "1011111110" and d["mode"] == "stuck-at-1"
