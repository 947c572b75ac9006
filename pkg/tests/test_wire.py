import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mecake.harness import World, run_honest_session
from mecake.messages import (
    MessageM1, MessageM2, MessageM3, MessageM4, message_from_dict, message_from_json,
)
from mecake.transcript import EavesdropView

block = st.binary(min_size=32, max_size=32)
ts = st.integers(0, 2**63 - 1)

messages = st.one_of(
    st.builds(MessageM1, rn1_masked=block, b_i=block, d1=block, d2=block, ts_u=ts),
    st.builds(MessageM2, rn1_masked=block, ts_rc=ts, tmid_masked=block, d3=block, d4=block),
    st.builds(MessageM3, ts_ms=ts, rn3_masked=block, d5=block, d6=block),
    st.builds(MessageM4, t4=ts, rn3_masked=block, d6=block, d7=block, d8=block),
)


@given(messages)
def test_json_round_trip(msg):
    assert message_from_json(msg.to_json()) == msg


def test_wire_format_shape():
    m = MessageM1(rn1_masked=b"\xab" * 32, b_i=bytes(32), d1=bytes(32), d2=bytes(32), ts_u=42)
    d = json.loads(m.to_json())
    assert d["type"] == "M1"
    assert d["rn1_masked"] == "ab" * 32
    assert d["ts_u"] == 42
    assert list(d) == ["type", "rn1_masked", "b_i", "d1", "d2", "ts_u"]


def test_bad_records():
    with pytest.raises(ValueError):
        message_from_dict({"type": "M9"})
    m = MessageM3(ts_ms=1, rn3_masked=bytes(32), d5=bytes(32), d6=bytes(32)).to_dict()
    m["d5"] = "00"
    with pytest.raises(ValueError):
        message_from_dict(m)


def test_replace_field():
    m = MessageM4(t4=1, rn3_masked=bytes(32), d6=bytes(32), d7=bytes(32), d8=bytes(32))
    assert m.replace_field("t4", 2).t4 == 2
    with pytest.raises(KeyError):
        m.replace_field("nope", 0)


def test_transcript_jsonl_round_trip():
    w = World.build(seed=3)
    run_honest_session(w, 0, 1)
    run_honest_session(w, 1, 0)
    text = w.transcript.to_jsonl()
    assert len(text.splitlines()) == 8
    back = EavesdropView.from_jsonl(text.splitlines())
    assert back.entries == w.transcript.entries
    assert [e.direction for e in back.flow("s0000")] == [
        "user->rc", "rc->server", "server->rc", "rc->user"]
