import binascii

import pytest

import mpsim


def test_default_config_and_run():
    cfg = mpsim.parse_config("file_size = 100000\n")
    assert cfg.links == 2
    assert cfg.cc == "linked_increases"
    result = mpsim.run_scenario(cfg)
    assert result["exit_code"] == 0
    assert result["completed"]
    assert result["sink_checksum"] == result["source_checksum"]
    assert len(result["subflows"]) == 2
    assert result["summary"].startswith("finish_time_s=")


def test_config_error_names_key_and_line():
    with pytest.raises(mpsim.ConfigError, match="line 2: loss_rate"):
        mpsim.parse_config("[link.0]\nloss_rate = 1.5\n")


def test_link_view():
    cfg = mpsim.parse_config("[link.0]\ndelay_schedule = 0:10ms,2s:150ms\n")
    assert cfg.link(0)["delay_schedule_us"] == [(0, 10000), (2000000, 150000)]
    with pytest.raises(IndexError):
        cfg.link(5)


def test_cc_rules():
    assert mpsim.cc_on_ack("fully_coupled", [10, 10], 0) == pytest.approx(10.05)
    assert mpsim.cc_on_ack("linked_increases", [5, 5], 0, a=1.0) == pytest.approx(5.1)
    assert mpsim.cc_on_ack("rtt_compensator", [5, 5], 0, a=2.0) == pytest.approx(5.1)
    assert mpsim.cc_on_ack("uncoupled", [8, 12], 0) == pytest.approx(8.125)
    assert mpsim.cc_on_loss("fully_coupled", [12, 8], 0) == 2.0
    assert mpsim.cc_on_loss("fully_coupled", [4, 16], 0) == 1.0
    assert mpsim.cc_on_loss("linked_increases", [9, 1], 0) == 4.5


def test_wire_roundtrip_and_malformed():
    wire, equal, dsn = mpsim.roundtrip_data_segment(1000, 500, b"x" * 1400)
    assert equal and dsn == 1000
    assert mpsim.decode_check(wire)
    with pytest.raises(mpsim.MalformedSegment):
        mpsim.decode_check(b"\x01\x02\x03")


def test_pattern_checksum_matches_zlib_crc32():
    data = bytes(i % 256 for i in range(5000))
    assert mpsim.pattern_checksum(5000) == binascii.crc32(data)


def test_trace_csv_interface():
    cfg = mpsim.parse_config("file_size = 30000\nreorder = eifel\n")
    result = mpsim.run_scenario(cfg)
    text = result["trace_csv"]
    assert text.splitlines()[0] == mpsim.TRACE_HEADER
    rows = mpsim.read_trace(text)
    assert rows[-1]["event"] == "DONE"
    times = [r["time_us"] for r in rows]
    assert times == sorted(times)
    cwnd_rows = [r for r in rows if r["event"] == "CWND"]
    assert cwnd_rows and all(r["cwnd_bytes"] is not None for r in cwnd_rows)
    assert {r["subflow_id"] for r in cwnd_rows} == {0, 1}


def test_determinism_and_fallback():
    cfg = mpsim.parse_config("file_size = 50000\n[link.0]\n[link.1]\nloss_rate = 0.02\n")
    assert mpsim.run_scenario(cfg)["trace_csv"] == mpsim.run_scenario(cfg)["trace_csv"]
    fallback = mpsim.run_scenario(cfg, server_mp_capable=False)
    assert fallback["fallback"] and len(fallback["subflows"]) == 1
