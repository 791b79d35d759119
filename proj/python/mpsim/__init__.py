"""Deterministic multipath TCP simulator."""

import csv
import io

from ._mpsim import (
    TRACE_HEADER,
    ConfigError,
    InvariantBreach,
    MalformedSegment,
    ScenarioConfig,
    cc_on_ack,
    cc_on_loss,
    decode_check,
    load_config,
    parse_config,
    pattern_checksum,
    roundtrip_data_segment,
    run_scenario,
)

__all__ = [
    "TRACE_HEADER",
    "ConfigError",
    "InvariantBreach",
    "MalformedSegment",
    "ScenarioConfig",
    "cc_on_ack",
    "cc_on_loss",
    "decode_check",
    "load_config",
    "parse_config",
    "pattern_checksum",
    "roundtrip_data_segment",
    "run_scenario",
    "read_trace",
]


def read_trace(text):
    """Parse trace CSV text into a list of dicts with typed numeric columns."""
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        for key in ("time_us", "conn_id", "subflow_id", "seq", "ack", "cwnd_bytes", "ssthresh_bytes"):
            row[key] = int(row[key]) if row[key] != "" else None
        rows.append(row)
    return rows
