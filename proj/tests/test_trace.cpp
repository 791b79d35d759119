#include "mpsim/errors.hpp"
#include "mpsim/trace.hpp"

#include <doctest.h>

#include <sstream>
#include <string>
#include <vector>

using namespace mpsim;

namespace
{
    std::vector<std::string> split(const std::string &s, char sep)
    {
        std::vector<std::string> out;
        std::string cur;
        std::istringstream in(s);
        while (std::getline(in, cur, sep))
        {
            out.push_back(cur);
        }
        return out;
    }
} // namespace

TEST_CASE("CSV rendering")
{
    Tracer t(1400);
    TraceRecord a;
    a.time_us = 5;
    a.conn_id = 0;
    a.subflow_id = 1;
    a.event = TraceEvent::cwnd;
    a.cwnd = 2.5;
    a.ssthresh = 10;
    a.detail = "ss";
    t.record(a);
    TraceRecord b;
    b.time_us = 7;
    b.event = TraceEvent::done;
    b.detail = "a,b";
    t.record(b);

    const auto lines = split(t.to_csv(), '\n');
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == kTraceHeader);
    CHECK(lines[1] == "5,0,1,CWND,,,3500,14000,ss");
    CHECK(lines[2] == "7,,,DONE,,,,,a;b");
}

TEST_CASE("records must be in time order")
{
    Tracer t;
    TraceRecord r;
    r.time_us = 10;
    t.record(r);
    r.time_us = 9;
    CHECK_THROWS_AS(t.record(r), InvariantBreach);
}

TEST_CASE("CWND rows need a window")
{
    Tracer t;
    TraceRecord r;
    r.event = TraceEvent::cwnd;
    CHECK_THROWS_AS(t.record(r), InvariantBreach);
}

TEST_CASE("event names roundtrip")
{
    for (int i = 0; i <= static_cast<int>(TraceEvent::done); ++i)
    {
        const auto e = static_cast<TraceEvent>(i);
        CHECK(trace_event_from_string(to_string(e)) == e);
    }
    CHECK_FALSE(trace_event_from_string("BOGUS").has_value());
}

TEST_CASE("window bytes round to nearest")
{
    CHECK(window_bytes(1.0, 1400) == 1400);
    CHECK(window_bytes(9.636, 1400) == 13490);
    CHECK(window_bytes(2.5, 1000) == 2500);
}
