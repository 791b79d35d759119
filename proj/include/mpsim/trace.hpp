#pragma once

#include "mpsim/simcore.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace mpsim
{
    enum class TraceEvent : std::uint8_t
    {
        state,
        send,
        recv,
        ack,
        dupack,
        retx,
        rto,
        cwnd,
        ssthresh,
        spurious_eifel,
        spurious_dsack,
        dsack_ss_begin,
        dsack_ss_end,
        sched,
        deliver,
        drop,
        done,
    };

    std::string_view to_string(TraceEvent event);
    std::optional<TraceEvent> trace_event_from_string(std::string_view name);

    // Windows are kept in segments; the CSV renders them in bytes.
    struct TraceRecord
    {
        SimTime time_us = 0;
        std::optional<std::uint32_t> conn_id;
        std::optional<std::uint32_t> subflow_id;
        TraceEvent event = TraceEvent::state;
        std::optional<std::uint64_t> seq;
        std::optional<std::uint64_t> ack;
        std::optional<double> cwnd;
        std::optional<double> ssthresh;
        std::string detail;
    };

    // Collects records in emission order, which is time order because records
    // are only emitted from inside the running event.
    class Tracer
    {
    public:
        explicit Tracer(std::uint32_t mss_bytes = 1400) : mss_(mss_bytes) {}

        void record(TraceRecord rec);

        const std::vector<TraceRecord> &records() const noexcept { return records_; }
        std::uint32_t mss() const noexcept { return mss_; }

        void write_csv(std::ostream &out) const;
        std::string to_csv() const;

    private:
        std::uint32_t mss_;
        std::vector<TraceRecord> records_;
    };

    inline constexpr std::string_view kTraceHeader =
        "time_us,conn_id,subflow_id,event,seq,ack,cwnd_bytes,ssthresh_bytes,detail";

    std::int64_t window_bytes(double segments, std::uint32_t mss);

} // namespace mpsim
