#include "mpsim/trace.hpp"

#include "mpsim/errors.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace mpsim
{
    namespace
    {
        constexpr std::array<std::string_view, 17> kNames = {
            "STATE", "SEND", "RECV", "ACK", "DUPACK", "RETX", "RTO", "CWND", "SSTHRESH",
            "SPURIOUS_EIFEL", "SPURIOUS_DSACK", "DSACK_SS_BEGIN", "DSACK_SS_END", "SCHED",
            "DELIVER", "DROP", "DONE",
        };

        template <typename T>
        void put_optional(std::ostream &out, const std::optional<T> &value)
        {
            if (value)
            {
                out << *value;
            }
        }
    } // namespace

    std::string_view to_string(TraceEvent event)
    {
        return kNames.at(static_cast<std::size_t>(event));
    }

    std::optional<TraceEvent> trace_event_from_string(std::string_view name)
    {
        for (std::size_t i = 0; i < kNames.size(); ++i)
        {
            if (kNames[i] == name)
            {
                return static_cast<TraceEvent>(i);
            }
        }
        return std::nullopt;
    }

    std::int64_t window_bytes(double segments, std::uint32_t mss)
    {
        return std::llround(segments * mss);
    }

    void Tracer::record(TraceRecord rec)
    {
        if (!records_.empty() && rec.time_us < records_.back().time_us)
        {
            throw InvariantBreach("trace records out of time order");
        }
        if (rec.event == TraceEvent::cwnd && !rec.cwnd)
        {
            throw InvariantBreach("CWND trace record without a window value");
        }
        for (char &c : rec.detail)
        {
            if (c == ',' || c == '\n' || c == '\r')
            {
                c = ';';
            }
        }
        records_.push_back(std::move(rec));
    }

    void Tracer::write_csv(std::ostream &out) const
    {
        out << kTraceHeader << '\n';
        for (const auto &r : records_)
        {
            out << r.time_us << ',';
            put_optional(out, r.conn_id);
            out << ',';
            put_optional(out, r.subflow_id);
            out << ',' << to_string(r.event) << ',';
            put_optional(out, r.seq);
            out << ',';
            put_optional(out, r.ack);
            out << ',';
            if (r.cwnd)
            {
                out << window_bytes(*r.cwnd, mss_);
            }
            out << ',';
            if (r.ssthresh)
            {
                out << window_bytes(*r.ssthresh, mss_);
            }
            out << ',' << r.detail << '\n';
        }
    }

    std::string Tracer::to_csv() const
    {
        std::ostringstream out;
        write_csv(out);
        return out.str();
    }

} // namespace mpsim
