#include "mpsim/reorder.hpp"

#include <algorithm>

namespace mpsim
{
    std::string_view to_string(DetectorKind kind)
    {
        switch (kind)
        {
        case DetectorKind::none:
            return "none";
        case DetectorKind::eifel:
            return "eifel";
        case DetectorKind::dsack:
            return "dsack";
        }
        return "unknown";
    }

    std::optional<DetectorKind> detector_kind_from_string(std::string_view name)
    {
        if (name == "none") return DetectorKind::none;
        if (name == "eifel") return DetectorKind::eifel;
        if (name == "dsack") return DetectorKind::dsack;
        return std::nullopt;
    }

    void ReorderDetector::on_retransmit(double cwnd, double ssthresh, std::uint64_t seq, SimTime ts_val,
                                        SimTime now, std::uint64_t snd_una, Duration verdict_window)
    {
        if (kind_ == DetectorKind::none)
        {
            return;
        }
        if (snapshot_.armed && (snapshot_.retrans_seq >= snd_una || now - snapshot_.taken_at < verdict_window))
        {
            return;
        }
        snapshot_ = Snapshot{cwnd, ssthresh, seq, ts_val, now, true};
    }

    EifelResult ReorderDetector::eifel_on_ack(bool ack_covers_retrans, SimTime echoed_ts)
    {
        if (kind_ != DetectorKind::eifel || !snapshot_.armed || !ack_covers_retrans)
        {
            return {};
        }
        snapshot_.armed = false;
        if (echoed_ts < snapshot_.retrans_ts_val)
        {
            return {Verdict::spurious, snapshot_.saved_cwnd, snapshot_.saved_ssthresh};
        }
        return {Verdict::genuine};
    }

    Verdict ReorderDetector::dsack_on_ack(std::uint64_t cum_ack, std::span<const DsackBlock> blocks, double cwnd)
    {
        if (kind_ != DetectorKind::dsack || blocks.empty())
        {
            return Verdict::inconclusive;
        }
        const auto &first = blocks.front();
        if (first.left >= first.right)
        {
            return Verdict::malformed;
        }
        if (!snapshot_.armed)
        {
            return Verdict::inconclusive;
        }
        const bool is_dsack = first.right <= cum_ack;
        const bool covers = first.left <= snapshot_.retrans_seq && snapshot_.retrans_seq < first.right;
        if (!is_dsack || !covers)
        {
            return Verdict::inconclusive;
        }
        snapshot_.armed = false;
        if (cwnd < snapshot_.saved_cwnd)
        {
            slow_start_ = {true, snapshot_.saved_cwnd};
        }
        return Verdict::spurious;
    }

    DsackGrowth ReorderDetector::dsack_growth_on_ack(double cwnd)
    {
        if (!slow_start_.active)
        {
            return {cwnd, false};
        }
        const double grown = cwnd + 1.0;
        if (grown >= slow_start_.target_cwnd)
        {
            slow_start_.active = false;
            return {slow_start_.target_cwnd, true};
        }
        return {grown, false};
    }

    bool ReorderDetector::abort_slow_start()
    {
        const bool was_active = slow_start_.active;
        slow_start_.active = false;
        return was_active;
    }

} // namespace mpsim
