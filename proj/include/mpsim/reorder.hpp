#pragma once

#include "mpsim/simcore.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

namespace mpsim
{
    enum class DetectorKind
    {
        none,
        eifel,
        dsack,
    };

    std::string_view to_string(DetectorKind kind);
    std::optional<DetectorKind> detector_kind_from_string(std::string_view name);

    // Sender state saved just before a retransmission reduces the window.
    // Sequence numbers are byte offsets in the subflow's sequence space.
    struct Snapshot
    {
        double saved_cwnd = 0.0;
        double saved_ssthresh = 0.0;
        std::uint64_t retrans_seq = 0;
        SimTime retrans_ts_val = 0;
        SimTime taken_at = 0;
        bool armed = false;
    };

    struct DsackSlowStartState
    {
        bool active = false;
        double target_cwnd = 0.0;
    };

    enum class Verdict
    {
        inconclusive,
        spurious,
        genuine,
        malformed,
    };

    struct EifelResult
    {
        Verdict verdict = Verdict::inconclusive;
        // Valid when verdict == spurious.
        double cwnd = 0.0;
        double ssthresh = 0.0;
    };

    struct DsackBlock
    {
        std::uint64_t left = 0;
        std::uint64_t right = 0;
    };

    struct DsackGrowth
    {
        double cwnd = 0.0;
        bool ended = false;
    };

    // Spurious retransmission detection for one sending subflow. A single
    // snapshot is kept; it covers the oldest retransmission that is still
    // outstanding.
    class ReorderDetector
    {
    public:
        explicit ReorderDetector(DetectorKind kind = DetectorKind::none) : kind_(kind) {}

        DetectorKind kind() const noexcept { return kind_; }
        const Snapshot &snapshot() const noexcept { return snapshot_; }
        const DsackSlowStartState &slow_start() const noexcept { return slow_start_; }

        // Called with the pre-reduction window. An armed snapshot is kept
        // while its sequence is still outstanding (seq >= snd_una) or while it
        // is younger than `verdict_window`, the time a DSACK for it may take.
        void on_retransmit(double cwnd, double ssthresh, std::uint64_t seq, SimTime ts_val, SimTime now,
                           std::uint64_t snd_una, Duration verdict_window = 0);

        // Eifel: an ACK covering the retransmitted sequence echoes a timestamp
        // older than the retransmission's own timestamp => spurious.
        EifelResult eifel_on_ack(bool ack_covers_retrans, SimTime echoed_ts);

        // DSACK: a first SACK block entirely below the cumulative ACK that
        // covers the retransmitted sequence => spurious, slow start armed
        // towards the saved window if `cwnd` is below it.
        Verdict dsack_on_ack(std::uint64_t cum_ack, std::span<const DsackBlock> blocks, double cwnd);

        // +1 segment per ACK while the DSACK slow start is active, clamped to
        // the target; the phase ends once the target is reached.
        DsackGrowth dsack_growth_on_ack(double cwnd);

        // A loss event cancels a running DSACK slow start.
        bool abort_slow_start();

    private:
        DetectorKind kind_;
        Snapshot snapshot_;
        DsackSlowStartState slow_start_;
    };

} // namespace mpsim
