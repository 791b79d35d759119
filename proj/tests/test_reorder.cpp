#include "mpsim/reorder.hpp"

#include <doctest.h>

#include <vector>

using namespace mpsim;

TEST_CASE("Eifel snapshot stores the pre-reduction window")
{
    ReorderDetector det(DetectorKind::eifel);
    det.on_retransmit(20, 10, 1400, 100'000, 100'000, 1400);
    const auto &snap = det.snapshot();
    CHECK(snap.armed);
    CHECK(snap.saved_cwnd == 20);
    CHECK(snap.saved_ssthresh == 10);
    CHECK(snap.retrans_seq == 1400);
    CHECK(snap.retrans_ts_val == 100'000);
}

TEST_CASE("the null detector keeps no snapshot")
{
    ReorderDetector det(DetectorKind::none);
    det.on_retransmit(20, 10, 1400, 100'000, 100'000, 1400);
    CHECK_FALSE(det.snapshot().armed);
    CHECK(det.eifel_on_ack(true, 1).verdict == Verdict::inconclusive);
    const std::vector<DsackBlock> blocks{{1400, 2800}};
    CHECK(det.dsack_on_ack(5600, blocks, 1) == Verdict::inconclusive);
}

TEST_CASE("Eifel verdicts")
{
    SUBCASE("older echo is spurious and restores")
    {
        ReorderDetector det(DetectorKind::eifel);
        det.on_retransmit(20, 10, 1400, 100'000, 100'000, 1400);
        const auto result = det.eifel_on_ack(true, 95'000);
        CHECK(result.verdict == Verdict::spurious);
        CHECK(result.cwnd == 20);
        CHECK(result.ssthresh == 10);
        CHECK_FALSE(det.snapshot().armed);
    }
    SUBCASE("echo of the retransmission itself is genuine")
    {
        ReorderDetector det(DetectorKind::eifel);
        det.on_retransmit(20, 10, 1400, 100'000, 100'000, 1400);
        CHECK(det.eifel_on_ack(true, 100'000).verdict == Verdict::genuine);
    }
    SUBCASE("unarmed detector is inconclusive")
    {
        ReorderDetector det(DetectorKind::eifel);
        CHECK(det.eifel_on_ack(true, 1).verdict == Verdict::inconclusive);
    }
    SUBCASE("ACK below the retransmission is inconclusive and keeps the snapshot")
    {
        ReorderDetector det(DetectorKind::eifel);
        det.on_retransmit(20, 10, 1400, 100'000, 100'000, 1400);
        CHECK(det.eifel_on_ack(false, 1).verdict == Verdict::inconclusive);
        CHECK(det.snapshot().armed);
    }
}

TEST_CASE("DSACK verdicts")
{
    SUBCASE("first block below the cumulative ACK covering the retransmission")
    {
        ReorderDetector det(DetectorKind::dsack);
        det.on_retransmit(20, 10, 1400, 100'000, 100'000, 1400);
        const std::vector<DsackBlock> blocks{{1400, 2800}};
        CHECK(det.dsack_on_ack(5600, blocks, 1.0) == Verdict::spurious);
        CHECK(det.slow_start().active);
        CHECK(det.slow_start().target_cwnd == 20);
    }
    SUBCASE("block above the cumulative ACK is an ordinary SACK")
    {
        ReorderDetector det(DetectorKind::dsack);
        det.on_retransmit(20, 10, 1400, 100'000, 100'000, 1400);
        const std::vector<DsackBlock> blocks{{5600, 7000}};
        CHECK(det.dsack_on_ack(5600, blocks, 1.0) == Verdict::inconclusive);
        CHECK(det.snapshot().armed);
        CHECK_FALSE(det.slow_start().active);
    }
    SUBCASE("DSACK for another sequence")
    {
        ReorderDetector det(DetectorKind::dsack);
        det.on_retransmit(20, 10, 1400, 100'000, 100'000, 1400);
        const std::vector<DsackBlock> blocks{{2800, 4200}};
        CHECK(det.dsack_on_ack(5600, blocks, 1.0) == Verdict::inconclusive);
    }
    SUBCASE("malformed first block")
    {
        ReorderDetector det(DetectorKind::dsack);
        det.on_retransmit(20, 10, 1400, 100'000, 100'000, 1400);
        const std::vector<DsackBlock> blocks{{2800, 2800}};
        CHECK(det.dsack_on_ack(5600, blocks, 1.0) == Verdict::malformed);
    }
    SUBCASE("no slow start when the window already recovered")
    {
        ReorderDetector det(DetectorKind::dsack);
        det.on_retransmit(20, 10, 1400, 100'000, 100'000, 1400);
        const std::vector<DsackBlock> blocks{{1400, 2800}};
        CHECK(det.dsack_on_ack(5600, blocks, 25.0) == Verdict::spurious);
        CHECK_FALSE(det.slow_start().active);
    }
}

TEST_CASE("DSACK slow start growth")
{
    ReorderDetector det(DetectorKind::dsack);
    CHECK(det.dsack_growth_on_ack(7.0).cwnd == 7.0);
    CHECK_FALSE(det.dsack_growth_on_ack(7.0).ended);

    det.on_retransmit(20, 10, 0, 1, 1, 0);
    const std::vector<DsackBlock> blocks{{0, 1400}};
    REQUIRE(det.dsack_on_ack(1400, blocks, 2.0) == Verdict::spurious);
    auto g = det.dsack_growth_on_ack(2.0);
    CHECK(g.cwnd == 3.0);
    CHECK_FALSE(g.ended);
    g = det.dsack_growth_on_ack(19.5);
    CHECK(g.cwnd == 20.0);
    CHECK(g.ended);
    CHECK_FALSE(det.slow_start().active);
}

TEST_CASE("a loss aborts the DSACK slow start")
{
    ReorderDetector det(DetectorKind::dsack);
    det.on_retransmit(20, 10, 0, 1, 1, 0);
    const std::vector<DsackBlock> blocks{{0, 1400}};
    REQUIRE(det.dsack_on_ack(1400, blocks, 2.0) == Verdict::spurious);
    CHECK(det.abort_slow_start());
    CHECK_FALSE(det.abort_slow_start());
    CHECK(det.dsack_growth_on_ack(4.0).cwnd == 4.0);
}

TEST_CASE("a second retransmission keeps the oldest outstanding snapshot")
{
    ReorderDetector det(DetectorKind::eifel);
    det.on_retransmit(20, 10, 1400, 100'000, 100'000, 1400);
    det.on_retransmit(1, 10, 2800, 300'000, 300'000, 1400);
    CHECK(det.snapshot().saved_cwnd == 20);
    CHECK(det.snapshot().retrans_seq == 1400);
}

TEST_CASE("snapshot is replaced once its sequence is acked and the verdict window passed")
{
    ReorderDetector det(DetectorKind::dsack);
    det.on_retransmit(20, 10, 1400, 100'000, 100'000, 1400, 400'000);
    // Sequence acked, still inside the verdict window.
    det.on_retransmit(8, 4, 5600, 300'000, 300'000, 5600, 400'000);
    CHECK(det.snapshot().retrans_seq == 1400);
    // Past the window.
    det.on_retransmit(8, 4, 5600, 600'000, 600'000, 5600, 400'000);
    CHECK(det.snapshot().retrans_seq == 5600);
    CHECK(det.snapshot().saved_cwnd == 8);
}

TEST_CASE("detector names parse both ways")
{
    for (auto kind : {DetectorKind::none, DetectorKind::eifel, DetectorKind::dsack})
    {
        CHECK(detector_kind_from_string(to_string(kind)) == kind);
    }
    CHECK_FALSE(detector_kind_from_string("f-rto").has_value());
}
