#include "mpsim/ccontrol.hpp"
#include "mpsim/simcore.hpp"

#include <doctest.h>

#include <array>
#include <vector>

using namespace mpsim;

namespace
{
    double ack(CcAlgorithm alg, std::vector<double> windows, std::size_t r)
    {
        return cc_on_ack(alg, ConnectionWindowView{windows}, r);
    }

    double loss(CcAlgorithm alg, std::vector<double> windows, std::size_t r)
    {
        return cc_on_loss(alg, ConnectionWindowView{windows}, r);
    }

    constexpr std::array kAllKinds = {CcKind::uncoupled, CcKind::fully_coupled, CcKind::linked_increases,
                                      CcKind::rtt_compensator};
} // namespace

TEST_CASE("increase rules on worked states")
{
    CHECK(ack({CcKind::fully_coupled}, {10, 10}, 0) == doctest::Approx(10.05).epsilon(1e-12));
    CHECK(ack({CcKind::linked_increases, 1.0}, {5, 5}, 0) == doctest::Approx(5.1).epsilon(1e-12));
    CHECK(ack({CcKind::rtt_compensator, 2.0}, {5, 5}, 0) == doctest::Approx(5.1).epsilon(1e-12));
    CHECK(ack({CcKind::uncoupled}, {8, 100}, 0) == doctest::Approx(8.125).epsilon(1e-12));
}

TEST_CASE("decrease rules on worked states")
{
    CHECK(loss({CcKind::fully_coupled}, {12, 8}, 0) == 2.0);
    CHECK(loss({CcKind::fully_coupled}, {4, 16}, 0) == 1.0);
    CHECK(loss({CcKind::linked_increases}, {9, 3}, 0) == 4.5);
    CHECK(loss({CcKind::uncoupled}, {1.5}, 0) == 1.0);
    CHECK(loss({CcKind::rtt_compensator}, {7, 7}, 1) == 3.5);
}

TEST_CASE("per-path second term of the RTT compensator")
{
    CcAlgorithm alg{CcKind::rtt_compensator, 10.0, RttcSecondTerm::per_path};
    // min(10/10, 1/4) = 0.25
    CHECK(ack(alg, {4, 6}, 0) == doctest::Approx(4.25));
    alg.rttc_second_term = RttcSecondTerm::total;
    // min(10/10, 1/10) = 0.1
    CHECK(ack(alg, {4, 6}, 0) == doctest::Approx(4.1));
}

TEST_CASE("every rule reduces to single-path TCP with one subflow")
{
    Rng rng(42);
    for (auto kind : kAllKinds)
    {
        for (int i = 0; i < 200; ++i)
        {
            const double w = 1.0 + rng.uniform() * 200.0;
            const CcAlgorithm alg{kind, 1.0};
            CHECK(ack(alg, {w}, 0) == w + 1.0 / w);
            CHECK(loss(alg, {w}, 0) == std::max(w / 2.0, 1.0));
        }
    }
}

TEST_CASE("coupled increases never exceed the uncoupled increase")
{
    Rng rng(7);
    for (int i = 0; i < 1000; ++i)
    {
        std::vector<double> windows(2 + rng.next_u64() % 4);
        for (auto &w : windows)
        {
            w = 1.0 + rng.uniform() * 100.0;
        }
        const std::size_t r = rng.next_u64() % windows.size();
        const double uncoupled = ack({CcKind::uncoupled}, windows, r);
        CHECK(ack({CcKind::fully_coupled}, windows, r) <= uncoupled);
        CHECK(ack({CcKind::linked_increases, 1.0}, windows, r) <= uncoupled);
        CHECK(ack({CcKind::rtt_compensator, 1.0 + rng.uniform() * 4.0}, windows, r) <= uncoupled);
        // The RTT compensator is never more aggressive than fully coupled.
        CHECK(ack({CcKind::rtt_compensator, rng.uniform() * 10.0}, windows, r) <=
              ack({CcKind::fully_coupled}, windows, r));
    }
}

TEST_CASE("windows stay at least one segment after a loss")
{
    Rng rng(9);
    for (auto kind : kAllKinds)
    {
        for (int i = 0; i < 500; ++i)
        {
            std::vector<double> windows{1.0 + rng.uniform() * 50.0, 1.0 + rng.uniform() * 50.0};
            CHECK(loss({kind}, windows, i % 2) >= 1.0);
            CHECK(ack({kind}, windows, i % 2) > windows[i % 2]);
        }
    }
}

TEST_CASE("algorithm names parse both ways")
{
    for (auto kind : kAllKinds)
    {
        CHECK(cc_kind_from_string(to_string(kind)) == kind);
    }
    CHECK_FALSE(cc_kind_from_string("reno").has_value());
    CHECK(rttc_second_term_from_string("per_path") == RttcSecondTerm::per_path);
    CHECK_FALSE(rttc_second_term_from_string("both").has_value());
}
