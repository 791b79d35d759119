#include "mpsim/errors.hpp"
#include "mpsim/netmodel.hpp"

#include <doctest.h>

#include <stdexcept>

using namespace mpsim;

namespace
{
    const Address kA{0, 0};
    const Address kB{1, 0};
} // namespace

TEST_CASE("serialization time rounds up")
{
    CHECK(serialization_time(1440, 500'000) == 23'040);
    CHECK(serialization_time(1, 3) == 2'666'667);
}

TEST_CASE("idle link delivers after serialization plus delay")
{
    Link link(kA, kB, LinkParams{});
    Rng rng(1);
    auto t = link.transmit(0, 1440, 0, rng);
    REQUIRE(t);
    CHECK(*t == 33'040);
    auto later = link.transmit(0, 1440, 1'000'000, rng);
    REQUIRE(later);
    CHECK(*later == 1'033'040);
}

TEST_CASE("back-to-back packets queue behind each other")
{
    Link link(kA, kB, LinkParams{});
    Rng rng(1);
    CHECK(*link.transmit(0, 1440, 0, rng) == 33'040);
    CHECK(*link.transmit(0, 1440, 0, rng) == 56'080);
    // The reverse direction has its own queue.
    CHECK(*link.transmit(1, 1440, 0, rng) == 33'040);
}

TEST_CASE("loss rate zero never drops, one always drops")
{
    Rng rng(3);
    Link clean(kA, kB, LinkParams{});
    LinkParams lossy_params;
    lossy_params.loss_rate = 1.0;
    Link lossy(kA, kB, lossy_params);
    for (int i = 0; i < 2000; ++i)
    {
        CHECK(clean.transmit(0, 100, static_cast<SimTime>(i) * 10'000, rng).has_value());
        CHECK_FALSE(lossy.transmit(0, 100, static_cast<SimTime>(i) * 10'000, rng).has_value());
    }
    CHECK(clean.dropped(0) == 0);
    CHECK(lossy.dropped(0) == 2000);
}

TEST_CASE("every transmit draws exactly one uniform")
{
    Rng rng(11);
    Rng mirror(11);
    Link link(kA, kB, LinkParams{});
    for (int i = 0; i < 10; ++i)
    {
        link.transmit(0, 100, 0, rng);
        mirror.uniform();
    }
    CHECK(rng.uniform() == mirror.uniform());
}

TEST_CASE("delay schedule lookups")
{
    const auto constant = DelaySchedule::constant(10 * kMillisecond);
    CHECK(constant.delay_at(5 * kSecond) == 10 * kMillisecond);

    DelaySchedule spike({{0, 10 * kMillisecond}, {2 * kSecond, 150 * kMillisecond}});
    CHECK(spike.delay_at(2 * kSecond) == 150 * kMillisecond);
    CHECK(spike.delay_at(2 * kSecond - 1) == 10 * kMillisecond);
    CHECK(spike.delay_at(0) == 10 * kMillisecond);
}

TEST_CASE("delay schedule validation")
{
    CHECK_THROWS_AS(DelaySchedule(std::vector<DelayStep>{}), std::invalid_argument);
    CHECK_THROWS_AS(DelaySchedule({{5, 10}}), std::invalid_argument);
    CHECK_THROWS_AS(DelaySchedule({{0, 10}, {3, 1}, {3, 2}}), std::invalid_argument);
}

TEST_CASE("a delay decrease does not reorder a direction")
{
    LinkParams params;
    params.delay = DelaySchedule({{0, 100 * kMillisecond}, {1000, 1 * kMillisecond}});
    Link link(kA, kB, params);
    Rng rng(1);
    const auto first = *link.transmit(0, 100, 0, rng);
    const auto second = *link.transmit(0, 100, 2000, rng);
    CHECK(second >= first);
}

TEST_CASE("link parameter validation")
{
    LinkParams bad;
    bad.bandwidth_bps = 0;
    CHECK_THROWS_AS(Link(kA, kB, bad), std::invalid_argument);
    LinkParams lossy;
    lossy.loss_rate = 1.5;
    CHECK_THROWS_AS(Link(kA, kB, lossy), std::invalid_argument);
    Link ok(kA, kB, LinkParams{});
    Rng rng(1);
    CHECK_THROWS_AS(ok.transmit(0, 0, 0, rng), std::invalid_argument);
}

TEST_CASE("network delivers decoded segments and traces drops")
{
    Simulator sim;
    Rng rng(5);
    Tracer tracer;
    Network net(sim, rng, &tracer);
    net.add_link(kA, kB, LinkParams{});
    CHECK(net.has_route(kA, kB));
    CHECK(net.has_route(kB, kA));
    CHECK_FALSE(net.has_route(kA, Address{1, 1}));

    Segment got;
    int deliveries = 0;
    net.attach(kB, [&](const Segment &s) {
        got = s;
        ++deliveries;
    });

    Segment s;
    s.src_addr = kA;
    s.dst_addr = kB;
    s.flags = kSyn;
    s.options.push_back(MpCapable{42});
    CHECK(net.send(s, {0, 0}));
    sim.run_until(kSecond);
    CHECK(deliveries == 1);
    CHECK(got == s);

    Segment stray = s;
    stray.dst_addr = Address{1, 1};
    CHECK_FALSE(net.send(stray, {0, 3}));
    REQUIRE_FALSE(tracer.records().empty());
    CHECK(tracer.records().back().event == TraceEvent::drop);
    CHECK(tracer.records().back().detail.find("no-route") != std::string::npos);
}

TEST_CASE("each packet is delivered once or dropped once")
{
    Simulator sim;
    Rng rng(17);
    Network net(sim, rng);
    LinkParams params;
    params.loss_rate = 0.3;
    net.add_link(kA, kB, params);
    int delivered = 0;
    net.attach(kB, [&](const Segment &) { ++delivered; });
    int accepted = 0;
    Segment s;
    s.src_addr = kA;
    s.dst_addr = kB;
    s.flags = kAck;
    for (int i = 0; i < 1000; ++i)
    {
        accepted += net.send(s, {}) ? 1 : 0;
    }
    sim.run_until(3600 * kSecond);
    CHECK(delivered == accepted);
    CHECK(net.link(0).transmitted(0) == 1000);
    CHECK(net.link(0).dropped(0) == static_cast<std::uint64_t>(1000 - accepted));
}

TEST_CASE("duplicate links between one pair are rejected")
{
    Simulator sim;
    Rng rng(1);
    Network net(sim, rng);
    net.add_link(kA, kB, LinkParams{});
    CHECK_THROWS_AS(net.add_link(kB, kA, LinkParams{}), std::invalid_argument);
}
