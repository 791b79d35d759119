#pragma once

#include "mpsim/address.hpp"
#include "mpsim/simcore.hpp"
#include "mpsim/trace.hpp"
#include "mpsim/wire.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

namespace mpsim
{
    struct DelayStep
    {
        SimTime from = 0;
        Duration delay = 0;

        friend bool operator==(const DelayStep &, const DelayStep &) = default;
    };

    // Piecewise-constant one-way delay. First step starts at t = 0 and steps
    // are strictly increasing in `from`.
    class DelaySchedule
    {
    public:
        DelaySchedule() : steps_{{0, 10 * kMillisecond}} {}
        explicit DelaySchedule(std::vector<DelayStep> steps);
        static DelaySchedule constant(Duration delay) { return DelaySchedule({{0, delay}}); }

        Duration delay_at(SimTime t) const;
        const std::vector<DelayStep> &steps() const noexcept { return steps_; }

        friend bool operator==(const DelaySchedule &, const DelaySchedule &) = default;

    private:
        std::vector<DelayStep> steps_;
    };

    struct LinkParams
    {
        std::uint64_t bandwidth_bps = 500'000;
        DelaySchedule delay;
        double loss_rate = 0.0;

        friend bool operator==(const LinkParams &, const LinkParams &) = default;
    };

    // Serialization time in microseconds, rounded up.
    Duration serialization_time(std::size_t bytes, std::uint64_t bandwidth_bps);

    // Point-to-point duplex link with per-direction FIFO serialization and
    // i.i.d. Bernoulli loss. Direction 0 carries a -> b, direction 1 b -> a.
    class Link
    {
    public:
        Link(Address a, Address b, LinkParams params);

        const Address &end_a() const noexcept { return a_; }
        const Address &end_b() const noexcept { return b_; }
        const LinkParams &params() const noexcept { return params_; }

        Duration delay_at(SimTime t) const { return params_.delay.delay_at(t); }

        // Returns the delivery time, or nullopt if the packet is dropped.
        // Draws exactly one uniform from `rng` per call.
        std::optional<SimTime> transmit(int direction, std::size_t packet_bytes, SimTime now, Rng &rng);

        std::uint64_t transmitted(int direction) const { return dirs_.at(direction).transmitted; }
        std::uint64_t dropped(int direction) const { return dirs_.at(direction).dropped; }

    private:
        struct DirectionState
        {
            SimTime busy_until = 0;
            SimTime last_delivery = 0;
            std::uint64_t transmitted = 0;
            std::uint64_t dropped = 0;
        };

        Address a_;
        Address b_;
        LinkParams params_;
        std::array<DirectionState, 2> dirs_{};
    };

    // Identifies the sending endpoint of a packet in drop traces.
    struct PacketTag
    {
        std::uint32_t conn_id = 0;
        std::uint32_t subflow_id = 0;
    };

    // Hosts and disjoint point-to-point links. Segments are encoded at the
    // sender and decoded at the receiver so every packet crosses the wire
    // format.
    class Network
    {
    public:
        using Receiver = std::function<void(const Segment &)>;

        Network(Simulator &sim, Rng &rng, Tracer *tracer = nullptr) : sim_(sim), rng_(rng), tracer_(tracer) {}

        std::size_t add_link(Address a, Address b, LinkParams params);
        void attach(Address address, Receiver receiver);

        // Returns false if the packet was dropped or no link joins the pair.
        bool send(const Segment &segment, PacketTag tag);

        bool has_route(Address from, Address to) const { return routes_.contains({from, to}); }

        const Link &link(std::size_t index) const { return links_.at(index); }
        std::size_t link_count() const noexcept { return links_.size(); }

    private:
        void trace_drop(const Segment &segment, PacketTag tag, const char *why);

        Simulator &sim_;
        Rng &rng_;
        Tracer *tracer_;
        std::vector<Link> links_;
        std::map<AddressPair, std::pair<std::size_t, int>> routes_;
        std::map<Address, Receiver> receivers_;
    };

} // namespace mpsim
