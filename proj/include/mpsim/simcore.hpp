#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <utility>

namespace mpsim
{
    // Microseconds since simulation start.
    using SimTime = std::uint64_t;
    using Duration = std::uint64_t;

    inline constexpr Duration kMillisecond = 1000;
    inline constexpr Duration kSecond = 1000 * kMillisecond;

    class EventHandle
    {
    public:
        EventHandle() = default;

        bool valid() const noexcept { return seq_no_ != 0; }
        SimTime fire_at() const noexcept { return fire_at_; }

        friend bool operator==(const EventHandle &, const EventHandle &) = default;

    private:
        friend class Simulator;
        EventHandle(SimTime at, std::uint64_t seq) : fire_at_(at), seq_no_(seq) {}

        SimTime fire_at_ = 0;
        std::uint64_t seq_no_ = 0;
    };

    struct RunSummary
    {
        std::uint64_t events_processed = 0;
        SimTime final_time = 0;
    };

    // Single-threaded discrete-event engine. Events with equal fire_at run in
    // insertion order.
    class Simulator
    {
    public:
        using Action = std::function<void()>;

        SimTime now() const noexcept { return now_; }

        EventHandle schedule(Duration delay, Action action);
        EventHandle schedule_at(SimTime at, Action action);

        // Returns false when the event already fired or was cancelled.
        bool cancel(EventHandle &handle);

        RunSummary run_until(SimTime t_end);

        // Makes the current run_until return after the running event.
        void stop() noexcept { stop_requested_ = true; }

        std::size_t pending() const noexcept { return queue_.size(); }

    private:
        using Key = std::pair<SimTime, std::uint64_t>;

        std::map<Key, Action> queue_;
        SimTime now_ = 0;
        std::uint64_t next_seq_ = 1;
        bool stop_requested_ = false;
    };

    // Deterministic uniform source. Uses std::mt19937_64, whose output sequence
    // is fixed by the C++ standard, and converts the top 53 bits to a double
    // by hand so the result does not depend on the library's distributions.
    class Rng
    {
    public:
        explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

        std::uint64_t seed() const noexcept { return seed_; }

        // Uniform real in [0, 1).
        double uniform();
        std::uint64_t next_u64() { return engine_(); }

    private:
        std::uint64_t seed_;
        std::mt19937_64 engine_;
    };

} // namespace mpsim
