#pragma once

#include "mpsim/mptcp.hpp"
#include "mpsim/simcore.hpp"

#include <boost/crc.hpp>

#include <cstdint>
#include <optional>
#include <span>

namespace mpsim
{
    // Byte i of every transfer.
    inline constexpr std::uint8_t pattern_byte(std::uint64_t i) noexcept
    {
        return static_cast<std::uint8_t>(i % 256);
    }

    // CRC-32 of the first `total_bytes` pattern bytes.
    std::uint32_t pattern_checksum(std::uint64_t total_bytes);

    struct BulkSourceConfig
    {
        std::uint64_t total_bytes = 2'000'000;
        SimTime start_time = 0;
    };

    // Writes the whole pattern at start_time and then asks for close.
    class BulkSource
    {
    public:
        BulkSource(Simulator &sim, Connection &conn, BulkSourceConfig config);

        const BulkSourceConfig &config() const noexcept { return config_; }
        std::uint32_t checksum() const noexcept { return checksum_; }

    private:
        void start();

        Simulator &sim_;
        Connection &conn_;
        BulkSourceConfig config_;
        std::uint32_t checksum_ = 0;
    };

    // Verifies every delivered byte against the pattern. A mismatch or any
    // byte past the expected total is an invariant breach.
    class Sink
    {
    public:
        Sink(Simulator &sim, Connection &conn, std::uint64_t expected_bytes);

        std::uint64_t received_bytes() const noexcept { return received_; }
        std::uint32_t checksum() const noexcept { return crc_.checksum(); }
        bool complete() const noexcept { return received_ == expected_; }
        bool end_of_stream() const noexcept { return end_of_stream_; }
        std::optional<SimTime> finish_time() const noexcept { return finish_time_; }

        void on_data(DataSeq data_seq, std::span<const std::uint8_t> bytes);

    private:
        Simulator &sim_;
        std::uint64_t expected_;
        std::uint64_t received_ = 0;
        boost::crc_32_type crc_;
        bool end_of_stream_ = false;
        std::optional<SimTime> finish_time_;
    };

    // goodput = bytes * 8 / elapsed seconds.
    double goodput_bps(std::uint64_t bytes, SimTime start, SimTime finish);

} // namespace mpsim
