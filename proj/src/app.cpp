#include "mpsim/app.hpp"

#include "mpsim/errors.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace mpsim
{
    std::uint32_t pattern_checksum(std::uint64_t total_bytes)
    {
        boost::crc_32_type crc;
        std::uint8_t block[256];
        for (int i = 0; i < 256; ++i)
        {
            block[i] = pattern_byte(static_cast<std::uint64_t>(i));
        }
        for (std::uint64_t done = 0; done < total_bytes; done += 256)
        {
            crc.process_bytes(block, static_cast<std::size_t>(std::min<std::uint64_t>(256, total_bytes - done)));
        }
        return crc.checksum();
    }

    BulkSource::BulkSource(Simulator &sim, Connection &conn, BulkSourceConfig config)
        : sim_(sim), conn_(conn), config_(config)
    {
        ensure(config_.total_bytes > 0, "a transfer needs at least one byte");
        checksum_ = pattern_checksum(config_.total_bytes);
        sim_.schedule_at(config_.start_time, [this] { start(); });
    }

    void BulkSource::start()
    {
        std::vector<std::uint8_t> bytes(config_.total_bytes);
        for (std::uint64_t i = 0; i < bytes.size(); ++i)
        {
            bytes[i] = pattern_byte(i);
        }
        conn_.write(bytes);
        conn_.request_close();
    }

    Sink::Sink(Simulator &sim, Connection &conn, std::uint64_t expected_bytes)
        : sim_(sim), expected_(expected_bytes)
    {
        conn.set_deliver_handler([this](DataSeq data_seq, std::span<const std::uint8_t> bytes) {
            on_data(data_seq, bytes);
        });
        conn.set_end_of_stream_handler([this] {
            ensure(complete(), "end of stream before all bytes arrived");
            end_of_stream_ = true;
        });
    }

    void Sink::on_data(DataSeq data_seq, std::span<const std::uint8_t> bytes)
    {
        ensure(data_seq == received_, "delivery out of order at the sink");
        ensure(received_ + bytes.size() <= expected_, "sink received more bytes than were sent");
        for (std::size_t i = 0; i < bytes.size(); ++i)
        {
            if (bytes[i] != pattern_byte(received_ + i))
            {
                throw InvariantBreach("payload mismatch at byte " + std::to_string(received_ + i));
            }
        }
        crc_.process_bytes(bytes.data(), bytes.size());
        received_ += bytes.size();
        if (complete() && !finish_time_)
        {
            finish_time_ = sim_.now();
        }
    }

    double goodput_bps(std::uint64_t bytes, SimTime start, SimTime finish)
    {
        ensure(finish > start, "transfer must take positive time");
        return static_cast<double>(bytes) * 8.0 / (static_cast<double>(finish - start) / 1e6);
    }

} // namespace mpsim
