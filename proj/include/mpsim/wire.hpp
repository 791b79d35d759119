#pragma once

#include "mpsim/address.hpp"
#include "mpsim/simcore.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace mpsim
{
    // Per-subflow byte sequence number on the wire (32-bit, modular).
    using SubflowSeq = std::uint32_t;
    // Connection-level byte sequence number.
    using DataSeq = std::uint64_t;

    inline constexpr bool seq_lt(SubflowSeq a, SubflowSeq b) noexcept
    {
        return static_cast<std::int32_t>(a - b) < 0;
    }
    inline constexpr bool seq_leq(SubflowSeq a, SubflowSeq b) noexcept { return !seq_lt(b, a); }

    // Maps between a subflow's 32-bit wire sequence numbers and 64-bit byte
    // offsets from its initial sequence number.
    struct SeqSpace
    {
        SubflowSeq base = 0;

        SubflowSeq to_wire(std::uint64_t offset) const noexcept
        {
            return static_cast<SubflowSeq>(base + static_cast<std::uint32_t>(offset));
        }

        // Offset of `wire` closest to `near`; may be negative for numbers
        // before the initial sequence number.
        std::int64_t to_offset(SubflowSeq wire, std::uint64_t near) const noexcept
        {
            auto delta = static_cast<std::int32_t>(wire - to_wire(near));
            return static_cast<std::int64_t>(near) + delta;
        }
    };

    enum Flag : std::uint8_t
    {
        kSyn = 0x01,
        kAck = 0x02,
        kFin = 0x04,
        kRst = 0x08,
    };

    struct MpCapable
    {
        std::uint32_t token = 0;
        friend bool operator==(const MpCapable &, const MpCapable &) = default;
    };

    struct Join
    {
        std::uint32_t token = 0;
        friend bool operator==(const Join &, const Join &) = default;
    };

    struct AddAddr
    {
        Address address;
        friend bool operator==(const AddAddr &, const AddAddr &) = default;
    };

    struct RemoveAddr
    {
        Address address;
        friend bool operator==(const RemoveAddr &, const RemoveAddr &) = default;
    };

    struct DataSeqMap
    {
        DataSeq data_seq = 0;
        SubflowSeq subflow_seq = 0;
        std::uint32_t length = 0;
        friend bool operator==(const DataSeqMap &, const DataSeqMap &) = default;
    };

    struct DataFin
    {
        DataSeq final_data_seq = 0;
        friend bool operator==(const DataFin &, const DataFin &) = default;
    };

    struct Timestamp
    {
        SimTime ts_val = 0;
        SimTime ts_echo = 0;
        friend bool operator==(const Timestamp &, const Timestamp &) = default;
    };

    struct SackBlock
    {
        SubflowSeq left = 0;
        SubflowSeq right = 0;
        friend bool operator==(const SackBlock &, const SackBlock &) = default;
    };

    struct Sack
    {
        static constexpr std::size_t kMaxBlocks = 4;
        std::vector<SackBlock> blocks;
        friend bool operator==(const Sack &, const Sack &) = default;
    };

    using Option = std::variant<MpCapable, Join, AddAddr, RemoveAddr, DataSeqMap, DataFin, Timestamp, Sack>;

    // Encoded size of one option including its kind and length bytes.
    std::size_t option_size(const Option &option);

    struct Segment
    {
        Address src_addr;
        Address dst_addr;
        std::uint16_t src_port = 0;
        std::uint16_t dst_port = 0;
        SubflowSeq seq = 0;
        SubflowSeq ack = 0;
        std::uint8_t flags = 0;
        // Connection-level receive window advertised by the sender of this segment.
        std::uint32_t window = 0;
        std::vector<Option> options;
        std::vector<std::uint8_t> payload;

        bool has(Flag f) const noexcept { return (flags & f) != 0; }

        template <typename T>
        const T *find() const noexcept
        {
            for (const auto &option : options)
            {
                if (const auto *p = std::get_if<T>(&option))
                {
                    return p;
                }
            }
            return nullptr;
        }

        // Sequence space consumed: payload bytes, one for SYN, one for FIN,
        // and one for a payload-less ADDR/REMOVE_ADDR/DATA_FIN control
        // segment (those are delivered reliably).
        std::uint32_t seq_length() const noexcept;
        bool is_control() const noexcept;

        friend bool operator==(const Segment &, const Segment &) = default;
    };

    inline constexpr std::size_t kHeaderBytes = 40;

    // Size on the wire: fixed header, options, payload.
    std::size_t encoded_size(const Segment &segment);

    std::vector<std::uint8_t> encode(const Segment &segment);

    // Throws MalformedSegment on truncated or inconsistent input.
    Segment decode(std::span<const std::uint8_t> bytes);

    std::string flags_to_string(std::uint8_t flags);

} // namespace mpsim
