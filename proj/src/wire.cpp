#include "mpsim/wire.hpp"

#include "mpsim/errors.hpp"

#include <boost/endian/conversion.hpp>

#include <array>
#include <cstring>
#include <type_traits>

namespace mpsim
{
    namespace
    {
        constexpr std::uint8_t kVersion = 1;

        enum class Kind : std::uint8_t
        {
            mp_capable = 1,
            join = 2,
            add_addr = 3,
            remove_addr = 4,
            data_seq_map = 5,
            data_fin = 6,
            timestamp = 7,
            sack = 8,
        };

        class Writer
        {
        public:
            explicit Writer(std::vector<std::uint8_t> &out) : out_(out) {}

            template <typename T>
            void put(T value)
            {
                static_assert(std::is_unsigned_v<T>);
                T big = boost::endian::native_to_big(value);
                std::array<std::uint8_t, sizeof(T)> raw{};
                std::memcpy(raw.data(), &big, sizeof(T));
                out_.insert(out_.end(), raw.begin(), raw.end());
            }

            void put_address(const Address &a)
            {
                put<std::uint16_t>(a.host);
                put<std::uint8_t>(a.iface);
            }

        private:
            std::vector<std::uint8_t> &out_;
        };

        class Reader
        {
        public:
            explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

            template <typename T>
            T get()
            {
                need(sizeof(T));
                T big{};
                std::memcpy(&big, in_.data() + pos_, sizeof(T));
                pos_ += sizeof(T);
                return boost::endian::big_to_native(big);
            }

            Address get_address()
            {
                Address a;
                a.host = get<std::uint16_t>();
                a.iface = get<std::uint8_t>();
                return a;
            }

            void skip(std::size_t n)
            {
                need(n);
                pos_ += n;
            }

            std::size_t remaining() const noexcept { return in_.size() - pos_; }
            std::size_t position() const noexcept { return pos_; }
            std::span<const std::uint8_t> rest() const { return in_.subspan(pos_); }

        private:
            void need(std::size_t n) const
            {
                if (in_.size() - pos_ < n)
                {
                    throw MalformedSegment("truncated segment");
                }
            }

            std::span<const std::uint8_t> in_;
            std::size_t pos_ = 0;
        };

        Kind kind_of(const Option &option)
        {
            return std::visit(
                [](const auto &o) {
                    using T = std::decay_t<decltype(o)>;
                    if constexpr (std::is_same_v<T, MpCapable>) return Kind::mp_capable;
                    else if constexpr (std::is_same_v<T, Join>) return Kind::join;
                    else if constexpr (std::is_same_v<T, AddAddr>) return Kind::add_addr;
                    else if constexpr (std::is_same_v<T, RemoveAddr>) return Kind::remove_addr;
                    else if constexpr (std::is_same_v<T, DataSeqMap>) return Kind::data_seq_map;
                    else if constexpr (std::is_same_v<T, DataFin>) return Kind::data_fin;
                    else if constexpr (std::is_same_v<T, Timestamp>) return Kind::timestamp;
                    else return Kind::sack;
                },
                option);
        }

        void validate_option(const Option &option)
        {
            if (const auto *dsn = std::get_if<DataSeqMap>(&option); dsn && dsn->length == 0)
            {
                throw MalformedSegment("DSN option with zero length");
            }
            if (const auto *sack = std::get_if<Sack>(&option))
            {
                if (sack->blocks.empty() || sack->blocks.size() > Sack::kMaxBlocks)
                {
                    throw MalformedSegment("SACK option must carry 1 to 4 blocks");
                }
                for (const auto &b : sack->blocks)
                {
                    if (!seq_lt(b.left, b.right))
                    {
                        throw MalformedSegment("SACK block with left >= right");
                    }
                }
            }
        }

        void validate_unique_kinds(const std::vector<Option> &options)
        {
            std::uint32_t seen = 0;
            for (const auto &option : options)
            {
                auto bit = 1u << static_cast<unsigned>(kind_of(option));
                if (seen & bit)
                {
                    throw MalformedSegment("duplicate option kind");
                }
                seen |= bit;
            }
        }

        void write_option(Writer &w, const Option &option)
        {
            w.put(static_cast<std::uint8_t>(kind_of(option)));
            w.put(static_cast<std::uint8_t>(option_size(option)));
            std::visit(
                [&w](const auto &o) {
                    using T = std::decay_t<decltype(o)>;
                    if constexpr (std::is_same_v<T, MpCapable> || std::is_same_v<T, Join>)
                    {
                        w.put(o.token);
                    }
                    else if constexpr (std::is_same_v<T, AddAddr> || std::is_same_v<T, RemoveAddr>)
                    {
                        w.put_address(o.address);
                    }
                    else if constexpr (std::is_same_v<T, DataSeqMap>)
                    {
                        w.put(o.data_seq);
                        w.put(o.subflow_seq);
                        w.put(o.length);
                    }
                    else if constexpr (std::is_same_v<T, DataFin>)
                    {
                        w.put(o.final_data_seq);
                    }
                    else if constexpr (std::is_same_v<T, Timestamp>)
                    {
                        w.put(o.ts_val);
                        w.put(o.ts_echo);
                    }
                    else
                    {
                        for (const auto &b : o.blocks)
                        {
                            w.put(b.left);
                            w.put(b.right);
                        }
                    }
                },
                option);
        }

        Option read_option(Reader &r)
        {
            auto kind = r.get<std::uint8_t>();
            auto len = r.get<std::uint8_t>();
            if (len < 2 || len - 2u > r.remaining())
            {
                throw MalformedSegment("bad option length");
            }
            auto start = r.position();
            Option option;
            switch (static_cast<Kind>(kind))
            {
            case Kind::mp_capable:
                option = MpCapable{r.get<std::uint32_t>()};
                break;
            case Kind::join:
                option = Join{r.get<std::uint32_t>()};
                break;
            case Kind::add_addr:
                option = AddAddr{r.get_address()};
                break;
            case Kind::remove_addr:
                option = RemoveAddr{r.get_address()};
                break;
            case Kind::data_seq_map: {
                DataSeqMap m;
                m.data_seq = r.get<std::uint64_t>();
                m.subflow_seq = r.get<std::uint32_t>();
                m.length = r.get<std::uint32_t>();
                option = m;
                break;
            }
            case Kind::data_fin:
                option = DataFin{r.get<std::uint64_t>()};
                break;
            case Kind::timestamp: {
                Timestamp ts;
                ts.ts_val = r.get<std::uint64_t>();
                ts.ts_echo = r.get<std::uint64_t>();
                option = ts;
                break;
            }
            case Kind::sack: {
                if ((len - 2u) % 8 != 0)
                {
                    throw MalformedSegment("bad SACK option length");
                }
                Sack sack;
                for (unsigned i = 0; i < (len - 2u) / 8; ++i)
                {
                    SackBlock b;
                    b.left = r.get<std::uint32_t>();
                    b.right = r.get<std::uint32_t>();
                    sack.blocks.push_back(b);
                }
                option = std::move(sack);
                break;
            }
            default:
                throw MalformedSegment("unknown option kind " + std::to_string(kind));
            }
            if (r.position() - start != len - 2u)
            {
                throw MalformedSegment("option length does not match its kind");
            }
            validate_option(option);
            return option;
        }

    } // namespace

    std::size_t option_size(const Option &option)
    {
        return std::visit(
            [](const auto &o) -> std::size_t {
                using T = std::decay_t<decltype(o)>;
                if constexpr (std::is_same_v<T, MpCapable> || std::is_same_v<T, Join>) return 2 + 4;
                else if constexpr (std::is_same_v<T, AddAddr> || std::is_same_v<T, RemoveAddr>) return 2 + 3;
                else if constexpr (std::is_same_v<T, DataSeqMap>) return 2 + 8 + 4 + 4;
                else if constexpr (std::is_same_v<T, DataFin>) return 2 + 8;
                else if constexpr (std::is_same_v<T, Timestamp>) return 2 + 8 + 8;
                else return 2 + 8 * o.blocks.size();
            },
            option);
    }

    bool Segment::is_control() const noexcept
    {
        return payload.empty() && !has(kSyn) &&
               (find<AddAddr>() || find<RemoveAddr>() || find<DataFin>());
    }

    std::uint32_t Segment::seq_length() const noexcept
    {
        auto len = static_cast<std::uint32_t>(payload.size());
        if (has(kSyn)) ++len;
        if (has(kFin)) ++len;
        if (is_control()) ++len;
        return len;
    }

    std::size_t encoded_size(const Segment &segment)
    {
        std::size_t size = kHeaderBytes + segment.payload.size();
        for (const auto &option : segment.options)
        {
            size += option_size(option);
        }
        return size;
    }

    std::vector<std::uint8_t> encode(const Segment &segment)
    {
        validate_unique_kinds(segment.options);
        std::size_t options_len = 0;
        for (const auto &option : segment.options)
        {
            validate_option(option);
            options_len += option_size(option);
        }
        if (options_len > 0xffff)
        {
            throw MalformedSegment("options too long");
        }

        std::vector<std::uint8_t> out;
        out.reserve(encoded_size(segment));
        Writer w(out);
        w.put(kVersion);
        w.put(segment.flags);
        w.put(segment.src_port);
        w.put(segment.dst_port);
        w.put_address(segment.src_addr);
        w.put_address(segment.dst_addr);
        w.put(segment.seq);
        w.put(segment.ack);
        w.put(segment.window);
        w.put(static_cast<std::uint32_t>(segment.payload.size()));
        w.put(static_cast<std::uint16_t>(options_len));
        w.put(static_cast<std::uint8_t>(segment.options.size()));
        out.resize(kHeaderBytes, 0);
        for (const auto &option : segment.options)
        {
            write_option(w, option);
        }
        out.insert(out.end(), segment.payload.begin(), segment.payload.end());
        return out;
    }

    Segment decode(std::span<const std::uint8_t> bytes)
    {
        Reader r(bytes);
        if (r.get<std::uint8_t>() != kVersion)
        {
            throw MalformedSegment("bad version byte");
        }
        Segment s;
        s.flags = r.get<std::uint8_t>();
        if (s.flags & ~(kSyn | kAck | kFin | kRst))
        {
            throw MalformedSegment("unknown flag bits");
        }
        s.src_port = r.get<std::uint16_t>();
        s.dst_port = r.get<std::uint16_t>();
        s.src_addr = r.get_address();
        s.dst_addr = r.get_address();
        s.seq = r.get<std::uint32_t>();
        s.ack = r.get<std::uint32_t>();
        s.window = r.get<std::uint32_t>();
        auto payload_len = r.get<std::uint32_t>();
        auto options_len = r.get<std::uint16_t>();
        auto option_count = r.get<std::uint8_t>();
        r.skip(kHeaderBytes - r.position());

        if (r.remaining() != std::size_t{options_len} + payload_len)
        {
            throw MalformedSegment("length fields do not match segment size");
        }
        auto options_end = r.position() + options_len;
        for (unsigned i = 0; i < option_count; ++i)
        {
            s.options.push_back(read_option(r));
        }
        if (r.position() != options_end)
        {
            throw MalformedSegment("option bytes do not match option count");
        }
        validate_unique_kinds(s.options);
        auto rest = r.rest();
        s.payload.assign(rest.begin(), rest.end());
        return s;
    }

    std::string flags_to_string(std::uint8_t flags)
    {
        std::string out;
        auto add = [&out](const char *name) {
            if (!out.empty()) out += '|';
            out += name;
        };
        if (flags & kSyn) add("SYN");
        if (flags & kAck) add("ACK");
        if (flags & kFin) add("FIN");
        if (flags & kRst) add("RST");
        return out.empty() ? "-" : out;
    }

} // namespace mpsim
