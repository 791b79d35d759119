#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace mpsim
{
    // One network interface: host id plus interface index. Rendered as
    // 10.<iface+1>.0.<host+1>, so interface 0 of host 0 is 10.1.0.1.
    struct Address
    {
        std::uint16_t host = 0;
        std::uint8_t iface = 0;

        friend auto operator<=>(const Address &, const Address &) = default;

        std::string to_string() const
        {
            return "10." + std::to_string(iface + 1) + ".0." + std::to_string(host + 1);
        }
    };

    struct AddressPair
    {
        Address local;
        Address remote;

        friend auto operator<=>(const AddressPair &, const AddressPair &) = default;
    };

} // namespace mpsim
