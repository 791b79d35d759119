#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace mpsim
{
    enum class CcKind
    {
        uncoupled,
        fully_coupled,
        linked_increases,
        rtt_compensator,
    };

    // Second term of the RTT Compensator increase: min(a/w, 1/w) with `total`,
    // min(a/w, 1/w_r) with `per_path`.
    enum class RttcSecondTerm
    {
        total,
        per_path,
    };

    struct CcAlgorithm
    {
        CcKind kind = CcKind::linked_increases;
        double a = 1.0;
        RttcSecondTerm rttc_second_term = RttcSecondTerm::total;

        friend bool operator==(const CcAlgorithm &, const CcAlgorithm &) = default;
    };

    std::string_view to_string(CcKind kind);
    std::optional<CcKind> cc_kind_from_string(std::string_view name);
    std::string_view to_string(RttcSecondTerm term);
    std::optional<RttcSecondTerm> rttc_second_term_from_string(std::string_view name);

    // Congestion windows (in segments) of every live subflow of a connection.
    struct ConnectionWindowView
    {
        std::span<const double> windows;

        double total() const noexcept
        {
            double w = 0.0;
            for (double w_r : windows)
            {
                w += w_r;
            }
            return w;
        }
    };

    // Congestion-avoidance increase applied for one acknowledged segment on
    // subflow r. Returns the new w_r.
    //   uncoupled        w_r + 1/w_r
    //   fully coupled    w_r + 1/w
    //   linked increases w_r + a/w
    //   rtt compensator  w_r + min(a/w, 1/w)
    double cc_on_ack(const CcAlgorithm &alg, const ConnectionWindowView &view, std::size_t r);

    // Window after a loss event on subflow r. Every rule is floored at one
    // segment:
    //   fully coupled    max(w_r - w/2, 1)
    //   the others       max(w_r/2, 1)
    double cc_on_loss(const CcAlgorithm &alg, const ConnectionWindowView &view, std::size_t r);

} // namespace mpsim
