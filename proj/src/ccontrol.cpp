#include "mpsim/ccontrol.hpp"

#include "mpsim/errors.hpp"

#include <algorithm>
#include <array>
#include <utility>

namespace mpsim
{
    namespace
    {
        constexpr std::array<std::pair<CcKind, std::string_view>, 4> kCcNames = {{
            {CcKind::uncoupled, "uncoupled"},
            {CcKind::fully_coupled, "fully_coupled"},
            {CcKind::linked_increases, "linked_increases"},
            {CcKind::rtt_compensator, "rtt_compensator"},
        }};
    } // namespace

    std::string_view to_string(CcKind kind)
    {
        for (const auto &[k, name] : kCcNames)
        {
            if (k == kind) return name;
        }
        return "unknown";
    }

    std::optional<CcKind> cc_kind_from_string(std::string_view name)
    {
        for (const auto &[k, n] : kCcNames)
        {
            if (n == name) return k;
        }
        return std::nullopt;
    }

    std::string_view to_string(RttcSecondTerm term)
    {
        return term == RttcSecondTerm::total ? "total" : "per_path";
    }

    std::optional<RttcSecondTerm> rttc_second_term_from_string(std::string_view name)
    {
        if (name == "total") return RttcSecondTerm::total;
        if (name == "per_path") return RttcSecondTerm::per_path;
        return std::nullopt;
    }

    double cc_on_ack(const CcAlgorithm &alg, const ConnectionWindowView &view, std::size_t r)
    {
        const double w_r = view.windows[r];
        const double w = view.total();
        ensure(w > 0.0 && w_r > 0.0, "congestion window must be positive");

        switch (alg.kind)
        {
        case CcKind::uncoupled:
            return w_r + 1.0 / w_r;
        case CcKind::fully_coupled:
            return w_r + 1.0 / w;
        case CcKind::linked_increases:
            return w_r + alg.a / w;
        case CcKind::rtt_compensator: {
            const double second = alg.rttc_second_term == RttcSecondTerm::total ? 1.0 / w : 1.0 / w_r;
            return w_r + std::min(alg.a / w, second);
        }
        }
        throw InvariantBreach("unknown congestion control algorithm");
    }

    double cc_on_loss(const CcAlgorithm &alg, const ConnectionWindowView &view, std::size_t r)
    {
        const double w_r = view.windows[r];
        if (alg.kind == CcKind::fully_coupled)
        {
            return std::max(w_r - view.total() / 2.0, 1.0);
        }
        return std::max(w_r / 2.0, 1.0);
    }

} // namespace mpsim
