#include "mpsim/simcore.hpp"

#include <cassert>

namespace mpsim
{
    EventHandle Simulator::schedule(Duration delay, Action action)
    {
        return schedule_at(now_ + delay, std::move(action));
    }

    EventHandle Simulator::schedule_at(SimTime at, Action action)
    {
        assert(at >= now_);
        Key key{at, next_seq_++};
        queue_.emplace(key, std::move(action));
        return EventHandle{key.first, key.second};
    }

    bool Simulator::cancel(EventHandle &handle)
    {
        if (!handle.valid())
        {
            return false;
        }
        auto erased = queue_.erase(Key{handle.fire_at_, handle.seq_no_});
        handle = EventHandle{};
        return erased > 0;
    }

    RunSummary Simulator::run_until(SimTime t_end)
    {
        RunSummary summary;
        stop_requested_ = false;
        while (!queue_.empty() && !stop_requested_)
        {
            auto it = queue_.begin();
            if (it->first.first > t_end)
            {
                now_ = t_end;
                break;
            }
            now_ = it->first.first;
            Action action = std::move(it->second);
            queue_.erase(it);
            action();
            ++summary.events_processed;
        }
        summary.final_time = now_;
        return summary;
    }

    double Rng::uniform()
    {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

} // namespace mpsim
