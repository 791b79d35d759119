#include "mpsim/netmodel.hpp"

#include "mpsim/errors.hpp"

#include <algorithm>
#include <stdexcept>

namespace mpsim
{
    DelaySchedule::DelaySchedule(std::vector<DelayStep> steps) : steps_(std::move(steps))
    {
        if (steps_.empty() || steps_.front().from != 0)
        {
            throw std::invalid_argument("delay schedule must start at t=0");
        }
        for (std::size_t i = 1; i < steps_.size(); ++i)
        {
            if (steps_[i].from <= steps_[i - 1].from)
            {
                throw std::invalid_argument("delay schedule times must be strictly increasing");
            }
        }
    }

    Duration DelaySchedule::delay_at(SimTime t) const
    {
        auto it = std::upper_bound(steps_.begin(), steps_.end(), t,
                                   [](SimTime v, const DelayStep &s) { return v < s.from; });
        return std::prev(it)->delay;
    }

    Duration serialization_time(std::size_t bytes, std::uint64_t bandwidth_bps)
    {
        const std::uint64_t bits_us = static_cast<std::uint64_t>(bytes) * 8 * kSecond;
        return (bits_us + bandwidth_bps - 1) / bandwidth_bps;
    }

    Link::Link(Address a, Address b, LinkParams params) : a_(a), b_(b), params_(std::move(params))
    {
        if (params_.bandwidth_bps == 0)
        {
            throw std::invalid_argument("link bandwidth must be positive");
        }
        if (!(params_.loss_rate >= 0.0 && params_.loss_rate <= 1.0))
        {
            throw std::invalid_argument("link loss rate must lie in [0,1]");
        }
    }

    std::optional<SimTime> Link::transmit(int direction, std::size_t packet_bytes, SimTime now, Rng &rng)
    {
        if (packet_bytes == 0)
        {
            throw std::invalid_argument("empty packet");
        }
        auto &dir = dirs_.at(direction);
        ++dir.transmitted;
        // Bernoulli loss; a rate of 1 drops everything because uniform() < 1.
        if (rng.uniform() < params_.loss_rate)
        {
            ++dir.dropped;
            return std::nullopt;
        }
        const SimTime start = std::max(now, dir.busy_until);
        dir.busy_until = start + serialization_time(packet_bytes, params_.bandwidth_bps);
        SimTime delivery = dir.busy_until + delay_at(now);
        // A delay decrease must not let a later packet overtake an earlier one.
        delivery = std::max(delivery, dir.last_delivery);
        dir.last_delivery = delivery;
        return delivery;
    }

    std::size_t Network::add_link(Address a, Address b, LinkParams params)
    {
        if (routes_.contains({a, b}) || routes_.contains({b, a}))
        {
            throw std::invalid_argument("address pair already joined by a link");
        }
        links_.emplace_back(a, b, std::move(params));
        const auto index = links_.size() - 1;
        routes_[{a, b}] = {index, 0};
        routes_[{b, a}] = {index, 1};
        return index;
    }

    void Network::attach(Address address, Receiver receiver)
    {
        receivers_[address] = std::move(receiver);
    }

    bool Network::send(const Segment &segment, PacketTag tag)
    {
        auto route = routes_.find({segment.src_addr, segment.dst_addr});
        if (route == routes_.end())
        {
            trace_drop(segment, tag, "no-route");
            return false;
        }
        auto bytes = encode(segment);
        auto &link = links_[route->second.first];
        auto delivery = link.transmit(route->second.second, bytes.size(), sim_.now(), rng_);
        if (!delivery)
        {
            trace_drop(segment, tag, "loss");
            return false;
        }
        sim_.schedule_at(*delivery, [this, dst = segment.dst_addr, bytes = std::move(bytes)]() {
            auto it = receivers_.find(dst);
            if (it == receivers_.end())
            {
                return;
            }
            it->second(decode(bytes));
        });
        return true;
    }

    void Network::trace_drop(const Segment &segment, PacketTag tag, const char *why)
    {
        if (!tracer_)
        {
            return;
        }
        TraceRecord rec;
        rec.time_us = sim_.now();
        rec.conn_id = tag.conn_id;
        rec.subflow_id = tag.subflow_id;
        rec.event = TraceEvent::drop;
        rec.seq = segment.seq;
        rec.ack = segment.ack;
        rec.detail = std::string(why) + " " + flags_to_string(segment.flags) +
                     " len=" + std::to_string(segment.payload.size());
        tracer_->record(std::move(rec));
    }

} // namespace mpsim
