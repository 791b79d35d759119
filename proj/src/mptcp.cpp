#include "mpsim/mptcp.hpp"

#include "mpsim/errors.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace mpsim
{
    std::string_view to_string(ConnPhase phase)
    {
        switch (phase)
        {
        case ConnPhase::idle:
            return "IDLE";
        case ConnPhase::handshaking:
            return "HANDSHAKING";
        case ConnPhase::established:
            return "ESTABLISHED";
        case ConnPhase::data_fin_sent:
            return "DATA_FIN_SENT";
        case ConnPhase::closed:
            return "CLOSED";
        }
        return "UNKNOWN";
    }

    // ---------------------------------------------------------------------
    // ReassemblyBuffer

    ReassemblyBuffer::InsertResult ReassemblyBuffer::insert(DataSeq data_seq, std::span<const std::uint8_t> bytes)
    {
        InsertResult result;
        DataSeq start = data_seq;
        DataSeq end = data_seq + bytes.size();
        const DataSeq limit = next_ + capacity_;
        if (end > limit)
        {
            result.discarded = end - std::max(start, limit);
            end = std::max(start, limit);
        }
        start = std::max(start, next_);
        if (start >= end)
        {
            return result;
        }

        auto piece = [&](DataSeq from, DataSeq to) {
            const auto first = bytes.begin() + static_cast<std::ptrdiff_t>(from - data_seq);
            ranges_.emplace(from, std::vector<std::uint8_t>(first, first + static_cast<std::ptrdiff_t>(to - from)));
            buffered_ += to - from;
        };

        // Fill only the gaps between ranges already held.
        DataSeq cursor = start;
        auto it = ranges_.upper_bound(start);
        if (it != ranges_.begin())
        {
            const auto prev = std::prev(it);
            cursor = std::max(cursor, prev->first + prev->second.size());
        }
        while (cursor < end)
        {
            if (it == ranges_.end() || it->first >= end)
            {
                piece(cursor, end);
                break;
            }
            if (cursor < it->first)
            {
                piece(cursor, it->first);
            }
            cursor = std::max(cursor, it->first + it->second.size());
            ++it;
        }

        while (!ranges_.empty() && ranges_.begin()->first == next_)
        {
            auto node = ranges_.extract(ranges_.begin());
            next_ += node.mapped().size();
            buffered_ -= node.mapped().size();
            result.delivered.push_back({node.key(), std::move(node.mapped())});
        }
        ensure(buffered_ <= capacity_, "reassembly buffer exceeds the receive window");
        return result;
    }

    // ---------------------------------------------------------------------
    // Connection

    Connection::Connection(Simulator &sim, Network &net, Rng &rng, Tracer *tracer, std::uint32_t conn_id,
                           std::vector<Address> local_addresses, ConnectionConfig config)
        : sim_(sim), net_(net), rng_(rng), tracer_(tracer), conn_id_(conn_id),
          local_addresses_(std::move(local_addresses)), config_(config), peer_rwnd_(config.rwnd),
          reassembly_(config.rwnd)
    {
        ensure(!local_addresses_.empty(), "a connection needs at least one local address");
        for (const auto &address : local_addresses_)
        {
            net_.attach(address, [this](const Segment &segment) { on_segment(segment); });
        }
    }

    Connection::~Connection()
    {
        for (auto &timer : timers_)
        {
            sim_.cancel(timer.handle);
        }
    }

    DataSeq Connection::data_una() const noexcept
    {
        return mappings_.empty() ? next_data_seq_ : mappings_.begin()->first;
    }

    void Connection::listen()
    {
        ensure(phase_ == ConnPhase::idle, "listen requires an idle connection");
        listening_ = true;
    }

    void Connection::connect(Address remote)
    {
        ensure(phase_ == ConnPhase::idle, "connect requires an idle connection");
        initiator_ = true;
        token_ = static_cast<std::uint32_t>(rng_.next_u64());
        remote_addresses_.push_back(remote);
        set_phase(ConnPhase::handshaking, "connect");
        Subflow &master = add_subflow({local_addresses_.front(), remote});
        SubflowOutput out;
        master.open_active(sim_.now(), {MpCapable{token_}}, out);
        handle_output(master, out);
        pump();
    }

    void Connection::write(std::span<const std::uint8_t> bytes)
    {
        ensure(!close_requested_, "write after close");
        send_buffer_.insert(send_buffer_.end(), bytes.begin(), bytes.end());
        written_ += bytes.size();
        pump();
    }

    void Connection::request_close()
    {
        close_requested_ = true;
        if ((phase_ == ConnPhase::idle || phase_ == ConnPhase::handshaking) && written_ == 0)
        {
            // Nothing established and nothing to deliver: tear down half-open
            // subflows. With data queued the close waits for DATA_FIN.
            for (auto &subflow : subflows_)
            {
                SubflowOutput out;
                subflow->abort(sim_.now(), out);
                handle_output(*subflow, out);
            }
            if (subflows_.empty())
            {
                set_phase(ConnPhase::closed, "close-before-connect");
            }
        }
        pump();
    }

    Subflow &Connection::add_subflow(AddressPair pair)
    {
        SubflowConfig cfg = config_.subflow;
        cfg.local_port = config_.local_port;
        cfg.remote_port = config_.remote_port;
        auto detector = config_.attach_detector ? std::make_unique<ReorderDetector>(config_.detector) : nullptr;
        const auto id = static_cast<std::uint32_t>(subflows_.size());
        auto subflow = std::make_unique<Subflow>(conn_id_, id, pair, cfg, std::move(detector), tracer_);
        subflow->set_advertised_window(config_.rwnd);
        subflow->set_dsn_enabled(!fallback_);
        subflow->set_payload_source(
            [this](DataSeq data_seq, std::uint32_t length) { return payload_for(data_seq, length); });
        by_pair_[pair] = subflows_.size();
        subflows_.push_back(std::move(subflow));
        timers_.emplace_back();
        trace(TraceEvent::state, id, "subflow " + pair.local.to_string() + "->" + pair.remote.to_string());
        return *subflows_.back();
    }

    Subflow *Connection::find_subflow(const AddressPair &pair)
    {
        auto it = by_pair_.find(pair);
        return it == by_pair_.end() ? nullptr : subflows_[it->second].get();
    }

    bool Connection::address_in_use(const Address &address, bool local) const
    {
        return std::any_of(subflows_.begin(), subflows_.end(), [&](const auto &subflow) {
            const auto &pair = subflow->addresses();
            return subflow->state() != SubflowConnState::closed &&
                   (local ? pair.local == address : pair.remote == address);
        });
    }

    void Connection::on_segment(const Segment &segment)
    {
        const AddressPair pair{segment.dst_addr, segment.src_addr};
        if (Subflow *subflow = find_subflow(pair))
        {
            if (segment.has(kAck))
            {
                peer_rwnd_ = segment.window;
            }
            SubflowOutput out;
            subflow->on_segment(segment, sim_.now(), others_window(*subflow), out);
            handle_output(*subflow, out);
        }
        else if (segment.has(kSyn) && !segment.has(kAck) && !segment.has(kRst))
        {
            accept_syn(segment);
        }
        else
        {
            send_reset_for(segment);
        }
        pump();
    }

    void Connection::accept_syn(const Segment &segment)
    {
        if (!listening_)
        {
            send_reset_for(segment);
            return;
        }
        const AddressPair pair{segment.dst_addr, segment.src_addr};
        Subflow *subflow = nullptr;
        if (const auto *join = segment.find<Join>())
        {
            const bool ok = phase_ == ConnPhase::established && !fallback_ && join->token == token_ &&
                            !address_in_use(pair.local, true) && !address_in_use(pair.remote, false);
            if (!ok)
            {
                trace(TraceEvent::state, std::nullopt, "join-refused token=" + std::to_string(join->token));
                send_reset_for(segment);
                return;
            }
            subflow = &add_subflow(pair);
            subflow->set_syn_ack_options({Join{token_}});
        }
        else
        {
            if (!subflows_.empty())
            {
                send_reset_for(segment);
                return;
            }
            const auto *mpc = segment.find<MpCapable>();
            if (mpc && config_.mp_capable)
            {
                token_ = mpc->token;
            }
            else
            {
                fallback_ = true;
                trace(TraceEvent::state, std::nullopt, "fallback single-path");
            }
            set_phase(ConnPhase::handshaking, "SYN");
            subflow = &add_subflow(pair);
            if (!fallback_)
            {
                subflow->set_syn_ack_options({MpCapable{token_}});
            }
        }
        subflow->open_passive(sim_.now());
        SubflowOutput out;
        subflow->on_segment(segment, sim_.now(), others_window(*subflow), out);
        handle_output(*subflow, out);
    }

    void Connection::send_reset_for(const Segment &segment)
    {
        if (segment.has(kRst))
        {
            return;
        }
        Segment rst;
        rst.src_addr = segment.dst_addr;
        rst.dst_addr = segment.src_addr;
        rst.src_port = segment.dst_port;
        rst.dst_port = segment.src_port;
        if (segment.has(kAck))
        {
            rst.seq = segment.ack;
            rst.flags = kRst;
        }
        else
        {
            rst.ack = segment.seq + segment.seq_length();
            rst.flags = kRst | kAck;
        }
        net_.send(rst, {conn_id_, std::numeric_limits<std::uint32_t>::max()});
    }

    void Connection::handle_output(Subflow &subflow, SubflowOutput &out)
    {
        const PacketTag tag{conn_id_, subflow.id()};
        for (const auto &segment : out.segments)
        {
            net_.send(segment, tag);
        }
        if (out.established_with)
        {
            on_established(subflow, *out.established_with);
        }
        for (const auto &delivery : out.deliveries)
        {
            on_payload(delivery);
        }
        for (const auto &range : out.acked_data)
        {
            const auto erased = mappings_.erase(range.data_seq);
            ensure(erased == 1, "acknowledged data has no live DSN mapping");
        }
        if (!out.acked_data.empty())
        {
            const DataSeq una = data_una();
            while (send_buffer_base_ < una)
            {
                send_buffer_.pop_front();
                ++send_buffer_base_;
            }
        }
        for (const auto &option : out.control_received)
        {
            on_control(option);
        }
        for (const auto &option : out.control_acked)
        {
            on_control_acked(option);
        }
    }

    void Connection::on_established(Subflow &subflow, const std::vector<Option> &options)
    {
        if (subflow.id() != 0)
        {
            trace(TraceEvent::state, subflow.id(), "join established");
            return;
        }
        if (initiator_)
        {
            const bool mpc = std::any_of(options.begin(), options.end(),
                                         [](const Option &o) { return std::holds_alternative<MpCapable>(o); });
            if (!mpc)
            {
                fallback_ = true;
                subflow.set_dsn_enabled(false);
                trace(TraceEvent::state, std::nullopt, "fallback single-path");
            }
        }
        set_phase(ConnPhase::established, "handshake");
        if (fallback_)
        {
            return;
        }
        // Advertise every additional local address right after establishment.
        SubflowOutput out;
        for (const auto &address : local_addresses_)
        {
            if (address != subflow.addresses().local)
            {
                subflow.enqueue_control(AddAddr{address});
            }
        }
        subflow.try_send(sim_.now(), std::numeric_limits<std::uint64_t>::max(), out);
        handle_output(subflow, out);
    }

    void Connection::on_control(const Option &option)
    {
        if (const auto *add = std::get_if<AddAddr>(&option))
        {
            on_addr_advertised(add->address);
        }
        else if (const auto *remove = std::get_if<RemoveAddr>(&option))
        {
            std::erase(remote_addresses_, remove->address);
            trace(TraceEvent::state, std::nullopt, "remove-addr " + remove->address.to_string());
        }
        else if (const auto *fin = std::get_if<DataFin>(&option))
        {
            peer_data_fin_ = fin->final_data_seq;
            trace(TraceEvent::state, std::nullopt, "data-fin-received final=" + std::to_string(fin->final_data_seq));
        }
        if (peer_data_fin_ && !end_of_stream_signalled_ && reassembly_.next() == *peer_data_fin_)
        {
            end_of_stream_signalled_ = true;
            if (on_end_of_stream_)
            {
                on_end_of_stream_();
            }
        }
    }

    void Connection::on_addr_advertised(Address remote)
    {
        if (std::find(remote_addresses_.begin(), remote_addresses_.end(), remote) == remote_addresses_.end())
        {
            remote_addresses_.push_back(remote);
        }
        trace(TraceEvent::state, std::nullopt, "addr-advertised " + remote.to_string());
        if (!initiator_ || fallback_ || phase_ != ConnPhase::established)
        {
            return;
        }
        if (address_in_use(remote, false))
        {
            return;
        }
        for (const auto &local : local_addresses_)
        {
            if (!address_in_use(local, true) && net_.has_route(local, remote))
            {
                Subflow &subflow = add_subflow({local, remote});
                SubflowOutput out;
                subflow.open_active(sim_.now(), {Join{token_}}, out);
                handle_output(subflow, out);
                return;
            }
        }
    }

    void Connection::on_control_acked(const Option &option)
    {
        if (!std::holds_alternative<DataFin>(option))
        {
            return;
        }
        trace(TraceEvent::state, std::nullopt, "data-fin-acked");
        for (auto &subflow : subflows_)
        {
            SubflowOutput out;
            subflow->close(sim_.now(), out);
            handle_output(*subflow, out);
        }
    }

    void Connection::on_payload(const Delivery &delivery)
    {
        DataSeq data_seq = 0;
        if (fallback_)
        {
            // The SYN took subflow offset 0.
            data_seq = delivery.subflow_offset - 1;
        }
        else
        {
            ensure(delivery.data_seq.has_value(), "payload without a DSN mapping");
            data_seq = *delivery.data_seq;
        }
        auto result = reassembly_.insert(data_seq, delivery.bytes);
        if (result.discarded > 0)
        {
            trace(TraceEvent::drop, std::nullopt,
                  "reassembly-window dsn=" + std::to_string(data_seq) + " bytes=" + std::to_string(result.discarded));
        }
        for (const auto &chunk : result.delivered)
        {
            trace(TraceEvent::deliver, std::nullopt,
                  "dsn=" + std::to_string(chunk.data_seq) + " len=" + std::to_string(chunk.bytes.size()));
            if (on_deliver_)
            {
                on_deliver_(chunk.data_seq, chunk.bytes);
            }
        }
        if (peer_data_fin_ && !end_of_stream_signalled_ && reassembly_.next() == *peer_data_fin_)
        {
            end_of_stream_signalled_ = true;
            if (on_end_of_stream_)
            {
                on_end_of_stream_();
            }
        }
    }

    void Connection::pump()
    {
        schedule_send();
        maybe_send_data_fin();
        check_closed();
        sync_timers();
    }

    void Connection::schedule_send()
    {
        if (phase_ != ConnPhase::established)
        {
            return;
        }
        while (next_data_seq_ < written_)
        {
            const std::uint64_t out_now = outstanding();
            const std::uint64_t rwnd_avail = peer_rwnd_ > out_now ? peer_rwnd_ - out_now : 0;
            if (rwnd_avail == 0)
            {
                break;
            }
            const auto length = static_cast<std::uint32_t>(
                std::min<std::uint64_t>({config_.subflow.mss, written_ - next_data_seq_, rwnd_avail}));

            // Round-robin over subflows with room, starting after the last one used.
            Subflow *chosen = nullptr;
            const std::size_t n = subflows_.size();
            for (std::size_t k = 0; k < n; ++k)
            {
                const std::size_t i = (rr_next_ + k) % n;
                Subflow &candidate = *subflows_[i];
                if (candidate.can_carry_data() && candidate.queued() == 0 && candidate.window_allows(length))
                {
                    chosen = &candidate;
                    rr_next_ = (i + 1) % n;
                    break;
                }
            }
            if (!chosen)
            {
                break;
            }
            const DataRange range{next_data_seq_, length};
            mappings_.emplace(next_data_seq_, length);
            next_data_seq_ += length;
            ensure(outstanding() <= peer_rwnd_, "data-level outstanding bytes exceed the receive window");
            trace(TraceEvent::sched, chosen->id(),
                  "dsn=" + std::to_string(range.data_seq) + " len=" + std::to_string(range.length));
            chosen->enqueue_data(range);
            SubflowOutput out;
            chosen->try_send(sim_.now(), rwnd_avail, out);
            handle_output(*chosen, out);
        }
    }

    void Connection::maybe_send_data_fin()
    {
        if (!close_requested_ || data_fin_queued_ || phase_ != ConnPhase::established)
        {
            return;
        }
        if (next_data_seq_ < written_ || !mappings_.empty())
        {
            return;
        }
        if (fallback_)
        {
            data_fin_queued_ = true;
            set_phase(ConnPhase::data_fin_sent, "close");
            for (auto &subflow : subflows_)
            {
                SubflowOutput out;
                subflow->close(sim_.now(), out);
                handle_output(*subflow, out);
            }
            return;
        }
        for (auto &subflow : subflows_)
        {
            if (subflow->state() == SubflowConnState::established)
            {
                subflow->enqueue_control(DataFin{next_data_seq_});
                data_fin_queued_ = true;
                set_phase(ConnPhase::data_fin_sent, "close");
                SubflowOutput out;
                subflow->try_send(sim_.now(), std::numeric_limits<std::uint64_t>::max(), out);
                handle_output(*subflow, out);
                return;
            }
        }
    }

    void Connection::check_closed()
    {
        if (phase_ == ConnPhase::closed || subflows_.empty())
        {
            if (phase_ == ConnPhase::closed && !closed_signalled_)
            {
                closed_signalled_ = true;
                if (on_closed_)
                {
                    on_closed_();
                }
            }
            return;
        }
        const bool all_closed = std::all_of(subflows_.begin(), subflows_.end(), [](const auto &subflow) {
            return subflow->state() == SubflowConnState::closed;
        });
        if (all_closed)
        {
            set_phase(ConnPhase::closed, "all subflows closed");
            check_closed();
        }
    }

    void Connection::sync_timers()
    {
        for (std::size_t i = 0; i < subflows_.size(); ++i)
        {
            auto &timer = timers_[i];
            const auto deadline = subflows_[i]->rto_deadline();
            if (timer.deadline == deadline)
            {
                continue;
            }
            sim_.cancel(timer.handle);
            timer.deadline = deadline;
            if (deadline)
            {
                timer.handle = sim_.schedule_at(std::max(*deadline, sim_.now()), [this, i] { on_timer(i); });
            }
        }
    }

    void Connection::on_timer(std::size_t index)
    {
        timers_[index].handle = EventHandle{};
        timers_[index].deadline.reset();
        Subflow &subflow = *subflows_[index];
        SubflowOutput out;
        subflow.on_rto(sim_.now(), others_window(subflow), out);
        handle_output(subflow, out);
        pump();
    }

    double Connection::others_window(const Subflow &subflow) const
    {
        double sum = 0.0;
        for (const auto &other : subflows_)
        {
            if (other.get() != &subflow && other->state() == SubflowConnState::established)
            {
                sum += other->cwnd();
            }
        }
        return sum;
    }

    void Connection::set_phase(ConnPhase phase, std::string_view why)
    {
        if (phase == phase_)
        {
            return;
        }
        trace(TraceEvent::state, std::nullopt,
              "conn " + std::string(to_string(phase_)) + "->" + std::string(to_string(phase)) + " " +
                  std::string(why));
        phase_ = phase;
    }

    std::vector<std::uint8_t> Connection::payload_for(DataSeq data_seq, std::uint32_t length) const
    {
        ensure(data_seq >= send_buffer_base_ && data_seq + length <= send_buffer_base_ + send_buffer_.size(),
               "payload requested outside the send buffer");
        const auto first = send_buffer_.begin() + static_cast<std::ptrdiff_t>(data_seq - send_buffer_base_);
        return {first, first + length};
    }

    void Connection::trace(TraceEvent event, std::optional<std::uint32_t> subflow, std::string detail)
    {
        if (!tracer_)
        {
            return;
        }
        TraceRecord rec;
        rec.time_us = sim_.now();
        rec.conn_id = conn_id_;
        rec.subflow_id = subflow;
        rec.event = event;
        rec.detail = std::move(detail);
        tracer_->record(std::move(rec));
    }

} // namespace mpsim
