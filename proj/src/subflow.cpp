#include "mpsim/subflow.hpp"

#include "mpsim/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace mpsim
{
    std::string_view to_string(SubflowConnState state)
    {
        switch (state)
        {
        case SubflowConnState::closed:
            return "CLOSED";
        case SubflowConnState::listen:
            return "LISTEN";
        case SubflowConnState::syn_sent:
            return "SYN_SENT";
        case SubflowConnState::syn_rcvd:
            return "SYN_RCVD";
        case SubflowConnState::established:
            return "ESTABLISHED";
        case SubflowConnState::closing:
            return "CLOSING";
        }
        return "UNKNOWN";
    }

    bool is_allowed_transition(SubflowConnState from, SubflowConnState to)
    {
        using S = SubflowConnState;
        if (to == S::closing)
        {
            return from != S::closing;
        }
        switch (from)
        {
        case S::closed:
            return to == S::syn_sent || to == S::listen;
        case S::syn_sent:
            return to == S::established;
        case S::listen:
            return to == S::syn_rcvd;
        case S::syn_rcvd:
            return to == S::established;
        case S::established:
            return false;
        case S::closing:
            return to == S::closed;
        }
        return false;
    }

    Subflow::Subflow(std::uint32_t conn_id, std::uint32_t id, AddressPair addresses, SubflowConfig config,
                     std::unique_ptr<ReorderDetector> detector, Tracer *tracer)
        : conn_id_(conn_id), id_(id), addresses_(addresses), config_(config), detector_(std::move(detector)),
          tracer_(tracer), cwnd_(std::max(config.initial_cwnd, 1.0)),
          ssthresh_(std::max(config.initial_ssthresh, 2.0)), rto_(config.initial_rto)
    {
        snd_space_.base = config_.iss;
    }

    void Subflow::set_cwnd(double cwnd)
    {
        cwnd_ = cwnd;
        check_window_invariants();
    }

    void Subflow::set_ssthresh(double ssthresh)
    {
        ssthresh_ = ssthresh;
        check_window_invariants();
    }

    std::uint64_t Subflow::queued_data_bytes() const noexcept
    {
        std::uint64_t bytes = 0;
        for (const auto &p : pending_)
        {
            if (p.kind == RecordKind::data)
            {
                bytes += p.data.length;
            }
        }
        return bytes;
    }

    bool Subflow::window_allows(std::uint32_t length) const noexcept
    {
        const auto allowed = static_cast<std::uint64_t>(std::floor(cwnd_)) * config_.mss;
        return in_flight() + length <= allowed;
    }

    bool Subflow::can_carry_data() const noexcept
    {
        return state_ == SubflowConnState::established;
    }

    // ---------------------------------------------------------------------
    // State machine

    void Subflow::transition(SubflowConnState to, SimTime now, std::string_view why)
    {
        if (!is_allowed_transition(state_, to))
        {
            throw InvariantBreach("illegal subflow transition " + std::string(to_string(state_)) + "->" +
                                  std::string(to_string(to)));
        }
        const auto from = state_;
        state_ = to;
        trace(TraceEvent::state, now, std::nullopt, std::nullopt,
              std::string(to_string(from)) + "->" + std::string(to_string(to)) + " " + std::string(why));
        if (observer_)
        {
            observer_(from, to);
        }
    }

    void Subflow::open_active(SimTime now, std::vector<Option> syn_options, SubflowOutput &out)
    {
        transition(SubflowConnState::syn_sent, now, "connect");
        SentRecord rec;
        rec.kind = RecordKind::syn;
        rec.flags = kSyn;
        rec.seq = 0;
        rec.length = 1;
        rec.options = std::move(syn_options);
        snd_nxt_ = 1;
        unacked_.push_back(std::move(rec));
        transmit(unacked_.back(), now, false, out);
        restart_timer(now);
    }

    void Subflow::open_passive(SimTime now)
    {
        transition(SubflowConnState::listen, now, "listen");
    }

    void Subflow::close(SimTime now, SubflowOutput &out)
    {
        if (state_ == SubflowConnState::closing || state_ == SubflowConnState::closed)
        {
            return;
        }
        if (state_ != SubflowConnState::established && state_ != SubflowConnState::syn_rcvd)
        {
            abort(now, out);
            return;
        }
        transition(SubflowConnState::closing, now, "close");
        pending_.clear();
        SentRecord rec;
        rec.kind = RecordKind::fin;
        rec.flags = kFin | kAck;
        rec.seq = snd_nxt_;
        rec.length = 1;
        snd_nxt_ += 1;
        fin_sent_ = true;
        unacked_.push_back(std::move(rec));
        transmit(unacked_.back(), now, false, out);
        restart_timer(now);
    }

    void Subflow::abort(SimTime now, SubflowOutput &out, bool send_rst)
    {
        if (state_ == SubflowConnState::closed)
        {
            return;
        }
        if (send_rst && state_ != SubflowConnState::listen)
        {
            Segment rst = make_segment(kRst, snd_nxt_, now, std::nullopt);
            out.segments.push_back(std::move(rst));
        }
        if (state_ != SubflowConnState::closing)
        {
            transition(SubflowConnState::closing, now, "abort");
        }
        transition(SubflowConnState::closed, now, "abort");
        pending_.clear();
        unacked_.clear();
        rto_deadline_.reset();
        out.closed = true;
    }

    void Subflow::maybe_finish_close(SimTime now, SubflowOutput &out)
    {
        if (state_ == SubflowConnState::closing && fin_acked_ && peer_fin_received_)
        {
            transition(SubflowConnState::closed, now, "FIN-ACK");
            rto_deadline_.reset();
            out.closed = true;
        }
    }

    // ---------------------------------------------------------------------
    // Segment construction

    Segment Subflow::make_segment(std::uint8_t flags, std::uint64_t seq_offset, SimTime now,
                                  std::optional<SimTime> echo) const
    {
        Segment s;
        s.src_addr = addresses_.local;
        s.dst_addr = addresses_.remote;
        s.src_port = config_.local_port;
        s.dst_port = config_.remote_port;
        s.seq = snd_space_.to_wire(seq_offset);
        s.flags = flags;
        if (flags & kAck)
        {
            s.ack = rcv_space_.to_wire(rcv_nxt_);
        }
        s.window = advertised_window_;
        if (!(flags & kRst))
        {
            s.options.push_back(Timestamp{now, echo.value_or(ts_recent_)});
        }
        return s;
    }

    Segment Subflow::segment_for(const SentRecord &rec, SimTime now) const
    {
        Segment s = make_segment(rec.flags, rec.seq, now, std::nullopt);
        s.options.insert(s.options.begin(), rec.options.begin(), rec.options.end());
        if (rec.kind == RecordKind::data)
        {
            if (dsn_enabled_)
            {
                s.options.insert(s.options.begin(),
                                 DataSeqMap{rec.data.data_seq, snd_space_.to_wire(rec.seq), rec.data.length});
            }
            s.payload = payload_source_ ? payload_source_(rec.data.data_seq, rec.data.length)
                                        : std::vector<std::uint8_t>(rec.data.length, 0);
            ensure(s.payload.size() == rec.data.length, "payload source returned a short buffer");
        }
        return s;
    }

    void Subflow::send_ack(SimTime now, std::optional<SimTime> echo, std::optional<Sack> sack, SubflowOutput &out)
    {
        Segment s = make_segment(kAck, snd_nxt_, now, echo);
        if (sack)
        {
            s.options.push_back(std::move(*sack));
        }
        out.segments.push_back(std::move(s));
    }

    void Subflow::send_reset_for(const Segment &segment, SubflowOutput &out) const
    {
        if (segment.has(kRst))
        {
            return;
        }
        Segment r;
        r.src_addr = segment.dst_addr;
        r.dst_addr = segment.src_addr;
        r.src_port = segment.dst_port;
        r.dst_port = segment.src_port;
        if (segment.has(kAck))
        {
            r.seq = segment.ack;
            r.flags = kRst;
        }
        else
        {
            r.ack = segment.seq + segment.seq_length();
            r.flags = kRst | kAck;
        }
        out.segments.push_back(std::move(r));
    }

    void Subflow::transmit(SentRecord &rec, SimTime now, bool retransmission, SubflowOutput &out)
    {
        rec.last_sent = now;
        Segment s = segment_for(rec, now);
        stats_.bytes_sent += s.payload.size();
        if (retransmission)
        {
            rec.retransmitted = true;
            ++stats_.retransmissions;
        }
        else
        {
            std::string detail = flags_to_string(s.flags) + " len=" + std::to_string(s.payload.size());
            if (rec.kind == RecordKind::data && dsn_enabled_)
            {
                detail += " dsn=" + std::to_string(rec.data.data_seq);
            }
            else if (rec.kind == RecordKind::control)
            {
                detail += " control";
            }
            trace(TraceEvent::send, now, s.seq, std::nullopt, std::move(detail));
        }
        out.segments.push_back(std::move(s));
    }

    void Subflow::restart_timer(SimTime now)
    {
        if (unacked_.empty())
        {
            rto_deadline_.reset();
        }
        else
        {
            rto_deadline_ = now + rto_;
        }
    }

    // ---------------------------------------------------------------------
    // Sending

    void Subflow::enqueue_data(DataRange range)
    {
        ensure(range.length > 0 && range.length <= config_.mss, "data chunk must be 1..MSS bytes");
        pending_.push_back(Pending{RecordKind::data, range, std::nullopt});
    }

    void Subflow::enqueue_control(Option option)
    {
        pending_.push_back(Pending{RecordKind::control, {}, std::move(option)});
    }

    void Subflow::try_send(SimTime now, std::uint64_t rwnd_budget, SubflowOutput &out)
    {
        if (state_ != SubflowConnState::established)
        {
            return;
        }
        while (!pending_.empty())
        {
            const Pending &p = pending_.front();
            const std::uint32_t length = p.kind == RecordKind::data ? p.data.length : 1;
            if (!window_allows(length))
            {
                break;
            }
            if (p.kind == RecordKind::data)
            {
                if (length > rwnd_budget)
                {
                    break;
                }
                rwnd_budget -= length;
            }
            SentRecord rec;
            rec.kind = p.kind;
            rec.flags = kAck;
            rec.seq = snd_nxt_;
            rec.length = length;
            rec.data = p.data;
            if (p.control)
            {
                rec.options.push_back(*p.control);
            }
            pending_.pop_front();
            snd_nxt_ += length;
            unacked_.push_back(std::move(rec));
            transmit(unacked_.back(), now, false, out);
            if (!rto_deadline_)
            {
                restart_timer(now);
            }
        }
    }

    // ---------------------------------------------------------------------
    // Receiving

    void Subflow::on_segment(const Segment &seg, SimTime now, double others_window, SubflowOutput &out)
    {
        switch (state_)
        {
        case SubflowConnState::closed:
            send_reset_for(seg, out);
            return;
        case SubflowConnState::listen:
            handle_listen(seg, now, out);
            return;
        case SubflowConnState::syn_sent:
            handle_syn_sent(seg, now, out);
            return;
        case SubflowConnState::syn_rcvd:
        case SubflowConnState::established:
        case SubflowConnState::closing:
            handle_synchronized(seg, now, others_window, out);
            return;
        }
    }

    void Subflow::handle_listen(const Segment &seg, SimTime now, SubflowOutput &out)
    {
        if (seg.has(kRst))
        {
            return;
        }
        if (!seg.has(kSyn) || seg.has(kAck))
        {
            send_reset_for(seg, out);
            return;
        }
        rcv_space_.base = seg.seq;
        rcv_nxt_ = 1;
        if (const auto *ts = seg.find<Timestamp>())
        {
            ts_recent_ = ts->ts_val;
        }
        transition(SubflowConnState::syn_rcvd, now, "SYN");
        SentRecord rec;
        rec.kind = RecordKind::syn;
        rec.flags = kSyn | kAck;
        rec.seq = 0;
        rec.length = 1;
        rec.options = syn_ack_options_;
        snd_nxt_ = 1;
        unacked_.push_back(std::move(rec));
        transmit(unacked_.back(), now, false, out);
        restart_timer(now);
    }

    void Subflow::handle_syn_sent(const Segment &seg, SimTime now, SubflowOutput &out)
    {
        const bool ack_ok = seg.has(kAck) && snd_space_.to_offset(seg.ack, snd_una_) ==
                                                 static_cast<std::int64_t>(snd_nxt_);
        if (seg.has(kRst))
        {
            if (ack_ok)
            {
                out.reset_received = true;
                abort(now, out, false);
            }
            return;
        }
        if (seg.has(kAck) && !ack_ok)
        {
            send_reset_for(seg, out);
            return;
        }
        if (!seg.has(kSyn) || !seg.has(kAck))
        {
            return;
        }
        rcv_space_.base = seg.seq;
        rcv_nxt_ = 1;
        const auto *ts = seg.find<Timestamp>();
        if (ts)
        {
            ts_recent_ = ts->ts_val;
        }
        const SentRecord &syn = unacked_.front();
        if (!syn.retransmitted)
        {
            update_rtt(now - syn.last_sent);
        }
        unacked_.pop_front();
        snd_una_ = snd_nxt_;
        transition(SubflowConnState::established, now, "SYN-ACK");
        out.established_with = seg.options;
        restart_timer(now);
        send_ack(now, ts ? std::optional<SimTime>(ts->ts_val) : std::nullopt, std::nullopt, out);
    }

    void Subflow::handle_synchronized(const Segment &seg, SimTime now, double others_window, SubflowOutput &out)
    {
        if (seg.has(kRst))
        {
            out.reset_received = true;
            abort(now, out, false);
            return;
        }
        const auto *ts = seg.find<Timestamp>();
        if (state_ == SubflowConnState::syn_rcvd)
        {
            if (seg.has(kSyn) && !seg.has(kAck))
            {
                // Our SYN-ACK was lost; the peer repeated its SYN.
                if (!unacked_.empty() && unacked_.front().kind == RecordKind::syn)
                {
                    transmit(unacked_.front(), now, true, out);
                    restart_timer(now);
                }
                return;
            }
            if (!seg.has(kAck))
            {
                return;
            }
            const auto ack_off = snd_space_.to_offset(seg.ack, snd_una_);
            if (ack_off < 1 || ack_off > static_cast<std::int64_t>(snd_nxt_))
            {
                send_reset_for(seg, out);
                return;
            }
            transition(SubflowConnState::established, now, "ACK");
            out.established_with = seg.options;
        }
        else if (seg.has(kSyn))
        {
            // Duplicate SYN-ACK: our handshake ACK was lost.
            send_ack(now, ts ? std::optional<SimTime>(ts->ts_val) : std::nullopt, std::nullopt, out);
            return;
        }

        if (seg.has(kAck))
        {
            process_ack(seg, now, others_window, out);
        }
        if (state_ != SubflowConnState::closed && seg.seq_length() > 0)
        {
            process_payload(seg, now, out);
        }
        maybe_finish_close(now, out);
    }

    bool Subflow::carries_dsack(const Segment &seg, std::uint64_t cum_ack) const
    {
        const auto *sack = seg.find<Sack>();
        if (!sack || sack->blocks.empty())
        {
            return false;
        }
        const auto right = snd_space_.to_offset(sack->blocks.front().right, snd_una_);
        return right <= static_cast<std::int64_t>(cum_ack);
    }

    void Subflow::process_ack(const Segment &seg, SimTime now, double others_window, SubflowOutput &out)
    {
        const auto ack_signed = snd_space_.to_offset(seg.ack, snd_una_);
        if (ack_signed > static_cast<std::int64_t>(snd_nxt_))
        {
            trace(TraceEvent::ack, now, std::nullopt, seg.ack, "invalid-above-snd_nxt");
            return;
        }
        peer_window_ = seg.window;
        if (ack_signed < static_cast<std::int64_t>(snd_una_))
        {
            return;
        }
        const auto ack_off = static_cast<std::uint64_t>(ack_signed);
        const auto *ts = seg.find<Timestamp>();

        if (ack_off == snd_una_)
        {
            const bool pure_ack = seg.seq_length() == 0 && !seg.has(kSyn) && !seg.has(kFin);
            if (pure_ack)
            {
                // A DSACK may arrive after everything else was acknowledged.
                process_dsack(seg, ack_off, now);
            }
            if (!pure_ack || unacked_.empty())
            {
                return;
            }
            if (carries_dsack(seg, ack_off))
            {
                // Reports a duplicate arrival, not a hole.
                trace(TraceEvent::dupack, now, std::nullopt, seg.ack, "dsack", true);
                return;
            }
            ++dup_ack_count_;
            trace(TraceEvent::dupack, now, std::nullopt, seg.ack, "count=" + std::to_string(dup_ack_count_), true);
            if (dup_ack_count_ == config_.dupthresh && !in_recovery_)
            {
                fast_retransmit(now, others_window, out);
            }
            return;
        }

        std::size_t data_acked = 0;
        bool any_retransmitted = false;
        std::optional<SimTime> sample_sent_at;
        while (!unacked_.empty() && unacked_.front().seq + unacked_.front().length <= ack_off)
        {
            SentRecord &rec = unacked_.front();
            if (rec.retransmitted)
            {
                any_retransmitted = true;
            }
            else
            {
                sample_sent_at = rec.last_sent;
            }
            switch (rec.kind)
            {
            case RecordKind::data:
                out.acked_data.push_back(rec.data);
                ++data_acked;
                break;
            case RecordKind::control:
                out.control_acked.push_back(rec.options.front());
                break;
            case RecordKind::fin:
                fin_acked_ = true;
                break;
            case RecordKind::syn:
                break;
            }
            unacked_.pop_front();
        }
        snd_una_ = ack_off;
        dup_ack_count_ = 0;
        trace(TraceEvent::ack, now, std::nullopt, seg.ack, "acked=" + std::to_string(data_acked));
        if (!any_retransmitted && sample_sent_at)
        {
            update_rtt(now - *sample_sent_at);
        }

        bool restored = false;
        if (detector_ && detector_->kind() == DetectorKind::eifel && ts)
        {
            const auto &snap = detector_->snapshot();
            const bool covers = snap.armed && ack_off > snap.retrans_seq;
            const auto retrans_seq = snap.retrans_seq;
            const auto retrans_ts = snap.retrans_ts_val;
            const auto result = detector_->eifel_on_ack(covers, ts->ts_echo);
            if (result.verdict == Verdict::spurious)
            {
                ++stats_.spurious_detections;
                trace(TraceEvent::spurious_eifel, now, snd_space_.to_wire(retrans_seq), seg.ack,
                      "echo=" + std::to_string(ts->ts_echo) + " retrans_ts=" + std::to_string(retrans_ts), true);
                cwnd_ = result.cwnd;
                ssthresh_ = result.ssthresh;
                in_recovery_ = false;
                abort_dsack_slow_start(now);
                trace_cwnd(now, "eifel-restore");
                trace_ssthresh(now);
                check_window_invariants();
                restored = true;
            }
        }
        process_dsack(seg, ack_off, now);

        if (in_recovery_)
        {
            if (ack_off >= recover_)
            {
                in_recovery_ = false;
            }
            else if (!unacked_.empty())
            {
                // Partial ACK: the next hole is repaired at once.
                trace(TraceEvent::retx, now, snd_space_.to_wire(unacked_.front().seq), std::nullopt, "partial",
                      true);
                transmit(unacked_.front(), now, true, out);
            }
        }

        if (!restored)
        {
            std::size_t updates = data_acked;
            // The DSACK slow start counts ACKs, not acknowledged segments.
            if (config_.ack_accounting == AckAccounting::per_ack || (detector_ && detector_->slow_start().active))
            {
                updates = std::min<std::size_t>(updates, 1);
            }
            for (std::size_t i = 0; i < updates; ++i)
            {
                grow_window(others_window, now);
            }
        }
        restart_timer(now);
    }

    void Subflow::process_dsack(const Segment &seg, std::uint64_t cum_ack, SimTime now)
    {
        if (!detector_ || detector_->kind() != DetectorKind::dsack)
        {
            return;
        }
        const auto *sack = seg.find<Sack>();
        if (!sack || sack->blocks.empty())
        {
            return;
        }
        std::vector<DsackBlock> blocks;
        for (const auto &b : sack->blocks)
        {
            const auto left = std::max<std::int64_t>(snd_space_.to_offset(b.left, snd_una_), 0);
            const auto right = std::max<std::int64_t>(snd_space_.to_offset(b.right, snd_una_), 0);
            blocks.push_back({static_cast<std::uint64_t>(left), static_cast<std::uint64_t>(right)});
        }
        const auto retrans_seq = detector_->snapshot().retrans_seq;
        switch (detector_->dsack_on_ack(cum_ack, blocks, cwnd_))
        {
        case Verdict::spurious:
            ++stats_.spurious_detections;
            trace(TraceEvent::spurious_dsack, now, snd_space_.to_wire(retrans_seq), seg.ack,
                  "block=" + std::to_string(sack->blocks.front().left) + "-" +
                      std::to_string(sack->blocks.front().right),
                  true);
            if (detector_->slow_start().active)
            {
                trace(TraceEvent::dsack_ss_begin, now, std::nullopt, std::nullopt,
                      "target=" + std::to_string(window_bytes(detector_->slow_start().target_cwnd, config_.mss)),
                      true);
            }
            break;
        case Verdict::malformed:
            trace(TraceEvent::ack, now, std::nullopt, seg.ack, "malformed-sack");
            break;
        default:
            break;
        }
    }

    void Subflow::process_payload(const Segment &seg, SimTime now, SubflowOutput &out)
    {
        const std::uint32_t length = seg.seq_length();
        const std::int64_t start = rcv_space_.to_offset(seg.seq, rcv_nxt_);
        const std::int64_t end = start + length;
        const auto *ts = seg.find<Timestamp>();
        const std::optional<SimTime> echo = ts ? std::optional<SimTime>(ts->ts_val) : std::nullopt;
        const auto rcv_nxt = static_cast<std::int64_t>(rcv_nxt_);

        if (end <= rcv_nxt)
        {
            trace(TraceEvent::recv, now, seg.seq, std::nullopt, "duplicate len=" + std::to_string(length));
            send_ack(now, echo, build_sack(static_cast<std::uint64_t>(std::max<std::int64_t>(start, 0)),
                                           static_cast<std::uint64_t>(std::max<std::int64_t>(end, 0))),
                     out);
            return;
        }
        if (start > rcv_nxt)
        {
            out_of_order_.try_emplace(static_cast<std::uint64_t>(start), seg);
            trace(TraceEvent::recv, now, seg.seq, std::nullopt, "out-of-order len=" + std::to_string(length));
            send_ack(now, echo, build_sack(static_cast<std::uint64_t>(start), static_cast<std::uint64_t>(end)), out);
            return;
        }

        accept_in_order(seg, static_cast<std::uint64_t>(start), now, out);
        while (!out_of_order_.empty() && out_of_order_.begin()->first <= rcv_nxt_)
        {
            auto node = out_of_order_.extract(out_of_order_.begin());
            if (node.key() + node.mapped().seq_length() > rcv_nxt_)
            {
                accept_in_order(node.mapped(), node.key(), now, out);
            }
        }
        if (ts)
        {
            ts_recent_ = ts->ts_val;
        }

        if (peer_fin_received_ && state_ == SubflowConnState::established)
        {
            // Passive close: our FIN rides on the ACK of theirs.
            transition(SubflowConnState::closing, now, "FIN");
            pending_.clear();
            SentRecord rec;
            rec.kind = RecordKind::fin;
            rec.flags = kFin | kAck;
            rec.seq = snd_nxt_;
            rec.length = 1;
            snd_nxt_ += 1;
            fin_sent_ = true;
            unacked_.push_back(std::move(rec));
            transmit(unacked_.back(), now, false, out);
            restart_timer(now);
            return;
        }
        send_ack(now, echo, std::nullopt, out);
    }

    void Subflow::accept_in_order(const Segment &seg, std::uint64_t start, SimTime now, SubflowOutput &out)
    {
        const std::uint64_t trim = rcv_nxt_ - start;
        if (seg.payload.size() > trim)
        {
            Delivery d;
            if (const auto *dsn = seg.find<DataSeqMap>())
            {
                d.data_seq = dsn->data_seq + trim;
            }
            d.subflow_offset = start + trim;
            d.bytes.assign(seg.payload.begin() + static_cast<std::ptrdiff_t>(trim), seg.payload.end());
            trace(TraceEvent::recv, now, rcv_space_.to_wire(start + trim), std::nullopt,
                  "len=" + std::to_string(d.bytes.size()));
            out.deliveries.push_back(std::move(d));
        }
        else if (seg.is_control() && trim == 0)
        {
            for (const auto &option : seg.options)
            {
                if (std::holds_alternative<AddAddr>(option) || std::holds_alternative<RemoveAddr>(option) ||
                    std::holds_alternative<DataFin>(option))
                {
                    out.control_received.push_back(option);
                }
            }
        }
        if (seg.has(kFin))
        {
            peer_fin_received_ = true;
        }
        rcv_nxt_ = std::max(rcv_nxt_, start + seg.seq_length());
    }

    Sack Subflow::build_sack(std::uint64_t first_left, std::uint64_t first_right) const
    {
        Sack sack;
        sack.blocks.push_back({rcv_space_.to_wire(first_left), rcv_space_.to_wire(first_right)});
        std::optional<std::pair<std::uint64_t, std::uint64_t>> current;
        auto flush = [&] {
            if (current && sack.blocks.size() < Sack::kMaxBlocks &&
                !(current->first == first_left && current->second == first_right))
            {
                sack.blocks.push_back({rcv_space_.to_wire(current->first), rcv_space_.to_wire(current->second)});
            }
        };
        for (const auto &[s, segment] : out_of_order_)
        {
            const auto e = s + segment.seq_length();
            if (current && s <= current->second)
            {
                current->second = std::max(current->second, e);
            }
            else
            {
                flush();
                current = {s, e};
            }
        }
        flush();
        return sack;
    }

    // ---------------------------------------------------------------------
    // Window management

    void Subflow::grow_window(double others_window, SimTime now)
    {
        if (detector_ && detector_->slow_start().active)
        {
            const auto growth = detector_->dsack_growth_on_ack(cwnd_);
            cwnd_ = growth.cwnd;
            trace_cwnd(now, "dsack-ss");
            if (growth.ended)
            {
                trace(TraceEvent::dsack_ss_end, now, std::nullopt, std::nullopt, "reached", true);
            }
        }
        else if (cwnd_ < ssthresh_)
        {
            cwnd_ += 1.0;
            trace_cwnd(now, "ss");
        }
        else
        {
            const std::array<double, 2> windows{cwnd_, others_window};
            const ConnectionWindowView view{std::span<const double>(windows.data(), others_window > 0.0 ? 2 : 1)};
            cwnd_ = cc_on_ack(config_.cc, view, 0);
            trace_cwnd(now, "ca");
        }
        check_window_invariants();
    }

    void Subflow::abort_dsack_slow_start(SimTime now)
    {
        if (detector_ && detector_->abort_slow_start())
        {
            trace(TraceEvent::dsack_ss_end, now, std::nullopt, std::nullopt, "aborted", true);
        }
    }

    void Subflow::fast_retransmit(SimTime now, double others_window, SubflowOutput &out)
    {
        SentRecord &rec = unacked_.front();
        if (detector_)
        {
            detector_->on_retransmit(cwnd_, ssthresh_, rec.seq, now, now, snd_una_, 2 * rto_);
        }
        ++stats_.fast_retransmits;
        trace(TraceEvent::retx, now, snd_space_.to_wire(rec.seq), std::nullopt, "fast", true);

        const double flight = static_cast<double>(in_flight()) / config_.mss;
        ssthresh_ = std::max(flight / 2.0, 2.0);
        abort_dsack_slow_start(now);
        const std::array<double, 2> windows{cwnd_, others_window};
        const ConnectionWindowView view{std::span<const double>(windows.data(), others_window > 0.0 ? 2 : 1)};
        cwnd_ = cc_on_loss(config_.cc, view, 0);
        trace_cwnd(now, "loss");
        trace_ssthresh(now);
        check_window_invariants();

        in_recovery_ = true;
        recover_ = snd_nxt_;
        transmit(rec, now, true, out);
        restart_timer(now);
    }

    void Subflow::on_rto(SimTime now, double others_window, SubflowOutput &out)
    {
        (void)others_window;
        rto_deadline_.reset();
        if (unacked_.empty() || state_ == SubflowConnState::closed)
        {
            return;
        }
        SentRecord &rec = unacked_.front();
        ++stats_.timeouts;
        if (rec.kind == RecordKind::syn)
        {
            trace(TraceEvent::rto, now, snd_space_.to_wire(rec.seq), std::nullopt, "syn");
            transmit(rec, now, true, out);
            rto_ = std::min(rto_ * 2, config_.max_rto);
            restart_timer(now);
            return;
        }

        // Snapshot before the reduction.
        if (detector_)
        {
            detector_->on_retransmit(cwnd_, ssthresh_, rec.seq, now, now, snd_una_, 2 * rto_);
        }
        trace(TraceEvent::rto, now, snd_space_.to_wire(rec.seq), std::nullopt,
              "rto=" + std::to_string(rto_), true);

        const double flight = static_cast<double>(in_flight()) / config_.mss;
        ssthresh_ = std::max(flight / 2.0, 2.0);
        abort_dsack_slow_start(now);
        cwnd_ = 1.0;
        trace_cwnd(now, "rto");
        trace_ssthresh(now);
        check_window_invariants();

        in_recovery_ = true;
        recover_ = snd_nxt_;
        dup_ack_count_ = 0;
        transmit(rec, now, true, out);
        rto_ = std::min(rto_ * 2, config_.max_rto);
        restart_timer(now);
    }

    void Subflow::update_rtt(Duration sample)
    {
        const double r = static_cast<double>(sample);
        if (!srtt_)
        {
            srtt_ = r;
            rttvar_ = r / 2.0;
        }
        else
        {
            rttvar_ = 0.75 * rttvar_ + 0.25 * std::abs(*srtt_ - r);
            srtt_ = 0.875 * *srtt_ + 0.125 * r;
        }
        const double rto = *srtt_ + std::max(1000.0, 4.0 * rttvar_);
        rto_ = std::clamp(static_cast<Duration>(std::llround(rto)), config_.min_rto, config_.max_rto);
    }

    // ---------------------------------------------------------------------
    // Tracing

    void Subflow::trace(TraceEvent event, SimTime now, std::optional<std::uint64_t> seq,
                        std::optional<std::uint64_t> ack, std::string detail, bool with_window) const
    {
        if (!tracer_)
        {
            return;
        }
        TraceRecord rec;
        rec.time_us = now;
        rec.conn_id = conn_id_;
        rec.subflow_id = id_;
        rec.event = event;
        rec.seq = seq;
        rec.ack = ack;
        if (with_window)
        {
            rec.cwnd = cwnd_;
            rec.ssthresh = ssthresh_;
        }
        rec.detail = std::move(detail);
        tracer_->record(std::move(rec));
    }

    void Subflow::trace_cwnd(SimTime now, std::string detail) const
    {
        trace(TraceEvent::cwnd, now, std::nullopt, std::nullopt, std::move(detail), true);
    }

    void Subflow::trace_ssthresh(SimTime now) const
    {
        trace(TraceEvent::ssthresh, now, std::nullopt, std::nullopt, {}, true);
    }

    void Subflow::check_window_invariants() const
    {
        ensure(cwnd_ >= 1.0, "cwnd fell below one segment");
        ensure(ssthresh_ >= 2.0, "ssthresh fell below two segments");
    }

} // namespace mpsim
