#pragma once

#include "mpsim/address.hpp"
#include "mpsim/ccontrol.hpp"
#include "mpsim/reorder.hpp"
#include "mpsim/simcore.hpp"
#include "mpsim/trace.hpp"
#include "mpsim/wire.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

namespace mpsim
{
    enum class SubflowConnState
    {
        closed,
        listen,
        syn_sent,
        syn_rcvd,
        established,
        closing,
    };

    std::string_view to_string(SubflowConnState state);

    // The simplified TCP state graph: active open, passive open, handshake
    // completion, close from any state, and CLOSING -> CLOSED.
    bool is_allowed_transition(SubflowConnState from, SubflowConnState to);

    enum class AckAccounting
    {
        per_segment, // one window update per newly acknowledged segment
        per_ack,     // one window update per ACK that acknowledges new data
    };

    using PayloadSource = std::function<std::vector<std::uint8_t>(DataSeq, std::uint32_t)>;

    struct SubflowConfig
    {
        std::uint32_t mss = 1400;
        std::uint32_t dupthresh = 3;
        CcAlgorithm cc;
        AckAccounting ack_accounting = AckAccounting::per_segment;
        Duration initial_rto = 1 * kSecond;
        Duration min_rto = 200 * kMillisecond;
        Duration max_rto = 60 * kSecond;
        double initial_cwnd = 1.0;
        double initial_ssthresh = 65536.0 / 1400.0;
        SubflowSeq iss = 0;
        std::uint16_t local_port = 0;
        std::uint16_t remote_port = 0;
    };

    // Payload handed up in subflow order. `data_seq` comes from the DSN
    // mapping; it is absent for plain TCP segments.
    struct Delivery
    {
        std::optional<DataSeq> data_seq;
        std::uint64_t subflow_offset = 0;
        std::vector<std::uint8_t> bytes;
    };

    struct DataRange
    {
        DataSeq data_seq = 0;
        std::uint32_t length = 0;
    };

    // Everything a subflow asks its connection to do after one input.
    struct SubflowOutput
    {
        std::vector<Segment> segments;
        std::vector<Delivery> deliveries;
        // DSN-mapped ranges whose subflow bytes were cumulatively acknowledged.
        std::vector<DataRange> acked_data;
        // Control options (ADDR, REMOVE_ADDR, DATA_FIN) received in order.
        std::vector<Option> control_received;
        // Control options of ours that the peer acknowledged.
        std::vector<Option> control_acked;
        // Options of the SYN or SYN-ACK that moved us to ESTABLISHED.
        std::optional<std::vector<Option>> established_with;
        bool reset_received = false;
        bool closed = false;
    };

    struct SubflowStats
    {
        std::uint64_t bytes_sent = 0;
        std::uint64_t retransmissions = 0;
        std::uint64_t spurious_detections = 0;
        std::uint64_t timeouts = 0;
        std::uint64_t fast_retransmits = 0;
    };

    // One TCP-like flow between an address pair. Sequence numbers are kept
    // internally as 64-bit byte offsets from the initial sequence numbers and
    // converted to 32-bit modular values on the wire.
    class Subflow
    {
    public:
        using TransitionObserver = std::function<void(SubflowConnState, SubflowConnState)>;

        Subflow(std::uint32_t conn_id, std::uint32_t id, AddressPair addresses, SubflowConfig config,
                std::unique_ptr<ReorderDetector> detector = nullptr, Tracer *tracer = nullptr);

        std::uint32_t id() const noexcept { return id_; }
        std::uint32_t conn_id() const noexcept { return conn_id_; }
        const AddressPair &addresses() const noexcept { return addresses_; }
        SubflowConnState state() const noexcept { return state_; }
        const SubflowConfig &config() const noexcept { return config_; }

        void set_payload_source(PayloadSource source) { payload_source_ = std::move(source); }
        void set_transition_observer(TransitionObserver observer) { observer_ = std::move(observer); }
        void set_advertised_window(std::uint32_t window) noexcept { advertised_window_ = window; }
        // Options placed on our SYN-ACK when a SYN arrives in LISTEN.
        void set_syn_ack_options(std::vector<Option> options) { syn_ack_options_ = std::move(options); }
        // Plain TCP fallback sends data without DSN options.
        void set_dsn_enabled(bool enabled) noexcept { dsn_enabled_ = enabled; }

        // CLOSED -> SYN_SENT, emits SYN carrying `syn_options`.
        void open_active(SimTime now, std::vector<Option> syn_options, SubflowOutput &out);
        // CLOSED -> LISTEN.
        void open_passive(SimTime now);
        // Close request: -> CLOSING, emits FIN.
        void close(SimTime now, SubflowOutput &out);
        // Abort with RST: -> CLOSING -> CLOSED.
        void abort(SimTime now, SubflowOutput &out, bool send_rst = true);

        // `others_window` is the sum of the other live subflows' windows, so
        // the coupled rules see w = cwnd + others_window at each update.
        void on_segment(const Segment &segment, SimTime now, double others_window, SubflowOutput &out);
        void on_rto(SimTime now, double others_window, SubflowOutput &out);

        void enqueue_data(DataRange range);
        void enqueue_control(Option option);

        // Sends queued segments while the window allows; data segments also
        // consume `rwnd_budget` bytes of connection-level receive window.
        void try_send(SimTime now, std::uint64_t rwnd_budget, SubflowOutput &out);

        // True if `length` more bytes fit in floor(cwnd) whole segments.
        bool window_allows(std::uint32_t length) const noexcept;
        bool can_carry_data() const noexcept;

        std::optional<SimTime> rto_deadline() const noexcept { return rto_deadline_; }

        double cwnd() const noexcept { return cwnd_; }
        double ssthresh() const noexcept { return ssthresh_; }
        void set_cwnd(double cwnd);
        void set_ssthresh(double ssthresh);

        std::uint64_t snd_una() const noexcept { return snd_una_; }
        std::uint64_t snd_nxt() const noexcept { return snd_nxt_; }
        std::uint64_t rcv_nxt() const noexcept { return rcv_nxt_; }
        std::uint64_t in_flight() const noexcept { return snd_nxt_ - snd_una_; }
        SubflowSeq snd_una_wire() const noexcept { return snd_space_.to_wire(snd_una_); }
        SubflowSeq rcv_nxt_wire() const noexcept { return rcv_space_.to_wire(rcv_nxt_); }
        std::uint32_t dup_ack_count() const noexcept { return dup_ack_count_; }
        Duration rto() const noexcept { return rto_; }
        std::size_t queued() const noexcept { return pending_.size(); }
        std::uint64_t queued_data_bytes() const noexcept;
        std::size_t unacked_records() const noexcept { return unacked_.size(); }
        bool in_recovery() const noexcept { return in_recovery_; }
        const ReorderDetector *detector() const noexcept { return detector_.get(); }
        const SubflowStats &stats() const noexcept { return stats_; }
        std::uint32_t peer_window() const noexcept { return peer_window_; }

    private:
        enum class RecordKind
        {
            syn,
            data,
            control,
            fin,
        };

        struct Pending
        {
            RecordKind kind = RecordKind::data;
            DataRange data;
            std::optional<Option> control;
        };

        struct SentRecord
        {
            RecordKind kind = RecordKind::data;
            std::uint8_t flags = kAck;
            std::uint64_t seq = 0;
            std::uint32_t length = 0;
            DataRange data;
            std::vector<Option> options;
            SimTime last_sent = 0;
            bool retransmitted = false;
        };

        void transition(SubflowConnState to, SimTime now, std::string_view why);

        Segment make_segment(std::uint8_t flags, std::uint64_t seq_offset, SimTime now,
                             std::optional<SimTime> echo) const;
        Segment segment_for(const SentRecord &rec, SimTime now) const;
        void send_ack(SimTime now, std::optional<SimTime> echo, std::optional<Sack> sack, SubflowOutput &out);
        void send_reset_for(const Segment &segment, SubflowOutput &out) const;
        void transmit(SentRecord &rec, SimTime now, bool retransmission, SubflowOutput &out);
        void restart_timer(SimTime now);

        void handle_listen(const Segment &seg, SimTime now, SubflowOutput &out);
        void handle_syn_sent(const Segment &seg, SimTime now, SubflowOutput &out);
        void handle_synchronized(const Segment &seg, SimTime now, double others_window, SubflowOutput &out);

        void process_ack(const Segment &seg, SimTime now, double others_window, SubflowOutput &out);
        void process_dsack(const Segment &seg, std::uint64_t cum_ack, SimTime now);
        void process_payload(const Segment &seg, SimTime now, SubflowOutput &out);
        void accept_in_order(const Segment &seg, std::uint64_t start, SimTime now, SubflowOutput &out);
        Sack build_sack(std::uint64_t first_left, std::uint64_t first_right) const;

        void grow_window(double others_window, SimTime now);
        void fast_retransmit(SimTime now, double others_window, SubflowOutput &out);
        void abort_dsack_slow_start(SimTime now);
        void update_rtt(Duration sample);
        void maybe_finish_close(SimTime now, SubflowOutput &out);
        bool carries_dsack(const Segment &seg, std::uint64_t cum_ack) const;

        void trace(TraceEvent event, SimTime now, std::optional<std::uint64_t> seq = std::nullopt,
                   std::optional<std::uint64_t> ack = std::nullopt, std::string detail = {},
                   bool with_window = false) const;
        void trace_cwnd(SimTime now, std::string detail = {}) const;
        void trace_ssthresh(SimTime now) const;
        void check_window_invariants() const;

        std::uint32_t conn_id_;
        std::uint32_t id_;
        AddressPair addresses_;
        SubflowConfig config_;
        std::unique_ptr<ReorderDetector> detector_;
        Tracer *tracer_;
        PayloadSource payload_source_;
        TransitionObserver observer_;

        SubflowConnState state_ = SubflowConnState::closed;
        std::vector<Option> syn_ack_options_;
        bool dsn_enabled_ = true;
        std::uint32_t advertised_window_ = 65536;
        std::uint32_t peer_window_ = 65536;

        // Send side.
        SeqSpace snd_space_;
        std::uint64_t snd_una_ = 0;
        std::uint64_t snd_nxt_ = 0;
        double cwnd_;
        double ssthresh_;
        std::uint32_t dup_ack_count_ = 0;
        bool in_recovery_ = false;
        std::uint64_t recover_ = 0;
        std::deque<Pending> pending_;
        std::deque<SentRecord> unacked_;
        bool fin_sent_ = false;
        bool fin_acked_ = false;

        // RTO estimator.
        std::optional<double> srtt_;
        double rttvar_ = 0.0;
        Duration rto_;
        std::optional<SimTime> rto_deadline_;

        // Receive side.
        SeqSpace rcv_space_;
        std::uint64_t rcv_nxt_ = 0;
        std::map<std::uint64_t, Segment> out_of_order_;
        SimTime ts_recent_ = 0;
        bool peer_fin_received_ = false;

        SubflowStats stats_;
    };

} // namespace mpsim
