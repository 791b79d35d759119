#pragma once

#include "mpsim/address.hpp"
#include "mpsim/netmodel.hpp"
#include "mpsim/reorder.hpp"
#include "mpsim/simcore.hpp"
#include "mpsim/subflow.hpp"
#include "mpsim/trace.hpp"
#include "mpsim/wire.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace mpsim
{
    enum class ConnPhase
    {
        idle,
        handshaking,
        established,
        data_fin_sent,
        closed,
    };

    std::string_view to_string(ConnPhase phase);

    // Connection-level reassembly. Ranges are kept disjoint and at or above
    // the delivery point; anything past `next() + capacity` is refused.
    class ReassemblyBuffer
    {
    public:
        struct Chunk
        {
            DataSeq data_seq = 0;
            std::vector<std::uint8_t> bytes;
        };

        struct InsertResult
        {
            std::vector<Chunk> delivered;
            std::uint64_t discarded = 0;
        };

        explicit ReassemblyBuffer(std::uint64_t capacity) : capacity_(capacity) {}

        InsertResult insert(DataSeq data_seq, std::span<const std::uint8_t> bytes);

        DataSeq next() const noexcept { return next_; }
        std::uint64_t buffered_bytes() const noexcept { return buffered_; }
        std::uint64_t capacity() const noexcept { return capacity_; }
        std::size_t ranges() const noexcept { return ranges_.size(); }

    private:
        std::uint64_t capacity_;
        DataSeq next_ = 0;
        std::uint64_t buffered_ = 0;
        std::map<DataSeq, std::vector<std::uint8_t>> ranges_;
    };

    struct ConnectionConfig
    {
        SubflowConfig subflow;
        DetectorKind detector = DetectorKind::none;
        // When false no detector object is attached at all.
        bool attach_detector = true;
        std::uint32_t rwnd = 65536;
        // A host that is not MP-capable answers SYN+MPC with a plain SYN-ACK.
        bool mp_capable = true;
        std::uint16_t local_port = 0;
        std::uint16_t remote_port = 0;
    };

    // The upper sublayer of one endpoint. The initiator connects and opens
    // JOIN subflows; the other side listens on all its addresses.
    class Connection
    {
    public:
        using DeliverHandler = std::function<void(DataSeq, std::span<const std::uint8_t>)>;
        using EventHandler = std::function<void()>;

        Connection(Simulator &sim, Network &net, Rng &rng, Tracer *tracer, std::uint32_t conn_id,
                   std::vector<Address> local_addresses, ConnectionConfig config);
        ~Connection();

        Connection(const Connection &) = delete;
        Connection &operator=(const Connection &) = delete;

        void listen();
        void connect(Address remote);

        // Appends application bytes to the send buffer.
        void write(std::span<const std::uint8_t> bytes);
        // Sends DATA_FIN once everything written has been acknowledged.
        void request_close();

        void set_deliver_handler(DeliverHandler handler) { on_deliver_ = std::move(handler); }
        void set_end_of_stream_handler(EventHandler handler) { on_end_of_stream_ = std::move(handler); }
        void set_closed_handler(EventHandler handler) { on_closed_ = std::move(handler); }

        void on_segment(const Segment &segment);

        ConnPhase phase() const noexcept { return phase_; }
        std::uint32_t conn_id() const noexcept { return conn_id_; }
        std::uint32_t token() const noexcept { return token_; }
        bool fallback() const noexcept { return fallback_; }
        const std::vector<std::unique_ptr<Subflow>> &subflows() const noexcept { return subflows_; }
        const std::vector<Address> &remote_addresses() const noexcept { return remote_addresses_; }

        DataSeq next_data_seq() const noexcept { return next_data_seq_; }
        DataSeq data_una() const noexcept;
        DataSeq data_rcv_nxt() const noexcept { return reassembly_.next(); }
        std::uint64_t outstanding() const noexcept { return next_data_seq_ - data_una(); }
        std::uint32_t peer_rwnd() const noexcept { return peer_rwnd_; }
        const ReassemblyBuffer &reassembly() const noexcept { return reassembly_; }
        std::size_t live_mappings() const noexcept { return mappings_.size(); }

    private:
        Subflow &add_subflow(AddressPair pair);
        Subflow *find_subflow(const AddressPair &pair);
        bool address_in_use(const Address &address, bool local) const;

        void accept_syn(const Segment &segment);
        void handle_output(Subflow &subflow, SubflowOutput &out);
        void on_established(Subflow &subflow, const std::vector<Option> &options);
        void on_addr_advertised(Address remote);
        void on_control(const Option &option);
        void on_control_acked(const Option &option);
        void on_payload(const Delivery &delivery);
        void pump();
        void schedule_send();
        void maybe_send_data_fin();
        void check_closed();
        void sync_timers();
        void on_timer(std::size_t index);
        double others_window(const Subflow &subflow) const;
        void send_reset_for(const Segment &segment);
        void set_phase(ConnPhase phase, std::string_view why);
        std::vector<std::uint8_t> payload_for(DataSeq data_seq, std::uint32_t length) const;
        void trace(TraceEvent event, std::optional<std::uint32_t> subflow, std::string detail);

        Simulator &sim_;
        Network &net_;
        Rng &rng_;
        Tracer *tracer_;
        std::uint32_t conn_id_;
        std::vector<Address> local_addresses_;
        std::vector<Address> remote_addresses_;
        ConnectionConfig config_;

        ConnPhase phase_ = ConnPhase::idle;
        bool initiator_ = false;
        bool listening_ = false;
        bool fallback_ = false;
        std::uint32_t token_ = 0;

        std::vector<std::unique_ptr<Subflow>> subflows_;
        std::map<AddressPair, std::size_t> by_pair_;
        struct Timer
        {
            EventHandle handle;
            std::optional<SimTime> deadline;
        };
        std::vector<Timer> timers_;

        // Send side.
        std::deque<std::uint8_t> send_buffer_;
        DataSeq send_buffer_base_ = 0;
        DataSeq written_ = 0;
        DataSeq next_data_seq_ = 0;
        std::map<DataSeq, std::uint32_t> mappings_;
        std::uint32_t peer_rwnd_;
        std::size_t rr_next_ = 0;
        bool close_requested_ = false;
        bool data_fin_queued_ = false;

        // Receive side.
        ReassemblyBuffer reassembly_;
        std::optional<DataSeq> peer_data_fin_;
        bool end_of_stream_signalled_ = false;

        DeliverHandler on_deliver_;
        EventHandler on_end_of_stream_;
        EventHandler on_closed_;
        bool closed_signalled_ = false;
    };

} // namespace mpsim
