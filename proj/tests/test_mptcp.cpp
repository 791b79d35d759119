#include "mpsim/mptcp.hpp"

#include <doctest.h>

#include <algorithm>
#include <memory>
#include <set>
#include <vector>

using namespace mpsim;

namespace
{
    std::vector<std::uint8_t> bytes_of(std::size_t n, std::uint8_t start = 0)
    {
        std::vector<std::uint8_t> v(n);
        for (std::size_t i = 0; i < n; ++i)
        {
            v[i] = static_cast<std::uint8_t>(start + i);
        }
        return v;
    }

    struct TopologyOptions
    {
        std::size_t links = 2;
        std::size_t client_addresses = 2;
        std::size_t server_addresses = 2;
        std::uint32_t rwnd = 65536;
        bool server_mp_capable = true;
    };

    struct Topology
    {
        Simulator sim;
        Rng rng{1};
        Tracer tracer;
        Network net{sim, rng, &tracer};
        std::unique_ptr<Connection> client;
        std::unique_ptr<Connection> server;
        std::vector<std::uint8_t> received;

        explicit Topology(TopologyOptions opt = {})
        {
            for (std::size_t i = 0; i < opt.links; ++i)
            {
                net.add_link({0, static_cast<std::uint8_t>(i)}, {1, static_cast<std::uint8_t>(i)}, LinkParams{});
            }
            std::vector<Address> ca;
            std::vector<Address> sa;
            for (std::size_t i = 0; i < opt.client_addresses; ++i)
            {
                ca.push_back({0, static_cast<std::uint8_t>(i)});
            }
            for (std::size_t i = 0; i < opt.server_addresses; ++i)
            {
                sa.push_back({1, static_cast<std::uint8_t>(i)});
            }
            ConnectionConfig cc;
            cc.rwnd = opt.rwnd;
            cc.subflow.initial_ssthresh = std::max(opt.rwnd / 1400.0, 2.0);
            cc.local_port = 49152;
            cc.remote_port = 21;
            client = std::make_unique<Connection>(sim, net, rng, &tracer, 0, ca, cc);
            ConnectionConfig sc = cc;
            sc.local_port = 21;
            sc.remote_port = 49152;
            sc.mp_capable = opt.server_mp_capable;
            server = std::make_unique<Connection>(sim, net, rng, &tracer, 1, sa, sc);
            server->set_deliver_handler([this](DataSeq seq, std::span<const std::uint8_t> b) {
                CHECK(seq == received.size());
                received.insert(received.end(), b.begin(), b.end());
            });
            server->listen();
        }

        void connect() { client->connect({1, 0}); }
        void run(SimTime until = 600 * kSecond) { sim.run_until(until); }

        std::vector<const TraceRecord *> rows(std::uint32_t conn, TraceEvent event) const
        {
            std::vector<const TraceRecord *> out;
            for (const auto &r : tracer.records())
            {
                if (r.conn_id == conn && r.event == event)
                {
                    out.push_back(&r);
                }
            }
            return out;
        }

        bool has_detail(std::uint32_t conn, std::string_view needle) const
        {
            return std::any_of(tracer.records().begin(), tracer.records().end(), [&](const TraceRecord &r) {
                return r.conn_id == conn && r.detail.find(needle) != std::string::npos;
            });
        }
    };

    std::size_t count_control_sends(const Topology &t, std::uint32_t conn)
    {
        const auto rows = t.rows(conn, TraceEvent::send);
        return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const TraceRecord *r) {
            return r->detail.find("control") != std::string::npos;
        }));
    }
} // namespace

TEST_CASE("reassembly delivers in order and fills gaps")
{
    ReassemblyBuffer buf(65536);
    auto r = buf.insert(0, bytes_of(1000));
    REQUIRE(r.delivered.size() == 1);
    CHECK(r.delivered[0].data_seq == 0);
    CHECK(r.delivered[0].bytes.size() == 1000);
    CHECK(buf.next() == 1000);

    r = buf.insert(2000, bytes_of(1000));
    CHECK(r.delivered.empty());
    CHECK(buf.buffered_bytes() == 1000);

    r = buf.insert(1000, bytes_of(1000));
    REQUIRE(r.delivered.size() == 2);
    CHECK(r.delivered[0].data_seq == 1000);
    CHECK(r.delivered[1].data_seq == 2000);
    CHECK(buf.next() == 3000);
    CHECK(buf.buffered_bytes() == 0);
}

TEST_CASE("reassembly ignores repeated ranges")
{
    ReassemblyBuffer buf(65536);
    buf.insert(0, bytes_of(1000));
    const auto r = buf.insert(0, bytes_of(1000));
    CHECK(r.delivered.empty());
    CHECK(r.discarded == 0);
    CHECK(buf.next() == 1000);
    CHECK(buf.ranges() == 0);
}

TEST_CASE("reassembly keeps the first copy of overlapping bytes")
{
    ReassemblyBuffer buf(65536);
    buf.insert(100, bytes_of(100, 0));
    buf.insert(300, bytes_of(100, 0));
    buf.insert(50, bytes_of(400, 50));
    CHECK(buf.ranges() == 5);
    CHECK(buf.buffered_bytes() == 400);
    const auto r = buf.insert(0, bytes_of(50));
    std::vector<std::uint8_t> all;
    for (const auto &c : r.delivered)
    {
        all.insert(all.end(), c.bytes.begin(), c.bytes.end());
    }
    REQUIRE(all.size() == 450);
    CHECK(all[100] == 0);
    CHECK(all[99] == 99);
    CHECK(all[300] == 0);
}

TEST_CASE("reassembly discards bytes beyond the window")
{
    ReassemblyBuffer buf(1000);
    const auto r = buf.insert(500, bytes_of(1000));
    CHECK(r.discarded == 500);
    CHECK(buf.buffered_bytes() == 500);
    CHECK(buf.insert(5000, bytes_of(10)).discarded == 10);
}

TEST_CASE("reassembly property: random arrival order yields the stream")
{
    Rng rng(3);
    for (int round = 0; round < 50; ++round)
    {
        const std::size_t total = 20000;
        const auto stream = bytes_of(total);
        std::vector<std::pair<DataSeq, std::size_t>> pieces;
        for (DataSeq s = 0; s < total;)
        {
            const std::size_t len = std::min<std::size_t>(1 + rng.next_u64() % 1500, total - s);
            pieces.emplace_back(s, len);
            s += len;
        }
        // Shuffle with duplicates.
        for (std::size_t i = 0; i < pieces.size() / 3; ++i)
        {
            pieces.push_back(pieces[rng.next_u64() % pieces.size()]);
        }
        for (std::size_t i = pieces.size(); i > 1; --i)
        {
            std::swap(pieces[i - 1], pieces[rng.next_u64() % i]);
        }
        ReassemblyBuffer buf(total);
        std::vector<std::uint8_t> out;
        for (const auto &[s, len] : pieces)
        {
            const auto r = buf.insert(s, std::span(stream).subspan(s, len));
            for (const auto &c : r.delivered)
            {
                CHECK(c.data_seq == out.size());
                out.insert(out.end(), c.bytes.begin(), c.bytes.end());
            }
        }
        CHECK(out == stream);
    }
}

TEST_CASE("establishment advertises addresses and opens one JOIN subflow")
{
    Topology t;
    t.connect();
    t.run(5 * kSecond);
    CHECK(t.client->phase() == ConnPhase::established);
    CHECK(t.server->phase() == ConnPhase::established);
    CHECK_FALSE(t.client->fallback());
    CHECK(t.client->token() == t.server->token());
    REQUIRE(t.client->subflows().size() == 2);
    REQUIRE(t.server->subflows().size() == 2);
    for (const auto &sf : t.client->subflows())
    {
        CHECK(sf->state() == SubflowConnState::established);
    }
    const auto &join = t.client->subflows()[1]->addresses();
    CHECK(join.local == Address{0, 1});
    CHECK(join.remote == Address{1, 1});
    CHECK(count_control_sends(t, 0) == 1);
    CHECK(count_control_sends(t, 1) == 1);
    CHECK(t.has_detail(0, "join established"));
}

TEST_CASE("single-address hosts use one subflow and send no ADDR")
{
    Topology t({1, 1, 1});
    t.connect();
    t.run(5 * kSecond);
    CHECK(t.client->phase() == ConnPhase::established);
    CHECK(t.client->subflows().size() == 1);
    CHECK(t.server->subflows().size() == 1);
    CHECK(count_control_sends(t, 0) == 0);
    CHECK(count_control_sends(t, 1) == 0);
}

TEST_CASE("an advertised address already in use opens nothing")
{
    // The server advertises a second address but the client has no spare one.
    Topology t({2, 1, 2});
    t.connect();
    t.run(5 * kSecond);
    CHECK(t.client->subflows().size() == 1);
    CHECK(t.has_detail(0, "addr-advertised 10.2.0.2"));
}

TEST_CASE("JOIN with the wrong token is reset")
{
    Topology t({2, 1, 2});
    t.connect();
    t.run(1 * kSecond);
    REQUIRE(t.server->phase() == ConnPhase::established);

    std::vector<Segment> answers;
    t.net.attach({0, 1}, [&](const Segment &s) { answers.push_back(s); });
    Segment syn;
    syn.src_addr = {0, 1};
    syn.dst_addr = {1, 1};
    syn.src_port = 49152;
    syn.dst_port = 21;
    syn.flags = kSyn;
    syn.seq = 7;
    syn.options = {Join{t.server->token() + 1}};
    t.net.send(syn, {});
    t.run(2 * kSecond);
    REQUIRE(answers.size() == 1);
    CHECK(answers[0].has(kRst));
    CHECK(answers[0].ack == 8u);
    CHECK(t.server->subflows().size() == 1);
    CHECK(t.has_detail(1, "join-refused"));
}

TEST_CASE("scheduler round-robins across subflows with room")
{
    Topology t;
    t.connect();
    t.run(5 * kSecond);
    REQUIRE(t.client->subflows().size() == 2);
    const auto before = t.rows(0, TraceEvent::sched).size();
    t.client->write(bytes_of(4 * 1400));
    const auto sched = t.rows(0, TraceEvent::sched);
    REQUIRE(sched.size() - before == 2);
    CHECK(sched[before]->subflow_id == 0u);
    CHECK(sched[before]->detail == "dsn=0 len=1400");
    CHECK(sched[before + 1]->subflow_id == 1u);
    CHECK(sched[before + 1]->detail == "dsn=1400 len=1400");
    CHECK(t.client->next_data_seq() == 2800);
}

TEST_CASE("a one-segment receive window allows one chunk outstanding")
{
    Topology t({2, 2, 2, 1400});
    t.connect();
    t.run(5 * kSecond);
    t.client->write(bytes_of(10 * 1400));
    CHECK(t.client->outstanding() == 1400);
    CHECK(t.rows(0, TraceEvent::sched).size() == 1);
    std::uint64_t worst = 0;
    for (SimTime now = 5 * kSecond; now < 60 * kSecond && t.received.size() < 14000; now += 1000)
    {
        t.run(now);
        worst = std::max(worst, t.client->outstanding());
    }
    CHECK(worst <= 1400);
    CHECK(t.received == bytes_of(14000));
}

TEST_CASE("DATA_FIN closes every subflow")
{
    Topology t;
    bool eos = false;
    bool closed = false;
    t.server->set_end_of_stream_handler([&] { eos = true; });
    t.client->set_closed_handler([&] { closed = true; });
    t.connect();
    t.client->write(bytes_of(10000));
    t.client->request_close();
    t.run(120 * kSecond);
    CHECK(t.received == bytes_of(10000));
    CHECK(eos);
    CHECK(closed);
    CHECK(t.has_detail(1, "data-fin-received final=10000"));
    CHECK(t.has_detail(0, "data-fin-acked"));
    CHECK(t.client->phase() == ConnPhase::closed);
    CHECK(t.server->phase() == ConnPhase::closed);
    for (const auto *c : {t.client.get(), t.server.get()})
    {
        for (const auto &sf : c->subflows())
        {
            CHECK(sf->state() == SubflowConnState::closed);
        }
    }
    CHECK(t.client->live_mappings() == 0);
    CHECK(t.sim.pending() == 0);
}

TEST_CASE("SYN-ACK without MP_CAPABLE falls back to one plain subflow")
{
    TopologyOptions opt;
    opt.server_mp_capable = false;
    Topology t(opt);
    t.connect();
    t.client->write(bytes_of(5000));
    t.client->request_close();
    t.run(120 * kSecond);
    CHECK(t.client->fallback());
    CHECK(t.server->fallback());
    CHECK(t.client->subflows().size() == 1);
    CHECK(t.received == bytes_of(5000));
    CHECK(t.has_detail(0, "fallback single-path"));
    CHECK(t.client->phase() == ConnPhase::closed);
    CHECK(t.server->phase() == ConnPhase::closed);
    for (const auto *r : t.rows(0, TraceEvent::send))
    {
        CHECK(r->detail.find("dsn=") == std::string::npos);
    }
}

TEST_CASE("close before connect")
{
    Topology t;
    t.client->request_close();
    CHECK(t.client->phase() == ConnPhase::closed);
}

TEST_CASE("close during the handshake aborts the half-open subflow")
{
    Topology t;
    t.connect();
    t.client->request_close();
    CHECK(t.client->phase() == ConnPhase::closed);
    REQUIRE(t.client->subflows().size() == 1);
    CHECK(t.client->subflows()[0]->state() == SubflowConnState::closed);
    t.run(5 * kSecond);
    CHECK(t.server->phase() != ConnPhase::established);
}

TEST_CASE("subflow address pairs stay unique")
{
    Topology t({3, 3, 3});
    t.connect();
    t.client->write(bytes_of(30000));
    t.client->request_close();
    t.run(120 * kSecond);
    for (const auto *c : {t.client.get(), t.server.get()})
    {
        std::set<Address> locals;
        std::set<Address> remotes;
        for (const auto &sf : c->subflows())
        {
            CHECK(locals.insert(sf->addresses().local).second);
            CHECK(remotes.insert(sf->addresses().remote).second);
        }
        CHECK(c->subflows().size() == 3);
    }
    CHECK(t.received == bytes_of(30000));
}
