#include "mpsim/scenario.hpp"

#include "mpsim/app.hpp"
#include "mpsim/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <set>
#include <sstream>

namespace mpsim
{
    namespace
    {
        std::string_view trim(std::string_view s)
        {
            const auto first = s.find_first_not_of(" \t\r");
            if (first == std::string_view::npos)
            {
                return {};
            }
            const auto last = s.find_last_not_of(" \t\r");
            return s.substr(first, last - first + 1);
        }

        template <typename T>
        std::optional<T> parse_number(std::string_view text)
        {
            T value{};
            const auto *end = text.data() + text.size();
            auto [ptr, ec] = std::from_chars(text.data(), end, value);
            if (ec != std::errc{} || ptr != end)
            {
                return std::nullopt;
            }
            return value;
        }

        template <typename T>
        T integer_in(std::string_view key, std::string_view value, int line, T lo, T hi)
        {
            const auto parsed = parse_number<T>(value);
            if (!parsed)
            {
                throw ConfigError(line, std::string(key), "expected an integer, got '" + std::string(value) + "'");
            }
            if (*parsed < lo || *parsed > hi)
            {
                throw ConfigError(line, std::string(key),
                                  "value " + std::string(value) + " out of range [" + std::to_string(lo) + ", " +
                                      std::to_string(hi) + "]");
            }
            return *parsed;
        }

        double real_in(std::string_view key, std::string_view value, int line, double lo, double hi,
                       bool lo_open = false)
        {
            const auto parsed = parse_number<double>(value);
            if (!parsed || !std::isfinite(*parsed))
            {
                throw ConfigError(line, std::string(key), "expected a number, got '" + std::string(value) + "'");
            }
            if (*parsed > hi || *parsed < lo || (lo_open && *parsed == lo))
            {
                std::ostringstream msg;
                msg << "value " << value << " out of range " << (lo_open ? "(" : "[") << lo << ", " << hi << "]";
                throw ConfigError(line, std::string(key), msg.str());
            }
            return *parsed;
        }

        Duration duration_in(std::string_view key, std::string_view value, int line)
        {
            try
            {
                return parse_duration(value);
            }
            catch (const std::invalid_argument &e)
            {
                throw ConfigError(line, std::string(key), e.what());
            }
        }

        void apply_link_setting(LinkParams &link, std::string_view key, std::string_view value, int line)
        {
            if (key == "bandwidth_bps")
            {
                link.bandwidth_bps = integer_in<std::uint64_t>(key, value, line, 1'000, 100'000'000'000ULL);
            }
            else if (key == "loss_rate")
            {
                link.loss_rate = real_in(key, value, line, 0.0, 1.0);
            }
            else if (key == "delay_schedule" || key == "delay")
            {
                try
                {
                    link.delay = parse_delay_schedule(value);
                }
                catch (const std::invalid_argument &e)
                {
                    throw ConfigError(line, std::string(key), e.what());
                }
            }
            else
            {
                throw ConfigError(line, std::string(key), "unknown key in link section");
            }
        }

        // Reads one "[link.N]" header; returns N.
        std::size_t parse_section(std::string_view header, int line)
        {
            const auto name = trim(header.substr(1, header.size() - 2));
            if (!name.starts_with("link."))
            {
                throw ConfigError(line, std::string(name), "unknown section");
            }
            const auto index = parse_number<std::size_t>(name.substr(5));
            if (!index)
            {
                throw ConfigError(line, std::string(name), "bad link index");
            }
            return *index;
        }
    } // namespace

    Duration parse_duration(std::string_view text)
    {
        text = trim(text);
        if (text == "0")
        {
            return 0;
        }
        struct Unit
        {
            std::string_view suffix;
            double scale;
        };
        static constexpr Unit kUnits[] = {{"us", 1.0}, {"ms", 1e3}, {"s", 1e6}};
        for (const auto &unit : kUnits)
        {
            if (text.size() > unit.suffix.size() && text.ends_with(unit.suffix))
            {
                const auto number = parse_number<double>(text.substr(0, text.size() - unit.suffix.size()));
                if (!number || !std::isfinite(*number) || *number < 0.0)
                {
                    break;
                }
                const double us = *number * unit.scale;
                if (us > 1e15)
                {
                    break;
                }
                return static_cast<Duration>(std::llround(us));
            }
        }
        throw std::invalid_argument("bad duration '" + std::string(text) + "' (use us, ms or s)");
    }

    DelaySchedule parse_delay_schedule(std::string_view text)
    {
        std::vector<DelayStep> steps;
        std::size_t pos = 0;
        text = trim(text);
        if (text.find_first_of(":,") == std::string_view::npos)
        {
            // A bare duration is a constant delay.
            return DelaySchedule::constant(parse_duration(text));
        }
        while (pos <= text.size())
        {
            const auto comma = std::min(text.find(',', pos), text.size());
            const auto item = trim(text.substr(pos, comma - pos));
            const auto colon = item.find(':');
            if (colon == std::string_view::npos)
            {
                throw std::invalid_argument("delay step '" + std::string(item) + "' needs <from>:<delay>");
            }
            steps.push_back({parse_duration(item.substr(0, colon)), parse_duration(item.substr(colon + 1))});
            if (steps.back().delay > 10 * kSecond)
            {
                throw std::invalid_argument("delay above 10s");
            }
            pos = comma + 1;
        }
        return DelaySchedule(std::move(steps));
    }

    void apply_setting(ScenarioConfig &config, std::string_view key, std::string_view value, int line)
    {
        const std::string k(key);
        if (key == "cc")
        {
            const auto kind = cc_kind_from_string(value);
            if (!kind)
            {
                throw ConfigError(line, k, "unknown algorithm '" + std::string(value) + "'");
            }
            config.cc.kind = *kind;
        }
        else if (key == "a")
        {
            config.cc.a = real_in(key, value, line, 0.0, 1000.0, true);
        }
        else if (key == "rttc_second_term")
        {
            const auto term = rttc_second_term_from_string(value);
            if (!term)
            {
                throw ConfigError(line, k, "expected total or per_path");
            }
            config.cc.rttc_second_term = *term;
        }
        else if (key == "reorder")
        {
            const auto kind = detector_kind_from_string(value);
            if (!kind)
            {
                throw ConfigError(line, k, "expected none, eifel or dsack");
            }
            config.reorder = *kind;
        }
        else if (key == "ack_accounting")
        {
            if (value == "per_segment")
            {
                config.ack_accounting = AckAccounting::per_segment;
            }
            else if (value == "per_ack")
            {
                config.ack_accounting = AckAccounting::per_ack;
            }
            else
            {
                throw ConfigError(line, k, "expected per_segment or per_ack");
            }
        }
        else if (key == "mss")
        {
            config.mss = integer_in<std::uint32_t>(key, value, line, 64, 9000);
        }
        else if (key == "rwnd")
        {
            config.rwnd = integer_in<std::uint32_t>(key, value, line, 64, 1U << 30);
        }
        else if (key == "dupthresh")
        {
            config.dupthresh = integer_in<std::uint32_t>(key, value, line, 1, 64);
        }
        else if (key == "file_size")
        {
            config.file_size = integer_in<std::uint64_t>(key, value, line, 1, 1ULL << 32);
        }
        else if (key == "seed")
        {
            config.seed = integer_in<std::uint64_t>(key, value, line, 0, UINT64_MAX);
        }
        else if (key == "sim_time_limit")
        {
            config.sim_time_limit = duration_in(key, value, line);
            if (config.sim_time_limit == 0)
            {
                throw ConfigError(line, k, "must be positive");
            }
        }
        else if (key == "trace_out")
        {
            config.trace_path = std::string(value);
        }
        else if (key == "links")
        {
            config.links.resize(integer_in<std::size_t>(key, value, line, 1, kMaxLinks));
        }
        else
        {
            throw ConfigError(line, k, "unknown key");
        }
    }

    ScenarioConfig parse_config(std::string_view text)
    {
        ScenarioConfig config;
        std::map<std::size_t, std::vector<std::tuple<int, std::string, std::string>>> link_settings;
        std::map<std::size_t, int> section_lines;
        std::set<std::string> seen;
        std::optional<std::size_t> section;

        int line_no = 0;
        std::size_t pos = 0;
        while (pos < text.size())
        {
            const auto eol = std::min(text.find('\n', pos), text.size());
            auto line = text.substr(pos, eol - pos);
            pos = eol + 1;
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string_view::npos)
            {
                line = line.substr(0, hash);
            }
            line = trim(line);
            if (line.empty())
            {
                continue;
            }
            if (line.front() == '[')
            {
                if (line.back() != ']')
                {
                    throw ConfigError(line_no, "", "unterminated section header");
                }
                section = parse_section(line, line_no);
                if (section_lines.contains(*section))
                {
                    throw ConfigError(line_no, "link." + std::to_string(*section), "duplicate section");
                }
                section_lines[*section] = line_no;
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string_view::npos)
            {
                throw ConfigError(line_no, std::string(line), "expected key = value");
            }
            const std::string key(trim(line.substr(0, eq)));
            const std::string value(trim(line.substr(eq + 1)));
            if (key.empty())
            {
                throw ConfigError(line_no, "", "missing key");
            }
            const std::string scoped = section ? "link." + std::to_string(*section) + "." + key : key;
            if (!seen.insert(scoped).second)
            {
                throw ConfigError(line_no, key, "duplicate key");
            }
            if (section)
            {
                link_settings[*section].emplace_back(line_no, key, value);
            }
            else
            {
                apply_setting(config, key, value, line_no);
            }
        }

        // Sections must be link.0 .. link.(links-1) with no gaps.
        for (const auto &[index, line] : section_lines)
        {
            const std::string name = "link." + std::to_string(index);
            if (index >= config.links.size())
            {
                throw ConfigError(line, name,
                                  "section index out of range (links = " + std::to_string(config.links.size()) +
                                      ")");
            }
            for (std::size_t lower = 0; lower < index; ++lower)
            {
                if (!section_lines.contains(lower))
                {
                    throw ConfigError(line, "link." + std::to_string(lower), "missing link section");
                }
            }
        }
        for (const auto &[index, settings] : link_settings)
        {
            for (const auto &[line, key, value] : settings)
            {
                apply_link_setting(config.links[index], key, value, line);
            }
        }
        return config;
    }

    ScenarioConfig load_config_file(const std::string &path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
        {
            throw ConfigError(0, "config", "cannot open '" + path + "'");
        }
        std::ostringstream buffer;
        buffer << in.rdbuf();
        return parse_config(buffer.str());
    }

    ScenarioResult run_scenario(const ScenarioConfig &config, const RunOptions &options)
    {
        ScenarioResult result;
        result.trace = Tracer(config.mss);
        Simulator sim;
        Rng rng(config.seed);
        Network net(sim, rng, &result.trace);

        std::vector<Address> client_addresses;
        std::vector<Address> server_addresses;
        for (std::size_t i = 0; i < config.links.size(); ++i)
        {
            const Address a{0, static_cast<std::uint8_t>(i)};
            const Address b{1, static_cast<std::uint8_t>(i)};
            net.add_link(a, b, config.links[i]);
            client_addresses.push_back(a);
            server_addresses.push_back(b);
        }

        ConnectionConfig base;
        base.subflow.mss = config.mss;
        base.subflow.dupthresh = config.dupthresh;
        base.subflow.cc = config.cc;
        base.subflow.ack_accounting = config.ack_accounting;
        base.subflow.initial_cwnd = 1.0;
        base.subflow.initial_ssthresh = std::max(static_cast<double>(config.rwnd) / config.mss, 2.0);
        base.detector = config.reorder;
        base.attach_detector = options.attach_detector;
        base.rwnd = config.rwnd;

        ConnectionConfig client_cfg = base;
        client_cfg.local_port = 49152;
        client_cfg.remote_port = 21;
        ConnectionConfig server_cfg = base;
        server_cfg.local_port = 21;
        server_cfg.remote_port = 49152;
        server_cfg.mp_capable = options.server_mp_capable;

        std::unique_ptr<Connection> client;
        std::unique_ptr<Connection> server;
        std::unique_ptr<BulkSource> source;
        std::unique_ptr<Sink> sink;
        try
        {
            client = std::make_unique<Connection>(sim, net, rng, &result.trace, 0, client_addresses, client_cfg);
            server = std::make_unique<Connection>(sim, net, rng, &result.trace, 1, server_addresses, server_cfg);
            sink = std::make_unique<Sink>(sim, *server, config.file_size);
            auto stop_when_done = [&] {
                if (client->phase() == ConnPhase::closed && server->phase() == ConnPhase::closed)
                {
                    sim.stop();
                }
            };
            client->set_closed_handler(stop_when_done);
            server->set_closed_handler(stop_when_done);

            server->listen();
            client->connect(server_addresses.front());
            source = std::make_unique<BulkSource>(sim, *client, BulkSourceConfig{config.file_size, 0});
            result.source_checksum = source->checksum();
            if (options.before_run)
            {
                options.before_run(sim, *client, *server);
            }
            const auto summary = sim.run_until(config.sim_time_limit);
            result.events_processed = summary.events_processed;
            result.final_time = summary.final_time;
        }
        catch (const InvariantBreach &e)
        {
            result.exit_code = kExitInvariantBreach;
            result.error = std::string("invariant breach: ") + e.what();
        }
        catch (const MalformedSegment &e)
        {
            result.exit_code = kExitInvariantBreach;
            result.error = std::string("malformed segment: ") + e.what();
        }
        result.final_time = sim.now();

        if (sink)
        {
            result.received_bytes = sink->received_bytes();
            result.sink_checksum = sink->checksum();
            result.finish_time = sink->finish_time();
            result.completed = sink->complete() && result.sink_checksum == result.source_checksum;
        }
        if (client)
        {
            result.fallback = client->fallback();
            for (const auto &subflow : client->subflows())
            {
                result.subflows.push_back({subflow->id(), subflow->addresses().local.to_string(),
                                           subflow->addresses().remote.to_string(), subflow->stats(),
                                           subflow->cwnd()});
            }
        }
        if (result.exit_code == kExitOk)
        {
            if (result.completed && result.finish_time && *result.finish_time > 0)
            {
                result.goodput_bps = goodput_bps(config.file_size, 0, *result.finish_time);
            }
            else
            {
                result.exit_code = kExitIncomplete;
                result.error = "transfer incomplete: " + std::to_string(result.received_bytes) + " of " +
                               std::to_string(config.file_size) + " bytes by the time limit";
            }
        }

        TraceRecord done;
        done.time_us = std::max(result.final_time,
                                result.trace.records().empty() ? 0 : result.trace.records().back().time_us);
        done.event = TraceEvent::done;
        std::ostringstream detail;
        detail << "exit=" << result.exit_code << " received=" << result.received_bytes
               << " finish_us=" << (result.finish_time ? std::to_string(*result.finish_time) : std::string("none"))
               << " checksum=" << std::hex << std::setw(8) << std::setfill('0') << result.sink_checksum;
        done.detail = detail.str();
        result.trace.record(std::move(done));
        return result;
    }

    std::string format_summary(const ScenarioResult &result)
    {
        std::ostringstream out;
        out << std::fixed << std::setprecision(6);
        out << "finish_time_s=";
        if (result.finish_time)
        {
            out << static_cast<double>(*result.finish_time) / 1e6;
        }
        else
        {
            out << "nan";
        }
        out << std::setprecision(1) << " goodput_bps=" << result.goodput_bps;
        for (const auto &s : result.subflows)
        {
            out << "\nsubflow=" << s.id << " path=" << s.local << "->" << s.remote
                << " bytes_sent=" << s.stats.bytes_sent << " retransmissions=" << s.stats.retransmissions
                << " spurious_detections=" << s.stats.spurious_detections;
        }
        out << '\n';
        return out.str();
    }

    void write_trace_file(const Tracer &trace, const std::string &path)
    {
        std::ofstream out(path, std::ios::binary);
        if (!out)
        {
            throw std::runtime_error("cannot write trace file '" + path + "'");
        }
        trace.write_csv(out);
    }

} // namespace mpsim
