#pragma once

#include "mpsim/ccontrol.hpp"
#include "mpsim/mptcp.hpp"
#include "mpsim/netmodel.hpp"
#include "mpsim/reorder.hpp"
#include "mpsim/simcore.hpp"
#include "mpsim/subflow.hpp"
#include "mpsim/trace.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mpsim
{
    inline constexpr std::size_t kMaxLinks = 8;

    enum ExitCode : int
    {
        kExitOk = 0,
        kExitConfigError = 1,
        kExitInvariantBreach = 2,
        kExitIncomplete = 3,
    };

    struct ScenarioConfig
    {
        std::vector<LinkParams> links = std::vector<LinkParams>(2);
        CcAlgorithm cc;
        DetectorKind reorder = DetectorKind::none;
        AckAccounting ack_accounting = AckAccounting::per_segment;
        std::uint32_t mss = 1400;
        std::uint32_t rwnd = 65536;
        std::uint32_t dupthresh = 3;
        std::uint64_t file_size = 2'000'000;
        std::uint64_t seed = 1;
        Duration sim_time_limit = 3600 * kSecond;
        std::string trace_path;
    };

    // "250us", "10ms", "2s", "1.5s" or a bare "0".
    Duration parse_duration(std::string_view text);
    // Comma-separated "<from>:<delay>" steps, e.g. "0:10ms,2s:150ms", or one
    // bare duration for a constant delay.
    DelaySchedule parse_delay_schedule(std::string_view text);

    // key = value lines, '#' comments, [link.N] sections. Throws ConfigError
    // naming the line and key.
    ScenarioConfig parse_config(std::string_view text);
    ScenarioConfig load_config_file(const std::string &path);

    // Applies one global key; used for CLI overrides (line 0).
    void apply_setting(ScenarioConfig &config, std::string_view key, std::string_view value, int line = 0);

    struct SubflowSummary
    {
        std::uint32_t id = 0;
        std::string local;
        std::string remote;
        SubflowStats stats;
        double final_cwnd = 0.0;
    };

    struct ScenarioResult
    {
        int exit_code = kExitOk;
        std::string error;
        bool completed = false;
        bool fallback = false;
        std::optional<SimTime> finish_time;
        double goodput_bps = 0.0;
        std::uint64_t received_bytes = 0;
        std::uint32_t source_checksum = 0;
        std::uint32_t sink_checksum = 0;
        std::vector<SubflowSummary> subflows;
        std::uint64_t events_processed = 0;
        SimTime final_time = 0;
        Tracer trace;
    };

    struct RunOptions
    {
        // False runs without any reorder detector object.
        bool attach_detector = true;
        bool server_mp_capable = true;
        // Called after the topology is built, before the clock starts.
        std::function<void(Simulator &, Connection &client, Connection &server)> before_run;
    };

    // Never throws for simulation failures; they are reported through
    // exit_code and error.
    ScenarioResult run_scenario(const ScenarioConfig &config, const RunOptions &options = {});

    std::string format_summary(const ScenarioResult &result);
    void write_trace_file(const Tracer &trace, const std::string &path);

} // namespace mpsim
