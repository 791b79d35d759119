// Scenario runner: mpsim [--config FILE] [overrides...]
#include "mpsim/errors.hpp"
#include "mpsim/scenario.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

int main(int argc, char **argv)
{
    CLI::App app{"Deterministic multipath TCP simulator"};

    std::string config_path;
    app.add_option("--config", config_path, "Scenario file (key = value, [link.N] sections)");

    // Each override flag mirrors the config key of the same name.
    const std::vector<std::pair<std::string, std::string>> flags = {
        {"--cc", "cc"},
        {"--a", "a"},
        {"--reorder", "reorder"},
        {"--rttc-second-term", "rttc_second_term"},
        {"--ack-accounting", "ack_accounting"},
        {"--mss", "mss"},
        {"--rwnd", "rwnd"},
        {"--dupthresh", "dupthresh"},
        {"--file-size", "file_size"},
        {"--seed", "seed"},
        {"--sim-time-limit", "sim_time_limit"},
        {"--trace-out", "trace_out"},
        {"--links", "links"},
    };
    std::vector<std::optional<std::string>> values(flags.size());
    for (std::size_t i = 0; i < flags.size(); ++i)
    {
        app.add_option(flags[i].first, values[i], "Overrides config key '" + flags[i].second + "'");
    }
    bool quiet = false;
    app.add_flag("--quiet", quiet, "Suppress the summary");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : mpsim::kExitConfigError;
    }

    mpsim::ScenarioConfig config;
    try
    {
        if (!config_path.empty())
        {
            config = mpsim::load_config_file(config_path);
        }
        // links first so later keys see the final link count.
        for (std::size_t i = 0; i < flags.size(); ++i)
        {
            if (values[i] && flags[i].second == "links")
            {
                mpsim::apply_setting(config, flags[i].second, *values[i]);
            }
        }
        for (std::size_t i = 0; i < flags.size(); ++i)
        {
            if (values[i] && flags[i].second != "links")
            {
                mpsim::apply_setting(config, flags[i].second, *values[i]);
            }
        }
    }
    catch (const mpsim::ConfigError &e)
    {
        std::cerr << "config error: " << e.what() << '\n';
        return mpsim::kExitConfigError;
    }

    const auto result = mpsim::run_scenario(config);
    if (!config.trace_path.empty())
    {
        try
        {
            mpsim::write_trace_file(result.trace, config.trace_path);
        }
        catch (const std::exception &e)
        {
            std::cerr << "error: " << e.what() << '\n';
            return mpsim::kExitConfigError;
        }
    }
    if (!quiet)
    {
        std::cout << mpsim::format_summary(result);
    }
    if (result.exit_code != mpsim::kExitOk)
    {
        std::cerr << "error: " << result.error << '\n';
    }
    return result.exit_code;
}
