// cli_commands.hpp – the `switchsim` subcommands, callable without a process boundary.

#pragma once

#include "switchsim/switch_simulator.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>

namespace switchsim::cli {

enum ExitCode : int {
    kOk = 0,
    kNonPass = 1,
    kUsage = 2,
    kPortInUse = 3,
};

struct ServeArgs {
    std::string config;  // JSON file; overrides the flags below when set
    std::string ports = "8001,8002,8003";
    std::string balance{kDefaultBalance};
    std::int64_t delay_ms = 0;
    std::string host = "127.0.0.1";
    std::string tpdu;  // "", "default", or 10 hex digits
};

struct RunArgs {
    std::string suite;
    std::string field_config;
    std::string packager;
    std::string target = "127.0.0.1";
    std::string ports = "8001,8002,8003";
    std::string channels = "ascii,nac,xml";
    int iterations = 1;
    std::uint64_t seed = 0;
    std::int64_t timeout_ms = 5000;
    std::size_t max_in_flight = 32;
    std::string tpdu;
    std::string out;  // empty: $SWITCHSIM_OUT, else "reports"
    bool progress = true;
};

struct GenArgs {
    std::string template_path;
    std::string field_config;
    std::uint64_t seed = 0;
};

struct ReportArgs {
    std::string json;
    std::string out;  // empty: alongside the JSON, .json -> .html
};

/// Throws ConfigError.
SimulatorConfig build_serve_config(const ServeArgs& args);

/// Runs the simulator until `wait_for_shutdown` returns.
int serve_command(const ServeArgs& args, std::ostream& out, std::ostream& err,
                  const std::function<void(const Simulator&)>& wait_for_shutdown);
int run_command(const RunArgs& args, std::ostream& out, std::ostream& err);
int gen_command(const GenArgs& args, std::ostream& out, std::ostream& err);
int report_command(const ReportArgs& args, std::ostream& out, std::ostream& err);

/// Full command line entry point; `serve` waits for SIGINT/SIGTERM.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace switchsim::cli
