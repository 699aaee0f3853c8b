#include "cli_commands.hpp"

#include "switchsim/msg_generator.hpp"
#include "switchsim/regression_client.hpp"
#include "switchsim/report.hpp"

#include "CLI11.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <pthread.h>

namespace switchsim::cli {

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// "a,n,x" -> ports for ascii, nac, xml.
std::array<std::uint16_t, 3> parse_ports(const std::string& text) {
    const auto parts = split(text, ',');
    if (parts.size() != 3) throw ConfigError("--ports needs three comma-separated ports (ascii,nac,xml)");
    std::array<std::uint16_t, 3> ports{};
    for (std::size_t i = 0; i < 3; ++i) {
        try {
            std::size_t used = 0;
            const unsigned long p = std::stoul(parts[i], &used);
            if (used != parts[i].size() || p > 65535) throw std::out_of_range(parts[i]);
            ports[i] = static_cast<std::uint16_t>(p);
        } catch (const std::exception&) {
            throw ConfigError("bad port '" + parts[i] + "'");
        }
    }
    return ports;
}

std::optional<Bytes> parse_tpdu(const std::string& text) {
    if (text.empty()) return std::nullopt;
    if (text == "default") return kDefaultTpdu;
    Bytes tpdu;
    try {
        tpdu = from_hex(text);
    } catch (const std::invalid_argument&) {
        throw ConfigError("--tpdu must be 'default' or 10 hex digits");
    }
    if (tpdu.size() != kTpduLength) throw ConfigError("--tpdu must be exactly 5 bytes");
    return tpdu;
}

std::size_t port_slot(ChannelKind kind) {
    switch (kind) {
        case ChannelKind::Ascii: return 0;
        case ChannelKind::Nac: return 1;
        case ChannelKind::Xml: return 2;
    }
    return 0;
}

std::string default_out_dir() {
    if (const char* env = std::getenv("SWITCHSIM_OUT"); env != nullptr && *env != '\0') return env;
    return "reports";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

// ─── serve ──────────────────────────────────────────────────────────────────

SimulatorConfig build_serve_config(const ServeArgs& args) {
    if (!args.config.empty()) return SimulatorConfig::load(args.config);
    const auto ports = parse_ports(args.ports);
    SimulatorConfig config = SimulatorConfig::on_ports(ports[0], ports[1], ports[2]);
    for (auto& ep : config.endpoints) ep.host = args.host;
    config.endpoints[1].tpdu = parse_tpdu(args.tpdu);
    config.balance = args.balance;
    config.response_delay = std::chrono::milliseconds(args.delay_ms);
    config.validate();
    return config;
}

int serve_command(const ServeArgs& args, std::ostream& out, std::ostream& err,
                  const std::function<void(const Simulator&)>& wait_for_shutdown) {
    SimulatorConfig config;
    try {
        config = build_serve_config(args);
    } catch (const std::exception& e) {
        err << "serve: " << e.what() << '\n';
        return kUsage;
    }

    std::unique_ptr<Simulator> sim;
    try {
        SimulatorOptions options;
        options.log = &out;
        sim = Simulator::start(config, options);
    } catch (const ChannelError& e) {
        err << "serve: " << e.what() << '\n';
        return e.kind() == ChannelError::Kind::PortInUse ? kPortInUse : kUsage;
    } catch (const std::exception& e) {
        err << "serve: " << e.what() << '\n';
        return kUsage;
    }

    for (const auto& ep : sim->endpoints()) out << "listening " << ep.to_string() << '\n';
    out << std::flush;
    wait_for_shutdown(*sim);
    sim->stop();
    out << "stopped after " << sim->requests_handled() << " request(s)\n" << std::flush;
    return kOk;
}

// ─── run ────────────────────────────────────────────────────────────────────

int run_command(const RunArgs& args, std::ostream& out, std::ostream& err) {
    RunPlan run_plan;
    try {
        const auto ports = parse_ports(args.ports);
        const auto tpdu = parse_tpdu(args.tpdu);
        std::vector<Endpoint> endpoints;
        const auto tokens = split(args.channels, ',');
        if (tokens.empty()) throw ConfigError("--channels must name at least one of ascii, nac, xml");
        for (const auto& token : tokens) {
            Endpoint ep;
            ep.host = args.target;
            ep.kind = parse_channel_kind(token);
            ep.port = ports[port_slot(ep.kind)];
            if (ep.kind == ChannelKind::Nac) ep.tpdu = tpdu;
            endpoints.push_back(std::move(ep));
        }
        FieldConfig fields = args.field_config.empty() ? default_field_config()
                                                       : load_field_config_file(args.field_config);
        run_plan = plan(std::filesystem::path(args.suite), std::move(endpoints), args.iterations, Seed{args.seed},
                        std::move(fields));
        run_plan.timeout = std::chrono::milliseconds(args.timeout_ms);
        run_plan.max_in_flight = args.max_in_flight;
        if (!args.packager.empty()) run_plan.packager = Packager::load(args.packager);
        run_plan.validate();
    } catch (const std::exception& e) {
        err << "run: " << e.what() << '\n';
        return kUsage;
    }

    ExecuteOptions options;
    if (args.progress) options.progress = &err;
    const TestReport report = execute(run_plan, options);

    const std::string out_dir = args.out.empty() ? default_out_dir() : args.out;
    try {
        const auto files = write_report_files(report, out_dir);
        out << "report " << files.json.string() << '\n' << "report " << files.html.string() << '\n';
    } catch (const std::exception& e) {
        err << "run: " << e.what() << '\n';
        return kUsage;
    }

    const auto& t = report.totals();
    out << "totals pass=" << t.pass << " fail=" << t.fail << " timeout=" << t.timeout << " error=" << t.error
        << " planned=" << report.plan().planned_sends() << '\n';
    return t.fail + t.timeout + t.error == 0 ? kOk : kNonPass;
}

// ─── gen ────────────────────────────────────────────────────────────────────

int gen_command(const GenArgs& args, std::ostream& out, std::ostream& err) {
    try {
        const TestTemplate tpl = load_template_file(args.template_path);
        const FieldConfig fields = args.field_config.empty() ? default_field_config()
                                                             : load_field_config_file(args.field_config);
        const IsoMsg msg = instantiate(tpl, fields, Seed{args.seed});
        out << to_text(frame_xml(msg, WireDirection::Outgoing)) << '\n';
        return kOk;
    } catch (const std::exception& e) {
        err << "gen: " << e.what() << '\n';
        return kUsage;
    }
}

// ─── report ─────────────────────────────────────────────────────────────────

int report_command(const ReportArgs& args, std::ostream& out, std::ostream& err) {
    try {
        const TestReport report = parse_report_json(read_file(args.json));
        std::string target = args.out;
        if (target.empty()) {
            target = args.json;
            const std::string suffix = ".json";
            if (target.size() > suffix.size() && target.compare(target.size() - suffix.size(), suffix.size(), suffix) == 0)
                target.resize(target.size() - suffix.size());
            target += ".html";
        }
        std::ofstream file(target, std::ios::binary);
        if (!file) throw std::runtime_error("cannot write " + target);
        file << render_html(report);
        out << "report " << target << '\n';
        return kOk;
    } catch (const std::exception& e) {
        err << "report: " << e.what() << '\n';
        return kUsage;
    }
}

// ─── entry point ────────────────────────────────────────────────────────────

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"ISO8583 switch simulator and regression client", "switchsim"};
    app.require_subcommand(1);

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "Run the switch simulator (ascii, nac, xml listeners)");
    serve_cmd->add_option("--config", serve.config, "Simulator config JSON");
    serve_cmd->add_option("--ports", serve.ports, "ascii,nac,xml ports")->capture_default_str();
    serve_cmd->add_option("--balance", serve.balance, "Balance returned in field 54")->capture_default_str();
    serve_cmd->add_option("--delay", serve.delay_ms, "Response delay in ms")->capture_default_str();
    serve_cmd->add_option("--host", serve.host, "Bind address")->capture_default_str();
    serve_cmd->add_option("--tpdu", serve.tpdu, "NAC TPDU: 'default' or 10 hex digits");

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Execute a template suite against a switch");
    run_cmd->add_option("--suite", run.suite, "Directory of *.json templates")->required();
    run_cmd->add_option("--field-config", run.field_config, "Field pattern config JSON");
    run_cmd->add_option("--packager", run.packager, "Packager definition JSON");
    run_cmd->add_option("--target", run.target, "Switch host")->capture_default_str();
    run_cmd->add_option("--ports", run.ports, "ascii,nac,xml ports")->capture_default_str();
    run_cmd->add_option("--channels", run.channels, "Comma-separated channel kinds")->capture_default_str();
    run_cmd->add_option("--iterations", run.iterations, "Iterations per template and channel")->capture_default_str();
    run_cmd->add_option("--seed", run.seed, "Run seed")->capture_default_str();
    run_cmd->add_option("--timeout", run.timeout_ms, "Per-message timeout in ms")->capture_default_str();
    run_cmd->add_option("--max-in-flight", run.max_in_flight, "Outstanding requests per connection")
        ->capture_default_str();
    run_cmd->add_option("--tpdu", run.tpdu, "NAC TPDU: 'default' or 10 hex digits");
    run_cmd->add_option("--out", run.out, "Report directory (default $SWITCHSIM_OUT or ./reports)");
    bool quiet = false;
    run_cmd->add_flag("--quiet", quiet, "No progress lines on stderr");

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "Instantiate one template and print it as <isomsg> XML");
    gen_cmd->add_option("--template", gen.template_path, "Template JSON")->required();
    gen_cmd->add_option("--field-config", gen.field_config, "Field pattern config JSON");
    gen_cmd->add_option("--seed", gen.seed, "Seed")->capture_default_str();

    ReportArgs rep;
    auto* report_cmd = app.add_subcommand("report", "Re-render the HTML report from a JSON report");
    report_cmd->add_option("--json", rep.json, "Report JSON")->required();
    report_cmd->add_option("--out", rep.out, "HTML output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUsage;
    }

    if (*serve_cmd) {
        // Block the shutdown signals before any simulator thread exists so
        // only sigwait below sees them.
        sigset_t signals;
        sigemptyset(&signals);
        sigaddset(&signals, SIGINT);
        sigaddset(&signals, SIGTERM);
        pthread_sigmask(SIG_BLOCK, &signals, nullptr);
        return serve_command(serve, out, err, [&](const Simulator&) {
            int received = 0;
            sigwait(&signals, &received);
        });
    }
    if (*run_cmd) {
        run.progress = !quiet;
        const int code = run_command(run, out, err);
        if (code == kUsage) err << run_cmd->help();
        return code;
    }
    if (*gen_cmd) return gen_command(gen, out, err);
    return report_command(rep, out, err);
}

}  // namespace switchsim::cli
