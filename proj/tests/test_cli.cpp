#include "cli_commands.hpp"

#include "switchsim/report.hpp"

#include "doctest.h"
#include "test_support.hpp"

#include <fstream>
#include <regex>
#include <sstream>

using namespace switchsim;
using namespace switchsim::cli;
using switchsim::testing::TempDir;

namespace {

std::string ports_of(const Simulator& sim) {
    return std::to_string(sim.endpoint(ChannelKind::Ascii).port) + "," +
           std::to_string(sim.endpoint(ChannelKind::Nac).port) + "," +
           std::to_string(sim.endpoint(ChannelKind::Xml).port);
}

int invoke(std::vector<const char*> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
    args.insert(args.begin(), "switchsim");
    std::ostringstream out, err;
    const int code = cli_main(static_cast<int>(args.size()), args.data(), out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return code;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help and usage errors") {
    std::string out;
    CHECK(invoke({"--help"}, &out) == kOk);
    CHECK(out.find("serve") != std::string::npos);
    CHECK(invoke({}) == kUsage);
    CHECK(invoke({"frobnicate"}) == kUsage);
    CHECK(invoke({"run"}) == kUsage);  // --suite is required
    CHECK(invoke({"run", "--suite", "x", "--iterations", "many"}) == kUsage);
}

TEST_CASE("run rejects bad arguments with the usage exit code") {
    TempDir dir;
    dir.write("suite/a.json", switchsim::testing::kBalanceOkTemplate);
    const std::string suite = (dir.path() / "suite").string();

    RunArgs args;
    args.suite = suite;
    args.out = dir.path().string();
    args.progress = false;
    std::ostringstream out, err;

    args.channels = "bogus";
    CHECK(run_command(args, out, err) == kUsage);
    CHECK(err.str().find("bogus") != std::string::npos);

    args.channels = "ascii";
    args.ports = "1,2";
    CHECK(run_command(args, out, err) == kUsage);

    args.ports = "8001,8002,8003";
    args.iterations = 0;
    CHECK(run_command(args, out, err) == kUsage);

    args.iterations = 1;
    args.suite = (dir.path() / "empty").string();
    std::filesystem::create_directories(args.suite);
    CHECK(run_command(args, out, err) == kUsage);

    args.suite = suite;
    args.tpdu = "60";
    CHECK(run_command(args, out, err) == kUsage);
}

TEST_CASE("run exits 0 on all-pass and 1 otherwise, writing both reports") {
    auto sim = Simulator::start(SimulatorConfig::on_ports(0, 0, 0));
    TempDir dir;
    dir.write("suite/a.json", switchsim::testing::kBalanceOkTemplate);

    RunArgs args;
    args.suite = (dir.path() / "suite").string();
    args.ports = ports_of(*sim);
    args.iterations = 3;
    args.seed = 9;
    args.out = (dir.path() / "reports").string();
    args.progress = false;

    std::ostringstream out, err;
    CHECK(run_command(args, out, err) == kOk);
    CHECK(out.str().find("totals pass=9 fail=0 timeout=0 error=0 planned=9") != std::string::npos);

    std::size_t json_files = 0, html_files = 0;
    for (const auto& e : std::filesystem::directory_iterator(args.out)) {
        const std::string name = e.path().filename().string();
        if (name.size() > 12 && name.substr(name.size() - 12) == ".report.json") ++json_files;
        if (name.size() > 12 && name.substr(name.size() - 12) == ".report.html") ++html_files;
        CHECK(std::regex_match(name, std::regex(R"(\d{8}T\d{6}Z-s9\.report\.(json|html))")));
    }
    CHECK(json_files == 1);
    CHECK(html_files == 1);

    dir.write("suite/b.json",
              R"({"name":"wrong","mti":"0100","fields":{"3":"310000"},"randomize":[11],"expected":{"39":"00"}})");
    std::ostringstream out2;
    CHECK(run_command(args, out2, err) == kNonPass);
    CHECK(out2.str().find("fail=9") != std::string::npos);
}

TEST_CASE("run against a closed port reports errors and exits 1") {
    std::uint16_t closed = 0;
    {
        Listener l = Listener::bind("127.0.0.1", 0);
        closed = l.port();
    }
    TempDir dir;
    dir.write("suite/a.json", switchsim::testing::kBalanceOkTemplate);
    RunArgs args;
    args.suite = (dir.path() / "suite").string();
    args.ports = std::to_string(closed) + ",1,1";
    args.channels = "ascii";
    args.out = dir.path().string();
    args.progress = false;
    std::ostringstream out, err;
    CHECK(run_command(args, out, err) == kNonPass);
    CHECK(out.str().find("error=1") != std::string::npos);
}

TEST_CASE("serve reports a busy port with exit code 3") {
    Listener held = Listener::bind("127.0.0.1", 0);
    ServeArgs args;
    args.ports = std::to_string(held.port()) + ",0,0";
    std::ostringstream out, err;
    CHECK(serve_command(args, out, err, [](const Simulator&) { FAIL("should not start"); }) == kPortInUse);
    CHECK(err.str().find(std::to_string(held.port())) != std::string::npos);

    args.ports = "0,0";
    CHECK(serve_command(args, out, err, [](const Simulator&) {}) == kUsage);
}

TEST_CASE("serve answers requests until shut down") {
    ServeArgs args;
    args.ports = "0,0,0";
    args.balance = "000000055555";
    args.tpdu = "default";
    std::ostringstream out, err;
    const int code = serve_command(args, out, err, [](const Simulator& sim) {
        Connection conn = Connection::connect(sim.endpoint(ChannelKind::Nac), Packager::standard());
        IsoMsg m{Mti("0200")};
        m.set(3, "310000");
        m.set(11, "000001");
        conn.send(m);
        const IsoMsg reply = conn.receive(std::chrono::seconds(5));
        CHECK(reply.text(54) == "000000055555");
    });
    CHECK(code == kOk);
    CHECK(out.str().find("listening 127.0.0.1:") != std::string::npos);
    CHECK(out.str().find("stopped after 1 request(s)") != std::string::npos);
}

TEST_CASE("serve config file") {
    TempDir dir;
    const auto path = dir.write("sim.json", R"({"endpoints":[{"channel":"ascii","port":0},{"channel":"nac","port":0},)"
                                            R"({"channel":"xml","port":0}],"balance":"000000000001"})");
    ServeArgs args;
    args.config = path.string();
    const SimulatorConfig config = build_serve_config(args);
    CHECK(config.balance == "000000000001");
}

TEST_CASE("gen prints a reproducible isomsg document") {
    TempDir dir;
    const auto tpl = dir.write("t.json", switchsim::testing::kBalanceOkTemplate);
    std::string a, b, c;
    CHECK(invoke({"gen", "--template", tpl.c_str(), "--seed", "7"}, &a) == kOk);
    CHECK(invoke({"gen", "--template", tpl.c_str(), "--seed", "7"}, &b) == kOk);
    CHECK(invoke({"gen", "--template", tpl.c_str(), "--seed", "8"}, &c) == kOk);
    CHECK(a == b);
    CHECK(a != c);
    const XmlMessage msg = parse_xml(a.substr(0, a.size() - 1));
    CHECK(msg.msg.text(3) == "310000");
    CHECK(std::regex_match(*msg.msg.text(2), std::regex("4[0-9]{15}")));
    CHECK(std::regex_match(*msg.msg.text(11), std::regex("[0-9]{6}")));

    std::string err;
    CHECK(invoke({"gen", "--template", (dir.path() / "missing.json").c_str()}, nullptr, &err) == kUsage);
}

TEST_CASE("report re-renders HTML from JSON") {
    TempDir dir;
    std::mt19937_64 rng(1);
    const TestReport report = switchsim::testing::random_report(rng, 4);
    const auto json = dir.write("r.report.json", render_json(report));
    std::string out;
    CHECK(invoke({"report", "--json", json.c_str()}, &out) == kOk);
    const auto html = dir.path() / "r.report.html";
    REQUIRE(std::filesystem::exists(html));
    std::ifstream in(html);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == render_html(report));

    const auto bad = dir.write("bad.json", "{}");
    CHECK(invoke({"report", "--json", bad.c_str()}) == kUsage);
}

}  // TEST_SUITE
