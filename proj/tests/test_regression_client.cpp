#include "switchsim/regression_client.hpp"
#include "switchsim/switch_simulator.hpp"

#include "doctest.h"
#include "test_support.hpp"

#include <set>
#include <sstream>
#include <thread>

using namespace switchsim;
using switchsim::testing::kBalanceOkTemplate;

namespace {

std::vector<Endpoint> endpoints_of(const Simulator& sim) { return sim.endpoints(); }

TestTemplate network_echo() {
    return load_template(R"({"name":"network-echo","mti":"0800","randomize":[11],"expected":{"39":"00"}})");
}

TestTemplate wrong_mti() {
    return load_template(
        R"({"name":"balance-wrong-mti","mti":"0100","fields":{"3":"310000"},"randomize":[11],"expected":{"39":"00"}})");
}

// Accepts connections and reads without ever answering.
class SilentPeer {
public:
    SilentPeer() : listener_(Listener::bind("127.0.0.1", 0)), port_(listener_.port()) {
        thread_ = std::thread([this] {
            while (!stop_) {
                if (auto s = listener_.accept(std::chrono::milliseconds(20))) held_.push_back(std::move(*s));
            }
        });
    }
    ~SilentPeer() {
        stop_ = true;
        thread_.join();
    }
    std::uint16_t port() const { return port_; }

private:
    Listener listener_;
    std::uint16_t port_;
    std::atomic<bool> stop_{false};
    std::vector<Socket> held_;
    std::thread thread_;
};

}  // namespace

TEST_SUITE("regression-client") {

TEST_CASE("plan ordering and size") {
    std::vector<Endpoint> eps(2);
    eps[0].port = 1;
    eps[1].port = 2;
    eps[1].kind = ChannelKind::Xml;
    const RunPlan p = plan({load_template(kBalanceOkTemplate), network_echo()}, eps, 3, Seed{5});
    REQUIRE(p.sends.size() == 2 * 2 * 3);
    CHECK(p.sends[0] == PlannedSend{0, 0, 0, derive_seed(Seed{5}, 0, 0, 0)});
    CHECK(p.sends[1].template_index == 1);
    CHECK(p.sends[2].iteration == 1);
    CHECK(p.sends[6].endpoint_index == 1);
    CHECK(p.summary().planned_sends() == 12);
    CHECK(p.summary().endpoints[1] == "127.0.0.1:2/xml");

    std::set<std::uint64_t> seeds;
    for (const auto& s : p.sends) seeds.insert(s.seed.value);
    CHECK(seeds.size() == p.sends.size());
    CHECK(plan({load_template(kBalanceOkTemplate), network_echo()}, eps, 3, Seed{5}).sends == p.sends);
}

TEST_CASE("plan validation") {
    std::vector<Endpoint> eps(1);
    auto kind_of = [](auto&& fn) {
        try {
            fn();
        } catch (const PlanError& e) {
            return e.kind();
        }
        FAIL("no PlanError");
        return PlanError::Kind::InvalidPlan;
    };
    CHECK(kind_of([&] { plan(std::vector<TestTemplate>{}, eps, 1, Seed{}); }) == PlanError::Kind::EmptySuite);
    CHECK(kind_of([&] { plan({network_echo()}, {}, 1, Seed{}); }) == PlanError::Kind::InvalidPlan);
    CHECK(kind_of([&] { plan({network_echo()}, eps, 0, Seed{}); }) == PlanError::Kind::InvalidPlan);
    CHECK(kind_of([&] { plan({network_echo()}, eps, 1, Seed{}, FieldConfig{}); }) == PlanError::Kind::Template);

    switchsim::testing::TempDir dir;
    CHECK(kind_of([&] { plan(dir.path(), eps, 1, Seed{}); }) == PlanError::Kind::EmptySuite);
    dir.write("bad.json", "{");
    try {
        plan(dir.path(), eps, 1, Seed{});
        FAIL("no throw");
    } catch (const PlanError& e) {
        CHECK(e.kind() == PlanError::Kind::Template);
        CHECK(std::string(e.what()).find("bad.json") != std::string::npos);
    }
}

TEST_CASE("compare: exact, regex, absent") {
    IsoMsg r{Mti("0210")};
    r.set(39, "12");
    r.set(54, "000000010000");

    CHECK(compare({{39, "12"}}, r).verdict == Verdict::Pass);
    CHECK(compare({{54, "/[0-9]{12}/"}}, r).verdict == Verdict::Pass);
    CHECK(compare({{54, "/[0-9]{11}/"}}, r).verdict == Verdict::Fail);  // full match, not search

    const auto out = compare({{39, "00"}, {54, "000000010000"}, {41, "TERM0001"}}, r);
    CHECK(out.verdict == Verdict::Fail);
    REQUIRE(out.mismatches.size() == 2);
    CHECK(out.mismatches[0] == Mismatch{39, "00", std::string("12")});
    CHECK(out.mismatches[1] == Mismatch{41, "TERM0001", std::nullopt});
}

TEST_CASE("in-flight table correlates by connection and STAN") {
    InFlightTable table;
    const auto now = std::chrono::steady_clock::now();
    table.insert({1, "000001"}, InFlight{0, IsoMsg(Mti("0200")), now});
    table.insert({1, "000002"}, InFlight{1, IsoMsg(Mti("0200")), now + std::chrono::seconds(1)});
    table.insert({2, "000001"}, InFlight{2, IsoMsg(Mti("0800")), now});
    CHECK_THROWS_AS(table.insert({1, "000001"}, InFlight{}), std::logic_error);
    CHECK(table.pending() == 3);
    CHECK(table.pending(1) == 2);

    IsoMsg response{Mti("0810")};
    response.set(11, "000001");
    CHECK(table.correlate(2, response).send_index == 2);
    CHECK_THROWS_AS(table.correlate(2, response), UnmatchedResponse);
    CHECK_THROWS_AS(table.correlate(3, response), UnmatchedResponse);

    const auto expired = table.expire(1, now);
    REQUIRE(expired.size() == 1);
    CHECK(expired[0].send_index == 0);
    CHECK(table.drain(1).size() == 1);
    CHECK(table.pending() == 0);
}

TEST_CASE("in-flight table wait_below blocks until a slot frees") {
    InFlightTable table;
    table.insert({7, "000001"}, InFlight{});
    std::thread releaser([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        table.take({7, "000001"});
    });
    const auto start = std::chrono::steady_clock::now();
    CHECK(table.wait_below(7, 1, [] { return false; }));
    CHECK(std::chrono::steady_clock::now() - start >= std::chrono::milliseconds(40));
    releaser.join();

    table.insert({7, "000002"}, InFlight{});
    CHECK_FALSE(table.wait_below(7, 1, [] { return true; }));
}

TEST_CASE("derive_seed depends on every coordinate") {
    const Seed base = derive_seed(Seed{1}, 0, 0, 0);
    CHECK(derive_seed(Seed{1}, 0, 0, 0) == base);
    CHECK(derive_seed(Seed{2}, 0, 0, 0) != base);
    CHECK(derive_seed(Seed{1}, 1, 0, 0) != base);
    CHECK(derive_seed(Seed{1}, 0, 1, 0) != base);
    CHECK(derive_seed(Seed{1}, 0, 0, 1) != base);
}

TEST_CASE("execute against the simulator: every send yields one result") {
    auto sim = Simulator::start(SimulatorConfig::on_ports(0, 0, 0));
    const RunPlan p = plan({load_template(kBalanceOkTemplate), network_echo(), wrong_mti()}, endpoints_of(*sim), 4,
                           Seed{11});
    std::ostringstream progress;
    ExecuteOptions options;
    options.progress = &progress;
    options.progress_interval = std::chrono::milliseconds(1);
    const TestReport report = execute(p, options);

    REQUIRE(report.results().size() == p.sends.size());
    CHECK(report.totals().total() == p.sends.size());
    for (std::size_t i = 0; i < p.sends.size(); ++i) {
        const auto& r = report.results()[i];
        CHECK(r.template_name == p.suite[p.sends[i].template_index].name);
        CHECK(r.iteration == p.sends[i].iteration);
        CHECK(r.channel == p.endpoints[p.sends[i].endpoint_index].kind);
        REQUIRE(r.response.has_value());
        CHECK(r.response->text(11) == r.request.text(11));
        if (r.template_name == "balance-wrong-mti") {
            CHECK(r.verdict == Verdict::Fail);
            REQUIRE(r.mismatches.size() == 1);
            CHECK(r.mismatches[0] == Mismatch{39, "00", std::string("12")});
        } else {
            CHECK(r.verdict == Verdict::Pass);
        }
        CHECK(r.latency_ms >= 0.0);
    }
    CHECK(report.totals().pass == 24);
    CHECK(report.totals().fail == 12);
    CHECK(progress.str().find("sent=36 received=36 pending=0") != std::string::npos);
    CHECK(report.plan().seed == 11);
}

TEST_CASE("STANs are unique per connection and correlate under pipelining") {
    SimulatorConfig config = SimulatorConfig::on_ports(0, 0, 0);
    config.response_delay = std::chrono::milliseconds(5);
    auto sim = Simulator::start(config);
    RunPlan p = plan({load_template(kBalanceOkTemplate)}, {sim->endpoint(ChannelKind::Nac)}, 200, Seed{3});
    p.max_in_flight = 16;
    const TestReport report = execute(p);
    CHECK(report.totals().pass == 200);
    std::set<std::string> stans;
    for (const auto& r : report.results()) stans.insert(*r.request.text(11));
    CHECK(stans.size() == 200);
}

TEST_CASE("same seed reproduces the same requests") {
    auto sim = Simulator::start(SimulatorConfig::on_ports(0, 0, 0));
    const RunPlan p = plan({load_template(kBalanceOkTemplate)}, endpoints_of(*sim), 2, Seed{42});
    const TestReport a = execute(p);
    const TestReport b = execute(p);
    REQUIRE(a.results().size() == b.results().size());
    for (std::size_t i = 0; i < a.results().size(); ++i) CHECK(a.results()[i].request == b.results()[i].request);
}

TEST_CASE("a silent peer yields timeouts") {
    SilentPeer peer;
    Endpoint ep;
    ep.port = peer.port();
    RunPlan p = plan({network_echo()}, {ep}, 3, Seed{});
    p.timeout = std::chrono::milliseconds(100);
    const auto start = std::chrono::steady_clock::now();
    const TestReport report = execute(p);
    CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(2));
    CHECK(report.totals().timeout == 3);
    for (const auto& r : report.results()) {
        CHECK_FALSE(r.response.has_value());
        CHECK(r.latency_ms >= 100.0);
    }
}

TEST_CASE("an unreachable endpoint turns its sends into errors without affecting others") {
    auto sim = Simulator::start(SimulatorConfig::on_ports(0, 0, 0));
    std::uint16_t closed = 0;
    {
        Listener l = Listener::bind("127.0.0.1", 0);
        closed = l.port();
    }
    Endpoint dead;
    dead.port = closed;
    const RunPlan p = plan({network_echo()}, {sim->endpoint(ChannelKind::Ascii), dead}, 5, Seed{});
    const TestReport report = execute(p);
    CHECK(report.totals().pass == 5);
    CHECK(report.totals().error == 5);
    for (const auto& r : report.results()) {
        if (r.verdict == Verdict::Error) CHECK_FALSE(r.error.empty());
    }
}

TEST_CASE("peer closing the connection mid-run yields errors for outstanding sends") {
    Listener listener = Listener::bind("127.0.0.1", 0);
    Endpoint ep;
    ep.port = listener.port();
    std::thread server([&] {
        auto sock = listener.accept(std::chrono::seconds(5));
        REQUIRE(sock.has_value());
        Connection conn(std::move(*sock), ChannelCodec(ep, Packager::standard()));
        IsoMsg first = conn.receive(std::chrono::seconds(5));
        first.set_mti(Mti("0810"));
        first.set(39, "00");
        conn.send(first);
        conn.receive(std::chrono::seconds(5));
        conn.close();
    });
    RunPlan p = plan({network_echo()}, {ep}, 6, Seed{});
    p.max_in_flight = 2;
    const TestReport report = execute(p);
    server.join();
    CHECK(report.totals().total() == 6);
    CHECK(report.totals().pass == 1);
    CHECK(report.totals().error == 5);
}

}  // TEST_SUITE
