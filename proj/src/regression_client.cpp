#include "switchsim/regression_client.hpp"

#include <atomic>
#include <cstdio>
#include <optional>
#include <regex>
#include <thread>

namespace switchsim {

namespace {

using clock = std::chrono::steady_clock;

constexpr std::uint32_t kStanModulus = 1'000'000;
constexpr auto kReaderPoll = std::chrono::milliseconds(10);

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::string format_stan(std::uint32_t value) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%06u", value % kStanModulus);
    return buf;
}

double ms_since(clock::time_point start, clock::time_point end) {
    return std::chrono::duration<double, std::milli>(end - start).count();
}

bool is_regex_expectation(const std::string& value) {
    return value.size() >= 2 && value.front() == '/' && value.back() == '/';
}

}  // namespace

// ─── plan ───────────────────────────────────────────────────────────────────

Seed derive_seed(Seed run, std::size_t template_index, std::size_t endpoint_index, int iteration) {
    std::uint64_t h = splitmix64(run.value);
    h = splitmix64(h ^ template_index);
    h = splitmix64(h ^ endpoint_index);
    h = splitmix64(h ^ static_cast<std::uint64_t>(iteration));
    return Seed{h};
}

PlanSummary RunPlan::summary() const {
    PlanSummary s;
    for (const auto& t : suite) s.templates.push_back(t.name);
    for (const auto& e : endpoints) s.endpoints.push_back(e.to_string());
    s.iterations = iterations;
    s.seed = seed.value;
    return s;
}

void RunPlan::validate() const {
    auto invalid = [](const std::string& why) { throw PlanError(PlanError::Kind::InvalidPlan, why); };
    if (suite.empty()) throw PlanError(PlanError::Kind::EmptySuite, "EmptySuite: no templates");
    if (endpoints.empty()) invalid("at least one endpoint is required");
    if (iterations < 1) invalid("iterations must be >= 1");
    if (timeout.count() <= 0) invalid("timeout must be > 0 ms");
    if (max_in_flight < 1 || max_in_flight >= kStanModulus) invalid("max-in-flight must be in 1..999999");
    for (const auto& ep : endpoints) {
        try {
            ep.validate();
        } catch (const std::invalid_argument& e) {
            invalid(ep.to_string() + ": " + e.what());
        }
    }
    for (const auto& tpl : suite) {
        if (auto missing = missing_patterns(tpl, field_config); !missing.empty())
            throw PlanError(PlanError::Kind::Template, "MissingPattern: template '" + tpl.name + "' randomizes field " +
                                                           std::to_string(missing.front()) + " without a pattern");
    }
    if (sends.size() != suite.size() * endpoints.size() * static_cast<std::size_t>(iterations))
        invalid("planned sends do not match |suite| x |endpoints| x iterations");
}

RunPlan plan(std::vector<TestTemplate> suite, std::vector<Endpoint> endpoints, int iterations, Seed seed,
             FieldConfig field_config) {
    RunPlan p;
    p.suite = std::move(suite);
    p.endpoints = std::move(endpoints);
    p.iterations = iterations;
    p.seed = seed;
    p.field_config = std::move(field_config);
    if (iterations >= 1) {
        for (std::size_t e = 0; e < p.endpoints.size(); ++e)
            for (int it = 0; it < iterations; ++it)
                for (std::size_t t = 0; t < p.suite.size(); ++t)
                    p.sends.push_back({t, e, it, derive_seed(seed, t, e, it)});
    }
    p.validate();
    return p;
}

RunPlan plan(const std::filesystem::path& suite_dir, std::vector<Endpoint> endpoints, int iterations, Seed seed,
             FieldConfig field_config) {
    std::vector<TestTemplate> suite;
    try {
        suite = load_suite(suite_dir);
    } catch (const TemplateError& e) {
        throw PlanError(PlanError::Kind::Template, e.what());
    } catch (const UnsupportedRegexFeature& e) {
        throw PlanError(PlanError::Kind::Template, e.what());
    }
    if (suite.empty())
        throw PlanError(PlanError::Kind::EmptySuite, "EmptySuite: no *.json templates in " + suite_dir.string());
    return plan(std::move(suite), std::move(endpoints), iterations, seed, std::move(field_config));
}

// ─── compare ────────────────────────────────────────────────────────────────

CompareOutcome compare(const std::map<int, std::string>& expected, const IsoMsg& response) {
    CompareOutcome out;
    for (const auto& [field, want] : expected) {
        std::optional<std::string> actual;
        if (auto v = response.get(field)) actual = v->display();

        bool ok = false;
        if (actual) {
            if (is_regex_expectation(want)) {
                const std::regex re(want.substr(1, want.size() - 2), std::regex::ECMAScript);
                ok = std::regex_match(*actual, re);
            } else {
                ok = *actual == want;
            }
        }
        if (!ok) out.mismatches.push_back({field, want, actual});
    }
    out.verdict = out.mismatches.empty() ? Verdict::Pass : Verdict::Fail;
    return out;
}

// ─── InFlightTable ──────────────────────────────────────────────────────────

void InFlightTable::insert(const CorrelationKey& key, InFlight entry) {
    {
        std::lock_guard lock(mutex_);
        if (!entries_.emplace(key, std::move(entry)).second)
            throw std::logic_error("STAN " + key.stan + " already in flight on connection " +
                                   std::to_string(key.connection));
    }
    changed_.notify_all();
}

InFlight InFlightTable::correlate(std::uint64_t connection, const IsoMsg& response) {
    const std::string stan = response.text(kStanField).value_or("");
    auto taken = take(CorrelationKey{connection, stan});
    if (!taken) throw UnmatchedResponse(connection, stan);
    return std::move(*taken);
}

std::optional<InFlight> InFlightTable::take(const CorrelationKey& key) {
    std::optional<InFlight> out;
    {
        std::lock_guard lock(mutex_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        out = std::move(it->second);
        entries_.erase(it);
    }
    changed_.notify_all();
    return out;
}

std::vector<InFlight> InFlightTable::expire(std::uint64_t connection, clock::time_point cutoff) {
    std::vector<InFlight> out;
    {
        std::lock_guard lock(mutex_);
        for (auto it = entries_.lower_bound(CorrelationKey{connection, ""});
             it != entries_.end() && it->first.connection == connection;) {
            if (it->second.sent_at <= cutoff) {
                out.push_back(std::move(it->second));
                it = entries_.erase(it);
            } else {
                ++it;
            }
        }
    }
    if (!out.empty()) changed_.notify_all();
    return out;
}

std::vector<InFlight> InFlightTable::drain(std::uint64_t connection) {
    return expire(connection, clock::time_point::max());
}

std::size_t InFlightTable::count_locked(std::uint64_t connection) const {
    std::size_t n = 0;
    for (auto it = entries_.lower_bound(CorrelationKey{connection, ""});
         it != entries_.end() && it->first.connection == connection; ++it)
        ++n;
    return n;
}

std::size_t InFlightTable::pending(std::uint64_t connection) const {
    std::lock_guard lock(mutex_);
    return count_locked(connection);
}

std::size_t InFlightTable::pending() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

// ─── execute ────────────────────────────────────────────────────────────────

namespace {

// Single collection point for results, indexed by planned send.
class ResultSink {
public:
    explicit ResultSink(std::size_t n) : slots_(n) {}

    void put(std::size_t index, TestResult result) {
        std::lock_guard lock(mutex_);
        if (!slots_[index]) {
            slots_[index] = std::move(result);
            ++filled_;
        }
    }

    std::size_t filled() const {
        std::lock_guard lock(mutex_);
        return filled_;
    }

    std::vector<TestResult> take() {
        std::lock_guard lock(mutex_);
        std::vector<TestResult> out;
        out.reserve(slots_.size());
        for (auto& s : slots_) {
            if (!s) throw std::logic_error("planned send finished without a result");
            out.push_back(std::move(*s));
        }
        return out;
    }

private:
    mutable std::mutex mutex_;
    std::vector<std::optional<TestResult>> slots_;
    std::size_t filled_ = 0;
};

class EndpointRun {
public:
    EndpointRun(const RunPlan& plan, std::size_t endpoint_index, std::vector<std::size_t> sends, InFlightTable& table,
                ResultSink& sink, std::atomic<std::size_t>& sent)
        : plan_(plan),
          endpoint_(plan.endpoints[endpoint_index]),
          sends_(std::move(sends)),
          table_(table),
          sink_(sink),
          sent_(sent) {}

    void run() {
        std::optional<Connection> conn;
        try {
            conn.emplace(Connection::connect(endpoint_, plan_.packager));
        } catch (const ChannelError& e) {
            for (auto idx : sends_) fail_unsent(idx, e.what());
            return;
        }

        const std::uint64_t id = conn->id();
        std::thread reader([&] { read_loop(*conn, id); });

        std::uint32_t stan = 0;
        for (auto idx : sends_) {
            if (transport_failed_) {
                fail_unsent(idx, "connection lost before send: " + transport_error());
                continue;
            }
            if (!table_.wait_below(id, plan_.max_in_flight, [&] { return transport_failed_.load(); })) {
                fail_unsent(idx, "connection lost before send: " + transport_error());
                continue;
            }

            IsoMsg request;
            Bytes frame;
            try {
                request = build_request(idx);
                stan = (stan + 1) % kStanModulus;
                request.set(kStanField, format_stan(stan));
                frame = conn->codec().encode(request, WireDirection::Outgoing);
            } catch (const std::exception& e) {
                sink_.put(idx, error_result(idx, request, std::string("encode: ") + e.what()));
                continue;
            }

            const CorrelationKey key{id, request.text(kStanField).value()};
            table_.insert(key, InFlight{idx, request, clock::now()});
            try {
                conn->send_raw(frame);
                ++sent_;
            } catch (const ChannelError& e) {
                if (auto entry = table_.take(key)) sink_.put(idx, error_result(idx, entry->request, e.what()));
                set_transport_error(e.what());
                conn->shutdown_read();
            }
        }
        writer_done_ = true;
        reader.join();
        conn->close();
    }

private:
    void read_loop(Connection& conn, std::uint64_t id) {
        for (;;) {
            if (writer_done_ && table_.pending(id) == 0) return;
            try {
                IsoMsg response = conn.receive(kReaderPoll);
                const auto now = clock::now();
                try {
                    InFlight entry = table_.correlate(id, response);
                    complete(entry, response, now);
                } catch (const UnmatchedResponse&) {
                    // Late reply to a timed-out request, or a stray message: discarded.
                }
            } catch (const ChannelError& e) {
                if (e.kind() != ChannelError::Kind::Timeout) {
                    set_transport_error(e.what());
                    for (auto& entry : table_.drain(id))
                        sink_.put(entry.send_index, error_result(entry.send_index, entry.request, e.what()));
                    // Keep failing any sends the writer still manages to register.
                    while (!writer_done_) {
                        std::this_thread::sleep_for(kReaderPoll);
                        for (auto& entry : table_.drain(id))
                            sink_.put(entry.send_index, error_result(entry.send_index, entry.request, e.what()));
                    }
                    for (auto& entry : table_.drain(id))
                        sink_.put(entry.send_index, error_result(entry.send_index, entry.request, e.what()));
                    return;
                }
            } catch (const CodecError&) {
                // Undecodable response: cannot be correlated; its request will time out.
            }

            for (auto& entry : table_.expire(id, clock::now() - plan_.timeout)) {
                TestResult r = base_result(entry.send_index, entry.request);
                r.verdict = Verdict::Timeout;
                r.latency_ms = ms_since(entry.sent_at, clock::now());
                sink_.put(entry.send_index, std::move(r));
            }
        }
    }

    void complete(const InFlight& entry, const IsoMsg& response, clock::time_point now) {
        const auto& tpl = plan_.suite[plan_.sends[entry.send_index].template_index];
        TestResult r = base_result(entry.send_index, entry.request);
        auto outcome = compare(tpl.expected, response);
        r.response = response;
        r.verdict = outcome.verdict;
        r.mismatches = std::move(outcome.mismatches);
        r.latency_ms = ms_since(entry.sent_at, now);
        sink_.put(entry.send_index, std::move(r));
    }

    IsoMsg build_request(std::size_t idx) const {
        const auto& send = plan_.sends[idx];
        return instantiate(plan_.suite[send.template_index], plan_.field_config, send.seed);
    }

    TestResult base_result(std::size_t idx, const IsoMsg& request) const {
        const auto& send = plan_.sends[idx];
        TestResult r;
        r.template_name = plan_.suite[send.template_index].name;
        r.iteration = send.iteration;
        r.channel = endpoint_.kind;
        r.endpoint = endpoint_.to_string();
        r.request = request;
        return r;
    }

    TestResult error_result(std::size_t idx, const IsoMsg& request, const std::string& error) const {
        TestResult r = base_result(idx, request);
        r.verdict = Verdict::Error;
        r.error = error.empty() ? "unknown transport error" : error;
        return r;
    }

    void fail_unsent(std::size_t idx, const std::string& error) {
        IsoMsg request;
        try {
            request = build_request(idx);
        } catch (const std::exception&) {
            request = IsoMsg(plan_.suite[plan_.sends[idx].template_index].mti);
        }
        sink_.put(idx, error_result(idx, request, error));
    }

    void set_transport_error(const std::string& what) {
        {
            std::lock_guard lock(error_mutex_);
            if (transport_error_.empty()) transport_error_ = what;
        }
        transport_failed_ = true;
    }

    std::string transport_error() const {
        std::lock_guard lock(error_mutex_);
        return transport_error_;
    }

    const RunPlan& plan_;
    const Endpoint& endpoint_;
    std::vector<std::size_t> sends_;
    InFlightTable& table_;
    ResultSink& sink_;
    std::atomic<std::size_t>& sent_;

    std::atomic<bool> writer_done_{false};
    std::atomic<bool> transport_failed_{false};
    mutable std::mutex error_mutex_;
    std::string transport_error_;
};

std::int64_t epoch_ms(std::chrono::system_clock::time_point t) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

}  // namespace

TestReport execute(const RunPlan& plan, const ExecuteOptions& options) {
    plan.validate();
    const auto started = std::chrono::system_clock::now();

    InFlightTable table;
    ResultSink sink(plan.sends.size());
    std::atomic<std::size_t> sent{0};

    std::vector<std::vector<std::size_t>> per_endpoint(plan.endpoints.size());
    for (std::size_t i = 0; i < plan.sends.size(); ++i) per_endpoint[plan.sends[i].endpoint_index].push_back(i);

    std::vector<std::unique_ptr<EndpointRun>> runs;
    std::vector<std::thread> workers;
    for (std::size_t e = 0; e < plan.endpoints.size(); ++e) {
        runs.push_back(std::make_unique<EndpointRun>(plan, e, std::move(per_endpoint[e]), table, sink, sent));
        workers.emplace_back([run = runs.back().get()] { run->run(); });
    }

    auto progress_line = [&] {
        if (options.progress == nullptr) return;
        *options.progress << "sent=" << sent.load() << " received=" << sink.filled() << " pending=" << table.pending()
                          << '\n'
                          << std::flush;
    };
    if (options.progress != nullptr) {
        auto next = clock::now() + options.progress_interval;
        while (sink.filled() < plan.sends.size()) {
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
            if (clock::now() >= next) {
                progress_line();
                next += options.progress_interval;
            }
        }
    }
    for (auto& w : workers) w.join();
    progress_line();

    const auto finished = std::chrono::system_clock::now();
    return TestReport(make_run_id(started, plan.seed.value), epoch_ms(started), epoch_ms(finished), plan.summary(),
                      sink.take());
}

}  // namespace switchsim
