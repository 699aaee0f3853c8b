#include "switchsim/switch_simulator.hpp"

#include "json.hpp"

#include <condition_variable>
#include <ctime>
#include <deque>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace switchsim {

namespace {

constexpr auto kPollInterval = std::chrono::milliseconds(50);

std::string processing_code(const IsoMsg& msg) { return msg.text(3).value_or(""); }

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

IsoMsg reply(const IsoMsg& request, const Mti& mti, std::string_view code) {
    IsoMsg response = request;
    response.set_mti(mti);
    response.set(39, std::string(code));
    return response;
}

}  // namespace

std::string utc_timestamp(std::chrono::system_clock::time_point when) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(when.time_since_epoch()).count();
    const std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[40];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms % 1000));
    return out;
}

// ─── config ─────────────────────────────────────────────────────────────────

SimulatorConfig SimulatorConfig::defaults() { return on_ports(8001, 8002, 8003); }

SimulatorConfig SimulatorConfig::on_ports(std::uint16_t ascii, std::uint16_t nac, std::uint16_t xml) {
    SimulatorConfig config;
    config.endpoints = {
        Endpoint{"127.0.0.1", ascii, ChannelKind::Ascii, std::nullopt},
        Endpoint{"127.0.0.1", nac, ChannelKind::Nac, std::nullopt},
        Endpoint{"127.0.0.1", xml, ChannelKind::Xml, std::nullopt},
    };
    return config;
}

void SimulatorConfig::validate() const {
    if (endpoints.size() != 3) throw ConfigError("simulator needs exactly 3 endpoints, got " + std::to_string(endpoints.size()));
    std::set<ChannelKind> kinds;
    for (const auto& ep : endpoints) {
        try {
            ep.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(ep.to_string() + ": " + e.what());
        }
        if (!kinds.insert(ep.kind).second)
            throw ConfigError(std::string("channel kind '") + to_string(ep.kind) + "' configured twice");
    }
    if (!FieldValue::is_printable(balance) || balance.empty() || balance.size() > 120)
        throw ConfigError("balance must be 1..120 printable characters");
    if (response_delay.count() < 0) throw ConfigError("response delay must be >= 0");
}

SimulatorConfig SimulatorConfig::from_json(std::string_view json_text) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("simulator config: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("simulator config must be a JSON object");

    SimulatorConfig config;
    try {
        for (const auto& [key, value] : doc.items()) {
            if (key == "balance") {
                config.balance = value.get<std::string>();
            } else if (key == "response_delay_ms") {
                config.response_delay = std::chrono::milliseconds(value.get<std::int64_t>());
            } else if (key == "endpoints") {
                for (const auto& item : value) {
                    Endpoint ep;
                    ep.kind = parse_channel_kind(item.at("channel").get<std::string>());
                    const auto port = item.at("port").get<std::int64_t>();
                    if (port < 0 || port > 65535) throw ConfigError("port out of range: " + std::to_string(port));
                    ep.port = static_cast<std::uint16_t>(port);
                    ep.host = item.value("host", std::string("127.0.0.1"));
                    if (item.contains("tpdu")) {
                        const auto& tpdu = item["tpdu"];
                        if (tpdu.is_boolean()) {
                            if (tpdu.get<bool>()) ep.tpdu = kDefaultTpdu;
                        } else {
                            ep.tpdu = from_hex(tpdu.get<std::string>());
                        }
                    }
                    config.endpoints.push_back(std::move(ep));
                }
            } else {
                throw ConfigError("simulator config: unknown key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("simulator config: ") + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("simulator config: ") + e.what());
    }
    if (config.endpoints.empty()) config.endpoints = defaults().endpoints;
    config.validate();
    return config;
}

SimulatorConfig SimulatorConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open simulator config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

// ─── participants ───────────────────────────────────────────────────────────

IsoMsg validate_balance_enquiry(const IsoMsg& request, std::string_view balance) {
    static const std::regex balance_code("31[0-9]{4}");

    std::string_view response = kApproved;
    if (request.mti().str() != "0200") response = kInvalidTransaction;
    if (!std::regex_match(processing_code(request), balance_code)) response = kInvalidTransaction;

    IsoMsg out = reply(request, Mti("0210"), response);
    if (response == kApproved) out.set(54, std::string(balance));
    else out.unset(54);
    return out;
}

std::vector<Participant> default_participants(std::string balance) {
    std::vector<Participant> registry;
    registry.push_back({
        "balance-enquiry",
        [](const Mti& mti, std::string_view proc) { return starts_with(mti.str(), "02") && starts_with(proc, "31"); },
        [balance](const IsoMsg& req) { return validate_balance_enquiry(req, balance); },
    });
    // The remaining participants are routing plumbing, not business logic.
    registry.push_back({
        "purchase-echo",
        [](const Mti& mti, std::string_view proc) { return mti.str() == "0200" && starts_with(proc, "00"); },
        [](const IsoMsg& req) { return reply(req, Mti("0210"), kApproved); },
    });
    registry.push_back({
        "network-echo",
        [](const Mti& mti, std::string_view) { return mti.str() == "0800"; },
        [](const IsoMsg& req) { return reply(req, Mti("0810"), kApproved); },
    });
    registry.push_back({
        "default",
        [](const Mti&, std::string_view) { return true; },
        [](const IsoMsg& req) { return reply(req, req.mti().response(), kInvalidTransaction); },
    });
    return registry;
}

const Participant& route(const std::vector<Participant>& participants, const IsoMsg& request) {
    const std::string proc = processing_code(request);
    for (const auto& p : participants) {
        if (p.matches(request.mti(), proc)) return p;
    }
    throw std::logic_error("no participant matched MTI " + request.mti().str());
}

// ─── Simulator ──────────────────────────────────────────────────────────────

std::unique_ptr<Simulator> Simulator::start(SimulatorConfig config, SimulatorOptions options) {
    config.validate();
    std::set<std::uint16_t> ports;
    for (const auto& ep : config.endpoints) {
        if (ep.port != 0 && !ports.insert(ep.port).second)
            throw ChannelError(ChannelError::Kind::PortInUse,
                               "PortInUse: port " + std::to_string(ep.port) + " assigned to more than one channel");
    }
    if (options.participants.empty()) options.participants = default_participants(config.balance);
    return std::unique_ptr<Simulator>(new Simulator(std::move(config), std::move(options)));
}

Simulator::Simulator(SimulatorConfig config, SimulatorOptions options)
    : config_(std::move(config)), options_(std::move(options)) {
    // Bind everything before starting any thread so a failure leaves nothing bound.
    for (const auto& ep : config_.endpoints) {
        listeners_.push_back(Listener::bind(ep.host, ep.port));
        Endpoint bound = ep;
        bound.port = listeners_.back().port();
        bound_.push_back(std::move(bound));
    }
    for (std::size_t i = 0; i < listeners_.size(); ++i) {
        log_event(bound_[i], "listening");
        acceptors_.emplace_back([this, i] { accept_loop(i); });
    }
}

Simulator::~Simulator() { stop(); }

const Endpoint& Simulator::endpoint(ChannelKind kind) const {
    for (const auto& ep : bound_) {
        if (ep.kind == kind) return ep;
    }
    throw std::logic_error("no endpoint for channel kind");
}

void Simulator::stop() {
    std::call_once(stopped_, [this] {
        stopping_ = true;
        for (auto& t : acceptors_) t.join();
        for (auto& l : listeners_) l.close();
        reap_sessions(true);
    });
}

void Simulator::reap_sessions(bool all) {
    std::list<std::unique_ptr<Session>> finished;
    {
        std::lock_guard lock(sessions_mutex_);
        for (auto it = sessions_.begin(); it != sessions_.end();) {
            if (all || (*it)->done) {
                finished.push_back(std::move(*it));
                it = sessions_.erase(it);
            } else {
                ++it;
            }
        }
    }
    for (auto& s : finished) s->thread.join();
}

void Simulator::accept_loop(std::size_t index) {
    const Endpoint& ep = bound_[index];
    while (!stopping_) {
        auto socket = listeners_[index].accept(kPollInterval);
        reap_sessions(false);
        if (!socket) continue;

        auto session = std::make_unique<Session>();
        Session* raw = session.get();
        auto conn = std::make_shared<Connection>(std::move(*socket), ChannelCodec(ep, options_.packager));
        {
            std::lock_guard lock(sessions_mutex_);
            sessions_.push_back(std::move(session));
            raw->thread = std::thread([this, raw, conn] {
                handle_connection(*conn);
                raw->done = true;
            });
        }
    }
}

IsoMsg Simulator::respond(const IsoMsg& request) const {
    return route(options_.participants, request).handle(request);
}

void Simulator::handle_connection(Connection& conn) {
    using clock = std::chrono::steady_clock;
    const Endpoint& ep = conn.endpoint();
    log_event(ep, "connected id=" + std::to_string(conn.id()));

    struct Outgoing {
        clock::time_point ready;
        Bytes frame;
        IsoMsg msg;
    };
    std::mutex mutex;
    std::condition_variable ready_cv;
    std::deque<Outgoing> queue;
    bool reader_done = false;
    std::atomic<bool> write_failed{false};

    // Responses leave in request order; each waits out the configured delay
    // measured from its own arrival, so pipelined requests overlap.
    std::thread writer([&] {
        std::unique_lock lock(mutex);
        for (;;) {
            ready_cv.wait(lock, [&] { return !queue.empty() || reader_done; });
            if (queue.empty()) return;
            Outgoing item = std::move(queue.front());
            queue.pop_front();
            lock.unlock();
            std::this_thread::sleep_until(item.ready);
            try {
                conn.send_raw(item.frame);
                log_message(ep, WireDirection::Outgoing, item.msg);
            } catch (const ChannelError& e) {
                log_event(ep, std::string("write-failed ") + e.what());
                write_failed = true;
                conn.shutdown_read();
                return;
            }
            lock.lock();
        }
    });

    while (!stopping_ && !write_failed) {
        IsoMsg request;
        try {
            request = conn.receive(kPollInterval);
        } catch (const ChannelError& e) {
            if (e.kind() == ChannelError::Kind::Timeout) continue;
            if (e.kind() == ChannelError::Kind::MalformedXml) {
                ++dropped_;
                log_event(ep, std::string("drop ") + e.what());
                continue;
            }
            if (e.kind() != ChannelError::Kind::PeerClosed) log_event(ep, std::string("closing ") + e.what());
            break;
        } catch (const CodecError& e) {
            ++dropped_;
            log_event(ep, std::string("drop UnpackError ") + e.what());
            continue;
        }

        const auto arrived = clock::now();
        ++requests_;
        log_message(ep, WireDirection::Incoming, request);
        try {
            IsoMsg response = respond(request);
            Bytes frame = conn.codec().encode(response, WireDirection::Outgoing);
            std::lock_guard lock(mutex);
            queue.push_back({arrived + config_.response_delay, std::move(frame), std::move(response)});
        } catch (const std::exception& e) {
            ++dropped_;
            log_event(ep, std::string("drop ResponseError ") + e.what());
            continue;
        }
        ready_cv.notify_one();
    }

    {
        std::lock_guard lock(mutex);
        reader_done = true;
    }
    ready_cv.notify_one();
    writer.join();
    log_event(ep, "disconnected id=" + std::to_string(conn.id()));
    conn.close();
}

void Simulator::log_message(const Endpoint& ep, WireDirection dir, const IsoMsg& msg) {
    if (options_.log == nullptr) return;
    std::lock_guard lock(log_mutex_);
    *options_.log << utc_timestamp(std::chrono::system_clock::now()) << " channel=" << to_string(ep.kind)
                  << " port=" << ep.port << " direction=" << to_string(dir) << " mti=" << msg.mti().str()
                  << " f39=" << msg.text(39).value_or("-") << '\n'
                  << std::flush;
}

void Simulator::log_event(const Endpoint& ep, const std::string& event) {
    if (options_.log == nullptr) return;
    std::lock_guard lock(log_mutex_);
    *options_.log << utc_timestamp(std::chrono::system_clock::now()) << " channel=" << to_string(ep.kind)
                  << " port=" << ep.port << " event=" << event << '\n'
                  << std::flush;
}

}  // namespace switchsim
