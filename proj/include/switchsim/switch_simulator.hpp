// switch_simulator.hpp – the national-switch side: three listeners (one per
// channel kind) feeding a participant pipeline that builds each response.

#pragma once

#include "switchsim/iso_codec.hpp"
#include "switchsim/wire_channels.hpp"

#include <atomic>
#include <chrono>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace switchsim {

inline constexpr std::string_view kDefaultBalance = "000000010000";
inline constexpr std::string_view kApproved = "00";
inline constexpr std::string_view kInvalidTransaction = "12";

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct SimulatorConfig {
    std::vector<Endpoint> endpoints;
    std::string balance{kDefaultBalance};
    std::chrono::milliseconds response_delay{0};

    /// 127.0.0.1: 8001 ascii, 8002 nac, 8003 xml.
    static SimulatorConfig defaults();
    /// Same layout on caller-chosen ports (ascii, nac, xml order).
    static SimulatorConfig on_ports(std::uint16_t ascii, std::uint16_t nac, std::uint16_t xml);
    /// Throws ConfigError.
    static SimulatorConfig from_json(std::string_view json_text);
    static SimulatorConfig load(const std::string& path);

    /// Exactly three endpoints with distinct channel kinds; printable balance.
    /// Port clashes are reported by Simulator::start as PortInUse.
    void validate() const;
};

struct Participant {
    std::string name;
    std::function<bool(const Mti& mti, std::string_view processing_code)> matches;
    std::function<IsoMsg(const IsoMsg& request)> handle;
};

/// balance-enquiry, purchase-echo, network-echo, then the catch-all default.
std::vector<Participant> default_participants(std::string balance);

/// First participant whose predicate matches, in registration order.
/// Throws std::logic_error if none matches (a registry must end with a catch-all).
const Participant& route(const std::vector<Participant>& participants, const IsoMsg& request);

/// Balance-enquiry validation: response MTI 0210; field 39 "00" when the
/// request is a 0200 with a 31xxxx processing code, otherwise "12"; field 54
/// carries the balance only when approved. All other fields are echoed.
IsoMsg validate_balance_enquiry(const IsoMsg& request, std::string_view balance);

struct SimulatorOptions {
    Packager packager = Packager::standard();
    /// Empty means default_participants(config.balance).
    std::vector<Participant> participants;
    /// Structured log sink; nullptr silences logging.
    std::ostream* log = nullptr;
};

class Simulator {
public:
    /// Binds all three listeners or none. Throws ConfigError, or
    /// ChannelError{PortInUse} naming the port.
    static std::unique_ptr<Simulator> start(SimulatorConfig config, SimulatorOptions options = {});

    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;
    ~Simulator();

    /// Stops accepting, lets queued responses drain, and joins all handlers.
    void stop();

    /// Endpoints as bound (ephemeral ports resolved).
    const std::vector<Endpoint>& endpoints() const noexcept { return bound_; }
    const Endpoint& endpoint(ChannelKind kind) const;
    std::uint64_t requests_handled() const noexcept { return requests_.load(); }
    std::uint64_t frames_dropped() const noexcept { return dropped_.load(); }

private:
    struct Session {
        std::thread thread;
        std::atomic<bool> done{false};
    };

    Simulator(SimulatorConfig config, SimulatorOptions options);

    void accept_loop(std::size_t index);
    void handle_connection(Connection& connection);
    IsoMsg respond(const IsoMsg& request) const;
    void log_message(const Endpoint& ep, WireDirection dir, const IsoMsg& msg);
    void log_event(const Endpoint& ep, const std::string& event);
    void reap_sessions(bool all);

    SimulatorConfig config_;
    SimulatorOptions options_;
    std::vector<Listener> listeners_;
    std::vector<Endpoint> bound_;
    std::vector<std::thread> acceptors_;
    std::mutex sessions_mutex_;
    std::list<std::unique_ptr<Session>> sessions_;
    std::mutex log_mutex_;
    std::atomic<bool> stopping_{false};
    std::atomic<std::uint64_t> requests_{0};
    std::atomic<std::uint64_t> dropped_{0};
    std::once_flag stopped_;
};

/// UTC ISO-8601 with milliseconds, e.g. 2026-10-18T19:15:00.123Z.
std::string utc_timestamp(std::chrono::system_clock::time_point when);

}  // namespace switchsim
