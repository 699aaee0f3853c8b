// regression_client.hpp – runs a template suite against a switch over one
// persistent connection per endpoint, pipelining up to max_in_flight
// requests and correlating responses by (connection, STAN).

#pragma once

#include "switchsim/iso_codec.hpp"
#include "switchsim/msg_generator.hpp"
#include "switchsim/report.hpp"
#include "switchsim/wire_channels.hpp"

#include <chrono>
#include <compare>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace switchsim {

inline constexpr std::size_t kDefaultMaxInFlight = 32;
inline constexpr std::chrono::milliseconds kDefaultTimeout{5000};
inline constexpr int kStanField = 11;

class PlanError : public std::runtime_error {
public:
    enum class Kind { EmptySuite, InvalidPlan, Template };

    PlanError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct PlannedSend {
    std::size_t template_index = 0;
    std::size_t endpoint_index = 0;
    int iteration = 0;
    Seed seed;

    friend bool operator==(const PlannedSend&, const PlannedSend&) = default;
};

struct RunPlan {
    std::vector<TestTemplate> suite;
    std::vector<Endpoint> endpoints;
    int iterations = 1;
    std::chrono::milliseconds timeout = kDefaultTimeout;
    std::size_t max_in_flight = kDefaultMaxInFlight;
    Seed seed;
    FieldConfig field_config;
    Packager packager = Packager::standard();
    /// |suite| x |endpoints| x iterations, grouped by endpoint, then iteration, then template.
    std::vector<PlannedSend> sends;

    PlanSummary summary() const;
    /// Throws PlanError::InvalidPlan.
    void validate() const;
};

/// Mixes the run seed with a send's coordinates (splitmix64 chain).
Seed derive_seed(Seed run, std::size_t template_index, std::size_t endpoint_index, int iteration);

RunPlan plan(std::vector<TestTemplate> suite, std::vector<Endpoint> endpoints, int iterations, Seed seed,
             FieldConfig field_config = default_field_config());
/// Loads `suite_dir` (template errors carry the file name). Throws PlanError.
RunPlan plan(const std::filesystem::path& suite_dir, std::vector<Endpoint> endpoints, int iterations, Seed seed,
             FieldConfig field_config = default_field_config());

struct CompareOutcome {
    Verdict verdict = Verdict::Pass;
    std::vector<Mismatch> mismatches;
};

/// Exact string match, or a full regex match for values written as "/.../".
CompareOutcome compare(const std::map<int, std::string>& expected, const IsoMsg& response);

struct CorrelationKey {
    std::uint64_t connection = 0;
    std::string stan;

    friend auto operator<=>(const CorrelationKey&, const CorrelationKey&) = default;
};

class UnmatchedResponse : public std::runtime_error {
public:
    UnmatchedResponse(std::uint64_t connection, std::string stan)
        : std::runtime_error("UnmatchedResponse: STAN '" + stan + "' on connection " + std::to_string(connection)),
          stan_(std::move(stan)) {}
    const std::string& stan() const noexcept { return stan_; }

private:
    std::string stan_;
};

struct InFlight {
    std::size_t send_index = 0;
    IsoMsg request;
    std::chrono::steady_clock::time_point sent_at;
};

/// The only state shared between a connection's writer and reader.
/// All members are thread-safe.
class InFlightTable {
public:
    /// Throws std::logic_error if the key is already in flight.
    void insert(const CorrelationKey& key, InFlight entry);

    /// Removes and returns the entry keyed by (connection, response field 11).
    /// Throws UnmatchedResponse.
    InFlight correlate(std::uint64_t connection, const IsoMsg& response);

    /// Removes the entry if present.
    std::optional<InFlight> take(const CorrelationKey& key);

    /// Removes entries on `connection` sent at or before `cutoff`.
    std::vector<InFlight> expire(std::uint64_t connection, std::chrono::steady_clock::time_point cutoff);

    /// Removes every entry on `connection`.
    std::vector<InFlight> drain(std::uint64_t connection);

    std::size_t pending(std::uint64_t connection) const;
    std::size_t pending() const;

    /// Blocks until fewer than `limit` entries are in flight on `connection`,
    /// or `abandon()` returns true (checked at least every `poll`).
    template <class Abandon>
    bool wait_below(std::uint64_t connection, std::size_t limit, Abandon abandon,
                    std::chrono::milliseconds poll = std::chrono::milliseconds(20)) {
        std::unique_lock lock(mutex_);
        for (;;) {
            if (count_locked(connection) < limit) return true;
            if (abandon()) return false;
            changed_.wait_for(lock, poll);
        }
    }

private:
    std::size_t count_locked(std::uint64_t connection) const;

    mutable std::mutex mutex_;
    std::condition_variable changed_;
    std::map<CorrelationKey, InFlight> entries_;
};

struct ExecuteOptions {
    /// "sent=N received=M pending=K" progress lines; nullptr disables.
    std::ostream* progress = nullptr;
    std::chrono::milliseconds progress_interval{500};
};

/// Every planned send yields exactly one result, ordered as in `plan.sends`.
/// An unreachable endpoint turns its sends into Error results.
TestReport execute(const RunPlan& plan, const ExecuteOptions& options = {});

}  // namespace switchsim
