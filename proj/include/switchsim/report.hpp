// report.hpp – per-transaction results, run reports, and their JSON / HTML renderings.

#pragma once

#include "switchsim/iso_codec.hpp"
#include "switchsim/wire_channels.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace switchsim {

enum class Verdict { Pass, Fail, Timeout, Error };

const char* to_string(Verdict verdict);
Verdict parse_verdict(std::string_view token);

struct Mismatch {
    int field = 0;
    std::string expected;
    std::optional<std::string> actual;  // nullopt: field absent from the response

    friend bool operator==(const Mismatch&, const Mismatch&) = default;
};

struct TestResult {
    std::string template_name;
    int iteration = 0;
    ChannelKind channel = ChannelKind::Ascii;
    std::string endpoint;
    IsoMsg request;
    std::optional<IsoMsg> response;
    Verdict verdict = Verdict::Error;
    std::vector<Mismatch> mismatches;
    double latency_ms = 0.0;
    std::string error;  // transport / encoding detail for Error verdicts

    friend bool operator==(const TestResult&, const TestResult&) = default;
};

struct Totals {
    std::size_t pass = 0;
    std::size_t fail = 0;
    std::size_t timeout = 0;
    std::size_t error = 0;

    std::size_t total() const noexcept { return pass + fail + timeout + error; }
    friend bool operator==(const Totals&, const Totals&) = default;
};

Totals summarize(const std::vector<TestResult>& results);

struct PlanSummary {
    std::vector<std::string> templates;
    std::vector<std::string> endpoints;
    int iterations = 0;
    std::uint64_t seed = 0;

    std::size_t planned_sends() const noexcept {
        return templates.size() * endpoints.size() * static_cast<std::size_t>(iterations);
    }
    friend bool operator==(const PlanSummary&, const PlanSummary&) = default;
};

/// Immutable run report. Construction checks the per-result verdict rules and
/// that finished_at >= started_at; totals are always derived from results.
class TestReport {
public:
    TestReport(std::string run_id, std::int64_t started_at_ms, std::int64_t finished_at_ms, PlanSummary plan,
               std::vector<TestResult> results);

    const std::string& run_id() const noexcept { return run_id_; }
    std::int64_t started_at_ms() const noexcept { return started_at_ms_; }
    std::int64_t finished_at_ms() const noexcept { return finished_at_ms_; }
    const PlanSummary& plan() const noexcept { return plan_; }
    const std::vector<TestResult>& results() const noexcept { return results_; }
    const Totals& totals() const noexcept { return totals_; }

    friend bool operator==(const TestReport&, const TestReport&) = default;

private:
    std::string run_id_;
    std::int64_t started_at_ms_;
    std::int64_t finished_at_ms_;
    PlanSummary plan_;
    std::vector<TestResult> results_;
    Totals totals_;
};

/// "<UTC yyyymmddThhmmssZ>-s<seed>"
std::string make_run_id(std::chrono::system_clock::time_point started, std::uint64_t seed);

std::string render_json(const TestReport& report);
/// Throws std::invalid_argument on malformed input or totals that disagree with results.
TestReport parse_report_json(std::string_view json_text);
std::string render_html(const TestReport& report);

struct ReportFiles {
    std::filesystem::path json;
    std::filesystem::path html;
};

/// Writes <run-id>.report.json and <run-id>.report.html into `dir` (created if needed).
ReportFiles write_report_files(const TestReport& report, const std::filesystem::path& dir);

}  // namespace switchsim
