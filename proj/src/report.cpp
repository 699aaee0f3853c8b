#include "switchsim/report.hpp"

#include "switchsim/switch_simulator.hpp"

#include "json.hpp"

#include <ctime>
#include <fstream>
#include <sstream>

namespace switchsim {

using ojson = nlohmann::ordered_json;
using nlohmann::json;

const char* to_string(Verdict verdict) {
    switch (verdict) {
        case Verdict::Pass: return "pass";
        case Verdict::Fail: return "fail";
        case Verdict::Timeout: return "timeout";
        case Verdict::Error: return "error";
    }
    return "?";
}

Verdict parse_verdict(std::string_view token) {
    if (token == "pass") return Verdict::Pass;
    if (token == "fail") return Verdict::Fail;
    if (token == "timeout") return Verdict::Timeout;
    if (token == "error") return Verdict::Error;
    throw std::invalid_argument("unknown verdict '" + std::string(token) + "'");
}

Totals summarize(const std::vector<TestResult>& results) {
    Totals t;
    for (const auto& r : results) {
        switch (r.verdict) {
            case Verdict::Pass: ++t.pass; break;
            case Verdict::Fail: ++t.fail; break;
            case Verdict::Timeout: ++t.timeout; break;
            case Verdict::Error: ++t.error; break;
        }
    }
    return t;
}

namespace {

void check_result(const TestResult& r, std::size_t index) {
    auto bad = [&](const std::string& why) {
        throw std::invalid_argument("result " + std::to_string(index) + " (" + r.template_name + "): " + why);
    };
    const bool pass_shape = r.mismatches.empty() && r.response.has_value();
    if ((r.verdict == Verdict::Pass) != pass_shape) bad("verdict pass requires a response and no mismatches");
    if (r.verdict == Verdict::Fail && !r.response) bad("verdict fail requires a response");
    if (r.verdict == Verdict::Timeout && (r.response || !r.error.empty()))
        bad("verdict timeout requires no response and no transport error");
    if (r.verdict == Verdict::Error && r.error.empty()) bad("verdict error requires an error description");
}

}  // namespace

TestReport::TestReport(std::string run_id, std::int64_t started_at_ms, std::int64_t finished_at_ms, PlanSummary plan,
                       std::vector<TestResult> results)
    : run_id_(std::move(run_id)),
      started_at_ms_(started_at_ms),
      finished_at_ms_(finished_at_ms),
      plan_(std::move(plan)),
      results_(std::move(results)),
      totals_(summarize(results_)) {
    if (finished_at_ms_ < started_at_ms_) throw std::invalid_argument("report finished before it started");
    for (std::size_t i = 0; i < results_.size(); ++i) check_result(results_[i], i);
}

std::string make_run_id(std::chrono::system_clock::time_point started, std::uint64_t seed) {
    const std::time_t secs = std::chrono::system_clock::to_time_t(started);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return std::string(buf) + "-s" + std::to_string(seed);
}

// ─── JSON ───────────────────────────────────────────────────────────────────

namespace {

ojson message_to_json(const IsoMsg& msg) {
    ojson fields = ojson::object();
    for (const auto& [n, value] : msg.fields()) {
        if (value.is_binary()) fields[std::to_string(n)] = ojson{{"hex", to_hex(value.bytes())}};
        else fields[std::to_string(n)] = value.text();
    }
    return ojson{{"mti", msg.mti().str()}, {"fields", fields}};
}

IsoMsg message_from_json(const json& j) {
    IsoMsg msg(Mti(j.at("mti").get<std::string>()));
    for (const auto& [key, value] : j.at("fields").items()) {
        const int n = std::stoi(key);
        if (value.is_object()) msg.set(n, FieldValue::binary(from_hex(value.at("hex").get<std::string>())));
        else msg.set(n, value.get<std::string>());
    }
    return msg;
}

ojson totals_to_json(const Totals& t) {
    return ojson{{"pass", t.pass}, {"fail", t.fail}, {"timeout", t.timeout}, {"error", t.error}};
}

}  // namespace

std::string render_json(const TestReport& report) {
    ojson doc;
    doc["run_id"] = report.run_id();
    doc["started_at_ms"] = report.started_at_ms();
    doc["finished_at_ms"] = report.finished_at_ms();
    doc["started_at"] = utc_timestamp(std::chrono::system_clock::time_point(std::chrono::milliseconds(report.started_at_ms())));
    doc["finished_at"] = utc_timestamp(std::chrono::system_clock::time_point(std::chrono::milliseconds(report.finished_at_ms())));

    const auto& plan = report.plan();
    doc["plan"] = ojson{{"templates", plan.templates},
                        {"endpoints", plan.endpoints},
                        {"iterations", plan.iterations},
                        {"seed", plan.seed},
                        {"planned_sends", plan.planned_sends()}};
    doc["totals"] = totals_to_json(report.totals());

    ojson results = ojson::array();
    for (const auto& r : report.results()) {
        ojson mismatches = ojson::array();
        for (const auto& m : r.mismatches) {
            mismatches.push_back(ojson{{"field", m.field},
                                       {"expected", m.expected},
                                       {"actual", m.actual ? ojson(*m.actual) : ojson(nullptr)}});
        }
        ojson item;
        item["template"] = r.template_name;
        item["iteration"] = r.iteration;
        item["channel"] = to_string(r.channel);
        item["endpoint"] = r.endpoint;
        item["verdict"] = to_string(r.verdict);
        item["latency_ms"] = r.latency_ms;
        item["request"] = message_to_json(r.request);
        item["response"] = r.response ? message_to_json(*r.response) : ojson(nullptr);
        item["mismatches"] = mismatches;
        item["error"] = r.error;
        results.push_back(std::move(item));
    }
    doc["results"] = std::move(results);
    return doc.dump(2) + "\n";
}

TestReport parse_report_json(std::string_view json_text) {
    try {
        const json doc = json::parse(json_text);
        PlanSummary plan;
        const auto& p = doc.at("plan");
        plan.templates = p.at("templates").get<std::vector<std::string>>();
        plan.endpoints = p.at("endpoints").get<std::vector<std::string>>();
        plan.iterations = p.at("iterations").get<int>();
        plan.seed = p.at("seed").get<std::uint64_t>();

        std::vector<TestResult> results;
        for (const auto& item : doc.at("results")) {
            TestResult r;
            r.template_name = item.at("template").get<std::string>();
            r.iteration = item.at("iteration").get<int>();
            r.channel = parse_channel_kind(item.at("channel").get<std::string>());
            r.endpoint = item.at("endpoint").get<std::string>();
            r.verdict = parse_verdict(item.at("verdict").get<std::string>());
            r.latency_ms = item.at("latency_ms").get<double>();
            r.request = message_from_json(item.at("request"));
            if (!item.at("response").is_null()) r.response = message_from_json(item.at("response"));
            for (const auto& m : item.at("mismatches")) {
                Mismatch mm;
                mm.field = m.at("field").get<int>();
                mm.expected = m.at("expected").get<std::string>();
                if (!m.at("actual").is_null()) mm.actual = m.at("actual").get<std::string>();
                r.mismatches.push_back(std::move(mm));
            }
            r.error = item.value("error", std::string());
            results.push_back(std::move(r));
        }

        TestReport report(doc.at("run_id").get<std::string>(), doc.at("started_at_ms").get<std::int64_t>(),
                          doc.at("finished_at_ms").get<std::int64_t>(), std::move(plan), std::move(results));

        const auto& t = doc.at("totals");
        const Totals stated{t.at("pass").get<std::size_t>(), t.at("fail").get<std::size_t>(),
                            t.at("timeout").get<std::size_t>(), t.at("error").get<std::size_t>()};
        if (!(stated == report.totals())) throw std::invalid_argument("totals do not match results");
        return report;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("malformed report JSON: ") + e.what());
    } catch (const CodecError& e) {
        throw std::invalid_argument(std::string("malformed message in report: ") + e.what());
    }
}

// ─── HTML ───────────────────────────────────────────────────────────────────

namespace {

std::string escape_html(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&#39;"; break;
            default: out += c;
        }
    }
    return out;
}

void render_fields(std::ostringstream& html, const char* title, const IsoMsg& msg) {
    html << "<div class=\"msg\"><b>" << title << "</b> <code>" << escape_html(msg.mti().str()) << "</code><ul>";
    for (const auto& [n, v] : msg.fields())
        html << "<li><code>" << n << "</code> = <code>" << escape_html(v.display()) << "</code></li>";
    html << "</ul></div>";
}

constexpr const char* kStyle = R"(
body { font-family: sans-serif; margin: 1.5em; color: #222; }
table { border-collapse: collapse; margin-bottom: 1.5em; }
th, td { border: 1px solid #bbb; padding: 0.3em 0.6em; text-align: left; vertical-align: top; }
th { background: #eee; }
tr.verdict-pass td.verdict { background: #c8f0c8; }
tr.verdict-fail td.verdict { background: #f6c4c4; }
tr.verdict-timeout td.verdict { background: #f8e3a6; }
tr.verdict-error td.verdict { background: #d9c4f2; }
code { font-family: monospace; }
ul { margin: 0.2em 0; padding-left: 1.2em; }
div.msg { display: inline-block; vertical-align: top; margin-right: 2em; }
)";

}  // namespace

std::string render_html(const TestReport& report) {
    std::ostringstream html;
    const auto& totals = report.totals();
    const auto& plan = report.plan();
    auto ts = [](std::int64_t ms) {
        return utc_timestamp(std::chrono::system_clock::time_point(std::chrono::milliseconds(ms)));
    };

    html << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\"/>\n<title>Regression report "
         << escape_html(report.run_id()) << "</title>\n<style>" << kStyle << "</style>\n</head>\n<body>\n";
    html << "<h1>Regression report <code>" << escape_html(report.run_id()) << "</code></h1>\n";

    html << "<table class=\"summary\">\n";
    html << "<tr><th>Started</th><td>" << ts(report.started_at_ms()) << "</td></tr>\n";
    html << "<tr><th>Finished</th><td>" << ts(report.finished_at_ms()) << "</td></tr>\n";
    html << "<tr><th>Templates</th><td>" << plan.templates.size() << "</td></tr>\n";
    html << "<tr><th>Endpoints</th><td>";
    for (std::size_t i = 0; i < plan.endpoints.size(); ++i)
        html << (i ? ", " : "") << escape_html(plan.endpoints[i]);
    html << "</td></tr>\n";
    html << "<tr><th>Iterations</th><td>" << plan.iterations << "</td></tr>\n";
    html << "<tr><th>Seed</th><td>" << plan.seed << "</td></tr>\n";
    html << "<tr><th>Pass</th><td class=\"total-pass\">" << totals.pass << "</td></tr>\n";
    html << "<tr><th>Fail</th><td class=\"total-fail\">" << totals.fail << "</td></tr>\n";
    html << "<tr><th>Timeout</th><td class=\"total-timeout\">" << totals.timeout << "</td></tr>\n";
    html << "<tr><th>Error</th><td class=\"total-error\">" << totals.error << "</td></tr>\n";
    html << "</table>\n";

    html << "<table class=\"results\">\n<thead><tr><th>#</th><th>Template</th><th>Iteration</th><th>Channel</th>"
            "<th>Verdict</th><th>Latency (ms)</th><th>Detail</th></tr></thead>\n<tbody>\n";
    std::size_t index = 0;
    for (const auto& r : report.results()) {
        char latency[32];
        std::snprintf(latency, sizeof latency, "%.2f", r.latency_ms);
        html << "<tr class=\"result verdict-" << to_string(r.verdict) << "\"><td>" << ++index << "</td><td>"
             << escape_html(r.template_name) << "</td><td>" << r.iteration << "</td><td>" << to_string(r.channel)
             << "</td><td class=\"verdict\">" << to_string(r.verdict) << "</td><td>" << latency << "</td><td>";
        html << "<details><summary>";
        if (!r.mismatches.empty()) html << r.mismatches.size() << " mismatch(es)";
        else if (!r.error.empty()) html << "error";
        else html << "messages";
        html << "</summary>";
        if (!r.mismatches.empty()) {
            html << "<ul class=\"mismatches\">";
            for (const auto& m : r.mismatches) {
                html << "<li>field <code>" << m.field << "</code>: expected <code>" << escape_html(m.expected)
                     << "</code>, actual ";
                if (m.actual) html << "<code>" << escape_html(*m.actual) << "</code>";
                else html << "<i>absent</i>";
                html << "</li>";
            }
            html << "</ul>";
        }
        if (!r.error.empty()) html << "<p class=\"error\">" << escape_html(r.error) << "</p>";
        render_fields(html, "request", r.request);
        if (r.response) render_fields(html, "response", *r.response);
        html << "</details></td></tr>\n";
    }
    html << "</tbody>\n</table>\n</body>\n</html>\n";
    return html.str();
}

ReportFiles write_report_files(const TestReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    ReportFiles files{dir / (report.run_id() + ".report.json"), dir / (report.run_id() + ".report.html")};
    auto write = [](const std::filesystem::path& path, const std::string& content) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << content;
    };
    write(files.json, render_json(report));
    write(files.html, render_html(report));
    return files;
}

}  // namespace switchsim
