#include "switchsim/msg_generator.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace switchsim {

using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& path, const std::string& reason) {
    throw TemplateError(TemplateError::Kind::SchemaError, path, "SchemaError at " + path + ": " + reason);
}

int field_number(const std::string& key, const std::string& path) {
    int n = 0;
    try {
        std::size_t used = 0;
        n = std::stoi(key, &used);
        if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
        schema_error(path, "field key '" + key + "' is not a number");
    }
    if (n < kMinField || n > kMaxField)
        throw TemplateError(TemplateError::Kind::UnknownFieldNumber, path,
                            "UnknownFieldNumber at " + path + ": " + std::to_string(n) + " is outside 2..128", n);
    return n;
}

std::string string_at(const json& value, const std::string& path) {
    if (!value.is_string()) schema_error(path, "expected a string");
    return value.get<std::string>();
}

std::map<int, std::string> string_map(const json& obj, const std::string& path) {
    if (!obj.is_object()) schema_error(path, "expected an object");
    std::map<int, std::string> out;
    for (const auto& [key, value] : obj.items()) {
        const std::string item_path = path + "." + key;
        const int n = field_number(key, item_path);
        std::string text = string_at(value, item_path);
        if (!FieldValue::is_printable(text)) schema_error(item_path, "value must be printable ASCII");
        out.emplace(n, std::move(text));
    }
    return out;
}

std::map<int, Pattern> pattern_map(const json& obj, const std::string& path) {
    std::map<int, Pattern> out;
    for (const auto& [n, source] : string_map(obj, path)) out.emplace(n, Pattern::compile(source));
    return out;
}

bool is_regex_expectation(const std::string& value) {
    return value.size() >= 2 && value.front() == '/' && value.back() == '/';
}

json parse_json(std::string_view text, const std::string& path) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        schema_error(path, e.what());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw TemplateError(TemplateError::Kind::Io, path.string(), "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

bool operator==(const TestTemplate& a, const TestTemplate& b) {
    auto same_patterns = [](const std::map<int, Pattern>& x, const std::map<int, Pattern>& y) {
        return std::equal(x.begin(), x.end(), y.begin(), y.end(), [](const auto& l, const auto& r) {
            return l.first == r.first && l.second.source() == r.second.source();
        });
    };
    return a.name == b.name && a.mti == b.mti && a.fields == b.fields && a.randomize == b.randomize &&
           a.expected == b.expected && same_patterns(a.patterns, b.patterns);
}

const Pattern* FieldConfig::find(int field) const {
    auto it = patterns.find(field);
    return it == patterns.end() ? nullptr : &it->second;
}

TestTemplate load_template(std::string_view json_text) {
    const json doc = parse_json(json_text, "$");
    if (!doc.is_object()) schema_error("$", "template must be a JSON object");

    static const std::set<std::string> known{"name", "mti", "fields", "randomize", "expected", "patterns"};
    for (const auto& [key, value] : doc.items()) {
        if (!known.count(key)) schema_error("$." + key, "unknown key");
    }
    for (const char* required : {"name", "mti", "expected"}) {
        if (!doc.contains(required)) schema_error(std::string("$.") + required, "missing");
    }

    TestTemplate tpl;
    tpl.name = string_at(doc["name"], "$.name");
    if (tpl.name.empty()) schema_error("$.name", "must not be empty");

    const std::string mti = string_at(doc["mti"], "$.mti");
    if (!Mti::is_valid(mti))
        throw TemplateError(TemplateError::Kind::InvalidMti, "$.mti", "InvalidMti at $.mti: '" + mti + "'");
    tpl.mti = Mti(mti);

    if (doc.contains("fields")) tpl.fields = string_map(doc["fields"], "$.fields");

    if (doc.contains("randomize")) {
        const auto& list = doc["randomize"];
        if (!list.is_array()) schema_error("$.randomize", "expected an array");
        std::set<int> seen;
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string path = "$.randomize[" + std::to_string(i) + "]";
            if (!list[i].is_number_integer()) schema_error(path, "expected a field number");
            const int n = list[i].get<int>();
            if (n < kMinField || n > kMaxField)
                throw TemplateError(TemplateError::Kind::UnknownFieldNumber, path,
                                    "UnknownFieldNumber at " + path + ": " + std::to_string(n), n);
            if (!seen.insert(n).second) schema_error(path, "duplicate field " + std::to_string(n));
            tpl.randomize.push_back(n);
        }
    }

    tpl.expected = string_map(doc["expected"], "$.expected");
    if (tpl.expected.empty()) schema_error("$.expected", "a test must assert at least one field");
    for (const auto& [n, value] : tpl.expected) {
        if (!is_regex_expectation(value)) continue;
        try {
            std::regex(value.substr(1, value.size() - 2), std::regex::ECMAScript);
        } catch (const std::regex_error& e) {
            schema_error("$.expected." + std::to_string(n), std::string("bad regex: ") + e.what());
        }
    }

    if (doc.contains("patterns")) {
        try {
            tpl.patterns = pattern_map(doc["patterns"], "$.patterns");
        } catch (const UnsupportedRegexFeature& e) {
            schema_error("$.patterns", e.what());
        }
    }
    return tpl;
}

TestTemplate load_template_file(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    try {
        return load_template(text);
    } catch (const TemplateError& e) {
        throw TemplateError(e.kind(), path.filename().string() + ":" + e.path(),
                            path.filename().string() + ": " + e.what(), e.field());
    }
}

std::vector<TestTemplate> load_suite(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
        throw TemplateError(TemplateError::Kind::Io, dir.string(), "suite directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
    std::vector<TestTemplate> suite;
    suite.reserve(files.size());
    for (const auto& file : files) suite.push_back(load_template_file(file));
    return suite;
}

FieldConfig load_field_config(std::string_view json_text) {
    const json doc = parse_json(json_text, "$");
    if (!doc.is_object()) schema_error("$", "field config must be a JSON object");
    FieldConfig config;
    for (const auto& [key, value] : doc.items()) {
        const std::string path = "$." + key;
        const int n = field_number(key, path);
        config.patterns.emplace(n, Pattern::compile(string_at(value, path)));
    }
    return config;
}

FieldConfig load_field_config_file(const std::filesystem::path& path) {
    return load_field_config(read_file(path));
}

const FieldConfig& default_field_config() {
    static const FieldConfig config = load_field_config(R"cfg({
        "2":  "4[0-9]{15}",
        "3":  "31[0-9]{4}",
        "4":  "[0-9]{12}",
        "7":  "(0[1-9]|1[0-2])(0[1-9]|[12][0-9])([01][0-9]|2[0-3])[0-5][0-9][0-5][0-9]",
        "11": "[0-9]{6}",
        "12": "([01][0-9]|2[0-3])[0-5][0-9][0-5][0-9]",
        "13": "(0[1-9]|1[0-2])(0[1-9]|[12][0-9])",
        "32": "[0-9]{6,11}",
        "37": "[0-9A-Z]{12}",
        "39": "00",
        "41": "[A-Z0-9]{8}",
        "49": "356",
        "54": "[0-9]{12}"
    })cfg");
    return config;
}

std::string to_json(const TestTemplate& tpl) {
    json doc = json::object();
    doc["name"] = tpl.name;
    doc["mti"] = tpl.mti.str();
    json fields = json::object();
    for (const auto& [n, v] : tpl.fields) fields[std::to_string(n)] = v;
    doc["fields"] = fields;
    doc["randomize"] = tpl.randomize;
    json expected = json::object();
    for (const auto& [n, v] : tpl.expected) expected[std::to_string(n)] = v;
    doc["expected"] = expected;
    if (!tpl.patterns.empty()) {
        json patterns = json::object();
        for (const auto& [n, p] : tpl.patterns) patterns[std::to_string(n)] = p.source();
        doc["patterns"] = patterns;
    }
    return doc.dump(2);
}

std::vector<int> missing_patterns(const TestTemplate& tpl, const FieldConfig& config) {
    std::vector<int> missing;
    for (int n : tpl.randomize) {
        if (!tpl.patterns.count(n) && config.find(n) == nullptr) missing.push_back(n);
    }
    std::sort(missing.begin(), missing.end());
    return missing;
}

IsoMsg instantiate(const TestTemplate& tpl, const FieldConfig& config, Seed seed) {
    if (auto missing = missing_patterns(tpl, config); !missing.empty()) {
        const int n = missing.front();
        throw TemplateError(TemplateError::Kind::MissingPattern, tpl.name,
                            "MissingPattern: template '" + tpl.name + "' randomizes field " + std::to_string(n) +
                                " but no pattern is configured for it",
                            n);
    }

    IsoMsg msg(tpl.mti);
    for (const auto& [n, value] : tpl.fields) msg.set(n, value);

    Rng rng(seed.value);
    for (int n : tpl.randomize) {
        auto local = tpl.patterns.find(n);
        const Pattern& pattern = local != tpl.patterns.end() ? local->second : *config.find(n);
        msg.set(n, pattern.generate(rng));
    }
    return msg;
}

}  // namespace switchsim
