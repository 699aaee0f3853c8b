// msg_generator.hpp – JSON test templates and their instantiation into messages.
//
// Template schema (one per file):
//   {"name": str, "mti": "0200",
//    "fields":    {"<n>": "literal", ...},
//    "randomize": [n, ...],
//    "expected":  {"<n>": "exact" | "/regex/", ...},
//    "patterns":  {"<n>": "regex", ...}}          // optional, beats the field config
//
// Field config: {"<n>": "regex", ...}

#pragma once

#include "switchsim/iso_codec.hpp"
#include "switchsim/pattern.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace switchsim {

class TemplateError : public std::runtime_error {
public:
    enum class Kind { SchemaError, InvalidMti, UnknownFieldNumber, MissingPattern, Io };

    TemplateError(Kind kind, std::string path, const std::string& what, int field = 0)
        : std::runtime_error(what), kind_(kind), path_(std::move(path)), field_(field) {}

    Kind kind() const noexcept { return kind_; }
    /// JSON path (or file name) the error refers to.
    const std::string& path() const noexcept { return path_; }
    int field() const noexcept { return field_; }

private:
    Kind kind_;
    std::string path_;
    int field_;
};

struct Seed {
    std::uint64_t value = 0;
    friend bool operator==(const Seed&, const Seed&) = default;
};

struct TestTemplate {
    std::string name;
    Mti mti;
    std::map<int, std::string> fields;
    std::vector<int> randomize;
    std::map<int, std::string> expected;
    std::map<int, Pattern> patterns;

    friend bool operator==(const TestTemplate& a, const TestTemplate& b);
};

struct FieldConfig {
    std::map<int, Pattern> patterns;

    const Pattern* find(int field) const;
};

TestTemplate load_template(std::string_view json_text);
/// As load_template, with the file name prefixed to every error path.
TestTemplate load_template_file(const std::filesystem::path& path);
/// Every *.json in `dir`, ordered by file name.
std::vector<TestTemplate> load_suite(const std::filesystem::path& dir);

FieldConfig load_field_config(std::string_view json_text);
FieldConfig load_field_config_file(const std::filesystem::path& path);
/// Patterns for every field of the standard packager.
const FieldConfig& default_field_config();

std::string to_json(const TestTemplate& tpl);

/// Throws MissingPattern if a randomized field has neither a template-local
/// nor a config pattern.
IsoMsg instantiate(const TestTemplate& tpl, const FieldConfig& config, Seed seed);

/// Fields in `tpl.randomize` lacking a pattern, ascending.
std::vector<int> missing_patterns(const TestTemplate& tpl, const FieldConfig& config);

}  // namespace switchsim
