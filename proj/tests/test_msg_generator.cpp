#include "switchsim/msg_generator.hpp"

#include "doctest.h"
#include "test_support.hpp"

#include <regex>

using namespace switchsim;
using switchsim::testing::kBalanceFieldConfig;
using switchsim::testing::kBalanceOkTemplate;
using switchsim::testing::TempDir;

namespace {

TemplateError template_error(const std::string& json_text) {
    try {
        load_template(json_text);
    } catch (const TemplateError& e) {
        return e;
    }
    FAIL("template accepted: " << json_text);
    return TemplateError(TemplateError::Kind::Io, "", "");
}

}  // namespace

TEST_SUITE("msg-generator") {

TEST_CASE("load a template") {
    const TestTemplate tpl = load_template(kBalanceOkTemplate);
    CHECK(tpl.name == "balance-ok");
    CHECK(tpl.mti.str() == "0200");
    CHECK(tpl.fields.at(3) == "310000");
    CHECK(tpl.fields.at(41) == "TERM0001");
    CHECK(tpl.randomize == std::vector<int>{2, 11});
    CHECK(tpl.expected.at(39) == "00");
    CHECK(tpl.patterns.empty());
}

TEST_CASE("template errors carry kind and location") {
    SUBCASE("bad MTI") {
        const auto e = template_error(R"({"name":"x","mti":"02A0","expected":{"39":"00"}})");
        CHECK(e.kind() == TemplateError::Kind::InvalidMti);
        CHECK(e.path() == "$.mti");
    }
    SUBCASE("field number out of range") {
        const auto e = template_error(R"({"name":"x","mti":"0200","fields":{"129":"1"},"expected":{"39":"00"}})");
        CHECK(e.kind() == TemplateError::Kind::UnknownFieldNumber);
        CHECK(e.field() == 129);
        CHECK(e.path() == "$.fields.129");
    }
    SUBCASE("randomize outside range") {
        const auto e = template_error(R"({"name":"x","mti":"0200","randomize":[1],"expected":{"39":"00"}})");
        CHECK(e.kind() == TemplateError::Kind::UnknownFieldNumber);
        CHECK(e.path() == "$.randomize[0]");
    }
    SUBCASE("schema problems") {
        for (const char* doc : {
                 R"([])",
                 R"({"mti":"0200","expected":{"39":"00"}})",
                 R"({"name":"x","mti":"0200"})",
                 R"({"name":"x","mti":"0200","expected":{}})",
                 R"({"name":"x","mti":"0200","expected":{"39":"00"},"extra":1})",
                 R"({"name":"x","mti":"0200","expected":{"39":5}})",
                 R"({"name":"x","mti":"0200","expected":{"39":"/[/"}})",
                 R"({"name":"x","mti":"0200","randomize":[2,2],"expected":{"39":"00"}})",
                 R"({"name":"x","mti":"0200","fields":{"abc":"1"},"expected":{"39":"00"}})",
                 R"({"name":"x","mti":"0200","patterns":{"2":"(a)\\1"},"expected":{"39":"00"}})",
                 R"({"name":"x",)",
             }) {
            CAPTURE(doc);
            CHECK(template_error(doc).kind() == TemplateError::Kind::SchemaError);
        }
    }
}

TEST_CASE("template file errors name the file") {
    TempDir dir;
    const auto path = dir.write("broken.json", R"({"name":"x","mti":"99","expected":{"39":"00"}})");
    try {
        load_template_file(path);
        FAIL("accepted");
    } catch (const TemplateError& e) {
        CHECK(e.kind() == TemplateError::Kind::InvalidMti);
        CHECK(e.path() == "broken.json:$.mti");
        CHECK(std::string(e.what()).find("broken.json") != std::string::npos);
    }
    CHECK_THROWS_AS(load_template_file(dir.path() / "absent.json"), TemplateError);
}

TEST_CASE("suite loads *.json in file name order") {
    TempDir dir;
    dir.write("b.json", R"({"name":"second","mti":"0800","expected":{"39":"00"}})");
    dir.write("a.json", R"({"name":"first","mti":"0200","expected":{"39":"00"}})");
    dir.write("notes.txt", "ignored");
    const auto suite = load_suite(dir.path());
    REQUIRE(suite.size() == 2);
    CHECK(suite[0].name == "first");
    CHECK(suite[1].name == "second");
    CHECK_THROWS_AS(load_suite(dir.path() / "missing"), TemplateError);
}

TEST_CASE("to_json roundtrips") {
    const TestTemplate tpl = load_template(
        R"({"name":"rt","mti":"0200","fields":{"3":"310000"},"randomize":[11,2],)"
        R"("expected":{"39":"00","54":"/[0-9]{12}/"},"patterns":{"2":"5[0-9]{15}"}})");
    CHECK(load_template(to_json(tpl)) == tpl);
    CHECK(tpl.randomize == std::vector<int>{11, 2});
}

TEST_CASE("instantiate fills literals and randomized fields") {
    const TestTemplate tpl = load_template(kBalanceOkTemplate);
    const FieldConfig config = load_field_config(kBalanceFieldConfig);
    const IsoMsg m = instantiate(tpl, config, Seed{17});
    CHECK(m.mti().str() == "0200");
    CHECK(m.text(3) == "310000");
    CHECK(m.text(41) == "TERM0001");
    CHECK(std::regex_match(*m.text(2), std::regex("4[0-9]{15}")));
    CHECK(std::regex_match(*m.text(11), std::regex("[0-9]{6}")));
    CHECK(m.fields().size() == 4);
    CHECK_NOTHROW(Packager::standard().pack(m));
}

TEST_CASE("instantiate is a pure function of the seed") {
    const TestTemplate tpl = load_template(kBalanceOkTemplate);
    const FieldConfig& config = default_field_config();
    for (std::uint64_t s = 0; s < 50; ++s) REQUIRE(instantiate(tpl, config, Seed{s}) == instantiate(tpl, config, Seed{s}));
    int distinct = 0;
    for (std::uint64_t s = 1; s < 50; ++s) distinct += instantiate(tpl, config, Seed{s}) != instantiate(tpl, config, Seed{0});
    CHECK(distinct >= 45);
}

TEST_CASE("template patterns override the field config") {
    const TestTemplate tpl = load_template(
        R"({"name":"o","mti":"0200","randomize":[2],"patterns":{"2":"5[0-9]{3}"},"expected":{"39":"00"}})");
    const IsoMsg m = instantiate(tpl, default_field_config(), Seed{1});
    CHECK(m.text(2)->front() == '5');
    CHECK(m.text(2)->size() == 4);
}

TEST_CASE("missing pattern is reported before any generation") {
    const TestTemplate tpl =
        load_template(R"({"name":"m","mti":"0200","randomize":[11,70,90],"expected":{"39":"00"}})");
    CHECK(missing_patterns(tpl, default_field_config()) == std::vector<int>{70, 90});
    try {
        instantiate(tpl, default_field_config(), Seed{});
        FAIL("no throw");
    } catch (const TemplateError& e) {
        CHECK(e.kind() == TemplateError::Kind::MissingPattern);
        CHECK(e.field() == 70);
    }
}

TEST_CASE("default field config covers the standard packager and packs") {
    const Packager& p = Packager::standard();
    const FieldConfig& config = default_field_config();
    Rng rng(8);
    for (const auto& [n, def] : p.defs()) {
        CAPTURE(n);
        REQUIRE(config.find(n) != nullptr);
        for (int i = 0; i < 20; ++i) CHECK_NOTHROW(p.validate(n, FieldValue(config.find(n)->generate(rng))));
    }
}

TEST_CASE("field config errors") {
    CHECK_THROWS_AS(load_field_config(R"j({"2":"a(?=b)"})j"), UnsupportedRegexFeature);
    CHECK_THROWS_AS(load_field_config(R"({"0":"a"})"), TemplateError);
    CHECK_THROWS_AS(load_field_config(R"({"2":3})"), TemplateError);
    CHECK_THROWS_AS(load_field_config_file("/nonexistent/fields.json"), TemplateError);
}

}  // TEST_SUITE

TEST_SUITE("msg-generator") {

TEST_CASE("bundled samples load and agree with the built-in tables") {
    const std::filesystem::path samples = SWITCHSIM_SAMPLES;
    const auto suite = load_suite(samples / "suite");
    CHECK(suite.size() >= 2);
    const FieldConfig fields = load_field_config_file(samples / "config/fields.json");
    for (const auto& tpl : suite) {
        CAPTURE(tpl.name);
        CHECK(missing_patterns(tpl, fields).empty());
        CHECK_NOTHROW(Packager::standard().pack(instantiate(tpl, fields, Seed{1})));
    }

    const Packager loaded = Packager::load((samples / "config/packager.json").string());
    REQUIRE(loaded.defs().size() == Packager::standard().defs().size());
    for (const auto& [n, def] : Packager::standard().defs()) {
        CAPTURE(n);
        REQUIRE(loaded.find(n) != nullptr);
        CHECK(loaded.find(n)->content == def.content);
        CHECK(loaded.find(n)->length_kind == def.length_kind);
        CHECK(loaded.find(n)->length == def.length);
    }
}

}  // TEST_SUITE
