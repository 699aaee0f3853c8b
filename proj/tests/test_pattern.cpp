#include "switchsim/pattern.hpp"

#include "doctest.h"

#include <map>
#include <regex>

using namespace switchsim;

namespace {

bool full_match(const std::string& pattern, const std::string& text) {
    return std::regex_match(text, std::regex(pattern, std::regex::ECMAScript));
}

// Random pattern inside the supported subset, built from the grammar.
// Groups only take bounded quantifiers: std::regex backtracks exponentially
// on shapes like (.?\D?){2,}, which would stall the oracle, not the generator.
std::string random_pattern(std::mt19937_64& rng, int depth = 0) {
    static const char* atoms[] = {"a", "Z", "7", "\\.", "\\-", "\\d", "\\w", "\\s", "\\D", "[0-9]", "[A-F0-9]",
                                  "[^0-9]", "[a-c_x]", ".", "[\\]x]", "\\(", "[-+]"};
    static const char* quantifiers[] = {"", "", "", "?", "*", "+", "{3}", "{0,2}", "{2,}", "{1,12}"};
    static const char* group_quantifiers[] = {"", "", "?", "{2}"};
    std::string out;
    const int items = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < items; ++i) {
        if (depth < 2 && rng() % 5 == 0) {
            out += std::string(rng() % 2 ? "(" : "(?:") + random_pattern(rng, depth + 1);
            if (rng() % 2) out += "|" + random_pattern(rng, depth + 1);
            out += std::string(")") + group_quantifiers[rng() % std::size(group_quantifiers)];
        } else {
            out += std::string(atoms[rng() % std::size(atoms)]) + quantifiers[rng() % std::size(quantifiers)];
        }
    }
    return out;
}

}  // namespace

TEST_SUITE("pattern") {

TEST_CASE("field patterns from the default config produce full matches") {
    Rng rng(1);
    for (const char* p : {"4[0-9]{15}", "31[0-9]{4}", "[0-9]{6}", "[A-Z0-9]{8}", "(0[1-9]|1[0-2])[0-5][0-9]",
                          "^[0-9]{6,11}$", "00|12"}) {
        CAPTURE(p);
        for (int i = 0; i < 50; ++i) REQUIRE(full_match(p, generate_matching(p, rng)));
    }
}

TEST_CASE("randomly built patterns always re-match under std::regex") {
    std::mt19937_64 shapes(2026);
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const std::string p = random_pattern(shapes);
        CAPTURE(p);
        const Pattern compiled = Pattern::compile(p);
        for (int k = 0; k < 3; ++k) {
            const std::string s = compiled.generate(rng);
            CAPTURE(s);
            REQUIRE(full_match(p, s));
        }
    }
}

TEST_CASE("unbounded repetition of groups") {
    Rng rng(6);
    for (const char* p : {"(ab|c)+", "(?:\\d{2})*x", "(a|bc){2,}", "((x|y)z?)+"}) {
        CAPTURE(p);
        for (int i = 0; i < 200; ++i) REQUIRE(full_match(p, generate_matching(p, rng)));
    }
}

TEST_CASE("output is printable ASCII") {
    Rng rng(3);
    for (const char* p : {".{20}", "[^a]{20}", "\\W{20}", "\\S{20}", "\\D{20}"}) {
        for (int i = 0; i < 50; ++i) {
            for (char c : generate_matching(p, rng)) REQUIRE((c >= 0x20 && c <= 0x7E));
        }
    }
}

TEST_CASE("unbounded repetition is capped") {
    Rng rng(4);
    std::size_t longest = 0;
    for (int i = 0; i < 500; ++i) {
        longest = std::max(longest, generate_matching("a*", rng).size());
        CHECK(generate_matching("b+", rng).size() >= 1);
        const auto braces = generate_matching("c{3,}", rng).size();
        CHECK(braces >= 3);
        CHECK(braces <= static_cast<std::size_t>(kRepeatCap));
    }
    CHECK(longest == static_cast<std::size_t>(kRepeatCap));
    CHECK(generate_matching("x{12,}", rng).size() == 12);
}

TEST_CASE("same seed, same output") {
    const Pattern p = Pattern::compile("[A-Z]{4}-\\d{6}(x|yy)*");
    Rng a(77), b(77), c(78);
    std::vector<std::string> first, second, other;
    for (int i = 0; i < 20; ++i) {
        first.push_back(p.generate(a));
        second.push_back(p.generate(b));
        other.push_back(p.generate(c));
    }
    CHECK(first == second);
    CHECK(first != other);
}

TEST_CASE("choices are roughly uniform") {
    Rng rng(11);
    std::map<std::string, int> counts;
    const int draws = 6000;
    for (int i = 0; i < draws; ++i) ++counts[generate_matching("a|b|c", rng)];
    REQUIRE(counts.size() == 3);
    for (const auto& [k, n] : counts) {
        CAPTURE(k);
        CHECK(n > draws / 3 - 300);
        CHECK(n < draws / 3 + 300);
    }
}

TEST_CASE("uniform_below stays in range") {
    Rng rng(12);
    CHECK(uniform_below(rng, 0) == 0);
    CHECK(uniform_below(rng, 1) == 0);
    for (int i = 0; i < 1000; ++i) REQUIRE(uniform_below(rng, 7) < 7);
}

TEST_CASE("features outside the subset are rejected") {
    const std::pair<const char*, const char*> cases[] = {
        {"(a)\\1", "backreference"},
        {"a(?=b)", "(?="},
        {"a(?!b)", "(?!"},
        {"(?<=a)b", "(?<"},
        {"a+?", "lazy"},
        {"a{2}?", "lazy"},
        {"\\bword", "word boundary"},
        {"a**", "stacked"},
        {"[z-a]", "reversed"},
        {"(ab", "unbalanced"},
        {"ab)", "unbalanced"},
        {"a^b", "anchor"},
        {"a{3,1}", "m > n"},
        {"\\t", "escape"},
        {"*a", "quantifier without operand"},
        {"[]", "empty"},
        {"a{1000}", "999"},
    };
    for (const auto& [pattern, feature] : cases) {
        CAPTURE(pattern);
        try {
            Pattern::compile(pattern);
            FAIL("accepted");
        } catch (const UnsupportedRegexFeature& e) {
            CHECK(e.pattern() == pattern);
            CHECK(e.feature().find(feature) != std::string::npos);
        }
    }
}

TEST_CASE("anchors at the ends are accepted and ignored") {
    Rng rng(9);
    CHECK(generate_matching("^abc$", rng) == "abc");
    CHECK(generate_matching("^$", rng).empty());
    CHECK(generate_matching("a\\$", rng) == "a$");
}

}  // TEST_SUITE
