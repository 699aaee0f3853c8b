// pattern.hpp – random strings that match a regular expression.
//
// Supported subset: literals, escaped metacharacters, \d \w \s (and their
// negations), character classes with ranges and negation, '.', alternation,
// grouping ("(...)" and "(?:...)"), and the quantifiers ? * + {n} {m,n} {m,}.
// Unbounded repetition is capped at kRepeatCap. A leading '^' and trailing '$'
// are accepted and ignored; output is always a full match. Generated
// characters are printable ASCII (0x20..0x7E).

#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace switchsim {

using Rng = std::mt19937_64;

inline constexpr int kRepeatCap = 8;

class UnsupportedRegexFeature : public std::runtime_error {
public:
    UnsupportedRegexFeature(std::string pattern, std::string feature)
        : std::runtime_error("unsupported regex feature '" + feature + "' in /" + pattern + "/"),
          pattern_(std::move(pattern)),
          feature_(std::move(feature)) {}

    const std::string& pattern() const noexcept { return pattern_; }
    const std::string& feature() const noexcept { return feature_; }

private:
    std::string pattern_;
    std::string feature_;
};

/// A compiled pattern; cheap to copy (shares its immutable tree).
class Pattern {
public:
    struct Node;

    /// Throws UnsupportedRegexFeature for anything outside the subset.
    static Pattern compile(std::string_view source);

    std::string generate(Rng& rng) const;
    const std::string& source() const noexcept { return source_; }

private:
    Pattern(std::string source, std::shared_ptr<const Node> root) : source_(std::move(source)), root_(std::move(root)) {}

    std::string source_;
    std::shared_ptr<const Node> root_;
};

inline std::string generate_matching(std::string_view pattern, Rng& rng) {
    return Pattern::compile(pattern).generate(rng);
}

/// Uniform integer in [0, bound) without modulo bias; stable across standard libraries.
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound);

}  // namespace switchsim
