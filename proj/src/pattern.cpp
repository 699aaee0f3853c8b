#include "switchsim/pattern.hpp"

#include <bitset>
#include <vector>

namespace switchsim {

namespace {
constexpr int kFirstPrintable = 0x20;
constexpr int kLastPrintable = 0x7E;
constexpr int kMaxBound = 999;
}  // namespace

struct Pattern::Node {
    enum class Type { Set, Sequence, Alternation, Repeat };

    Type type = Type::Sequence;
    std::bitset<128> chars;  // Set
    std::vector<Node> children;
    int min = 0;  // Repeat
    int max = 0;
};

namespace {

using Node = Pattern::Node;
using CharSet = std::bitset<128>;

Node make(Node::Type type) {
    Node n;
    n.type = type;
    return n;
}

CharSet printable() {
    CharSet s;
    for (int c = kFirstPrintable; c <= kLastPrintable; ++c) s.set(static_cast<std::size_t>(c));
    return s;
}

CharSet range(char lo, char hi) {
    CharSet s;
    for (int c = lo; c <= hi; ++c) s.set(static_cast<std::size_t>(c));
    return s;
}

CharSet digits() { return range('0', '9'); }
CharSet word() { return range('a', 'z') | range('A', 'Z') | digits() | range('_', '_'); }
CharSet space() { return range(' ', ' '); }

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    Node parse() {
        if (peek() == '^') ++pos_;
        Node root = alternation();
        if (peek() == '$' && pos_ + 1 == src_.size()) ++pos_;
        if (pos_ != src_.size()) {
            if (peek() == ')') unsupported("unbalanced ')'");
            if (peek() == '$' || peek() == '^') unsupported("anchor inside pattern");
            unsupported(std::string(1, peek()));
        }
        return root;
    }

private:
    char peek() const { return pos_ < src_.size() ? src_[pos_] : '\0'; }
    bool done() const { return pos_ >= src_.size(); }

    [[noreturn]] void unsupported(const std::string& feature) const {
        throw UnsupportedRegexFeature(std::string(src_), feature);
    }

    Node alternation() {
        Node alt = make(Node::Type::Alternation);
        alt.children.push_back(sequence());
        while (peek() == '|') {
            ++pos_;
            alt.children.push_back(sequence());
        }
        if (alt.children.size() == 1) return std::move(alt.children.front());
        return alt;
    }

    Node sequence() {
        Node seq = make(Node::Type::Sequence);
        while (!done() && peek() != '|' && peek() != ')') {
            if (peek() == '$' && pos_ + 1 == src_.size()) break;
            Node item = atom();
            seq.children.push_back(quantified(std::move(item)));
        }
        return seq;
    }

    Node set_node(CharSet chars) {
        Node n = make(Node::Type::Set);
        n.chars = chars & printable();
        if (n.chars.none()) unsupported("empty character set");
        return n;
    }

    Node atom() {
        const char c = src_[pos_++];
        switch (c) {
            case '(': {
                if (peek() == '?') {
                    if (src_.substr(pos_, 2) != "?:") unsupported("(?" + std::string(1, src_.size() > pos_ + 1 ? src_[pos_ + 1] : ' ') + " group");
                    pos_ += 2;
                }
                Node inner = alternation();
                if (peek() != ')') unsupported("unbalanced '('");
                ++pos_;
                return inner;
            }
            case '[': return set_node(char_class());
            case '.': return set_node(printable());
            case '\\': return set_node(escape(false));
            case '*':
            case '+':
            case '?':
            case '{': unsupported("quantifier without operand '" + std::string(1, c) + "'");
            case ']':
            case '}': unsupported("unescaped '" + std::string(1, c) + "'");
            case '^':
            case '$': unsupported("anchor inside pattern");
            default: {
                if (c < kFirstPrintable || c > kLastPrintable) unsupported("non-printable literal");
                CharSet s;
                s.set(static_cast<std::size_t>(static_cast<unsigned char>(c)));
                return set_node(s);
            }
        }
    }

    CharSet escape(bool in_class) {
        if (done()) unsupported("trailing backslash");
        const char c = src_[pos_++];
        switch (c) {
            case 'd': return digits();
            case 'D': return printable() & ~digits();
            case 'w': return word();
            case 'W': return printable() & ~word();
            case 's': return space();
            case 'S': return printable() & ~space();
            default: break;
        }
        if (c >= '1' && c <= '9') unsupported(std::string("backreference \\") + c);
        if (c == 'b' && !in_class) unsupported("word boundary \\b");
        if (c == 'B') unsupported("word boundary \\B");
        if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '0')
            unsupported(std::string("escape \\") + c);
        if (c < kFirstPrintable || c > kLastPrintable) unsupported("non-printable escape");
        CharSet s;
        s.set(static_cast<std::size_t>(static_cast<unsigned char>(c)));
        return s;
    }

    // Single class member: returns the set and, for a plain char, the char itself (for ranges).
    std::pair<CharSet, int> class_member() {
        if (done()) unsupported("unterminated character class");
        const char c = src_[pos_++];
        if (c == '\\') {
            const std::size_t before = pos_;
            CharSet s = escape(true);
            const char e = src_[before];
            const bool single = s.count() == 1 && std::string_view("dDwWsS").find(e) == std::string_view::npos;
            return {s, single ? static_cast<int>(static_cast<unsigned char>(e)) : -1};
        }
        if (c == '[') unsupported("nested '[' in class");
        if (c < kFirstPrintable || c > kLastPrintable) unsupported("non-printable literal");
        CharSet s;
        s.set(static_cast<std::size_t>(static_cast<unsigned char>(c)));
        return {s, static_cast<int>(static_cast<unsigned char>(c))};
    }

    CharSet char_class() {
        bool negate = false;
        if (peek() == '^') {
            negate = true;
            ++pos_;
        }
        if (peek() == ']') unsupported("empty character class");
        CharSet set;
        for (;;) {
            if (done()) unsupported("unterminated character class");
            if (peek() == ']') {
                ++pos_;
                break;
            }
            auto [first, lo] = class_member();
            if (peek() == '-' && pos_ + 1 < src_.size() && src_[pos_ + 1] != ']') {
                ++pos_;
                auto [last, hi] = class_member();
                if (lo < 0 || hi < 0) unsupported("class escape as range bound");
                if (lo > hi) unsupported("reversed range");
                set |= range(static_cast<char>(lo), static_cast<char>(hi));
            } else {
                set |= first;
            }
        }
        return negate ? printable() & ~set : set;
    }

    int number() {
        const std::size_t start = pos_;
        int value = 0;
        while (!done() && peek() >= '0' && peek() <= '9') {
            value = value * 10 + (src_[pos_++] - '0');
            if (value > kMaxBound) unsupported("repetition bound above 999");
        }
        if (pos_ == start) unsupported("malformed {} quantifier");
        return value;
    }

    Node quantified(Node item) {
        int min = 1;
        int max = 1;
        switch (peek()) {
            case '?': min = 0; max = 1; ++pos_; break;
            case '*': min = 0; max = kRepeatCap; ++pos_; break;
            case '+': min = 1; max = kRepeatCap; ++pos_; break;
            case '{': {
                ++pos_;
                min = number();
                max = min;
                if (peek() == ',') {
                    ++pos_;
                    max = peek() == '}' ? std::max(min, kRepeatCap) : number();
                }
                if (peek() != '}') unsupported("malformed {} quantifier");
                ++pos_;
                if (max < min) unsupported("{m,n} with m > n");
                break;
            }
            default: return item;
        }
        if (peek() == '?' || peek() == '+') unsupported("lazy/possessive quantifier");
        if (peek() == '*' || peek() == '{') unsupported("stacked quantifier");
        Node rep = make(Node::Type::Repeat);
        rep.min = min;
        rep.max = max;
        rep.children.push_back(std::move(item));
        return rep;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
};

void emit(const Node& node, Rng& rng, std::string& out) {
    switch (node.type) {
        case Node::Type::Set: {
            auto pick = uniform_below(rng, node.chars.count());
            for (std::size_t c = 0; c < node.chars.size(); ++c) {
                if (node.chars.test(c) && pick-- == 0) {
                    out += static_cast<char>(c);
                    return;
                }
            }
            return;
        }
        case Node::Type::Sequence:
            for (const auto& child : node.children) emit(child, rng, out);
            return;
        case Node::Type::Alternation:
            emit(node.children[uniform_below(rng, node.children.size())], rng, out);
            return;
        case Node::Type::Repeat: {
            const auto span = static_cast<std::uint64_t>(node.max - node.min) + 1;
            const auto count = node.min + static_cast<int>(uniform_below(rng, span));
            for (int i = 0; i < count; ++i) emit(node.children.front(), rng, out);
            return;
        }
    }
}

}  // namespace

std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = Rng::max() - Rng::max() % bound;
    for (;;) {
        const std::uint64_t draw = rng();
        if (draw < limit) return draw % bound;
    }
}

Pattern Pattern::compile(std::string_view source) {
    Parser parser(source);
    return Pattern(std::string(source), std::make_shared<const Node>(parser.parse()));
}

std::string Pattern::generate(Rng& rng) const {
    std::string out;
    emit(*root_, rng, out);
    return out;
}

}  // namespace switchsim
