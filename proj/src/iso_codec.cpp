#include "switchsim/iso_codec.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace switchsim {

namespace {

bool is_digit(std::uint8_t c) { return c >= '0' && c <= '9'; }

std::string field_label(int field) {
    if (field == 0) return "MTI";
    if (field == 1) return "bitmap";
    return "field " + std::to_string(field);
}

[[noreturn]] void fail(CodecError::Kind kind, int field, const std::string& detail) {
    std::string what = std::string(to_string(kind)) + " (" + field_label(field) + ")";
    if (!detail.empty()) what += ": " + detail;
    throw CodecError(kind, field, what);
}

std::size_t prefix_digits(LengthKind kind) {
    switch (kind) {
        case LengthKind::Fixed: return 0;
        case LengthKind::LlVar: return 2;
        case LengthKind::LllVar: return 3;
    }
    return 0;
}

std::string zero_pad(std::size_t value, std::size_t width) {
    std::string s = std::to_string(value);
    return std::string(width - std::min(width, s.size()), '0') + s;
}

int hex_nibble(std::uint8_t c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
}

// Reads from a span and reports truncation against the field being decoded.
class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    std::span<const std::uint8_t> take(std::size_t n, int field) {
        if (data_.size() - pos_ < n) {
            fail(CodecError::Kind::Truncated, field,
                 "need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) + ", have " +
                     std::to_string(data_.size() - pos_));
        }
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t remaining() const { return data_.size() - pos_; }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace

const char* to_string(CodecError::Kind kind) {
    switch (kind) {
        case CodecError::Kind::FieldNumberOutOfRange: return "FieldNumberOutOfRange";
        case CodecError::Kind::InvalidMti: return "InvalidMti";
        case CodecError::Kind::MissingFieldDef: return "MissingFieldDef";
        case CodecError::Kind::ValueTooLong: return "ValueTooLong";
        case CodecError::Kind::ValueTooShort: return "ValueTooShort";
        case CodecError::Kind::InvalidChar: return "InvalidChar";
        case CodecError::Kind::WrongValueType: return "WrongValueType";
        case CodecError::Kind::Truncated: return "Truncated";
        case CodecError::Kind::UnknownField: return "UnknownField";
        case CodecError::Kind::TrailingBytes: return "TrailingBytes";
        case CodecError::Kind::BadBitmap: return "BadBitmap";
        case CodecError::Kind::BadPackager: return "BadPackager";
    }
    return "CodecError";
}

// ─── Mti ────────────────────────────────────────────────────────────────────

Mti::Mti(std::string_view value) : value_(value) {
    if (!is_valid(value)) fail(CodecError::Kind::InvalidMti, 0, "'" + std::string(value) + "'");
}

bool Mti::is_valid(std::string_view value) noexcept {
    return value.size() == 4 &&
           std::all_of(value.begin(), value.end(), [](char c) { return c >= '0' && c <= '9'; });
}

Mti Mti::response() const {
    std::string out = value_;
    int function = out[2] - '0';
    if (function % 2 == 0) out[2] = static_cast<char>('0' + function + 1);
    return Mti(out);
}

// ─── FieldValue ─────────────────────────────────────────────────────────────

FieldValue::FieldValue(std::string text) : value_(std::move(text)) {
    if (!is_printable(std::get<std::string>(value_)))
        throw std::invalid_argument("field text must be printable ASCII");
}

FieldValue FieldValue::binary(Bytes bytes) {
    FieldValue v;
    v.value_ = std::move(bytes);
    return v;
}

bool FieldValue::is_printable(std::string_view text) noexcept {
    return std::all_of(text.begin(), text.end(), [](char c) { return c >= 0x20 && c <= 0x7E; });
}

const std::string& FieldValue::text() const {
    if (is_binary()) throw std::logic_error("field value is binary");
    return std::get<std::string>(value_);
}

const Bytes& FieldValue::bytes() const {
    if (!is_binary()) throw std::logic_error("field value is text");
    return std::get<Bytes>(value_);
}

std::string FieldValue::display() const { return is_binary() ? to_hex(bytes()) : text(); }

// ─── IsoMsg ─────────────────────────────────────────────────────────────────

namespace {
void check_field_number(int field) {
    if (field < kMinField || field > kMaxField)
        fail(CodecError::Kind::FieldNumberOutOfRange, field, "valid range is 2..128");
}
}  // namespace

void IsoMsg::set(int field, FieldValue value) {
    check_field_number(field);
    fields_[field] = std::move(value);
}

std::optional<FieldValue> IsoMsg::get(int field) const {
    check_field_number(field);
    auto it = fields_.find(field);
    if (it == fields_.end()) return std::nullopt;
    return it->second;
}

bool IsoMsg::has(int field) const { return fields_.count(field) != 0; }

void IsoMsg::unset(int field) {
    check_field_number(field);
    fields_.erase(field);
}

std::optional<std::string> IsoMsg::text(int field) const {
    auto it = fields_.find(field);
    if (it == fields_.end() || it->second.is_binary()) return std::nullopt;
    return it->second.text();
}

// ─── Bitmap ─────────────────────────────────────────────────────────────────

Bytes Bitmap::to_bytes() const {
    const int nbytes = has_secondary() ? 16 : 8;
    Bytes out(static_cast<std::size_t>(nbytes), 0);
    for (int pos = 1; pos <= nbytes * 8; ++pos) {
        if (test(pos)) out[static_cast<std::size_t>((pos - 1) / 8)] |= static_cast<std::uint8_t>(0x80 >> ((pos - 1) % 8));
    }
    return out;
}

std::string Bitmap::to_hex() const { return switchsim::to_hex(to_bytes()); }

Bitmap compute_bitmap(const IsoMsg& msg) {
    Bitmap bitmap;
    for (const auto& [field, value] : msg.fields()) {
        bitmap.set(field);
        if (field > 64) bitmap.set(1);
    }
    return bitmap;
}

// ─── FieldDef ───────────────────────────────────────────────────────────────

FieldDef FieldDef::fixed(int number, std::string name, ContentClass content, std::size_t length) {
    return FieldDef{number, std::move(name), content, LengthKind::Fixed, length};
}

FieldDef FieldDef::llvar(int number, std::string name, ContentClass content, std::size_t max) {
    return FieldDef{number, std::move(name), content, LengthKind::LlVar, max};
}

FieldDef FieldDef::lllvar(int number, std::string name, ContentClass content, std::size_t max) {
    return FieldDef{number, std::move(name), content, LengthKind::LllVar, max};
}

// ─── Packager ───────────────────────────────────────────────────────────────

Packager::Packager(std::string name, BitmapEncoding encoding, std::vector<FieldDef> defs)
    : name_(std::move(name)), encoding_(encoding) {
    for (auto& def : defs) {
        const int n = def.number;
        if (n < kMinField || n > kMaxField)
            fail(CodecError::Kind::BadPackager, n, "field number outside 2..128");
        if (def.length_kind == LengthKind::Fixed && def.length < 1)
            fail(CodecError::Kind::BadPackager, n, "fixed length must be >= 1");
        if (def.length_kind == LengthKind::LlVar && def.length > 99)
            fail(CodecError::Kind::BadPackager, n, "llvar max must be <= 99");
        if (def.length_kind == LengthKind::LllVar && def.length > 999)
            fail(CodecError::Kind::BadPackager, n, "lllvar max must be <= 999");
        if (!defs_.emplace(n, std::move(def)).second)
            fail(CodecError::Kind::BadPackager, n, "duplicate field definition");
    }
}

const Packager& Packager::standard() {
    static const Packager packager = [] {
        using C = ContentClass;
        return Packager("standard-ascii", BitmapEncoding::HexText,
                        {
                            FieldDef::llvar(2, "Primary account number", C::Numeric, 19),
                            FieldDef::fixed(3, "Processing code", C::Numeric, 6),
                            FieldDef::fixed(4, "Amount, transaction", C::Numeric, 12),
                            FieldDef::fixed(7, "Transmission date and time", C::Numeric, 10),
                            FieldDef::fixed(11, "System trace audit number", C::Numeric, 6),
                            FieldDef::fixed(12, "Time, local transaction", C::Numeric, 6),
                            FieldDef::fixed(13, "Date, local transaction", C::Numeric, 4),
                            FieldDef::llvar(32, "Acquiring institution id code", C::Numeric, 11),
                            FieldDef::fixed(37, "Retrieval reference number", C::Alphanumeric, 12),
                            FieldDef::fixed(39, "Response code", C::Alphanumeric, 2),
                            FieldDef::fixed(41, "Card acceptor terminal id", C::Alphanumeric, 8),
                            FieldDef::fixed(49, "Currency code, transaction", C::Numeric, 3),
                            FieldDef::lllvar(54, "Additional amounts", C::Alphanumeric, 120),
                        });
    }();
    return packager;
}

Packager Packager::from_json(std::string_view json_text) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(CodecError::Kind::BadPackager, 0, e.what());
    }
    if (!doc.is_object()) fail(CodecError::Kind::BadPackager, 0, "top level must be an object");

    std::string name = doc.value("name", std::string("custom"));
    BitmapEncoding encoding = BitmapEncoding::HexText;
    if (doc.contains("bitmap")) {
        const auto token = doc["bitmap"].get<std::string>();
        if (token == "hex") encoding = BitmapEncoding::HexText;
        else if (token == "binary") encoding = BitmapEncoding::Binary;
        else fail(CodecError::Kind::BadPackager, 1, "bitmap must be \"hex\" or \"binary\"");
    }
    if (!doc.contains("fields") || !doc["fields"].is_object())
        fail(CodecError::Kind::BadPackager, 0, "missing \"fields\" object");

    std::vector<FieldDef> defs;
    for (const auto& [key, entry] : doc["fields"].items()) {
        int number = 0;
        try {
            std::size_t used = 0;
            number = std::stoi(key, &used);
            if (used != key.size()) throw std::invalid_argument(key);
        } catch (const std::exception&) {
            fail(CodecError::Kind::BadPackager, 0, "field key '" + key + "' is not a number");
        }
        try {
            FieldDef def;
            def.number = number;
            def.name = entry.value("name", std::string());
            const auto cls = entry.at("class").get<std::string>();
            if (cls == "n") def.content = ContentClass::Numeric;
            else if (cls == "an") def.content = ContentClass::Alphanumeric;
            else if (cls == "b") def.content = ContentClass::Binary;
            else fail(CodecError::Kind::BadPackager, number, "class must be n, an or b");

            const auto& len = entry.at("len");
            if (!len.is_object() || len.size() != 1)
                fail(CodecError::Kind::BadPackager, number, "len must hold exactly one of fixed/llvar/lllvar");
            if (len.contains("fixed")) {
                def.length_kind = LengthKind::Fixed;
                def.length = len["fixed"].get<std::size_t>();
            } else if (len.contains("llvar")) {
                def.length_kind = LengthKind::LlVar;
                def.length = len["llvar"].get<std::size_t>();
            } else if (len.contains("lllvar")) {
                def.length_kind = LengthKind::LllVar;
                def.length = len["lllvar"].get<std::size_t>();
            } else {
                fail(CodecError::Kind::BadPackager, number, "unknown length kind");
            }
            defs.push_back(std::move(def));
        } catch (const json::exception& e) {
            fail(CodecError::Kind::BadPackager, number, e.what());
        }
    }
    return Packager(std::move(name), encoding, std::move(defs));
}

Packager Packager::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(CodecError::Kind::BadPackager, 0, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

const FieldDef* Packager::find(int field) const {
    auto it = defs_.find(field);
    return it == defs_.end() ? nullptr : &it->second;
}

void Packager::validate(int field, const FieldValue& value) const {
    const FieldDef* def = find(field);
    if (def == nullptr) fail(CodecError::Kind::MissingFieldDef, field, "packager '" + name_ + "'");

    std::size_t length = 0;
    if (def->content == ContentClass::Binary) {
        if (!value.is_binary()) fail(CodecError::Kind::WrongValueType, field, "binary field given text");
        length = value.bytes().size();
    } else {
        if (value.is_binary()) fail(CodecError::Kind::WrongValueType, field, "text field given binary");
        const std::string& text = value.text();
        length = text.size();
        if (def->content == ContentClass::Numeric) {
            auto bad = std::find_if(text.begin(), text.end(), [](char c) { return c < '0' || c > '9'; });
            if (bad != text.end())
                fail(CodecError::Kind::InvalidChar, field,
                     "non-digit '" + std::string(1, *bad) + "' at position " + std::to_string(bad - text.begin()));
        }
    }

    if (length > def->length)
        fail(CodecError::Kind::ValueTooLong, field,
             std::to_string(length) + " > " + std::to_string(def->length));
    if (def->length_kind == LengthKind::Fixed && length < def->length)
        fail(CodecError::Kind::ValueTooShort, field,
             std::to_string(length) + " < " + std::to_string(def->length));
}

Bytes Packager::pack(const IsoMsg& msg) const {
    std::string out = msg.mti().str();

    const Bitmap bitmap = compute_bitmap(msg);
    if (encoding_ == BitmapEncoding::HexText) {
        out += bitmap.to_hex();
    } else {
        const Bytes raw = bitmap.to_bytes();
        out.append(raw.begin(), raw.end());
    }

    for (const auto& [field, value] : msg.fields()) {
        validate(field, value);
        const FieldDef& def = *find(field);
        std::string body = value.is_binary() ? to_hex(value.bytes()) : value.text();
        const std::size_t logical = value.is_binary() ? value.bytes().size() : body.size();
        const std::size_t digits = prefix_digits(def.length_kind);
        if (digits > 0) out += zero_pad(logical, digits);
        out += body;
    }
    return Bytes(out.begin(), out.end());
}

IsoMsg Packager::unpack(std::span<const std::uint8_t> data) const {
    Reader in(data);

    const std::string mti_text = to_text(in.take(4, 0));
    if (!Mti::is_valid(mti_text)) fail(CodecError::Kind::InvalidMti, 0, "'" + mti_text + "'");
    IsoMsg msg{Mti(mti_text)};

    auto read_bitmap_half = [&](Bytes& into) {
        if (encoding_ == BitmapEncoding::Binary) {
            auto raw = in.take(8, 1);
            into.insert(into.end(), raw.begin(), raw.end());
            return;
        }
        auto hex = in.take(16, 1);
        for (std::size_t i = 0; i < 16; i += 2) {
            const int hi = hex_nibble(hex[i]);
            const int lo = hex_nibble(hex[i + 1]);
            if (hi < 0 || lo < 0) fail(CodecError::Kind::BadBitmap, 1, "non-hex character");
            into.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
        }
    };

    Bytes bitmap_bytes;
    read_bitmap_half(bitmap_bytes);
    if (bitmap_bytes[0] & 0x80) read_bitmap_half(bitmap_bytes);
    const int positions = static_cast<int>(bitmap_bytes.size()) * 8;

    for (int field = 2; field <= positions; ++field) {
        const auto byte = bitmap_bytes[static_cast<std::size_t>((field - 1) / 8)];
        if (!(byte & (0x80 >> ((field - 1) % 8)))) continue;

        const FieldDef* def = find(field);
        if (def == nullptr) fail(CodecError::Kind::UnknownField, field, "bit set but packager has no definition");

        std::size_t length = def->length;
        if (const std::size_t digits = prefix_digits(def->length_kind); digits > 0) {
            auto prefix = in.take(digits, field);
            if (!std::all_of(prefix.begin(), prefix.end(), is_digit))
                fail(CodecError::Kind::InvalidChar, field, "length prefix is not decimal");
            length = std::stoul(to_text(prefix));
            if (length > def->length)
                fail(CodecError::Kind::ValueTooLong, field,
                     std::to_string(length) + " > " + std::to_string(def->length));
        }

        if (def->content == ContentClass::Binary) {
            auto hex = in.take(length * 2, field);
            Bytes raw;
            try {
                raw = from_hex(to_text(hex));
            } catch (const std::invalid_argument&) {
                fail(CodecError::Kind::InvalidChar, field, "binary field is not hex");
            }
            msg.set(field, FieldValue::binary(std::move(raw)));
        } else {
            std::string text = to_text(in.take(length, field));
            if (!FieldValue::is_printable(text)) fail(CodecError::Kind::InvalidChar, field, "non-printable byte");
            FieldValue value(std::move(text));
            validate(field, value);
            msg.set(field, std::move(value));
        }
    }

    if (in.remaining() != 0)
        fail(CodecError::Kind::TrailingBytes, 0, std::to_string(in.remaining()) + " unconsumed bytes");
    return msg;
}

// ─── hex helpers ────────────────────────────────────────────────────────────

std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char digits[] = "0123456789ABCDEF";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out += digits[b >> 4];
        out += digits[b & 0x0F];
    }
    return out;
}

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) throw std::invalid_argument("odd-length hex string");
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        const int hi = hex_nibble(static_cast<std::uint8_t>(hex[i]));
        const int lo = hex_nibble(static_cast<std::uint8_t>(hex[i + 1]));
        if (hi < 0 || lo < 0) throw std::invalid_argument("non-hex character");
        out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
    }
    return out;
}

}  // namespace switchsim
