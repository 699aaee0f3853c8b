// iso_codec.hpp – ISO8583 (1987) message model and ASCII packager.
//
// An IsoMsg is an MTI plus a sparse map of fields 2..128. Field 1 (the
// secondary-bitmap indicator) is never stored; the bitmap is always derived
// from the set of present fields when a message is packed.

#pragma once

#include <bitset>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace switchsim {

using Bytes = std::vector<std::uint8_t>;

inline constexpr int kMinField = 2;
inline constexpr int kMaxField = 128;

/// Error raised by message construction, pack and unpack.
/// `field()` names the offending field number (0 = MTI, 1 = bitmap).
class CodecError : public std::runtime_error {
public:
    enum class Kind {
        FieldNumberOutOfRange,
        InvalidMti,
        MissingFieldDef,
        ValueTooLong,
        ValueTooShort,
        InvalidChar,
        WrongValueType,
        Truncated,
        UnknownField,
        TrailingBytes,
        BadBitmap,
        BadPackager,
    };

    CodecError(Kind kind, int field, const std::string& what)
        : std::runtime_error(what), kind_(kind), field_(field) {}

    Kind kind() const noexcept { return kind_; }
    int field() const noexcept { return field_; }

private:
    Kind kind_;
    int field_;
};

const char* to_string(CodecError::Kind kind);

/// Four-digit message type indicator, e.g. "0200".
class Mti {
public:
    Mti() : value_("0000") {}
    explicit Mti(std::string_view value);

    static bool is_valid(std::string_view value) noexcept;

    const std::string& str() const noexcept { return value_; }

    /// Response class of this MTI: 0200 -> 0210, 0800 -> 0810. An MTI whose
    /// function digit is already odd is returned unchanged.
    Mti response() const;

    friend bool operator==(const Mti&, const Mti&) = default;
    friend auto operator<=>(const Mti&, const Mti&) = default;

private:
    std::string value_;
};

/// A field payload: printable ASCII text, or raw bytes for binary fields.
class FieldValue {
public:
    FieldValue() = default;
    FieldValue(std::string text);  // NOLINT: implicit from text is the common case
    FieldValue(const char* text) : FieldValue(std::string(text)) {}

    static FieldValue binary(Bytes bytes);
    static bool is_printable(std::string_view text) noexcept;

    bool is_binary() const noexcept { return std::holds_alternative<Bytes>(value_); }
    const std::string& text() const;
    const Bytes& bytes() const;

    /// Text as-is, binary as uppercase hex.
    std::string display() const;

    friend bool operator==(const FieldValue&, const FieldValue&) = default;

private:
    std::variant<std::string, Bytes> value_;
};

class IsoMsg {
public:
    IsoMsg() = default;
    explicit IsoMsg(Mti mti) : mti_(std::move(mti)) {}

    const Mti& mti() const noexcept { return mti_; }
    void set_mti(Mti mti) { mti_ = std::move(mti); }

    /// Overwrites an existing value. Throws FieldNumberOutOfRange outside 2..128.
    void set(int field, FieldValue value);
    std::optional<FieldValue> get(int field) const;
    bool has(int field) const;
    void unset(int field);

    /// Text of a present text field, nullopt otherwise.
    std::optional<std::string> text(int field) const;

    const std::map<int, FieldValue>& fields() const noexcept { return fields_; }

    friend bool operator==(const IsoMsg&, const IsoMsg&) = default;

private:
    Mti mti_;
    std::map<int, FieldValue> fields_;
};

/// 128 presence flags, positions 1..128.
class Bitmap {
public:
    bool test(int position) const { return bits_.test(static_cast<std::size_t>(position - 1)); }
    void set(int position) { bits_.set(static_cast<std::size_t>(position - 1)); }
    bool has_secondary() const { return test(1); }

    /// 8 bytes, or 16 when the secondary bitmap is present.
    Bytes to_bytes() const;
    /// 16 uppercase hex chars, or 32 with a secondary bitmap.
    std::string to_hex() const;

    friend bool operator==(const Bitmap&, const Bitmap&) = default;

private:
    std::bitset<128> bits_;
};

Bitmap compute_bitmap(const IsoMsg& msg);

enum class ContentClass { Numeric, Alphanumeric, Binary };
enum class LengthKind { Fixed, LlVar, LllVar };
enum class BitmapEncoding { HexText, Binary };

/// Grammar of one field. For Binary content the length counts bytes, and
/// the bytes travel as two hex characters each.
struct FieldDef {
    int number = 0;
    std::string name;
    ContentClass content = ContentClass::Alphanumeric;
    LengthKind length_kind = LengthKind::Fixed;
    std::size_t length = 0;  // exact for Fixed, maximum for LlVar/LllVar

    static FieldDef fixed(int number, std::string name, ContentClass content, std::size_t length);
    static FieldDef llvar(int number, std::string name, ContentClass content, std::size_t max);
    static FieldDef lllvar(int number, std::string name, ContentClass content, std::size_t max);

    friend bool operator==(const FieldDef&, const FieldDef&) = default;
};

class Packager {
public:
    Packager(std::string name, BitmapEncoding encoding, std::vector<FieldDef> defs);

    /// The stock field table (2, 3, 4, 7, 11, 12, 13, 32, 37, 39, 41, 49, 54).
    static const Packager& standard();
    static Packager from_json(std::string_view json_text);
    static Packager load(const std::string& path);

    const std::string& name() const noexcept { return name_; }
    BitmapEncoding bitmap_encoding() const noexcept { return encoding_; }
    const FieldDef* find(int field) const;
    const std::map<int, FieldDef>& defs() const noexcept { return defs_; }

    Bytes pack(const IsoMsg& msg) const;
    IsoMsg unpack(std::span<const std::uint8_t> data) const;

    /// Checks one value against its def without packing the whole message.
    void validate(int field, const FieldValue& value) const;

private:
    std::string name_;
    BitmapEncoding encoding_;
    std::map<int, FieldDef> defs_;
};

inline Bytes pack(const IsoMsg& msg, const Packager& packager) { return packager.pack(msg); }
inline IsoMsg unpack(std::span<const std::uint8_t> data, const Packager& packager) {
    return packager.unpack(data);
}

std::string to_hex(std::span<const std::uint8_t> bytes);
/// Throws std::invalid_argument on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }
inline std::string to_text(std::span<const std::uint8_t> b) { return std::string(b.begin(), b.end()); }

}  // namespace switchsim
