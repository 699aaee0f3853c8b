// wire_channels.hpp – TCP channel framing (ascii, nac, xml) and the socket
// primitives the simulator and the regression client share.
//
//   ascii : 4 ASCII decimal digits (payload length) ++ packed message
//   nac   : 2-byte big-endian length of (tpdu ++ payload) ++ tpdu ++ packed message
//   xml   : self-delimiting <isomsg direction="..."> document, no packager

#pragma once

#include "switchsim/iso_codec.hpp"

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace switchsim {

enum class ChannelKind { Ascii, Nac, Xml };
enum class WireDirection { Incoming, Outgoing };

const char* to_string(ChannelKind kind);
const char* to_string(WireDirection direction);
/// Case-insensitive; throws std::invalid_argument for anything else.
ChannelKind parse_channel_kind(std::string_view token);

inline constexpr std::size_t kTpduLength = 5;
inline const Bytes kDefaultTpdu{0x60, 0x00, 0x00, 0x00, 0x00};

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
    ChannelKind kind = ChannelKind::Ascii;
    std::optional<Bytes> tpdu;  // nac only, exactly 5 bytes

    /// Throws std::invalid_argument on a tpdu outside nac or of the wrong size.
    void validate() const;
    std::size_t tpdu_length() const { return tpdu ? tpdu->size() : 0; }
    /// "host:port/kind"
    std::string to_string() const;

    friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

/// Parses "host:port" (or bare "port", host defaulting to 127.0.0.1).
Endpoint parse_endpoint(std::string_view host_port, ChannelKind kind);

class ChannelError : public std::runtime_error {
public:
    enum class Kind {
        PayloadTooLarge,
        BadLengthHeader,
        MalformedXml,
        ConnectionClosedMidFrame,
        ConnectRefused,
        Timeout,
        PeerClosed,
        PortInUse,
        Io,
    };

    ChannelError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

const char* to_string(ChannelError::Kind kind);

Bytes frame_ascii(std::span<const std::uint8_t> payload);
Bytes frame_nac(std::span<const std::uint8_t> payload, std::optional<std::span<const std::uint8_t>> tpdu = {});
Bytes frame_xml(const IsoMsg& msg, WireDirection direction);

struct XmlMessage {
    IsoMsg msg;
    WireDirection direction = WireDirection::Outgoing;
};

/// Parses one complete <isomsg> document. Throws MalformedXml.
XmlMessage parse_xml(std::string_view document);

/// ascii/nac frames yield payload bytes (tpdu stripped); xml frames yield the message.
using Frame = std::variant<Bytes, IsoMsg>;

/// Incremental frame splitter; bytes may arrive in arbitrary chunks.
class Deframer {
public:
    explicit Deframer(ChannelKind kind, std::size_t tpdu_length = 0) : kind_(kind), tpdu_length_(tpdu_length) {}

    void feed(std::span<const std::uint8_t> bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }

    /// Next complete frame, or nullopt if more bytes are needed.
    /// A frame whose body is bad (MalformedXml) is consumed before throwing,
    /// so the stream stays usable. BadLengthHeader leaves the stream desynchronised.
    std::optional<Frame> next();

    /// True when buffered bytes hold the start of an incomplete frame.
    bool mid_frame() const;

private:
    std::optional<Frame> next_length_prefixed();
    std::optional<Frame> next_xml();

    ChannelKind kind_;
    std::size_t tpdu_length_;
    Bytes buffer_;
};

/// Consumes exactly one frame from the front of `stream`.
/// Throws ConnectionClosedMidFrame if `stream` ends before the frame does.
Frame deframe(std::span<const std::uint8_t>& stream, ChannelKind kind, std::size_t tpdu_length = 0);

/// Message-level encoding for one endpoint: packing (ascii/nac) plus framing.
class ChannelCodec {
public:
    ChannelCodec(Endpoint endpoint, Packager packager);

    Bytes encode(const IsoMsg& msg, WireDirection direction = WireDirection::Outgoing) const;
    IsoMsg decode(const Frame& frame) const;

    const Endpoint& endpoint() const noexcept { return endpoint_; }
    const Packager& packager() const noexcept { return packager_; }

private:
    Endpoint endpoint_;
    Packager packager_;
};

/// Owning socket descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { reset(); }

    int fd() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }
    void reset();

private:
    int fd_ = -1;
};

/// One persistent TCP connection carrying many framed messages.
/// A single reader and a single writer may use it concurrently; multiple
/// writers must serialise externally.
class Connection {
public:
    Connection(Socket socket, ChannelCodec codec);

    /// Throws ConnectRefused.
    static Connection connect(const Endpoint& endpoint, const Packager& packager);

    std::uint64_t id() const noexcept { return id_; }
    const Endpoint& endpoint() const noexcept { return codec_.endpoint(); }
    const ChannelCodec& codec() const noexcept { return codec_; }

    void send(const IsoMsg& msg, WireDirection direction = WireDirection::Outgoing);
    void send_raw(std::span<const std::uint8_t> bytes);

    /// Waits up to `timeout` for one complete frame. Throws Timeout, PeerClosed,
    /// ConnectionClosedMidFrame, framing errors, or CodecError from unpacking
    /// (the bad frame is consumed in that case).
    IsoMsg receive(std::chrono::milliseconds timeout);

    /// Wakes a blocked receive; subsequent receives see PeerClosed.
    void shutdown_read();
    void close();

private:
    Socket socket_;
    ChannelCodec codec_;
    Deframer deframer_;
    std::uint64_t id_;
};

class Listener {
public:
    /// Port 0 binds an ephemeral port. Throws PortInUse / Io.
    static Listener bind(const std::string& host, std::uint16_t port);

    std::uint16_t port() const noexcept { return port_; }

    /// Waits up to `poll` for a client; nullopt on timeout.
    std::optional<Socket> accept(std::chrono::milliseconds poll);
    void close() { socket_.reset(); }

private:
    Listener(Socket socket, std::uint16_t port) : socket_(std::move(socket)), port_(port) {}

    Socket socket_;
    std::uint16_t port_;
};

}  // namespace switchsim
