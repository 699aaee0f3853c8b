#include "switchsim/wire_channels.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cerrno>
#include <cstring>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace switchsim {

namespace {

[[noreturn]] void fail(ChannelError::Kind kind, const std::string& detail) {
    throw ChannelError(kind, std::string(to_string(kind)) + ": " + detail);
}

std::string errno_text(int err) { return std::strerror(err); }

constexpr std::string_view kXmlOpen = "<isomsg";
constexpr std::string_view kXmlClose = "</isomsg>";
constexpr std::size_t kMaxXmlFrame = 1 << 20;

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

void append_escaped(std::string& out, std::string_view value) {
    for (char c : value) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
}

// Minimal reader for the flat <isomsg>/<field/> vocabulary.
class XmlCursor {
public:
    explicit XmlCursor(std::string_view doc) : doc_(doc) {}

    void skip_space() {
        while (pos_ < doc_.size() && is_space(static_cast<std::uint8_t>(doc_[pos_]))) ++pos_;
    }

    bool consume(std::string_view token) {
        skip_space();
        if (doc_.substr(pos_, token.size()) != token) return false;
        pos_ += token.size();
        return true;
    }

    void expect(std::string_view token) {
        if (!consume(token)) error("expected '" + std::string(token) + "'");
    }

    bool at_end() {
        skip_space();
        return pos_ >= doc_.size();
    }

    std::string name() {
        skip_space();
        const std::size_t start = pos_;
        while (pos_ < doc_.size() && (std::isalnum(static_cast<unsigned char>(doc_[pos_])) || doc_[pos_] == '_' ||
                                      doc_[pos_] == '-' || doc_[pos_] == ':'))
            ++pos_;
        if (pos_ == start) error("expected a name");
        return std::string(doc_.substr(start, pos_ - start));
    }

    // Attributes up to '>' or '/>'; returns true for a self-closing tag.
    bool attributes(std::vector<std::pair<std::string, std::string>>& out) {
        for (;;) {
            skip_space();
            if (consume("/>")) return true;
            if (consume(">")) return false;
            std::string key = name();
            expect("=");
            skip_space();
            if (pos_ >= doc_.size() || (doc_[pos_] != '"' && doc_[pos_] != '\'')) error("unquoted attribute");
            const char quote = doc_[pos_++];
            const std::size_t end = doc_.find(quote, pos_);
            if (end == std::string_view::npos) error("unterminated attribute");
            std::string raw(doc_.substr(pos_, end - pos_));
            pos_ = end + 1;
            if (std::any_of(out.begin(), out.end(), [&](const auto& kv) { return kv.first == key; }))
                error("duplicate attribute '" + key + "'");
            out.emplace_back(std::move(key), unescape(raw));
        }
    }

    [[noreturn]] void error(const std::string& what) const {
        fail(ChannelError::Kind::MalformedXml, what + " at offset " + std::to_string(pos_));
    }

private:
    std::string unescape(std::string_view raw) const {
        std::string out;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw[i] == '<') error("'<' inside attribute value");
            if (raw[i] != '&') {
                out += raw[i];
                continue;
            }
            const std::size_t semi = raw.find(';', i);
            if (semi == std::string_view::npos) error("unterminated entity");
            const std::string_view entity = raw.substr(i + 1, semi - i - 1);
            if (entity == "amp") out += '&';
            else if (entity == "lt") out += '<';
            else if (entity == "gt") out += '>';
            else if (entity == "quot") out += '"';
            else if (entity == "apos") out += '\'';
            else if (!entity.empty() && entity[0] == '#') {
                long code = 0;
                try {
                    code = entity.size() > 1 && (entity[1] == 'x' || entity[1] == 'X')
                               ? std::stol(std::string(entity.substr(2)), nullptr, 16)
                               : std::stol(std::string(entity.substr(1)));
                } catch (const std::exception&) {
                    error("bad character reference");
                }
                if (code < 0x20 || code > 0x7E) error("character reference outside printable ASCII");
                out += static_cast<char>(code);
            } else {
                error("unknown entity '&" + std::string(entity) + ";'");
            }
            i = semi;
        }
        return out;
    }

    std::string_view doc_;
    std::size_t pos_ = 0;
};

std::atomic<std::uint64_t> next_connection_id{1};

}  // namespace

const char* to_string(ChannelKind kind) {
    switch (kind) {
        case ChannelKind::Ascii: return "ascii";
        case ChannelKind::Nac: return "nac";
        case ChannelKind::Xml: return "xml";
    }
    return "?";
}

const char* to_string(WireDirection direction) {
    return direction == WireDirection::Incoming ? "incoming" : "outgoing";
}

ChannelKind parse_channel_kind(std::string_view token) {
    std::string lower(token);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "ascii") return ChannelKind::Ascii;
    if (lower == "nac") return ChannelKind::Nac;
    if (lower == "xml") return ChannelKind::Xml;
    throw std::invalid_argument("unknown channel kind '" + std::string(token) + "' (expected ascii, nac or xml)");
}

const char* to_string(ChannelError::Kind kind) {
    switch (kind) {
        case ChannelError::Kind::PayloadTooLarge: return "PayloadTooLarge";
        case ChannelError::Kind::BadLengthHeader: return "BadLengthHeader";
        case ChannelError::Kind::MalformedXml: return "MalformedXml";
        case ChannelError::Kind::ConnectionClosedMidFrame: return "ConnectionClosedMidFrame";
        case ChannelError::Kind::ConnectRefused: return "ConnectRefused";
        case ChannelError::Kind::Timeout: return "Timeout";
        case ChannelError::Kind::PeerClosed: return "PeerClosed";
        case ChannelError::Kind::PortInUse: return "PortInUse";
        case ChannelError::Kind::Io: return "Io";
    }
    return "ChannelError";
}

// ─── Endpoint ───────────────────────────────────────────────────────────────

void Endpoint::validate() const {
    if (tpdu && kind != ChannelKind::Nac) throw std::invalid_argument("tpdu is only valid on a nac endpoint");
    if (tpdu && tpdu->size() != kTpduLength) throw std::invalid_argument("tpdu must be exactly 5 bytes");
}

std::string Endpoint::to_string() const {
    return host + ":" + std::to_string(port) + "/" + switchsim::to_string(kind);
}

Endpoint parse_endpoint(std::string_view host_port, ChannelKind kind) {
    Endpoint ep;
    ep.kind = kind;
    std::string_view port_text = host_port;
    if (const auto colon = host_port.rfind(':'); colon != std::string_view::npos) {
        ep.host = std::string(host_port.substr(0, colon));
        port_text = host_port.substr(colon + 1);
    }
    if (ep.host.empty()) throw std::invalid_argument("empty host in '" + std::string(host_port) + "'");
    unsigned long port = 0;
    try {
        std::size_t used = 0;
        port = std::stoul(std::string(port_text), &used);
        if (used != port_text.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
        throw std::invalid_argument("bad port in '" + std::string(host_port) + "'");
    }
    if (port < 1 || port > 65535) throw std::invalid_argument("port out of range in '" + std::string(host_port) + "'");
    ep.port = static_cast<std::uint16_t>(port);
    return ep;
}

// ─── framing ────────────────────────────────────────────────────────────────

Bytes frame_ascii(std::span<const std::uint8_t> payload) {
    if (payload.size() > 9999) fail(ChannelError::Kind::PayloadTooLarge, std::to_string(payload.size()) + " > 9999");
    char header[5];
    std::snprintf(header, sizeof header, "%04zu", payload.size());
    Bytes out(header, header + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Bytes frame_nac(std::span<const std::uint8_t> payload, std::optional<std::span<const std::uint8_t>> tpdu) {
    const std::size_t tpdu_size = tpdu ? tpdu->size() : 0;
    const std::size_t total = tpdu_size + payload.size();
    if (total > 0xFFFF) fail(ChannelError::Kind::PayloadTooLarge, std::to_string(total) + " > 65535");
    Bytes out;
    out.reserve(2 + total);
    out.push_back(static_cast<std::uint8_t>(total >> 8));
    out.push_back(static_cast<std::uint8_t>(total & 0xFF));
    if (tpdu) out.insert(out.end(), tpdu->begin(), tpdu->end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Bytes frame_xml(const IsoMsg& msg, WireDirection direction) {
    std::string out = "<isomsg direction=\"";
    out += to_string(direction);
    out += "\"><field id=\"0\" value=\"";
    append_escaped(out, msg.mti().str());
    out += "\"/>";
    for (const auto& [field, value] : msg.fields()) {
        out += "<field id=\"" + std::to_string(field) + "\" value=\"";
        append_escaped(out, value.display());
        out += value.is_binary() ? "\" type=\"binary\"/>" : "\"/>";
    }
    out += "</isomsg>";
    return Bytes(out.begin(), out.end());
}

XmlMessage parse_xml(std::string_view document) {
    XmlCursor cur(document);
    XmlMessage result;

    cur.expect(kXmlOpen);
    std::vector<std::pair<std::string, std::string>> attrs;
    if (cur.attributes(attrs)) cur.error("empty <isomsg/>");
    for (const auto& [key, value] : attrs) {
        if (key != "direction") cur.error("unexpected isomsg attribute '" + key + "'");
        if (value == "incoming") result.direction = WireDirection::Incoming;
        else if (value == "outgoing") result.direction = WireDirection::Outgoing;
        else cur.error("bad direction '" + value + "'");
    }

    bool have_mti = false;
    while (!cur.consume(kXmlClose)) {
        if (!cur.consume("<")) cur.error("expected element");
        if (cur.name() != "field") cur.error("only <field> elements are allowed inside <isomsg>");
        attrs.clear();
        if (!cur.attributes(attrs)) cur.error("<field> must be self-closing");

        std::optional<int> id;
        std::optional<std::string> value;
        bool binary = false;
        for (const auto& [key, v] : attrs) {
            if (key == "id") {
                try {
                    std::size_t used = 0;
                    id = std::stoi(v, &used);
                    if (used != v.size()) throw std::invalid_argument(v);
                } catch (const std::exception&) {
                    cur.error("bad field id '" + v + "'");
                }
            } else if (key == "value") {
                value = v;
            } else if (key == "type") {
                if (v != "binary") cur.error("unsupported field type '" + v + "'");
                binary = true;
            } else {
                cur.error("unexpected field attribute '" + key + "'");
            }
        }
        if (!id || !value) cur.error("<field> needs id and value");

        try {
            if (*id == 0) {
                if (have_mti) cur.error("duplicate MTI");
                result.msg.set_mti(Mti(*value));
                have_mti = true;
            } else {
                if (result.msg.has(*id)) cur.error("duplicate field " + std::to_string(*id));
                result.msg.set(*id, binary ? FieldValue::binary(from_hex(*value)) : FieldValue(*value));
            }
        } catch (const ChannelError&) {
            throw;
        } catch (const std::exception& e) {
            cur.error(e.what());
        }
    }
    if (!have_mti) cur.error("missing MTI (field id=\"0\")");
    if (!cur.at_end()) cur.error("content after </isomsg>");
    return result;
}

// ─── Deframer ───────────────────────────────────────────────────────────────

std::optional<Frame> Deframer::next() {
    return kind_ == ChannelKind::Xml ? next_xml() : next_length_prefixed();
}

std::optional<Frame> Deframer::next_length_prefixed() {
    std::size_t header = 0;
    std::size_t length = 0;
    if (kind_ == ChannelKind::Ascii) {
        header = 4;
        if (buffer_.size() < header) return std::nullopt;
        for (std::size_t i = 0; i < header; ++i) {
            if (buffer_[i] < '0' || buffer_[i] > '9')
                fail(ChannelError::Kind::BadLengthHeader,
                     "non-digit in ascii length header '" + to_text(std::span(buffer_).first(header)) + "'");
            length = length * 10 + (buffer_[i] - '0');
        }
    } else {
        header = 2;
        if (buffer_.size() < header) return std::nullopt;
        length = static_cast<std::size_t>(buffer_[0]) << 8 | buffer_[1];
        if (length == 0) fail(ChannelError::Kind::BadLengthHeader, "zero-length nac frame");
        if (length < tpdu_length_)
            fail(ChannelError::Kind::BadLengthHeader, "nac frame shorter than its tpdu");
    }
    if (buffer_.size() < header + length) return std::nullopt;

    const auto begin = buffer_.begin() + static_cast<std::ptrdiff_t>(header + tpdu_length_);
    const auto end = buffer_.begin() + static_cast<std::ptrdiff_t>(header + length);
    Bytes payload(begin, end);
    buffer_.erase(buffer_.begin(), end);
    return Frame{std::move(payload)};
}

std::optional<Frame> Deframer::next_xml() {
    const auto first = std::find_if_not(buffer_.begin(), buffer_.end(), is_space);
    buffer_.erase(buffer_.begin(), first);
    if (buffer_.empty()) return std::nullopt;

    const std::size_t prefix = std::min(buffer_.size(), kXmlOpen.size());
    if (!std::equal(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(prefix), kXmlOpen.begin())) {
        // Resynchronise on the next '<' so one bad frame does not poison the stream.
        auto lt = std::find(buffer_.begin() + 1, buffer_.end(), static_cast<std::uint8_t>('<'));
        buffer_.erase(buffer_.begin(), lt);
        fail(ChannelError::Kind::MalformedXml, "stream does not start with <isomsg");
    }

    const auto end = std::search(buffer_.begin(), buffer_.end(), kXmlClose.begin(), kXmlClose.end());
    if (end == buffer_.end()) {
        if (buffer_.size() > kMaxXmlFrame) {
            buffer_.clear();
            fail(ChannelError::Kind::MalformedXml, "no </isomsg> within 1 MiB");
        }
        return std::nullopt;
    }
    const auto stop = end + static_cast<std::ptrdiff_t>(kXmlClose.size());
    std::string doc(buffer_.begin(), stop);
    buffer_.erase(buffer_.begin(), stop);
    return Frame{parse_xml(doc).msg};
}

bool Deframer::mid_frame() const {
    if (kind_ == ChannelKind::Xml) return std::find_if_not(buffer_.begin(), buffer_.end(), is_space) != buffer_.end();
    return !buffer_.empty();
}

Frame deframe(std::span<const std::uint8_t>& stream, ChannelKind kind, std::size_t tpdu_length) {
    // Feed byte by byte so exactly one frame is consumed.
    Deframer deframer(kind, tpdu_length);
    std::size_t used = 0;
    while (used < stream.size()) {
        deframer.feed(stream.subspan(used, 1));
        ++used;
        if (auto frame = deframer.next()) {
            stream = stream.subspan(used);
            return std::move(*frame);
        }
    }
    fail(ChannelError::Kind::ConnectionClosedMidFrame, "stream ended after " + std::to_string(used) + " bytes");
}

// ─── ChannelCodec ───────────────────────────────────────────────────────────

ChannelCodec::ChannelCodec(Endpoint endpoint, Packager packager)
    : endpoint_(std::move(endpoint)), packager_(std::move(packager)) {
    endpoint_.validate();
}

Bytes ChannelCodec::encode(const IsoMsg& msg, WireDirection direction) const {
    switch (endpoint_.kind) {
        case ChannelKind::Ascii: return frame_ascii(packager_.pack(msg));
        case ChannelKind::Nac: {
            const Bytes payload = packager_.pack(msg);
            if (endpoint_.tpdu) return frame_nac(payload, std::span<const std::uint8_t>(*endpoint_.tpdu));
            return frame_nac(payload);
        }
        case ChannelKind::Xml: return frame_xml(msg, direction);
    }
    return {};
}

IsoMsg ChannelCodec::decode(const Frame& frame) const {
    if (const auto* msg = std::get_if<IsoMsg>(&frame)) return *msg;
    return packager_.unpack(std::get<Bytes>(frame));
}

// ─── Socket / Connection / Listener ─────────────────────────────────────────

Socket& Socket::operator=(Socket&& other) noexcept {
    if (this != &other) {
        reset();
        fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
}

void Socket::reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

Connection::Connection(Socket socket, ChannelCodec codec)
    : socket_(std::move(socket)),
      codec_(std::move(codec)),
      deframer_(codec_.endpoint().kind, codec_.endpoint().tpdu_length()),
      id_(next_connection_id.fetch_add(1)) {
    const int one = 1;
    ::setsockopt(socket_.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

Connection Connection::connect(const Endpoint& endpoint, const Packager& packager) {
    endpoint.validate();
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    const std::string port = std::to_string(endpoint.port);
    if (const int rc = ::getaddrinfo(endpoint.host.c_str(), port.c_str(), &hints, &found); rc != 0)
        fail(ChannelError::Kind::ConnectRefused, endpoint.to_string() + ": " + ::gai_strerror(rc));

    int last_errno = 0;
    Socket sock;
    for (addrinfo* ai = found; ai != nullptr; ai = ai->ai_next) {
        Socket candidate(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
        if (!candidate.valid()) {
            last_errno = errno;
            continue;
        }
        if (::connect(candidate.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
            sock = std::move(candidate);
            break;
        }
        last_errno = errno;
    }
    ::freeaddrinfo(found);
    if (!sock.valid()) fail(ChannelError::Kind::ConnectRefused, endpoint.to_string() + ": " + errno_text(last_errno));
    return Connection(std::move(sock), ChannelCodec(endpoint, packager));
}

void Connection::send(const IsoMsg& msg, WireDirection direction) { send_raw(codec_.encode(msg, direction)); }

void Connection::send_raw(std::span<const std::uint8_t> bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n = ::send(socket_.fd(), bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == EPIPE || errno == ECONNRESET) fail(ChannelError::Kind::PeerClosed, errno_text(errno));
            fail(ChannelError::Kind::Io, "send: " + errno_text(errno));
        }
        sent += static_cast<std::size_t>(n);
    }
}

IsoMsg Connection::receive(std::chrono::milliseconds timeout) {
    using clock = std::chrono::steady_clock;
    if (timeout.count() <= 0) throw std::invalid_argument("receive timeout must be > 0");
    const auto start = clock::now();
    const auto deadline = start + timeout;

    for (;;) {
        if (auto frame = deframer_.next()) return codec_.decode(*frame);

        const auto now = clock::now();
        if (now >= deadline) {
            const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(now - start);
            fail(ChannelError::Kind::Timeout, std::to_string(elapsed.count()) + " ms");
        }
        pollfd pfd{socket_.fd(), POLLIN, 0};
        const auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
        const int rc = ::poll(&pfd, 1, static_cast<int>(wait));
        if (rc < 0) {
            if (errno == EINTR) continue;
            fail(ChannelError::Kind::Io, "poll: " + errno_text(errno));
        }
        if (rc == 0) continue;

        std::uint8_t chunk[4096];
        const ssize_t n = ::recv(socket_.fd(), chunk, sizeof chunk, 0);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            if (errno == ECONNRESET) fail(ChannelError::Kind::PeerClosed, errno_text(errno));
            fail(ChannelError::Kind::Io, "recv: " + errno_text(errno));
        }
        if (n == 0) {
            if (deframer_.mid_frame()) fail(ChannelError::Kind::ConnectionClosedMidFrame, endpoint().to_string());
            fail(ChannelError::Kind::PeerClosed, endpoint().to_string());
        }
        deframer_.feed(std::span<const std::uint8_t>(chunk, static_cast<std::size_t>(n)));
    }
}

void Connection::shutdown_read() {
    if (socket_.valid()) ::shutdown(socket_.fd(), SHUT_RD);
}

void Connection::close() { socket_.reset(); }

Listener Listener::bind(const std::string& host, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        if (host == "localhost") addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        else fail(ChannelError::Kind::Io, "bind address must be an IPv4 literal: " + host);
    }

    Socket sock(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!sock.valid()) fail(ChannelError::Kind::Io, "socket: " + errno_text(errno));
    const int one = 1;
    ::setsockopt(sock.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(sock.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
        if (errno == EADDRINUSE) fail(ChannelError::Kind::PortInUse, "port " + std::to_string(port));
        fail(ChannelError::Kind::Io, "bind " + host + ":" + std::to_string(port) + ": " + errno_text(errno));
    }
    if (::listen(sock.fd(), 64) != 0) fail(ChannelError::Kind::Io, "listen: " + errno_text(errno));

    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(sock.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
    return Listener(std::move(sock), ntohs(bound.sin_port));
}

std::optional<Socket> Listener::accept(std::chrono::milliseconds poll) {
    pollfd pfd{socket_.fd(), POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(poll.count()));
    if (rc <= 0) return std::nullopt;
    Socket client(::accept4(socket_.fd(), nullptr, nullptr, SOCK_CLOEXEC));
    if (!client.valid()) return std::nullopt;
    return client;
}

}  // namespace switchsim
