#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iat/errors.hpp"
#include "iat/transport.hpp"

namespace iat::coap {

enum class MsgType : std::uint8_t { Con = 0, Non = 1, Ack = 2, Rst = 3 };

// Method and response codes, class.detail packed as (class << 5 | detail).
namespace codes {
inline constexpr std::uint8_t kEmpty = 0x00;
inline constexpr std::uint8_t kGet = 0x01;
inline constexpr std::uint8_t kPost = 0x02;
inline constexpr std::uint8_t kPut = 0x03;
inline constexpr std::uint8_t kDelete = 0x04;
inline constexpr std::uint8_t kCreated = 0x41;         // 2.01
inline constexpr std::uint8_t kDeleted = 0x42;         // 2.02
inline constexpr std::uint8_t kChanged = 0x44;         // 2.04
inline constexpr std::uint8_t kContent = 0x45;         // 2.05
inline constexpr std::uint8_t kBadRequest = 0x80;      // 4.00
inline constexpr std::uint8_t kNotFound = 0x84;        // 4.04
inline constexpr std::uint8_t kMethodNotAllowed = 0x85;  // 4.05
inline constexpr std::uint8_t kInternalError = 0xA0;   // 5.00
}  // namespace codes

constexpr std::uint8_t make_code(unsigned cls, unsigned detail) {
    return static_cast<std::uint8_t>((cls & 0x7) << 5 | (detail & 0x1f));
}
constexpr unsigned code_class(std::uint8_t code) { return code >> 5; }
constexpr unsigned code_detail(std::uint8_t code) { return code & 0x1f; }
std::string code_to_string(std::uint8_t code);  // "2.05" form

namespace options {
inline constexpr std::uint16_t kObserve = 6;
inline constexpr std::uint16_t kLocationPath = 8;
inline constexpr std::uint16_t kUriPath = 11;
inline constexpr std::uint16_t kContentFormat = 12;
inline constexpr std::uint16_t kUriQuery = 15;
inline constexpr std::uint16_t kAccept = 17;
}  // namespace options

inline constexpr std::uint16_t kContentFormatLinkFormat = 40;
inline constexpr std::uint16_t kDefaultPort = 5683;

struct Option {
    std::uint16_t number = 0;
    std::vector<std::uint8_t> value;

    friend bool operator==(const Option&, const Option&) = default;
};

struct CoapMessage {
    MsgType type = MsgType::Con;
    std::uint8_t code = codes::kEmpty;
    std::uint16_t message_id = 0;
    std::vector<std::uint8_t> token;    // 0..8 bytes
    std::vector<Option> options;        // kept sorted by number (stable)
    std::vector<std::uint8_t> payload;

    bool is_request() const { return code_class(code) == 0 && code_detail(code) != 0; }
    bool is_response() const { return code_class(code) >= 2; }
    bool is_empty() const { return code == codes::kEmpty; }

    void add_option(std::uint16_t number, std::span<const std::uint8_t> value);
    void add_option(std::uint16_t number, std::string_view value);
    void add_uint_option(std::uint16_t number, std::uint32_t value);

    std::vector<std::string> option_strings(std::uint16_t number) const;
    std::optional<std::uint32_t> uint_option(std::uint16_t number) const;

    // Uri-Path / Location-Path helpers ("/16663/0/2" <-> segments).
    void set_uri_path(std::string_view path);
    std::string uri_path() const;
    std::string location_path() const;
    std::optional<std::string> uri_query(std::string_view key) const;

    std::string payload_text() const { return std::string(payload.begin(), payload.end()); }
    void set_payload_text(std::string_view text) { payload.assign(text.begin(), text.end()); }

    friend bool operator==(const CoapMessage&, const CoapMessage&) = default;
};

// RFC 7252 section 3 framing. Throws Error when an invariant is violated or an
// option delta/length exceeds 268 (the extended-16-bit form is out of scope).
std::vector<std::uint8_t> encode(const CoapMessage& msg);

// Total function: malformed frames yield nullopt with a reason, never a crash.
std::optional<CoapMessage> try_decode(std::span<const std::uint8_t> data, std::string* error = nullptr);
// Throwing convenience wrapper around try_decode.
CoapMessage decode(std::span<const std::uint8_t> data);

// Reliability constants; tests shrink them. Defaults follow RFC 7252.
struct ExchangeConfig {
    double ack_timeout_s = 2.0;
    double ack_random_factor = 1.5;
    int max_retransmit = 4;
    double exchange_lifetime_s = 247.0;
    double non_timeout_s = 10.0;
};

enum class RequestStatus { Ok, Timeout, Reset };

struct RequestOutcome {
    RequestStatus status = RequestStatus::Timeout;
    CoapMessage response;

    bool ok() const { return status == RequestStatus::Ok; }
};

// One CoAP endpoint over one datagram socket: client exchanges with
// retransmission/dedup plus an optional server role with a response cache.
class CoapEndpoint {
public:
    using Handler = std::function<CoapMessage(const CoapMessage& request, const net::Address& from)>;
    using NotifyFn = std::function<void(const CoapMessage& notification)>;

    explicit CoapEndpoint(std::unique_ptr<net::DatagramSocket> socket, ExchangeConfig config = {});
    ~CoapEndpoint();

    CoapEndpoint(const CoapEndpoint&) = delete;
    CoapEndpoint& operator=(const CoapEndpoint&) = delete;

    // Server role: handler produces the response for each incoming request.
    void set_handler(Handler handler);
    void start();
    void stop();

    net::Address local_address() const;
    const ExchangeConfig& config() const { return config_; }

    // Blocking request. Fills message_id/token if zero/empty. CON requests are
    // retransmitted with doubling timeouts; NON requests wait non_timeout_s.
    RequestOutcome request(const net::Address& peer, CoapMessage msg);

    // Registers the notification callback keyed by the request's token, then
    // performs the GET. Notifications matching the token are delivered to fn.
    RequestOutcome observe_request(const net::Address& peer, CoapMessage msg, NotifyFn fn);
    void cancel_observe_token(const std::vector<std::uint8_t>& token);

    // Fire-and-forget notification (server side of an observe relation).
    void send_notification(const net::Address& peer, const CoapMessage& msg);

    std::uint16_t next_message_id();
    std::vector<std::uint8_t> next_token();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    ExchangeConfig config_;
};

}  // namespace iat::coap
