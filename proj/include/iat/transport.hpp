#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace iat::net {

struct Address {
    std::string host;
    std::uint16_t port = 0;

    std::string to_string() const { return host + ":" + std::to_string(port); }

    friend bool operator==(const Address&, const Address&) = default;
    friend auto operator<=>(const Address&, const Address&) = default;
};

// Unreliable, unordered datagram transport. Implementations: UDP sockets and
// an in-process loopback network for fast deterministic tests.
class DatagramSocket {
public:
    virtual ~DatagramSocket() = default;

    virtual void send(const Address& to, std::span<const std::uint8_t> data) = 0;
    // Blocks up to timeout; returns false on timeout or when closed.
    virtual bool recv(Address& from, std::vector<std::uint8_t>& data,
                      std::chrono::milliseconds timeout) = 0;
    virtual Address local_address() const = 0;
    virtual void close() = 0;
};

// Binds a UDP socket; port 0 picks an ephemeral port. host may be an IP or name.
std::unique_ptr<DatagramSocket> make_udp_socket(const std::string& host = "127.0.0.1",
                                                std::uint16_t port = 0);

// Process-global loopback network; addresses are ("inproc", port).
class InProcNetwork {
public:
    static InProcNetwork& instance();
    std::unique_ptr<DatagramSocket> create_socket();

private:
    InProcNetwork() = default;
};

inline constexpr const char* kInProcHost = "inproc";

}  // namespace iat::net
