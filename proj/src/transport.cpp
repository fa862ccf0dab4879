#include "iat/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <mutex>
#include <stdexcept>

#include "iat/errors.hpp"

namespace iat::net {

namespace {

class UdpSocket final : public DatagramSocket {
public:
    UdpSocket(const std::string& host, std::uint16_t port) {
        fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
        if (fd_ < 0) throw Error("socket(): " + std::string(std::strerror(errno)));

        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            addr.sin_addr.s_addr = htonl(INADDR_ANY);
        }
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
            int err = errno;
            ::close(fd_);
            throw Error("bind(" + host + ":" + std::to_string(port) +
                        "): " + std::string(std::strerror(err)));
        }
        sockaddr_in bound{};
        socklen_t len = sizeof(bound);
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
        char buf[INET_ADDRSTRLEN] = {};
        ::inet_ntop(AF_INET, &bound.sin_addr, buf, sizeof(buf));
        local_ = Address{buf, ntohs(bound.sin_port)};
    }

    // The fd stays open until destruction; close() only poisons the socket so
    // a receive loop on another thread drains out via its poll timeout without
    // racing the fd (destruction happens after the owner joined its threads).
    ~UdpSocket() override {
        closed_.store(true);
        ::close(fd_);
    }

    void send(const Address& to, std::span<const std::uint8_t> data) override {
        if (closed_.load()) return;
        sockaddr_in addr = resolve(to);
        ::sendto(fd_, data.data(), data.size(), 0, reinterpret_cast<sockaddr*>(&addr),
                 sizeof(addr));
    }

    bool recv(Address& from, std::vector<std::uint8_t>& data,
              std::chrono::milliseconds timeout) override {
        if (closed_.load()) return false;
        pollfd pfd{fd_, POLLIN, 0};
        int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
        if (rc <= 0 || closed_.load()) return false;
        std::uint8_t buf[65536];
        sockaddr_in addr{};
        socklen_t len = sizeof(addr);
        ssize_t n = ::recvfrom(fd_, buf, sizeof(buf), 0, reinterpret_cast<sockaddr*>(&addr), &len);
        if (n < 0) return false;
        char name[INET_ADDRSTRLEN] = {};
        ::inet_ntop(AF_INET, &addr.sin_addr, name, sizeof(name));
        from = Address{name, ntohs(addr.sin_port)};
        data.assign(buf, buf + n);
        return true;
    }

    Address local_address() const override { return local_; }

    void close() override { closed_.store(true); }

private:
    sockaddr_in resolve(const Address& to) {
        {
            std::lock_guard lock(mutex_);
            auto it = cache_.find(to.host);
            if (it != cache_.end()) {
                sockaddr_in addr = it->second;
                addr.sin_port = htons(to.port);
                return addr;
            }
        }
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(to.port);
        if (::inet_pton(AF_INET, to.host.c_str(), &addr.sin_addr) != 1) {
            addrinfo hints{};
            hints.ai_family = AF_INET;
            hints.ai_socktype = SOCK_DGRAM;
            addrinfo* res = nullptr;
            if (::getaddrinfo(to.host.c_str(), nullptr, &hints, &res) != 0 || !res) {
                throw Error("cannot resolve host \"" + to.host + "\"");
            }
            addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
            ::freeaddrinfo(res);
        }
        std::lock_guard lock(mutex_);
        cache_[to.host] = addr;
        return addr;
    }

    int fd_ = -1;
    std::atomic<bool> closed_{false};
    Address local_;
    std::mutex mutex_;
    std::map<std::string, sockaddr_in> cache_;
};

struct InProcQueue {
    std::mutex mutex;
    std::condition_variable cv;
    std::deque<std::pair<Address, std::vector<std::uint8_t>>> packets;
    bool closed = false;
};

class InProcRegistry {
public:
    static InProcRegistry& instance() {
        static InProcRegistry registry;
        return registry;
    }

    std::pair<std::uint16_t, std::shared_ptr<InProcQueue>> open() {
        std::lock_guard lock(mutex_);
        auto q = std::make_shared<InProcQueue>();
        std::uint16_t port = next_port_++;
        if (next_port_ == 0) next_port_ = 1;
        queues_[port] = q;
        return {port, q};
    }

    std::shared_ptr<InProcQueue> find(std::uint16_t port) {
        std::lock_guard lock(mutex_);
        auto it = queues_.find(port);
        return it == queues_.end() ? nullptr : it->second;
    }

    void remove(std::uint16_t port) {
        std::lock_guard lock(mutex_);
        queues_.erase(port);
    }

private:
    std::mutex mutex_;
    std::map<std::uint16_t, std::shared_ptr<InProcQueue>> queues_;
    std::uint16_t next_port_ = 1;
};

class InProcSocket final : public DatagramSocket {
public:
    InProcSocket() {
        auto [port, queue] = InProcRegistry::instance().open();
        local_ = Address{kInProcHost, port};
        queue_ = std::move(queue);
    }

    ~InProcSocket() override { close(); }

    void send(const Address& to, std::span<const std::uint8_t> data) override {
        auto q = InProcRegistry::instance().find(to.port);
        if (!q) return;  // datagram semantics: drop
        std::lock_guard lock(q->mutex);
        if (q->closed) return;
        q->packets.emplace_back(local_, std::vector<std::uint8_t>(data.begin(), data.end()));
        q->cv.notify_one();
    }

    bool recv(Address& from, std::vector<std::uint8_t>& data,
              std::chrono::milliseconds timeout) override {
        std::unique_lock lock(queue_->mutex);
        queue_->cv.wait_for(lock, timeout, [&] { return queue_->closed || !queue_->packets.empty(); });
        if (queue_->packets.empty()) return false;
        from = queue_->packets.front().first;
        data = std::move(queue_->packets.front().second);
        queue_->packets.pop_front();
        return true;
    }

    Address local_address() const override { return local_; }

    void close() override {
        if (closed_.exchange(true)) return;
        InProcRegistry::instance().remove(local_.port);
        std::lock_guard lock(queue_->mutex);
        queue_->closed = true;
        queue_->cv.notify_all();
    }

private:
    Address local_;
    std::shared_ptr<InProcQueue> queue_;
    std::atomic<bool> closed_{false};
};

}  // namespace

std::unique_ptr<DatagramSocket> make_udp_socket(const std::string& host, std::uint16_t port) {
    return std::make_unique<UdpSocket>(host, port);
}

InProcNetwork& InProcNetwork::instance() {
    static InProcNetwork network;
    return network;
}

std::unique_ptr<DatagramSocket> InProcNetwork::create_socket() {
    return std::make_unique<InProcSocket>();
}

}  // namespace iat::net
