#include "iat/coap.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include "iat/errors.hpp"

namespace iat::coap {

std::string code_to_string(std::uint8_t code) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%u.%02u", code_class(code), code_detail(code));
    return buf;
}

void CoapMessage::add_option(std::uint16_t number, std::span<const std::uint8_t> value) {
    Option opt{number, {value.begin(), value.end()}};
    auto it = std::upper_bound(options.begin(), options.end(), number,
                               [](std::uint16_t n, const Option& o) { return n < o.number; });
    options.insert(it, std::move(opt));
}

void CoapMessage::add_option(std::uint16_t number, std::string_view value) {
    add_option(number, std::span<const std::uint8_t>(
                           reinterpret_cast<const std::uint8_t*>(value.data()), value.size()));
}

void CoapMessage::add_uint_option(std::uint16_t number, std::uint32_t value) {
    // Shortest big-endian form; zero encodes as empty.
    std::vector<std::uint8_t> bytes;
    while (value) {
        bytes.insert(bytes.begin(), static_cast<std::uint8_t>(value & 0xff));
        value >>= 8;
    }
    add_option(number, std::span<const std::uint8_t>(bytes.data(), bytes.size()));
}

std::vector<std::string> CoapMessage::option_strings(std::uint16_t number) const {
    std::vector<std::string> out;
    for (const auto& opt : options) {
        if (opt.number == number) out.emplace_back(opt.value.begin(), opt.value.end());
    }
    return out;
}

std::optional<std::uint32_t> CoapMessage::uint_option(std::uint16_t number) const {
    for (const auto& opt : options) {
        if (opt.number != number) continue;
        if (opt.value.size() > 4) return std::nullopt;
        std::uint32_t v = 0;
        for (auto b : opt.value) v = v << 8 | b;
        return v;
    }
    return std::nullopt;
}

void CoapMessage::set_uri_path(std::string_view path) {
    std::size_t pos = 0;
    if (!path.empty() && path.front() == '/') pos = 1;
    while (pos <= path.size()) {
        std::size_t slash = path.find('/', pos);
        auto part = path.substr(pos, slash == std::string_view::npos ? std::string_view::npos
                                                                     : slash - pos);
        if (!part.empty()) add_option(options::kUriPath, part);
        if (slash == std::string_view::npos) break;
        pos = slash + 1;
    }
}

namespace {

std::string join_segments(const std::vector<std::string>& segments) {
    std::string out;
    for (const auto& s : segments) out += "/" + s;
    return out;
}

}  // namespace

std::string CoapMessage::uri_path() const { return join_segments(option_strings(options::kUriPath)); }

std::string CoapMessage::location_path() const {
    return join_segments(option_strings(options::kLocationPath));
}

std::optional<std::string> CoapMessage::uri_query(std::string_view key) const {
    for (const auto& q : option_strings(options::kUriQuery)) {
        auto eq = q.find('=');
        if (eq != std::string::npos && std::string_view(q).substr(0, eq) == key) {
            return q.substr(eq + 1);
        }
        if (eq == std::string::npos && q == key) return std::string();
    }
    return std::nullopt;
}

namespace {

// Option delta/length nibble plus extended byte; values > 268 are out of scope.
void append_option_field(std::vector<std::uint8_t>& ext, unsigned value, unsigned& nibble) {
    if (value < 13) {
        nibble = value;
    } else if (value <= 268) {
        nibble = 13;
        ext.push_back(static_cast<std::uint8_t>(value - 13));
    } else {
        throw Error("option delta/length " + std::to_string(value) + " exceeds 268");
    }
}

}  // namespace

std::vector<std::uint8_t> encode(const CoapMessage& msg) {
    if (msg.token.size() > 8) throw Error("token longer than 8 bytes");
    if (msg.is_empty() && (!msg.token.empty() || !msg.options.empty() || !msg.payload.empty())) {
        throw Error("empty message must not carry token, options or payload");
    }
    std::vector<std::uint8_t> out;
    out.push_back(static_cast<std::uint8_t>(0x40 | (static_cast<unsigned>(msg.type) << 4) |
                                            msg.token.size()));
    out.push_back(msg.code);
    out.push_back(static_cast<std::uint8_t>(msg.message_id >> 8));
    out.push_back(static_cast<std::uint8_t>(msg.message_id & 0xff));
    out.insert(out.end(), msg.token.begin(), msg.token.end());

    unsigned prev = 0;
    for (const auto& opt : msg.options) {
        if (opt.number < prev) throw Error("options not sorted by number");
        unsigned delta = opt.number - prev;
        prev = opt.number;
        std::vector<std::uint8_t> ext;
        unsigned dn = 0, ln = 0;
        append_option_field(ext, delta, dn);
        append_option_field(ext, static_cast<unsigned>(opt.value.size()), ln);
        out.push_back(static_cast<std::uint8_t>(dn << 4 | ln));
        out.insert(out.end(), ext.begin(), ext.end());
        out.insert(out.end(), opt.value.begin(), opt.value.end());
    }
    if (!msg.payload.empty()) {
        out.push_back(0xff);
        out.insert(out.end(), msg.payload.begin(), msg.payload.end());
    }
    return out;
}

std::optional<CoapMessage> try_decode(std::span<const std::uint8_t> data, std::string* error) {
    auto fail = [&](const char* why) -> std::optional<CoapMessage> {
        if (error) *error = why;
        return std::nullopt;
    };
    if (data.size() < 4) return fail("below minimum header size");
    unsigned version = data[0] >> 6;
    if (version != 1) return fail("unsupported version");
    unsigned tkl = data[0] & 0x0f;
    if (tkl > 8) return fail("token length above 8");

    CoapMessage msg;
    msg.type = static_cast<MsgType>((data[0] >> 4) & 0x3);
    msg.code = data[1];
    msg.message_id = static_cast<std::uint16_t>(data[2] << 8 | data[3]);
    if (data.size() < 4 + tkl) return fail("truncated token");
    msg.token.assign(data.begin() + 4, data.begin() + 4 + tkl);

    std::size_t pos = 4 + tkl;
    unsigned number = 0;
    while (pos < data.size()) {
        std::uint8_t b = data[pos];
        if (b == 0xff) {
            ++pos;
            if (pos == data.size()) return fail("payload marker with empty payload");
            msg.payload.assign(data.begin() + pos, data.end());
            break;
        }
        ++pos;
        unsigned dn = b >> 4, ln = b & 0x0f;
        if (dn == 15 || ln == 15) return fail("reserved option nibble");
        auto extended = [&](unsigned nibble, unsigned& value) -> bool {
            if (nibble < 13) {
                value = nibble;
                return true;
            }
            if (nibble == 13) {
                if (pos >= data.size()) return false;
                value = 13 + data[pos++];
                return true;
            }
            // nibble == 14: two extension bytes
            if (pos + 1 >= data.size()) return false;
            value = 269u + (data[pos] << 8 | data[pos + 1]);
            pos += 2;
            return true;
        };
        unsigned delta = 0, length = 0;
        if (!extended(dn, delta)) return fail("truncated option delta");
        if (!extended(ln, length)) return fail("truncated option length");
        if (pos + length > data.size()) return fail("truncated option value");
        number += delta;
        if (number > 0xffff) return fail("option number out of range");
        Option opt;
        opt.number = static_cast<std::uint16_t>(number);
        opt.value.assign(data.begin() + pos, data.begin() + pos + length);
        msg.options.push_back(std::move(opt));
        pos += length;
    }
    if (msg.is_empty() && (tkl != 0 || !msg.options.empty() || !msg.payload.empty())) {
        return fail("empty message with token, options or payload");
    }
    return msg;
}

CoapMessage decode(std::span<const std::uint8_t> data) {
    std::string error;
    auto msg = try_decode(data, &error);
    if (!msg) throw Error("CoAP decode: " + error);
    return *msg;
}

// ---------------------------------------------------------------------------
// Exchange layer

namespace {

struct PendingExchange {
    std::condition_variable cv;
    bool done = false;
    bool acked = false;  // empty ACK seen, separate response pending
    RequestStatus status = RequestStatus::Timeout;
    CoapMessage response;
    std::uint16_t message_id = 0;
    std::vector<std::uint8_t> token;
};

struct CachedResponse {
    std::vector<std::uint8_t> bytes;
    std::chrono::steady_clock::time_point expires;
};

}  // namespace

struct CoapEndpoint::Impl {
    std::unique_ptr<net::DatagramSocket> socket;
    ExchangeConfig config;

    std::mutex mutex;
    Handler handler;
    std::map<std::uint16_t, std::shared_ptr<PendingExchange>> by_mid;
    std::map<std::vector<std::uint8_t>, std::shared_ptr<PendingExchange>> by_token;
    std::map<std::vector<std::uint8_t>, NotifyFn> observers;
    std::map<std::pair<std::string, std::uint16_t>, CachedResponse> response_cache;
    std::deque<std::pair<std::uint16_t, std::vector<std::uint8_t>>> recent_notifications;

    std::uint16_t mid_counter = 0;
    std::uint64_t token_counter = 0;
    std::mt19937 rng{std::random_device{}()};

    std::thread rx_thread;
    std::atomic<bool> running{false};
    std::chrono::steady_clock::time_point last_sweep = std::chrono::steady_clock::now();

    void run() {
        net::Address from;
        std::vector<std::uint8_t> data;
        while (running.load()) {
            if (socket->recv(from, data, std::chrono::milliseconds(50))) {
                handle_datagram(from, data);
            }
            sweep_cache();
        }
    }

    void sweep_cache() {
        auto now = std::chrono::steady_clock::now();
        if (now - last_sweep < std::chrono::seconds(1)) return;
        last_sweep = now;
        std::lock_guard lock(mutex);
        for (auto it = response_cache.begin(); it != response_cache.end();) {
            it = it->second.expires <= now ? response_cache.erase(it) : std::next(it);
        }
    }

    void send_bytes(const net::Address& to, const std::vector<std::uint8_t>& bytes) {
        socket->send(to, bytes);
    }

    void send_rst(const net::Address& to, std::uint16_t mid) {
        CoapMessage rst;
        rst.type = MsgType::Rst;
        rst.message_id = mid;
        send_bytes(to, encode(rst));
    }

    void handle_datagram(const net::Address& from, const std::vector<std::uint8_t>& data) {
        std::string error;
        auto decoded = try_decode(data, &error);
        if (!decoded) {
            // Reject malformed CON-shaped datagrams with RST, drop the rest.
            if (data.size() >= 4 && ((data[0] >> 4) & 0x3) == 0 && (data[0] >> 6) == 1) {
                send_rst(from, static_cast<std::uint16_t>(data[2] << 8 | data[3]));
            }
            return;
        }
        CoapMessage msg = std::move(*decoded);
        if (msg.is_request()) {
            handle_request(from, msg);
            return;
        }
        if (msg.type == MsgType::Ack) {
            std::shared_ptr<PendingExchange> ex;
            {
                std::lock_guard lock(mutex);
                auto it = by_mid.find(msg.message_id);
                if (it != by_mid.end()) {
                    ex = it->second;
                    if (msg.is_empty()) {
                        ex->acked = true;
                    } else {
                        complete_locked(ex, RequestStatus::Ok, std::move(msg));
                    }
                    ex->cv.notify_all();
                }
            }
            return;
        }
        if (msg.type == MsgType::Rst) {
            std::lock_guard lock(mutex);
            if (auto it = by_mid.find(msg.message_id); it != by_mid.end()) {
                complete_locked(it->second, RequestStatus::Reset, {});
                it->second->cv.notify_all();
                return;
            }
            // RST answering one of our notifications cancels that relation.
            for (const auto& [mid, token] : recent_notifications) {
                if (mid == msg.message_id) {
                    observers.erase(token);
                    break;
                }
            }
            return;
        }
        if (msg.is_response()) {
            // Separate response or observe notification (CON or NON).
            NotifyFn notify;
            bool matched = false;
            {
                std::lock_guard lock(mutex);
                auto it = by_token.find(msg.token);
                if (it != by_token.end() && !it->second->done) {
                    matched = true;
                    if (msg.type == MsgType::Con) send_ack(from, msg.message_id);
                    complete_locked(it->second, RequestStatus::Ok, msg);
                    it->second->cv.notify_all();
                } else if (auto ob = observers.find(msg.token); ob != observers.end()) {
                    matched = true;
                    if (msg.type == MsgType::Con) send_ack(from, msg.message_id);
                    notify = ob->second;
                }
            }
            if (notify) notify(msg);
            if (!matched && msg.type == MsgType::Con) send_rst(from, msg.message_id);
            return;
        }
        // Unmatched empty CON (CoAP ping): answer with RST.
        if (msg.type == MsgType::Con) send_rst(from, msg.message_id);
    }

    void send_ack(const net::Address& to, std::uint16_t mid) {
        CoapMessage ack;
        ack.type = MsgType::Ack;
        ack.message_id = mid;
        send_bytes(to, encode(ack));
    }

    void handle_request(const net::Address& from, const CoapMessage& req) {
        auto cache_key = std::make_pair(from.to_string(), req.message_id);
        Handler local_handler;
        {
            std::lock_guard lock(mutex);
            auto it = response_cache.find(cache_key);
            if (it != response_cache.end() && it->second.expires > std::chrono::steady_clock::now()) {
                // Duplicate within EXCHANGE_LIFETIME: replay without re-invoking.
                auto bytes = it->second.bytes;
                send_bytes(from, bytes);
                return;
            }
            local_handler = handler;
        }
        if (!local_handler) {
            if (req.type == MsgType::Con) send_rst(from, req.message_id);
            return;
        }
        CoapMessage response;
        try {
            response = local_handler(req, from);
        } catch (const std::exception&) {
            response = CoapMessage{};
            response.code = codes::kInternalError;
        }
        if (req.type == MsgType::Con) {
            response.type = MsgType::Ack;
            response.message_id = req.message_id;
        } else {
            response.type = MsgType::Non;
            response.message_id = next_mid();
        }
        response.token = req.token;
        auto bytes = encode(response);
        {
            std::lock_guard lock(mutex);
            response_cache[cache_key] = CachedResponse{
                bytes, std::chrono::steady_clock::now() +
                           std::chrono::milliseconds(
                               static_cast<long>(config.exchange_lifetime_s * 1000))};
        }
        send_bytes(from, bytes);
    }

    static void complete_locked(const std::shared_ptr<PendingExchange>& ex, RequestStatus status,
                                CoapMessage response) {
        if (ex->done) return;
        ex->done = true;
        ex->status = status;
        ex->response = std::move(response);
    }

    std::uint16_t next_mid() {
        std::lock_guard lock(mutex);
        if (mid_counter == 0) mid_counter = static_cast<std::uint16_t>(rng() & 0xffff);
        ++mid_counter;
        if (mid_counter == 0) ++mid_counter;
        return mid_counter;
    }

    std::vector<std::uint8_t> make_token() {
        std::lock_guard lock(mutex);
        if (token_counter == 0) token_counter = rng();
        ++token_counter;
        std::vector<std::uint8_t> token(4);
        for (int i = 0; i < 4; ++i) {
            token[i] = static_cast<std::uint8_t>(token_counter >> (8 * (3 - i)));
        }
        return token;
    }
};

CoapEndpoint::CoapEndpoint(std::unique_ptr<net::DatagramSocket> socket, ExchangeConfig config)
    : impl_(std::make_unique<Impl>()), config_(config) {
    impl_->socket = std::move(socket);
    impl_->config = config;
    impl_->running = true;
    impl_->rx_thread = std::thread([this] { impl_->run(); });
}

CoapEndpoint::~CoapEndpoint() { stop(); }

void CoapEndpoint::set_handler(Handler handler) {
    std::lock_guard lock(impl_->mutex);
    impl_->handler = std::move(handler);
}

void CoapEndpoint::start() {}  // the receive loop starts with construction

void CoapEndpoint::stop() {
    if (!impl_->running.exchange(false)) return;
    impl_->socket->close();
    if (impl_->rx_thread.joinable()) impl_->rx_thread.join();
    std::lock_guard lock(impl_->mutex);
    for (auto& [mid, ex] : impl_->by_mid) {
        Impl::complete_locked(ex, RequestStatus::Timeout, {});
        ex->cv.notify_all();
    }
}

net::Address CoapEndpoint::local_address() const { return impl_->socket->local_address(); }

std::uint16_t CoapEndpoint::next_message_id() { return impl_->next_mid(); }

std::vector<std::uint8_t> CoapEndpoint::next_token() { return impl_->make_token(); }

RequestOutcome CoapEndpoint::request(const net::Address& peer, CoapMessage msg) {
    if (msg.message_id == 0) msg.message_id = impl_->next_mid();
    if (msg.token.empty() && msg.is_request()) msg.token = impl_->make_token();

    auto ex = std::make_shared<PendingExchange>();
    ex->message_id = msg.message_id;
    ex->token = msg.token;
    {
        std::lock_guard lock(impl_->mutex);
        impl_->by_mid[ex->message_id] = ex;
        if (!ex->token.empty()) impl_->by_token[ex->token] = ex;
    }
    auto bytes = encode(msg);

    auto cleanup = [&] {
        std::lock_guard lock(impl_->mutex);
        impl_->by_mid.erase(ex->message_id);
        if (!ex->token.empty()) impl_->by_token.erase(ex->token);
    };

    std::unique_lock lock(impl_->mutex);
    if (msg.type == MsgType::Con) {
        std::uniform_real_distribution<double> jitter(1.0, impl_->config.ack_random_factor);
        double timeout_s = impl_->config.ack_timeout_s * jitter(impl_->rng);
        for (int attempt = 0; attempt <= impl_->config.max_retransmit && !ex->done; ++attempt) {
            lock.unlock();
            impl_->send_bytes(peer, bytes);
            lock.lock();
            auto deadline = std::chrono::steady_clock::now() +
                            std::chrono::microseconds(static_cast<long>(timeout_s * 1e6));
            ex->cv.wait_until(lock, deadline, [&] { return ex->done || ex->acked; });
            if (ex->acked && !ex->done) {
                // Separate response pending: no more retransmissions.
                auto sep_deadline =
                    std::chrono::steady_clock::now() +
                    std::chrono::microseconds(static_cast<long>(impl_->config.non_timeout_s * 1e6));
                ex->cv.wait_until(lock, sep_deadline, [&] { return ex->done; });
                break;
            }
            timeout_s *= 2;
        }
    } else {
        lock.unlock();
        impl_->send_bytes(peer, bytes);
        lock.lock();
        auto deadline =
            std::chrono::steady_clock::now() +
            std::chrono::microseconds(static_cast<long>(impl_->config.non_timeout_s * 1e6));
        ex->cv.wait_until(lock, deadline, [&] { return ex->done; });
    }
    RequestOutcome outcome;
    outcome.status = ex->done ? ex->status : RequestStatus::Timeout;
    outcome.response = ex->response;
    lock.unlock();
    cleanup();
    return outcome;
}

RequestOutcome CoapEndpoint::observe_request(const net::Address& peer, CoapMessage msg,
                                             NotifyFn fn) {
    if (msg.token.empty()) msg.token = impl_->make_token();
    {
        std::lock_guard lock(impl_->mutex);
        impl_->observers[msg.token] = std::move(fn);
    }
    auto token = msg.token;
    auto outcome = request(peer, std::move(msg));
    if (!outcome.ok()) {
        std::lock_guard lock(impl_->mutex);
        impl_->observers.erase(token);
    }
    return outcome;
}

void CoapEndpoint::cancel_observe_token(const std::vector<std::uint8_t>& token) {
    std::lock_guard lock(impl_->mutex);
    impl_->observers.erase(token);
}

void CoapEndpoint::send_notification(const net::Address& peer, const CoapMessage& msg) {
    CoapMessage out = msg;
    if (out.message_id == 0) out.message_id = impl_->next_mid();
    {
        std::lock_guard lock(impl_->mutex);
        impl_->recent_notifications.emplace_back(out.message_id, out.token);
        while (impl_->recent_notifications.size() > 256) impl_->recent_notifications.pop_front();
    }
    impl_->send_bytes(peer, encode(out));
}

}  // namespace iat::coap
