#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <random>
#include <thread>

#include "coap_reference.hpp"
#include "iat/coap.hpp"
#include "iat/transport.hpp"

using namespace iat;
using coap::CoapMessage;
using coap::MsgType;

namespace {

// Frozen wire vectors, hand-derived from RFC 7252 section 3 and cross-checked
// against the reference encoder below before the codec was built.
const std::vector<std::uint8_t> kConGetVector = {0x41, 0x01, 0x12, 0x34, 0xAB, 0xB5, 0x31,
                                                 0x36, 0x36, 0x36, 0x33, 0x01, 0x30, 0x01,
                                                 0x30};
const std::vector<std::uint8_t> kEmptyAckVector = {0x60, 0x00, 0x12, 0x34};

CoapMessage sample_get() {
    CoapMessage msg;
    msg.type = MsgType::Con;
    msg.code = coap::codes::kGet;
    msg.message_id = 0x1234;
    msg.token = {0xAB};
    msg.set_uri_path("/16663/0/0");
    return msg;
}

std::mt19937& rng() {
    static std::mt19937 gen(20160663);
    return gen;
}

CoapMessage random_valid_message() {
    auto& g = rng();
    CoapMessage msg;
    msg.type = static_cast<MsgType>(g() % 4);
    // avoid the empty code: empty messages carry nothing
    do {
        msg.code = static_cast<std::uint8_t>(g() % 256);
    } while (msg.code == 0 || (coap::code_class(msg.code) == 1) || coap::code_class(msg.code) > 5);
    msg.message_id = static_cast<std::uint16_t>(g());
    std::size_t token_len = g() % 9;
    for (std::size_t i = 0; i < token_len; ++i) {
        msg.token.push_back(static_cast<std::uint8_t>(g()));
    }
    std::size_t option_count = g() % 5;
    for (std::size_t i = 0; i < option_count; ++i) {
        static const std::uint16_t numbers[] = {6, 8, 11, 12, 15, 17};
        std::uint16_t number = numbers[g() % 6];
        std::vector<std::uint8_t> value;
        std::size_t len = g() % 32;
        for (std::size_t j = 0; j < len; ++j) value.push_back(static_cast<std::uint8_t>(g()));
        msg.add_option(number, std::span<const std::uint8_t>(value.data(), value.size()));
    }
    std::size_t payload_len = g() % 64;
    for (std::size_t i = 0; i < payload_len; ++i) {
        msg.payload.push_back(static_cast<std::uint8_t>(g()));
    }
    return msg;
}

}  // namespace

TEST_CASE("reference oracle reproduces the frozen vectors") {
    coap_ref::RefMessage get;
    get.type = 0;
    get.code_class = 0;
    get.code_detail = 1;
    get.message_id = 0x1234;
    get.token = {0xAB};
    get.options = {{11, coap_ref::bytes_of("16663")},
                   {11, coap_ref::bytes_of("0")},
                   {11, coap_ref::bytes_of("0")}};
    CHECK(coap_ref::reference_encode(get) == kConGetVector);

    coap_ref::RefMessage ack;
    ack.type = 2;
    ack.message_id = 0x1234;
    CHECK(coap_ref::reference_encode(ack) == kEmptyAckVector);
}

TEST_CASE("encode matches the frozen vectors") {
    CHECK(coap::encode(sample_get()) == kConGetVector);

    CoapMessage ack;
    ack.type = MsgType::Ack;
    ack.code = coap::codes::kEmpty;
    ack.message_id = 0x1234;
    CHECK(coap::encode(ack) == kEmptyAckVector);
}

TEST_CASE("decode inverts the frozen vectors") {
    auto get = coap::decode(kConGetVector);
    CHECK(get == sample_get());
    CHECK(get.uri_path() == "/16663/0/0");

    auto ack = coap::decode(kEmptyAckVector);
    CHECK(ack.type == MsgType::Ack);
    CHECK(ack.code == coap::codes::kEmpty);
    CHECK(ack.message_id == 0x1234);
    CHECK(ack.token.empty());
    CHECK(ack.options.empty());
}

TEST_CASE("encode agrees with the reference oracle on random messages") {
    for (int i = 0; i < 2000; ++i) {
        auto msg = random_valid_message();
        coap_ref::RefMessage ref;
        ref.type = static_cast<unsigned>(msg.type);
        ref.code_class = coap::code_class(msg.code);
        ref.code_detail = coap::code_detail(msg.code);
        ref.message_id = msg.message_id;
        ref.token = msg.token;
        for (const auto& opt : msg.options) ref.options.push_back({opt.number, opt.value});
        ref.payload = msg.payload;
        CHECK(coap::encode(msg) == coap_ref::reference_encode(ref));
    }
}

TEST_CASE("round trip over generated valid messages") {
    for (int i = 0; i < 10000; ++i) {
        auto msg = random_valid_message();
        auto decoded = coap::decode(coap::encode(msg));
        REQUIRE(decoded == msg);
    }
}

TEST_CASE("fuzzed byte strings never crash decode") {
    auto& g = rng();
    std::size_t decoded_count = 0;
    for (int i = 0; i < 20000; ++i) {
        std::vector<std::uint8_t> data;
        std::size_t len = g() % 48;
        for (std::size_t j = 0; j < len; ++j) data.push_back(static_cast<std::uint8_t>(g()));
        std::string error;
        auto msg = coap::try_decode(data, &error);
        if (msg) {
            ++decoded_count;
        } else {
            CHECK(!error.empty());
        }
    }
    // mutation fuzz around a valid frame
    for (int i = 0; i < 20000; ++i) {
        auto data = kConGetVector;
        std::size_t flips = 1 + g() % 4;
        for (std::size_t f = 0; f < flips; ++f) {
            data[g() % data.size()] ^= static_cast<std::uint8_t>(1u << (g() % 8));
        }
        (void)coap::try_decode(data);
    }
    CHECK(decoded_count < 20000);  // some inputs must be rejected
}

TEST_CASE("decode error cases") {
    std::vector<std::uint8_t> short_frame = {0x40, 0x01, 0x00};
    CHECK(!coap::try_decode(short_frame));

    std::vector<std::uint8_t> bad_version = {0x81, 0x01, 0x00, 0x01};
    CHECK(!coap::try_decode(bad_version));

    std::vector<std::uint8_t> long_token = {0x49, 0x01, 0x00, 0x01};
    CHECK(!coap::try_decode(long_token));

    // payload marker with nothing after it
    std::vector<std::uint8_t> stray_marker = {0x40, 0x01, 0x00, 0x01, 0xFF};
    CHECK(!coap::try_decode(stray_marker));

    // truncated option value
    std::vector<std::uint8_t> truncated = {0x40, 0x01, 0x00, 0x01, 0xB5, 0x31};
    CHECK(!coap::try_decode(truncated));

    // empty message with a token
    std::vector<std::uint8_t> bad_empty = {0x41, 0x00, 0x00, 0x01, 0xAB};
    CHECK(!coap::try_decode(bad_empty));
}

TEST_CASE("encode rejects oversized option fields") {
    CoapMessage msg;
    msg.code = coap::codes::kGet;
    msg.message_id = 1;
    std::vector<std::uint8_t> big(269, 0x42);
    msg.add_option(coap::options::kUriPath, std::span<const std::uint8_t>(big.data(), big.size()));
    CHECK_THROWS_AS((void)coap::encode(msg), Error);

    CoapMessage delta;
    delta.code = coap::codes::kGet;
    delta.message_id = 1;
    delta.add_option(400, std::string_view("x"));
    CHECK_THROWS_AS((void)coap::encode(delta), Error);
}

// --------------------------------------------------------------------------
// Exchange layer

namespace {

coap::ExchangeConfig fast_config() {
    coap::ExchangeConfig config;
    config.ack_timeout_s = 0.08;
    config.ack_random_factor = 1.5;
    config.max_retransmit = 3;
    config.exchange_lifetime_s = 2.0;
    config.non_timeout_s = 0.5;
    return config;
}

}  // namespace

TEST_CASE("request against a live echo endpoint") {
    coap::CoapEndpoint server(net::InProcNetwork::instance().create_socket(), fast_config());
    server.set_handler([](const CoapMessage& request, const net::Address&) {
        CoapMessage response;
        response.code = coap::codes::kContent;
        response.payload = request.payload;
        return response;
    });
    coap::CoapEndpoint client(net::InProcNetwork::instance().create_socket(), fast_config());

    CoapMessage request;
    request.type = MsgType::Con;
    request.code = coap::codes::kGet;
    request.set_uri_path("/1/2/3");
    request.set_payload_text("ping");

    auto outcome = client.request(server.local_address(), request);
    REQUIRE(outcome.ok());
    CHECK(outcome.response.code == coap::codes::kContent);
    CHECK(outcome.response.payload_text() == "ping");
    CHECK(outcome.response.type == MsgType::Ack);

    SUBCASE("NON requests are answered with NON") {
        CoapMessage non = request;
        non.type = MsgType::Non;
        auto non_outcome = client.request(server.local_address(), non);
        REQUIRE(non_outcome.ok());
        CHECK(non_outcome.response.type == MsgType::Non);
    }
}

TEST_CASE("duplicate CON requests replay the cached response without re-invoking") {
    std::atomic<int> invocations{0};
    coap::CoapEndpoint server(net::InProcNetwork::instance().create_socket(), fast_config());
    server.set_handler([&](const CoapMessage&, const net::Address&) {
        ++invocations;
        CoapMessage response;
        response.code = coap::codes::kContent;
        response.set_payload_text("r" + std::to_string(invocations.load()));
        return response;
    });

    auto raw = net::InProcNetwork::instance().create_socket();
    CoapMessage request;
    request.type = MsgType::Con;
    request.code = coap::codes::kGet;
    request.message_id = 0x0FE1;
    request.token = {0x01};
    auto bytes = coap::encode(request);

    raw->send(server.local_address(), bytes);
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    raw->send(server.local_address(), bytes);

    net::Address from;
    std::vector<std::uint8_t> first, second;
    REQUIRE(raw->recv(from, first, std::chrono::milliseconds(500)));
    REQUIRE(raw->recv(from, second, std::chrono::milliseconds(500)));
    CHECK(invocations.load() == 1);
    CHECK(first == second);  // same response bytes twice
}

TEST_CASE("retransmission schedule doubles and exhausts into timeout") {
    auto config = fast_config();
    // black hole: a socket that records arrival times and never answers
    auto sink = net::InProcNetwork::instance().create_socket();
    auto sink_address = sink->local_address();

    std::vector<std::chrono::steady_clock::time_point> arrivals;
    std::atomic<bool> done{false};
    std::thread watcher([&] {
        net::Address from;
        std::vector<std::uint8_t> data;
        while (!done.load()) {
            if (sink->recv(from, data, std::chrono::milliseconds(20))) {
                arrivals.push_back(std::chrono::steady_clock::now());
            }
        }
    });

    coap::CoapEndpoint client(net::InProcNetwork::instance().create_socket(), config);
    CoapMessage request;
    request.type = MsgType::Con;
    request.code = coap::codes::kGet;
    request.set_uri_path("/1");

    auto started = std::chrono::steady_clock::now();
    auto outcome = client.request(sink_address, request);
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    done = true;
    watcher.join();

    CHECK(outcome.status == coap::RequestStatus::Timeout);
    REQUIRE(arrivals.size() == static_cast<std::size_t>(config.max_retransmit) + 1);

    // first gap within [ACK_TIMEOUT, ACK_TIMEOUT * ACK_RANDOM_FACTOR] (plus slack),
    // then each gap roughly doubles
    std::vector<double> gaps;
    for (std::size_t i = 1; i < arrivals.size(); ++i) {
        gaps.push_back(std::chrono::duration<double>(arrivals[i] - arrivals[i - 1]).count());
    }
    CHECK(gaps[0] >= config.ack_timeout_s * 0.9);
    CHECK(gaps[0] <= config.ack_timeout_s * config.ack_random_factor * 1.6);
    for (std::size_t i = 1; i < gaps.size(); ++i) {
        double ratio = gaps[i] / gaps[i - 1];
        CHECK(ratio > 1.5);
        CHECK(ratio < 2.8);
    }
    // total wait ~ ACK_TIMEOUT * (2^(MAX_RETRANSMIT+1) - 1) * jitter
    double nominal = config.ack_timeout_s * ((1 << (config.max_retransmit + 1)) - 1);
    CHECK(elapsed >= nominal * 0.9);
    CHECK(elapsed <= nominal * config.ack_random_factor * 1.6);
}

TEST_CASE("RST answers garbage of CON shape and resets exchanges") {
    coap::CoapEndpoint endpoint(net::InProcNetwork::instance().create_socket(), fast_config());
    auto raw = net::InProcNetwork::instance().create_socket();

    // CON-shaped garbage: valid header, reserved option nibble
    std::vector<std::uint8_t> garbage = {0x40, 0x01, 0xBE, 0xEF, 0xF0, 0x00};
    raw->send(endpoint.local_address(), garbage);
    net::Address from;
    std::vector<std::uint8_t> data;
    REQUIRE(raw->recv(from, data, std::chrono::milliseconds(500)));
    auto rst = coap::decode(data);
    CHECK(rst.type == MsgType::Rst);
    CHECK(rst.message_id == 0xBEEF);

    SUBCASE("client reports reset when the peer answers RST") {
        std::thread responder([&] {
            net::Address peer;
            std::vector<std::uint8_t> request_bytes;
            REQUIRE(raw->recv(peer, request_bytes, std::chrono::milliseconds(500)));
            auto request = coap::decode(request_bytes);
            CoapMessage reset;
            reset.type = MsgType::Rst;
            reset.message_id = request.message_id;
            raw->send(peer, coap::encode(reset));
        });
        CoapMessage request;
        request.type = MsgType::Con;
        request.code = coap::codes::kGet;
        auto outcome = endpoint.request(raw->local_address(), request);
        responder.join();
        CHECK(outcome.status == coap::RequestStatus::Reset);
    }
}

TEST_CASE("separate responses are matched by token") {
    auto config = fast_config();
    auto raw = net::InProcNetwork::instance().create_socket();
    coap::CoapEndpoint client(net::InProcNetwork::instance().create_socket(), config);

    std::thread responder([&] {
        net::Address peer;
        std::vector<std::uint8_t> request_bytes;
        REQUIRE(raw->recv(peer, request_bytes, std::chrono::milliseconds(1000)));
        auto request = coap::decode(request_bytes);

        CoapMessage ack;
        ack.type = MsgType::Ack;
        ack.message_id = request.message_id;
        raw->send(peer, coap::encode(ack));

        std::this_thread::sleep_for(std::chrono::milliseconds(30));
        CoapMessage response;
        response.type = MsgType::Non;
        response.code = coap::codes::kContent;
        response.message_id = 0x7777;
        response.token = request.token;
        response.set_payload_text("later");
        raw->send(peer, coap::encode(response));
    });

    CoapMessage request;
    request.type = MsgType::Con;
    request.code = coap::codes::kGet;
    auto outcome = client.request(raw->local_address(), request);
    responder.join();
    REQUIRE(outcome.ok());
    CHECK(outcome.response.payload_text() == "later");
}

TEST_CASE("duplicate responses are delivered once") {
    auto raw = net::InProcNetwork::instance().create_socket();
    coap::CoapEndpoint client(net::InProcNetwork::instance().create_socket(), fast_config());

    std::thread responder([&] {
        net::Address peer;
        std::vector<std::uint8_t> request_bytes;
        REQUIRE(raw->recv(peer, request_bytes, std::chrono::milliseconds(1000)));
        auto request = coap::decode(request_bytes);
        CoapMessage response;
        response.type = MsgType::Ack;
        response.code = coap::codes::kContent;
        response.message_id = request.message_id;
        response.token = request.token;
        response.set_payload_text("once");
        auto bytes = coap::encode(response);
        raw->send(peer, bytes);
        raw->send(peer, bytes);  // replayed datagram
    });

    CoapMessage request;
    request.type = MsgType::Con;
    request.code = coap::codes::kGet;
    auto outcome = client.request(raw->local_address(), request);
    responder.join();
    REQUIRE(outcome.ok());
    CHECK(outcome.response.payload_text() == "once");
    std::this_thread::sleep_for(std::chrono::milliseconds(50));  // duplicate is dropped quietly
}

TEST_CASE("exchange works over real UDP loopback") {
    coap::CoapEndpoint server(net::make_udp_socket("127.0.0.1", 0), fast_config());
    server.set_handler([](const CoapMessage&, const net::Address&) {
        CoapMessage response;
        response.code = coap::codes::kContent;
        response.set_payload_text("udp");
        return response;
    });
    coap::CoapEndpoint client(net::make_udp_socket("127.0.0.1", 0), fast_config());
    CoapMessage request;
    request.type = MsgType::Con;
    request.code = coap::codes::kGet;
    auto outcome = client.request(server.local_address(), request);
    REQUIRE(outcome.ok());
    CHECK(outcome.response.payload_text() == "udp");
}
