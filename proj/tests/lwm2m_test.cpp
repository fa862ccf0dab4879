#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "iat/cid.hpp"
#include "iat/link_format.hpp"
#include "iat/lwm2m.hpp"
#include "iat/wrapper_gen.hpp"

using namespace iat;
using gen::HandlerKind;
using gen::Handlers;
using lwm2m::Lwm2mClient;
using lwm2m::Lwm2mServer;
using model::ResourcePath;
using model::ResourceValue;

namespace {

coap::ExchangeConfig fast_config() {
    coap::ExchangeConfig config;
    config.ack_timeout_s = 0.08;
    config.max_retransmit = 2;
    config.exchange_lifetime_s = 2.0;
    config.non_timeout_s = 0.5;
    return config;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

class ManualTime final : public lwm2m::TimeSource {
public:
    double now() const override { return t_.load(); }
    void set(double t) { t_.store(t); }
    void advance(double dt) { t_.store(t_.load() + dt); }

private:
    std::atomic<double> t_{0};
};

// test component: Sensor (observable float + writable fields + an action that
// can fail) and Pool (multiple-instance)
const char* kTestCid = R"(
object-type Sensor id=200 {
  resource value id=0 ops=[read] type=float observable;
  resource setpoint id=1 ops=[read,write] type=float;
  resource label id=2 ops=[read,write] type=string;
  resource kick id=3 ops=[execute];
  resource flag id=4 ops=[read] type=boolean observable;
}
object-type Pool id=300 multiple {
  resource depth id=0 ops=[read,write] type=integer;
}
object-type Probe id=400 {
  resource readings id=0 ops=[read] type=float multiple;
}
)";

struct SensorState {
    std::shared_ptr<double> value = std::make_shared<double>(1.5);
    std::shared_ptr<double> setpoint = std::make_shared<double>(0.0);
    std::shared_ptr<std::string> label = std::make_shared<std::string>("s0");
    std::shared_ptr<bool> flag = std::make_shared<bool>(false);
    std::shared_ptr<std::atomic<int>> kicks = std::make_shared<std::atomic<int>>(0);
    std::shared_ptr<std::atomic<bool>> kick_fails = std::make_shared<std::atomic<bool>>(false);
};

gen::HandlerRegistry sensor_registry() {
    gen::HandlerRegistry registry;
    registry.add("Sensor", "value", HandlerKind::Reader, [](const std::any& h) {
        auto s = std::any_cast<SensorState>(h);
        Handlers hs;
        hs.read = [s] { return ResourceValue{*s.value}; };
        return hs;
    });
    registry.add("Sensor", "setpoint", HandlerKind::ReaderWriter, [](const std::any& h) {
        auto s = std::any_cast<SensorState>(h);
        Handlers hs;
        hs.read = [s] { return ResourceValue{*s.setpoint}; };
        hs.write = [s](const ResourceValue& v) { *s.setpoint = std::get<double>(v); };
        return hs;
    });
    registry.add("Sensor", "label", HandlerKind::ReaderWriter, [](const std::any& h) {
        auto s = std::any_cast<SensorState>(h);
        Handlers hs;
        hs.read = [s] { return ResourceValue{*s.label}; };
        hs.write = [s](const ResourceValue& v) { *s.label = std::get<std::string>(v); };
        return hs;
    });
    registry.add("Sensor", "kick", HandlerKind::Executor, [](const std::any& h) {
        auto s = std::any_cast<SensorState>(h);
        Handlers hs;
        hs.execute = [s](std::string_view) {
            if (s.kick_fails->load()) throw HandlerError("kick failed");
            ++*s.kicks;
        };
        return hs;
    });
    registry.add("Sensor", "flag", HandlerKind::Reader, [](const std::any& h) {
        auto s = std::any_cast<SensorState>(h);
        Handlers hs;
        hs.read = [s] { return ResourceValue{*s.flag}; };
        return hs;
    });
    registry.add("Probe", "readings", HandlerKind::Reader, [](const std::any&) {
        Handlers hs;
        hs.read = [] { return ResourceValue{0.5}; };
        hs.read_instances = [] {
            return std::map<std::uint16_t, ResourceValue>{{0, 0.5}, {1, 1.5}, {4, 4.5}};
        };
        return hs;
    });
    return registry;
}

struct Rig {
    std::shared_ptr<ManualTime> time = std::make_shared<ManualTime>();
    SensorState sensor;
    std::unique_ptr<Lwm2mServer> server;
    std::unique_ptr<Lwm2mClient> client;
    lwm2m::RegistrationEntry entry;

    explicit Rig(double lifetime_s = 60.0, bool auto_update = true) {
        auto descriptors = cid::lower_to_descriptors(cid::parse_cid(kTestCid));
        gen::InstanceSpec spec;
        spec.object_id = 200;
        spec.instance_id = 0;
        spec.binding.handle = sensor;
        gen::InstanceSpec probe;
        probe.object_id = 400;
        probe.instance_id = 0;
        auto table = gen::build_dispatch(descriptors, sensor_registry(), {spec, probe});

        server = std::make_unique<Lwm2mServer>(net::InProcNetwork::instance().create_socket(),
                                               fast_config());
        std::map<std::uint16_t, model::ObjectTypeDescriptor> types;
        for (const auto& d : descriptors) types[d.id] = d;
        server->set_registry(types);

        client = std::make_unique<Lwm2mClient>(net::InProcNetwork::instance().create_socket(),
                                               descriptors, std::move(table), time, fast_config());
        lwm2m::ClientConfig config;
        config.endpoint_name = "sensor0";
        config.lifetime_s = lifetime_s;
        config.auto_update = auto_update;
        REQUIRE(client->register_with(server->local_address(), config));
        auto found = server->find_registration("sensor0");
        REQUIRE(found);
        entry = *found;
    }
};

bool wait_for(const std::function<bool()>& pred, int ms = 2000) {
    for (int i = 0; i < ms / 5; ++i) {
        if (pred()) return true;
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    return pred();
}

}  // namespace

TEST_CASE("registration carries the object links in link format") {
    auto descriptors =
        cid::lower_to_descriptors(cid::parse_cid(read_file(std::string(IAT_DATA_DIR) +
                                                           "/smartsilo.cid")));
    gen::HandlerRegistry registry;
    auto reader = [](const std::any&) {
        Handlers hs;
        hs.read = [] { return ResourceValue{false}; };
        return hs;
    };
    auto executor = [](const std::any&) {
        Handlers hs;
        hs.execute = [](std::string_view) {};
        return hs;
    };
    registry.add("SmartSilo", "filling", HandlerKind::Reader, reader);
    registry.add("SmartSilo", "fill", HandlerKind::Executor, executor);
    registry.add("Heater", "status", HandlerKind::Reader, reader);
    registry.add("Heater", "heaterOn", HandlerKind::Executor, executor);
    registry.add("Heater", "heaterOff", HandlerKind::Executor, executor);
    registry.add("Valve", "state", HandlerKind::Reader, reader);
    registry.add("Valve", "open", HandlerKind::Executor, executor);
    registry.add("Valve", "close", HandlerKind::Executor, executor);

    gen::InstanceSpec spec;
    spec.object_id = 16663;
    spec.instance_id = 0;
    spec.binding.handle = std::any{};
    spec.binding.children["heater"] = gen::ComponentBinding{std::any{}, {}};
    spec.binding.children["inValve"] = gen::ComponentBinding{std::any{}, {}};
    auto table = gen::build_dispatch(descriptors, registry, {spec});

    Lwm2mClient client(net::InProcNetwork::instance().create_socket(), descriptors,
                       std::move(table), lwm2m::steady_time_source(), fast_config());
    // every (object, instance) of the table, id-sorted
    auto payload = client.registration_payload();
    CHECK(payload == "</16663/0>,</16664/1>,</16668/0>");
    for (const char* link : {"</16663/0>", "</16668/0>", "</16664/1>"}) {
        CHECK(payload.find(link) != std::string::npos);
    }

    // the payload a server receives parses back to the same instance list
    Lwm2mServer server(net::InProcNetwork::instance().create_socket(), fast_config());
    lwm2m::ClientConfig config;
    config.endpoint_name = "smartSilo";
    REQUIRE(client.register_with(server.local_address(), config));
    auto entry = server.find_registration("smartSilo");
    REQUIRE(entry);
    CHECK(entry->object_links ==
          std::vector<std::pair<std::uint16_t, std::uint16_t>>{
              {16663, 0}, {16664, 1}, {16668, 0}});
}

TEST_CASE("registration lifecycle") {
    Rig rig(1.2, true);
    CHECK(rig.entry.endpoint_name == "sensor0");
    CHECK(rig.entry.lifetime_s == 1.2);
    CHECK(rig.entry.location.rfind("/rd/", 0) == 0);
    REQUIRE(rig.entry.object_links.size() == 2);
    CHECK(rig.entry.object_links[0] == std::make_pair(std::uint16_t{200}, std::uint16_t{0}));
    CHECK(rig.entry.object_links[1] == std::make_pair(std::uint16_t{400}, std::uint16_t{0}));

    SUBCASE("re-registration is idempotent: same location") {
        lwm2m::ClientConfig config;
        config.endpoint_name = "sensor0";
        config.lifetime_s = 1.2;
        REQUIRE(rig.client->register_with(rig.server->local_address(), config));
        auto again = rig.server->find_registration("sensor0");
        REQUIRE(again);
        CHECK(again->location == rig.entry.location);
        CHECK(rig.server->registrations().size() == 1);
    }
    SUBCASE("updates at lifetime/2 keep the entry alive") {
        std::this_thread::sleep_for(std::chrono::milliseconds(2600));  // > 2 lifetimes
        CHECK(rig.server->find_registration("sensor0"));
    }
    SUBCASE("deregistration removes the entry") {
        rig.client->deregister();
        CHECK(!rig.server->find_registration("sensor0"));
    }
}

TEST_CASE("registration expires when updates stop") {
    Rig rig(0.5, false);
    CHECK(rig.server->find_registration("sensor0"));
    CHECK(wait_for([&] { return !rig.server->find_registration("sensor0"); }, 2000));
}

TEST_CASE("read") {
    Rig rig;
    SUBCASE("single resource") {
        auto response = rig.server->read(rig.entry, ResourcePath::resource(200, 0, 0));
        REQUIRE(response.ok());
        CHECK(response.code == coap::codes::kContent);
        CHECK(response.payload_text() == "1.5");
        auto typed = rig.server->read_value(rig.entry, ResourcePath::resource(200, 0, 0));
        REQUIRE(typed);
        CHECK(std::get<double>(*typed) == 1.5);
    }
    SUBCASE("composite instance read returns the value map of readable resources") {
        auto response = rig.server->read(rig.entry, ResourcePath::instance(200, 0));
        REQUIRE(response.ok());
        CHECK(response.payload_text() ==
              R"({"0":1.5,"1":0.0,"2":"s0","4":false})");
    }
    SUBCASE("execute-only resources reject read") {
        auto response = rig.server->read(rig.entry, ResourcePath::resource(200, 0, 3));
        CHECK(response.code == coap::codes::kMethodNotAllowed);
    }
    SUBCASE("unknown paths give 4.04") {
        CHECK(rig.server->read(rig.entry, ResourcePath::resource(200, 0, 99)).code ==
              coap::codes::kNotFound);
        CHECK(rig.server->read(rig.entry, ResourcePath::instance(999, 0)).code ==
              coap::codes::kNotFound);
        CHECK(rig.server->read(rig.entry, ResourcePath::instance(200, 9)).code ==
              coap::codes::kNotFound);
    }
    SUBCASE("multiple-instance resources read as an id -> value map") {
        auto response = rig.server->read(rig.entry, ResourcePath::resource(400, 0, 0));
        REQUIRE(response.ok());
        CHECK(response.payload_text() == R"({"0":0.5,"1":1.5,"4":4.5})");
        CHECK(rig.server->read(rig.entry, ResourcePath::resource_instance(400, 0, 0, 1))
                  .payload_text() == "1.5");
        CHECK(rig.server->read(rig.entry, ResourcePath::resource_instance(400, 0, 0, 2)).code ==
              coap::codes::kNotFound);
    }
}

TEST_CASE("write") {
    Rig rig;
    SUBCASE("write then read reflects the value") {
        auto response =
            rig.server->write(rig.entry, ResourcePath::resource(200, 0, 1), ResourceValue{35.0});
        REQUIRE(response.ok());
        CHECK(response.code == coap::codes::kChanged);
        CHECK(rig.server->read(rig.entry, ResourcePath::resource(200, 0, 1)).payload_text() ==
              "35");
    }
    SUBCASE("tag mismatch is 4.00") {
        auto response = rig.server->write_text(rig.entry, ResourcePath::resource(200, 0, 1),
                                               "not-a-number");
        CHECK(response.code == coap::codes::kBadRequest);
    }
    SUBCASE("write to a read-only resource is 4.05") {
        auto response =
            rig.server->write(rig.entry, ResourcePath::resource(200, 0, 0), ResourceValue{2.0});
        CHECK(response.code == coap::codes::kMethodNotAllowed);
    }
    SUBCASE("instance-level write applies a value map") {
        auto response = rig.server->write_text(rig.entry, ResourcePath::instance(200, 0),
                                               R"({"1":7.25,"2":"renamed"})");
        REQUIRE(response.ok());
        CHECK(*rig.sensor.setpoint == 7.25);
        CHECK(*rig.sensor.label == "renamed");
    }
}

TEST_CASE("execute") {
    Rig rig;
    SUBCASE("invokes the executor exactly once per request") {
        auto response = rig.server->execute(rig.entry, ResourcePath::resource(200, 0, 3));
        REQUIRE(response.ok());
        CHECK(response.code == coap::codes::kChanged);
        CHECK(rig.sensor.kicks->load() == 1);
    }
    SUBCASE("execute on an object instance path is 4.05") {
        auto response = rig.server->execute(rig.entry, ResourcePath::instance(200, 0));
        CHECK(response.code == coap::codes::kMethodNotAllowed);
    }
    SUBCASE("execute on a read resource is 4.05") {
        auto response = rig.server->execute(rig.entry, ResourcePath::resource(200, 0, 0));
        CHECK(response.code == coap::codes::kMethodNotAllowed);
    }
    SUBCASE("executor failure maps to 5.00") {
        rig.sensor.kick_fails->store(true);
        auto response = rig.server->execute(rig.entry, ResourcePath::resource(200, 0, 3));
        CHECK(response.code == coap::codes::kInternalError);
    }
}

TEST_CASE("discover") {
    Rig rig;
    auto response = rig.server->discover(rig.entry, ResourcePath::object(200));
    REQUIRE(response.ok());
    auto links = linkfmt::parse(response.payload_text());
    std::set<std::string> targets;
    for (const auto& link : links) targets.insert(link.target);
    CHECK(targets.count("/200/0"));
    CHECK(targets.count("/200/0/0"));
    CHECK(targets.count("/200/0/3"));

    // declared operations conveyed as the ops attribute
    for (const auto& link : links) {
        if (link.target == "/200/0/1") CHECK(link.attrs.at("ops") == "RW");
        if (link.target == "/200/0/3") CHECK(link.attrs.at("ops") == "E");
        if (link.target == "/200/0/0") {
            CHECK(link.attrs.at("ops") == "R");
            CHECK(link.attrs.count("obs"));
        }
    }

    SUBCASE("round trip: listing parses back to the same id set") {
        std::set<std::string> expected;
        expected.insert("/200/0");
        for (std::uint16_t r : {0, 1, 2, 3, 4}) {
            expected.insert(ResourcePath::resource(200, 0, r).render());
        }
        CHECK(targets == expected);
    }
    SUBCASE("unknown object") {
        CHECK(rig.server->discover(rig.entry, ResourcePath::object(999)).code ==
              coap::codes::kNotFound);
    }
}

TEST_CASE("observe") {
    Rig rig;
    struct Note {
        std::uint32_t seq;
        std::string payload;
    };
    std::mutex notes_mutex;
    std::vector<Note> notes;
    auto on_notify = [&](std::uint32_t seq, const std::string& payload) {
        std::lock_guard lock(notes_mutex);
        notes.push_back({seq, payload});
    };
    auto note_count = [&] {
        std::lock_guard lock(notes_mutex);
        return notes.size();
    };

    Lwm2mServer::ObserveHandle handle;
    auto response =
        rig.server->observe(rig.entry, ResourcePath::resource(200, 0, 0), on_notify, handle);
    REQUIRE(response.ok());
    CHECK(response.payload_text() == "1.5");

    SUBCASE("value changes produce notifications with increasing sequence numbers") {
        for (int i = 1; i <= 10; ++i) {
            *rig.sensor.value = 1.5 + i;
            rig.client->notify_state_changed();
            REQUIRE(wait_for([&] { return note_count() >= static_cast<std::size_t>(i); }));
        }
        std::lock_guard lock(notes_mutex);
        REQUIRE(notes.size() == 10);
        for (std::size_t i = 0; i < notes.size(); ++i) {
            if (i > 0) CHECK(notes[i].seq > notes[i - 1].seq);
        }
        CHECK(notes.back().payload == "11.5");
    }
    SUBCASE("cancel stops notifications") {
        *rig.sensor.value = 9.0;
        rig.client->notify_state_changed();
        REQUIRE(wait_for([&] { return note_count() >= 1; }));
        auto cancel = rig.server->cancel_observe(rig.entry, handle);
        REQUIRE(cancel.ok());
        CHECK(rig.client->observe_relation_count() == 0);
        auto counted = note_count();
        *rig.sensor.value = 10.0;
        rig.client->notify_state_changed();
        std::this_thread::sleep_for(std::chrono::milliseconds(150));
        CHECK(note_count() == counted);
    }
    SUBCASE("observe on a non-observable resource is 4.05") {
        Lwm2mServer::ObserveHandle other;
        auto bad = rig.server->observe(rig.entry, ResourcePath::resource(200, 0, 1),
                                       [](std::uint32_t, const std::string&) {}, other);
        CHECK(bad.code == coap::codes::kMethodNotAllowed);
    }
}

TEST_CASE("write attributes pace notifications") {
    Rig rig;
    // pmin/pmax run on the client's time source; drive it manually
    rig.time->set(100.0);

    SUBCASE("pmin > pmax is 4.00") {
        lwm2m::NotifyAttributes attrs;
        attrs.pmin_s = 5;
        attrs.pmax_s = 1;
        CHECK(rig.server->write_attributes(rig.entry, ResourcePath::resource(200, 0, 0), attrs)
                  .code == coap::codes::kBadRequest);
    }
    SUBCASE("pmin rate-limits, pmax heartbeats") {
        lwm2m::NotifyAttributes attrs;
        attrs.pmin_s = 10;
        attrs.pmax_s = 50;
        REQUIRE(rig.server
                    ->write_attributes(rig.entry, ResourcePath::resource(200, 0, 0), attrs)
                    .ok());

        std::mutex notes_mutex;
        std::vector<std::string> notes;
        Lwm2mServer::ObserveHandle handle;
        REQUIRE(rig.server
                    ->observe(rig.entry, ResourcePath::resource(200, 0, 0),
                              [&](std::uint32_t, const std::string& p) {
                                  std::lock_guard lock(notes_mutex);
                                  notes.push_back(p);
                              },
                              handle)
                    .ok());
        auto count = [&] {
            std::lock_guard lock(notes_mutex);
            return notes.size();
        };

        // a change inside the pmin window is deferred
        *rig.sensor.value = 2.0;
        rig.time->set(101.0);
        rig.client->notify_state_changed();
        std::this_thread::sleep_for(std::chrono::milliseconds(120));
        CHECK(count() == 0);

        // once pmin elapses the pending change is sent
        rig.time->set(110.5);
        rig.client->notify_state_changed();
        REQUIRE(wait_for([&] { return count() == 1; }));

        // no further change: pmax heartbeat fires
        rig.time->set(161.0);
        rig.client->notify_state_changed();
        REQUIRE(wait_for([&] { return count() == 2; }));
        std::lock_guard lock(notes_mutex);
        CHECK(notes[0] == "2");
        CHECK(notes[1] == "2");
    }
}

TEST_CASE("create and delete on a multiple-instance type") {
    Rig rig;
    // the Pool factory stores one integer cell per created instance
    auto depths = std::make_shared<std::map<std::uint16_t, std::shared_ptr<std::int64_t>>>();
    rig.client->set_instance_factory(300, [depths](std::uint16_t instance_id) {
        auto cell = std::make_shared<std::int64_t>(0);
        (*depths)[instance_id] = cell;
        std::map<std::uint16_t, Handlers> handlers;
        Handlers depth;
        depth.read = [cell] { return ResourceValue{*cell}; };
        depth.write = [cell](const ResourceValue& v) { *cell = std::get<std::int64_t>(v); };
        handlers[0] = depth;
        return handlers;
    });

    auto created = rig.server->create(rig.entry, 300);
    REQUIRE(created.ok());
    CHECK(created.code == coap::codes::kCreated);
    CHECK(created.location == "/300/0");

    SUBCASE("the new instance is readable, writable and discoverable") {
        CHECK(rig.server->read(rig.entry, ResourcePath::resource(300, 0, 0)).payload_text() ==
              "0");
        REQUIRE(rig.server
                    ->write(rig.entry, ResourcePath::resource(300, 0, 0),
                            ResourceValue{std::int64_t{7}})
                    .ok());
        CHECK(rig.server->read(rig.entry, ResourcePath::resource(300, 0, 0)).payload_text() ==
              "7");
        auto listing = rig.server->discover(rig.entry, ResourcePath::object(300));
        CHECK(listing.payload_text().find("</300/0/0>") != std::string::npos);
    }
    SUBCASE("create allocates fresh ids and delete removes them") {
        auto second = rig.server->create(rig.entry, 300, R"({"0":42})");
        REQUIRE(second.ok());
        CHECK(second.location == "/300/1");
        CHECK(rig.server->read(rig.entry, ResourcePath::resource(300, 1, 0)).payload_text() ==
              "42");

        auto deleted = rig.server->remove(rig.entry, ResourcePath::instance(300, 1));
        CHECK(deleted.code == coap::codes::kDeleted);
        CHECK(rig.server->read(rig.entry, ResourcePath::resource(300, 1, 0)).code ==
              coap::codes::kNotFound);
    }
    SUBCASE("registration updates carry the new link set") {
        REQUIRE(wait_for([&] {
            auto entry = rig.server->find_registration("sensor0");
            if (!entry) return false;
            for (auto [o, i] : entry->object_links) {
                if (o == 300 && i == 0) return true;
            }
            return false;
        }));
    }
    SUBCASE("create on a single-instance type with an existing instance is 4.05") {
        CHECK(rig.server->create(rig.entry, 200).code == coap::codes::kMethodNotAllowed);
    }
    SUBCASE("delete on a single-instance type is 4.05") {
        CHECK(rig.server->remove(rig.entry, ResourcePath::instance(200, 0)).code ==
              coap::codes::kMethodNotAllowed);
    }
    SUBCASE("delete of an unknown instance is 4.04") {
        CHECK(rig.server->remove(rig.entry, ResourcePath::instance(300, 9)).code ==
              coap::codes::kNotFound);
    }
}

TEST_CASE("server write attributes wire shape uses Uri-Query pmin/pmax") {
    Rig rig;
    lwm2m::NotifyAttributes attrs;
    attrs.pmin_s = 1;
    CHECK(rig.server->write_attributes(rig.entry, ResourcePath::resource(200, 0, 0), attrs).ok());
    // discover reflects the stored attribute
    auto listing = rig.server->discover(rig.entry, ResourcePath::resource(200, 0, 0));
    CHECK(listing.payload_text().find("pmin=\"1\"") != std::string::npos);
}
