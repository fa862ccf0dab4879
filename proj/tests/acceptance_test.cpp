// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exits nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "coap_reference.hpp"
#include "iat/bench.hpp"
#include "iat/cid.hpp"
#include "iat/deployment.hpp"
#include "iat/orchestrator.hpp"

using namespace iat;
namespace fs = std::filesystem;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool condition, const std::string& what) {
    if (!condition) throw Failure(what);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string data_file(const std::string& name) {
    return read_file(fs::path(IAT_DATA_DIR) / name);
}

deploy::DeploymentConfig fast_deployment(deploy::TransportKind transport) {
    deploy::DeploymentConfig config;
    config.transport = transport;
    config.driver_dt_s = 0.1;
    config.driver_pace_us = 50;
    config.exchange.ack_timeout_s = 0.25;
    config.exchange.max_retransmit = 3;
    config.exchange.non_timeout_s = 2.0;
    return config;
}

orch::OrchestratorConfig fast_orchestrator() {
    orch::OrchestratorConfig config;
    config.poll_period_s = 0.4;
    config.real_deadline_s = 30;
    return config;
}

// ---------------------------------------------------------------------------

// 1. Fixture fidelity: the shipped SmartSilo CID lowers and emits exactly the
//    ids/names/operations of the annotated source fixture; byte-stable.
void criterion_fixture_fidelity() {
    auto text = data_file("smartsilo.cid");
    auto doc = cid::parse_cid(text);
    auto descriptors = cid::lower_to_descriptors(doc);
    auto json_first = gen::emit_descriptor_json(descriptors);

    const model::ObjectTypeDescriptor* silo = nullptr;
    for (const auto& d : descriptors) {
        if (d.id == 16663) silo = &d;
    }
    require(silo != nullptr, "object 16663 missing");
    require(silo->name == "SmartSilo", "object 16663 must be named SmartSilo");
    require(silo->instance_kind == model::InstanceKind::Single, "SmartSilo must be single");

    require(silo->resources.size() == 2, "SmartSilo must declare exactly resources 0 and 2");
    const auto& filling = silo->resources[0];
    require(filling.id == 0 && filling.name == "filling", "resource 0 must be \"filling\"");
    require(filling.operations == model::ops_read(), "filling must declare READ only");
    require(filling.value_type == model::ValueType::Boolean, "filling must be boolean");
    const auto& fill = silo->resources[1];
    require(fill.id == 2 && fill.name == "fill", "resource 2 must be \"fill\"");
    require(fill.operations == model::ops_execute(), "fill must declare EXECUTE only");

    require(silo->instance_refs.size() == 2, "SmartSilo must declare exactly two instance refs");
    require(silo->instance_refs[0].id == 0 && silo->instance_refs[0].name == "heater" &&
                silo->instance_refs[0].object_type_id == 16668,
            "instance ref 0 must be heater -> 16668");
    require(silo->instance_refs[1].id == 1 && silo->instance_refs[1].name == "inValve" &&
                silo->instance_refs[1].object_type_id == 16664,
            "instance ref 1 must be inValve -> 16664");

    require(json_first.find("\"name\":\"SmartSilo\",\"id\":16663") != std::string::npos,
            "JSON must carry name/id");
    require(json_first.find("\"id\":2,\"name\":\"fill\",\"operations\":[\"E\"]") !=
                std::string::npos,
            "JSON must carry the fill EXECUTE entry");

    // byte stability across independent runs, including a reparse cycle
    for (int i = 0; i < 5; ++i) {
        auto again = gen::emit_descriptor_json(
            cid::lower_to_descriptors(cid::parse_cid(data_file("smartsilo.cid"))));
        require(again == json_first, "descriptor JSON must be byte-stable across runs");
        auto reparsed = gen::parse_descriptor_json(again);
        require(gen::emit_descriptor_json(reparsed) == json_first,
                "descriptor JSON must survive a parse/emit cycle byte-identically");
    }
}

// 2. Legality matrix, exhaustive; EXECUTE on an object instance rejected with
//    4.05 end to end over the wire.
void criterion_legality_matrix() {
    model::ObjectTypeDescriptor probe;
    probe.name = "Probe";
    probe.id = 100;
    model::ResourceDescriptor all;
    all.id = 1;
    all.name = "all";
    all.operations = {true, true, true};
    all.instance_kind = model::InstanceKind::Multiple;
    probe.resources.push_back(all);
    auto registry = model::ObjectRegistry::build({probe});
    registry.add_instance(100, 0);

    const model::ResourcePath paths[4] = {
        model::ResourcePath::object(100),
        model::ResourcePath::instance(100, 0),
        model::ResourcePath::resource(100, 0, 1),
        model::ResourcePath::resource_instance(100, 0, 1, 0),
    };
    struct Row {
        model::Lwm2mOp op;
        bool legal[4];
    };
    const Row matrix[] = {
        {model::Lwm2mOp::Read, {true, true, true, true}},
        {model::Lwm2mOp::Write, {true, true, true, true}},
        {model::Lwm2mOp::Execute, {false, false, true, false}},
        {model::Lwm2mOp::Discover, {true, true, true, true}},
        {model::Lwm2mOp::WriteAttributes, {true, true, true, true}},
        {model::Lwm2mOp::Create, {true, false, false, false}},
        {model::Lwm2mOp::Delete, {false, true, false, false}},
        {model::Lwm2mOp::Observe, {false, true, true, false}},
    };
    for (const auto& row : matrix) {
        for (int d = 0; d < 4; ++d) {
            bool got = model::legality_check(row.op, paths[d], registry).ok();
            require(got == row.legal[d], std::string("legality(") + model::to_string(row.op) +
                                             ", depth " + std::to_string(d + 1) + ") must be " +
                                             (row.legal[d] ? "ok" : "violation"));
        }
    }

    // end to end over UDP: EXECUTE on /16663/0 answers 4.05
    deploy::Deployment deployment(fast_deployment(deploy::TransportKind::Udp));
    auto entry = deployment.server().find_registration("smartSilo1");
    require(entry.has_value(), "smartSilo1 must be registered");
    auto response = deployment.server().execute(*entry, model::ResourcePath::instance(16663, 0));
    require(response.status == coap::RequestStatus::Ok, "execute must get a response");
    require(response.code == coap::codes::kMethodNotAllowed,
            "EXECUTE /16663/0 must answer 4.05, got " + response.code_text());
}

// 3. CoAP codec: >= 10^4 round trips, frozen hand-encoded vectors, fuzz safety.
void criterion_coap_codec() {
    const std::vector<std::uint8_t> kConGet = {0x41, 0x01, 0x12, 0x34, 0xAB, 0xB5, 0x31, 0x36,
                                               0x36, 0x36, 0x33, 0x01, 0x30, 0x01, 0x30};
    const std::vector<std::uint8_t> kEmptyAck = {0x60, 0x00, 0x12, 0x34};

    // the independent reference encoding, computed again here
    coap_ref::RefMessage ref_get;
    ref_get.type = 0;
    ref_get.code_class = 0;
    ref_get.code_detail = 1;
    ref_get.message_id = 0x1234;
    ref_get.token = {0xAB};
    ref_get.options = {{11, coap_ref::bytes_of("16663")},
                       {11, coap_ref::bytes_of("0")},
                       {11, coap_ref::bytes_of("0")}};
    require(coap_ref::reference_encode(ref_get) == kConGet, "oracle must match the GET vector");
    coap_ref::RefMessage ref_ack;
    ref_ack.type = 2;
    ref_ack.message_id = 0x1234;
    require(coap_ref::reference_encode(ref_ack) == kEmptyAck, "oracle must match the ACK vector");

    coap::CoapMessage get;
    get.type = coap::MsgType::Con;
    get.code = coap::codes::kGet;
    get.message_id = 0x1234;
    get.token = {0xAB};
    get.set_uri_path("/16663/0/0");
    require(coap::encode(get) == kConGet, "codec must reproduce the GET vector");
    require(coap::decode(kConGet) == get, "codec must invert the GET vector");

    coap::CoapMessage ack;
    ack.type = coap::MsgType::Ack;
    ack.message_id = 0x1234;
    require(coap::encode(ack) == kEmptyAck, "codec must reproduce the empty ACK vector");

    std::mt19937 gen(7777);
    for (int i = 0; i < 10000; ++i) {
        coap::CoapMessage msg;
        msg.type = static_cast<coap::MsgType>(gen() % 4);
        do {
            msg.code = static_cast<std::uint8_t>(gen() % 256);
        } while (msg.code == 0 || coap::code_class(msg.code) == 1 ||
                 coap::code_class(msg.code) > 5);
        msg.message_id = static_cast<std::uint16_t>(gen());
        for (std::size_t t = gen() % 9; t > 0; --t) {
            msg.token.push_back(static_cast<std::uint8_t>(gen()));
        }
        static const std::uint16_t numbers[] = {6, 8, 11, 12, 15, 17};
        for (std::size_t o = gen() % 5; o > 0; --o) {
            std::vector<std::uint8_t> value(gen() % 24);
            for (auto& b : value) b = static_cast<std::uint8_t>(gen());
            msg.add_option(numbers[gen() % 6],
                           std::span<const std::uint8_t>(value.data(), value.size()));
        }
        for (std::size_t p = gen() % 48; p > 0; --p) {
            msg.payload.push_back(static_cast<std::uint8_t>(gen()));
        }
        require(coap::decode(coap::encode(msg)) == msg, "round trip must be the identity");
    }

    for (int i = 0; i < 20000; ++i) {
        std::vector<std::uint8_t> bytes(gen() % 40);
        for (auto& b : bytes) b = static_cast<std::uint8_t>(gen());
        (void)coap::try_decode(bytes);  // must not crash; errors are values
    }
}

// 4. Dedup and retransmission with shrunken constants.
void criterion_dedup_retransmission() {
    // duplicate CON EXECUTE invokes the fill executor exactly once
    deploy::Deployment deployment(fast_deployment(deploy::TransportKind::Udp));
    auto address = deployment.client("smartSilo1").local_address();

    auto raw = net::make_udp_socket("127.0.0.1", 0);
    coap::CoapMessage execute;
    execute.type = coap::MsgType::Con;
    execute.code = coap::codes::kPost;
    execute.message_id = 0x4242;
    execute.token = {0x11};
    execute.set_uri_path("/16663/0/2");
    auto bytes = coap::encode(execute);

    raw->send(address, bytes);
    net::Address from;
    std::vector<std::uint8_t> response_bytes;
    require(raw->recv(from, response_bytes, std::chrono::milliseconds(2000)),
            "fill execute must answer");
    auto first = coap::decode(response_bytes);
    require(first.code == coap::codes::kChanged, "fill must answer 2.04");
    bool valve_after_first = deployment.plant()->silo(1).in_valve;
    require(valve_after_first, "fill must open the input valve");

    // make the duplicate distinguishable: close the valve again
    deployment.plant()->command(1, plant::CommandKind::Stop);
    require(!deployment.plant()->silo(1).in_valve, "stop must close the valve");

    raw->send(address, bytes);  // retransmission of the same message id
    require(raw->recv(from, response_bytes, std::chrono::milliseconds(2000)),
            "duplicate must be answered from the cache");
    auto second = coap::decode(response_bytes);
    require(coap::encode(second) == coap::encode(first), "duplicate response must be identical");
    require(!deployment.plant()->silo(1).in_valve,
            "duplicate EXECUTE must not run the executor again");

    // retransmission gaps: doubling schedule, first gap in [t, 1.5t]
    coap::ExchangeConfig config;
    config.ack_timeout_s = 0.08;
    config.ack_random_factor = 1.5;
    config.max_retransmit = 3;
    auto sink = net::InProcNetwork::instance().create_socket();
    std::vector<std::chrono::steady_clock::time_point> arrivals;
    std::atomic<bool> done{false};
    std::thread watcher([&] {
        net::Address peer;
        std::vector<std::uint8_t> data;
        while (!done.load()) {
            if (sink->recv(peer, data, std::chrono::milliseconds(10))) {
                arrivals.push_back(std::chrono::steady_clock::now());
            }
        }
    });
    coap::CoapEndpoint client(net::InProcNetwork::instance().create_socket(), config);
    coap::CoapMessage request;
    request.type = coap::MsgType::Con;
    request.code = coap::codes::kGet;
    auto outcome = client.request(sink->local_address(), request);
    done = true;
    watcher.join();
    require(outcome.status == coap::RequestStatus::Timeout, "black hole must time out");
    require(arrivals.size() == 4, "1 + MAX_RETRANSMIT transmissions expected, got " +
                                      std::to_string(arrivals.size()));
    std::vector<double> gaps;
    for (std::size_t i = 1; i < arrivals.size(); ++i) {
        gaps.push_back(std::chrono::duration<double>(arrivals[i] - arrivals[i - 1]).count());
    }
    require(gaps[0] >= config.ack_timeout_s * 0.9 &&
                gaps[0] <= config.ack_timeout_s * config.ack_random_factor * 1.6,
            "first retransmit gap must start within [ACK_TIMEOUT, 1.5*ACK_TIMEOUT]");
    for (std::size_t i = 1; i < gaps.size(); ++i) {
        double ratio = gaps[i] / gaps[i - 1];
        require(ratio > 1.5 && ratio < 2.8, "retransmit gaps must double");
    }
}

// 5. End-to-end kind-B batch under the virtual clock over UDP loopback.
void criterion_end_to_end_batch() {
    deploy::Deployment deployment(fast_deployment(deploy::TransportKind::Udp));
    auto handle = deployment.handle(fast_orchestrator());

    orch::Recipe recipe;
    recipe.kind = orch::Recipe::Kind::B;
    recipe.target_temp = 35;
    recipe.mix_time_s = 10;
    recipe.batch_id = "B1";

    auto trace = orch::run_batch(recipe, handle);
    std::vector<std::string> phases;
    static const std::vector<std::string> expected = {"fill2",  "heat2", "transfer_2_to_3",
                                                      "mix3",   "empty3", "done"};
    for (const auto& e : trace.events()) {
        for (const auto& name : expected) {
            if (e.event == name) phases.push_back(e.event);
        }
    }
    require(phases == expected, "phase sequence must be fill2,heat2,transfer_2_to_3,mix3,empty3,done");

    // heat2 ends at the first step where T2 >= 35: the plant's heater auto-off
    // fires exactly at that step; verify against the closed-form crossing time.
    double heater_on_time = -1, heater_off_time = -1;
    for (const auto& r : deployment.plant()->trace()) {
        if (r.component == "silo2" && r.event == "heater") {
            if (r.value == "on" && heater_on_time < 0) heater_on_time = r.time_s;
            if (r.value == "off" && heater_off_time < 0) heater_off_time = r.time_s;
        }
    }
    require(heater_on_time >= 0 && heater_off_time >= 0, "heater on/off events must be traced");
    double heated_for = heater_off_time - heater_on_time;
    // closed form: (35 - 20) / (1 degC/s) = 15 s, reached within one step
    require(std::abs(heated_for - 15.0) <= 0.1 + 1e-9,
            "heat2 must end at the first step where T2 >= 35 (heated " +
                std::to_string(heated_for) + " s)");
    require(deployment.plant()->silo(2).temperature <= 35.0 + 0.1 + 1e-9,
            "no overshoot beyond one step");
    require(orch::check_trace(trace.events()).ok(), "batch trace must check clean");
}

// 6. Constraint properties over >= 100 randomized parallel recipe pairs.
void criterion_constraint_properties() {
    std::mt19937 gen(20230663);
    for (int run = 0; run < 100; ++run) {
        deploy::Deployment deployment(fast_deployment(deploy::TransportKind::InProc));
        auto handle = deployment.handle(fast_orchestrator());

        orch::Recipe a;
        a.kind = orch::Recipe::Kind::A;
        a.batch_id = "A" + std::to_string(run);
        a.basic_process_time_s = 0.5 + (gen() % 40) * 0.1;
        a.target_temp = 24 + static_cast<double>(gen() % 120) * 0.1;
        a.mix_time_s = 0.5 + (gen() % 30) * 0.1;

        orch::Recipe b;
        b.kind = orch::Recipe::Kind::B;
        b.batch_id = "B" + std::to_string(run);
        b.target_temp = 24 + static_cast<double>(gen() % 120) * 0.1;
        b.mix_time_s = 0.5 + (gen() % 30) * 0.1;

        auto trace = orch::run_parallel({a, b}, handle);
        auto events = trace.events();
        for (const auto& batch : {a.batch_id, b.batch_id}) {
            bool done = false;
            for (const auto& e : events) {
                if (e.batch_id == batch && e.event == "done") done = true;
            }
            require(done, "batch " + batch + " must complete (run " + std::to_string(run) + ")");
        }
        auto check = orch::check_trace(events);
        if (!check.ok()) {
            std::string detail;
            for (const auto& v : check.violations) detail += v + "; ";
            throw Failure("run " + std::to_string(run) + ": " + detail);
        }
    }

    // forged counterexamples are rejected
    std::vector<orch::TraceEvent> forged_pipe = {
        {0, "A", "pipe_acquired"}, {1, "B", "pipe_acquired"},
        {2, "A", "pipe_released"}, {3, "B", "pipe_released"}};
    require(!orch::check_trace(forged_pipe).ok(), "forged pipe overlap must be rejected");
    std::vector<orch::TraceEvent> forged_mixer = {
        {0, "A", "mixer_on silo=4"}, {1, "B", "mixer_on silo=3"},
        {2, "A", "mixer_off silo=4"}, {3, "B", "mixer_off silo=3"}};
    require(!orch::check_trace(forged_mixer).ok(), "forged mixer overlap must be rejected");
}

// 7. Conservation and bounds under randomized command fuzzing, >= 1e5 steps.
void criterion_conservation_bounds() {
    auto plant = std::make_shared<plant::Plant>(plant::PlantConfig::defaults(),
                                                plant::Clock::make_virtual());
    std::mt19937 gen(31337);
    const double dt = 0.2;
    for (int i = 0; i < 100000; ++i) {
        if (gen() % 5 == 0) {
            int silo = 1 + gen() % 4;
            switch (gen() % 8) {
                case 0: plant->command(silo, plant::CommandKind::Fill); break;
                case 1: plant->command(silo, plant::CommandKind::Empty); break;
                case 2: plant->command(silo, plant::CommandKind::Stop); break;
                case 3: plant->command(silo, plant::CommandKind::Heat2Temp, 21 + gen() % 40); break;
                case 4: plant->command(silo, plant::CommandKind::HeaterOff); break;
                case 5: plant->command(silo, plant::CommandKind::MixerOn); break;
                case 6: plant->command(silo, plant::CommandKind::MixerOff); break;
                default:
                    if (!plant->pipe().holder) {
                        int src = 1 + gen() % 4, dst = 1 + gen() % 4;
                        if (src != dst) plant->pipe_acquire("F", src, dst);
                    } else {
                        plant->pipe_release("F");
                    }
            }
        }
        auto pipe = plant->pipe();
        double src_before = 0, dst_before = 0;
        bool src_io = false, dst_io = false;
        if (pipe.transferring) {
            auto src = plant->silo(pipe.source);
            auto dst = plant->silo(pipe.dest);
            src_before = src.level;
            dst_before = dst.level;
            src_io = src.out_valve || (src.in_valve && pipe.source <= 2);
            dst_io = dst.out_valve || (dst.in_valve && pipe.dest <= 2);
        }

        plant->step(dt);

        for (int s = 1; s <= 4; ++s) {
            auto state = plant->silo(s);
            require(state.level >= 0.0 && state.level <= 1.0, "level must stay within [0,1]");
            require(state.temperature >= 20.0 - 1e-9, "temperature must stay above ambient");
            require(state.low_sensor == (state.level <= 0.05), "low sensor consistency");
            require(state.high_sensor == (state.level >= 0.95), "high sensor consistency");
        }
        require(!(plant->silo(3).mixer_on && plant->silo(4).mixer_on),
                "mixers 3 and 4 must never run together");

        if (pipe.transferring && !src_io && !dst_io) {
            double moved_out = src_before - plant->silo(pipe.source).level;
            double moved_in = plant->silo(pipe.dest).level - dst_before;
            require(std::abs(moved_out - moved_in) <= 1e-9,
                    "pipe transfer must conserve liquid within 1e-9");
        }
    }
}

// 8. Mode equivalence over the full plant descriptor set.
void criterion_mode_equivalence() {
    auto report = bench::probe_equivalence();
    require(report.probes > 0, "equivalence must exercise probes");
    if (!report.ok()) throw Failure(report.mismatches.front());
}

// 9. Benchmark methodology via the CLI: 1000 EXECUTE ops per wrapper mode on
//    localhost, consistent CSV reports, loopback sanity bound.
void criterion_benchmark() {
    auto out_dir = fs::temp_directory_path() / "iat-acceptance-bench";
    fs::remove_all(out_dir);
    std::string command = std::string(IAT_TOOL_PATH) +
                          " bench --op execute --n 1000 --mode both --target localhost --out " +
                          out_dir.string() + " > " + (out_dir / "stdout.txt").string();
    fs::create_directories(out_dir);
    int rc = std::system(command.c_str());
    require(rc == 0, "bench CLI must exit 0");

    bench::ReportFiles files{out_dir / "summary.csv", out_dir / "histogram.csv",
                             out_dir / "series.csv"};
    require(fs::exists(files.summary) && fs::exists(files.histogram) && fs::exists(files.series),
            "bench must emit summary/histogram/series CSVs");

    auto problems = bench::verify_report(files);
    if (!problems.empty()) throw Failure("report inconsistency: " + problems.front());

    // |samples| = 1000 per mode and the loopback sanity bound avg < 50 ms
    auto series = read_file(files.series);
    std::size_t rows = 0;
    for (char c : series) {
        if (c == '\n') ++rows;
    }
    require(rows == 1001, "series must have exactly 1000 rows per mode");

    std::istringstream summary(read_file(files.summary));
    std::string line;
    std::getline(summary, line);  // header
    int mode_rows = 0;
    while (std::getline(summary, line)) {
        if (line.rfind("static,", 0) != 0 && line.rfind("dynamic,", 0) != 0) continue;
        ++mode_rows;
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            auto comma = line.find(',', pos);
            fields.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos
                                                                         : comma - pos));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        require(fields.size() == 7, "summary row must have 7 columns");
        double avg = std::stod(fields[5]);
        require(avg < 50.0, "loopback average must stay below 50 ms, got " + fields[5]);
    }
    require(mode_rows == 2, "summary must carry one row per wrapper mode");
}

// 10. Registration lifecycle: link-format payload, survival across updates,
//     removal on deregistration and on lifetime lapse.
void criterion_registration_lifecycle() {
    auto config = fast_deployment(deploy::TransportKind::Udp);
    config.lifetime_s = 1.2;
    deploy::Deployment deployment(std::move(config));

    const std::vector<std::string> components = {"smartSilo1", "smartSilo2", "smartSilo3",
                                                 "smartSilo4", "smartPipe", "benchProbe"};
    for (const auto& name : components) {
        auto entry = deployment.server().find_registration(name);
        require(entry.has_value(), name + " must be registered");
        auto links = deployment.client(name).object_links();
        require(entry->object_links == links, name + " registration must list all instances");
        require(!links.empty(), name + " must expose at least one instance");
    }
    // the silo payload names the component's objects in link format
    auto payload = deployment.client("smartSilo2").registration_payload();
    for (const char* link : {"</16663/0>", "</16664/1>", "</16664/2>", "</16668/0>", "</3303/0>"}) {
        require(payload.find(link) != std::string::npos,
                std::string("silo2 payload must contain ") + link);
    }

    // survives two lifetime/2 update periods
    std::this_thread::sleep_for(std::chrono::milliseconds(2600));
    require(deployment.server().find_registration("smartSilo1").has_value(),
            "registration must survive update periods");

    // deregistration removes the entry
    deployment.client("smartPipe").deregister();
    require(!deployment.server().find_registration("smartPipe").has_value(),
            "deregistration must remove the entry");

    // stopping updates expires the entry after the lifetime
    deployment.client("benchProbe").stop();
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    require(!deployment.server().find_registration("benchProbe").has_value(),
            "entry must expire after the lifetime lapses without updates");
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<void()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "fixture fidelity", criterion_fixture_fidelity},
        {2, "legality matrix", criterion_legality_matrix},
        {3, "coap codec", criterion_coap_codec},
        {4, "dedup & retransmission", criterion_dedup_retransmission},
        {5, "end-to-end batch", criterion_end_to_end_batch},
        {6, "constraint properties", criterion_constraint_properties},
        {7, "conservation & bounds", criterion_conservation_bounds},
        {8, "mode equivalence", criterion_mode_equivalence},
        {9, "benchmark reproduction", criterion_benchmark},
        {10, "registration lifecycle", criterion_registration_lifecycle},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        auto start = std::chrono::steady_clock::now();
        std::string verdict = "PASS";
        std::string detail;
        try {
            criterion.run();
        } catch (const std::exception& e) {
            verdict = "FAIL";
            detail = e.what();
            ++failures;
        }
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - start)
                      .count();
        std::cout << "ACCEPTANCE " << criterion.id << " " << verdict << " " << criterion.name
                  << " (" << ms << " ms)";
        if (!detail.empty()) std::cout << " -- " << detail;
        std::cout << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
