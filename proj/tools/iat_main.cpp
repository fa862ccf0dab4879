// iat: industrial automation things toolkit
//   gen    - generate IoT-wrapper artifacts from a CID
//   serve  - run the simulated plant behind LWM2M clients
//   run    - LWM2M server + liqueur batch orchestration
//   bench  - EXECUTE/READ round-trip latency harness
//   check  - verify a batch trace against the plant constraints

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "iat/bench.hpp"
#include "iat/cid.hpp"
#include "iat/deployment.hpp"
#include "iat/orchestrator.hpp"

namespace fs = std::filesystem;
using namespace iat;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

net::Address parse_address(const std::string& text, std::uint16_t default_port) {
    auto colon = text.rfind(':');
    if (colon == std::string::npos) return {text, default_port};
    return {text.substr(0, colon),
            static_cast<std::uint16_t>(std::stoul(text.substr(colon + 1)))};
}

// Stub registry/instances so `gen --mode startup` can validate a CID without
// component code: every resource gets a handler of the required kind.
gen::HandlerRegistry stub_registry(const std::vector<model::ObjectTypeDescriptor>& descriptors) {
    gen::HandlerRegistry registry;
    for (const auto& type : descriptors) {
        for (const auto& resource : type.resources) {
            auto kind = gen::required_kind(resource);
            auto value_type = resource.value_type;
            registry.add(type.name, resource.name, kind, [kind, value_type](const std::any&) {
                gen::Handlers handlers;
                auto cell = std::make_shared<model::ResourceValue>([&]() -> model::ResourceValue {
                    switch (value_type) {
                        case model::ValueType::Boolean: return false;
                        case model::ValueType::Integer: return std::int64_t{0};
                        case model::ValueType::Float: return 0.0;
                        case model::ValueType::String: return std::string();
                        case model::ValueType::Time: return model::TimeValue{0};
                        case model::ValueType::Opaque: return model::OpaqueValue{};
                    }
                    return false;
                }());
                if (kind == gen::HandlerKind::Reader || kind == gen::HandlerKind::ReaderWriter) {
                    handlers.read = [cell] { return *cell; };
                }
                if (kind == gen::HandlerKind::Writer || kind == gen::HandlerKind::ReaderWriter) {
                    handlers.write = [cell](const model::ResourceValue& v) { *cell = v; };
                }
                if (kind == gen::HandlerKind::Executor) {
                    handlers.execute = [](std::string_view) {};
                }
                return handlers;
            });
        }
    }
    return registry;
}

gen::ComponentBinding stub_binding(const model::ObjectTypeDescriptor& type,
                                   const std::map<std::uint16_t,
                                                  const model::ObjectTypeDescriptor*>& types) {
    gen::ComponentBinding binding;
    for (const auto& ref : type.instance_refs) {
        auto it = types.find(ref.object_type_id);
        if (it != types.end()) binding.children[ref.name] = stub_binding(*it->second, types);
    }
    return binding;
}

int cmd_gen(const std::string& cid_path, const std::string& mode, const std::string& out_dir) {
    auto text = read_file(cid_path);
    if (mode == "aot") {
        gen::HandlerRegistry empty;
        auto result = gen::generate(gen::GenMode::AheadOfTime, text, empty, {}, out_dir);
        for (const auto& file : result.files) std::cout << file.string() << "\n";
        return 0;
    }
    auto doc = cid::parse_cid(text);
    auto descriptors = cid::lower_to_descriptors(doc);
    auto registry = stub_registry(descriptors);

    std::map<std::uint16_t, const model::ObjectTypeDescriptor*> types;
    for (const auto& d : descriptors) types[d.id] = &d;
    const auto* root = doc.find_type(doc.root_type);
    std::vector<gen::InstanceSpec> instances;
    if (root) {
        gen::InstanceSpec spec;
        spec.object_id = root->id;
        spec.instance_id = 0;
        spec.binding = stub_binding(*types.at(root->id), types);
        instances.push_back(std::move(spec));
    }
    auto result = gen::generate(gen::GenMode::Startup, text, registry, instances, out_dir);
    std::cout << "dispatch table: " << result.table->entries().size() << " resource entries, "
              << result.table->instances().size() << " object instances, 0 files\n";
    std::cout << "exposure: " << cid::to_string(cid::classify_exposure(doc)) << "\n";
    return 0;
}

int cmd_serve(const std::string& plant_config_path, const std::string& server_address,
              double lifetime, double rate, const std::string& trace_path) {
    auto config = plant_config_path.empty() ? plant::PlantConfig::defaults()
                                            : plant::PlantConfig::from_file(plant_config_path);
    auto clock = plant::Clock::make_real(rate);
    auto plant = std::make_shared<plant::Plant>(config, clock);

    std::ofstream trace_file;
    if (!trace_path.empty()) {
        trace_file.open(trace_path, std::ios::binary);
        trace_file << "time_s,component,event,value\n";
        plant->set_trace_sink([&](const plant::TraceRecord& r) {
            trace_file << model::render_value(model::ResourceValue{r.time_s}) << ","
                       << r.component << "," << r.event << "," << r.value << "\n";
            trace_file.flush();
        });
    }

    auto wiring = plant::wire_wrappers(plant);
    auto descriptors = deploy::plant_descriptors(deploy::TableMode::Dynamic, wiring.registry);
    auto time = deploy::clock_time_source(clock);

    std::vector<std::unique_ptr<lwm2m::Lwm2mClient>> clients;
    for (auto& component : wiring.components) {
        auto table = gen::build_dispatch(descriptors, wiring.registry, component.instances);
        auto client = std::make_unique<lwm2m::Lwm2mClient>(net::make_udp_socket("0.0.0.0", 0),
                                                           descriptors, std::move(table), time);
        std::cout << component.endpoint_name << " at " << client->local_address().to_string()
                  << "\n";
        if (!server_address.empty()) {
            lwm2m::ClientConfig client_config;
            client_config.endpoint_name = component.endpoint_name;
            client_config.lifetime_s = lifetime;
            auto server = parse_address(server_address, coap::kDefaultPort);
            if (!client->register_with(server, client_config)) {
                std::cerr << "registration failed for " << component.endpoint_name << " at "
                          << server.to_string() << "\n";
                return 1;
            }
        }
        clients.push_back(std::move(client));
    }
    plant->add_step_listener([&] {
        for (auto& client : clients) client->notify_state_changed();
    });
    plant::PlantDriver driver(plant, 0.05, 10000);

    std::cout << "plant running; Ctrl-C to stop\n";
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));

    driver.stop();
    for (auto& client : clients) {
        client->deregister();
        client->stop();
    }
    return 0;
}

int cmd_run(const std::vector<std::string>& recipe_paths, bool self_host,
            std::uint16_t listen_port, const std::string& plant_config_path,
            const std::string& out_dir, double wait_timeout_s) {
    std::vector<orch::Recipe> recipes;
    for (const auto& path : recipe_paths) recipes.push_back(orch::Recipe::from_file(path));

    auto run_and_report = [&](orch::ServerHandle& handle) {
        auto trace =
            recipes.size() == 1 ? orch::run_batch(recipes[0], handle)
                                : orch::run_parallel(recipes, handle);
        fs::create_directories(out_dir);
        auto trace_path = fs::path(out_dir) / "batch_trace.csv";
        std::ofstream(trace_path, std::ios::binary) << trace.to_csv();
        std::cout << trace_path.string() << "\n";

        auto check = orch::check_trace(trace.events());
        for (const auto& v : check.violations) std::cerr << "violation: " << v << "\n";
        bool all_done = true;
        for (const auto& recipe : recipes) {
            bool done = false;
            for (const auto& e : trace.events()) {
                if (e.batch_id == recipe.batch_id && e.event == "done") done = true;
            }
            if (!done) {
                all_done = false;
                std::cerr << "batch " << recipe.batch_id << " did not complete\n";
            }
        }
        return check.ok() && all_done ? 0 : 1;
    };

    if (self_host) {
        deploy::DeploymentConfig config;
        if (!plant_config_path.empty()) {
            config.plant_config = plant::PlantConfig::from_file(plant_config_path);
        }
        config.transport = deploy::TransportKind::Udp;
        deploy::Deployment deployment(std::move(config));
        auto handle = deployment.handle();
        return run_and_report(handle);
    }

    lwm2m::Lwm2mServer server(net::make_udp_socket("0.0.0.0", listen_port));
    std::cout << "LWM2M server on " << server.local_address().to_string()
              << "; waiting for plant registrations\n";
    auto registry = cid::lower_to_descriptors(cid::parse_cid(plant::plant_cid()));
    std::map<std::uint16_t, model::ObjectTypeDescriptor> types;
    for (const auto& d : registry) types[d.id] = d;
    server.set_registry(std::move(types));

    const std::vector<std::string> needed = {"smartSilo1", "smartSilo2", "smartSilo3",
                                             "smartSilo4", "smartPipe"};
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::milliseconds(static_cast<long>(wait_timeout_s * 1000));
    while (std::chrono::steady_clock::now() < deadline) {
        bool all = true;
        for (const auto& name : needed) {
            if (!server.find_registration(name)) all = false;
        }
        if (all) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    for (const auto& name : needed) {
        if (!server.find_registration(name)) {
            std::cerr << name << " never registered\n";
            return 1;
        }
    }
    orch::ServerHandle handle;
    handle.server = &server;
    handle.clock = plant::Clock::make_real();
    handle.config.real_deadline_s = 600;
    return run_and_report(handle);
}

int cmd_bench(const std::string& op_text, int n, int warmup, const std::string& mode_text,
              const std::string& target_text, const std::string& path_text,
              const std::string& out_dir) {
    bench::BenchSpec spec;
    spec.op = op_text == "read" ? bench::BenchOp::Read : bench::BenchOp::Execute;
    spec.n = n;
    spec.warmup = warmup;
    if (!path_text.empty()) spec.path = model::parse_path(path_text);

    if (target_text == "inproc") {
        spec.target = bench::TargetKind::InProcess;
    } else if (target_text == "localhost") {
        spec.target = bench::TargetKind::Localhost;
    } else {
        spec.target = bench::TargetKind::Remote;
        spec.remote = parse_address(target_text, coap::kDefaultPort);
    }

    std::vector<deploy::TableMode> modes;
    if (mode_text == "static") {
        modes = {deploy::TableMode::Static};
    } else if (mode_text == "dynamic") {
        modes = {deploy::TableMode::Dynamic};
    } else {
        modes = {deploy::TableMode::Static, deploy::TableMode::Dynamic};
    }

    auto report = bench::compare_modes(spec, modes);
    auto files = bench::emit_report(report, out_dir);
    for (const auto& run : report.runs) {
        std::cout << bench::render_summary_row(deploy::to_string(run.mode), report.op,
                                               report.target, run.stats)
                  << "\n";
    }
    if (modes.size() > 1 && spec.target != bench::TargetKind::Remote) {
        std::cout << "equivalence: " << report.equivalence.probes << " probes, ok\n";
    }
    auto problems = bench::verify_report(files);
    for (const auto& p : problems) std::cerr << "report inconsistency: " << p << "\n";
    std::cout << files.summary.string() << "\n"
              << files.histogram.string() << "\n"
              << files.series.string() << "\n";
    return problems.empty() ? 0 : 1;
}

int cmd_check(const std::string& trace_path) {
    auto events = orch::BatchTrace::parse_csv(read_file(trace_path));
    auto result = orch::check_trace(events);
    if (result.ok()) {
        std::cout << "ok (" << events.size() << " events)\n";
        return 0;
    }
    for (const auto& v : result.violations) std::cout << "violation: " << v << "\n";
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"industrial automation things toolkit"};
    app.require_subcommand(1);

    // gen
    std::string cid_path, gen_mode = "aot", gen_out = ".";
    auto* gen_cmd = app.add_subcommand("gen", "generate IoT-wrapper artifacts from a CID");
    gen_cmd->add_option("--cid", cid_path, "component interface description file")->required();
    gen_cmd->add_option("--mode", gen_mode, "aot|startup")
        ->check(CLI::IsMember({"aot", "startup"}));
    gen_cmd->add_option("--out", gen_out, "output directory (aot mode)");

    // serve
    std::string plant_config_path, server_address, serve_trace;
    double lifetime = 60, rate = 1.0;
    auto* serve_cmd = app.add_subcommand("serve", "run the simulated plant as LWM2M clients");
    serve_cmd->add_option("--plant", plant_config_path, "plant config file");
    serve_cmd->add_option("--server", server_address, "LWM2M server address host[:port]");
    serve_cmd->add_option("--lifetime", lifetime, "registration lifetime seconds");
    serve_cmd->add_option("--rate", rate, "real-clock scale factor");
    serve_cmd->add_option("--trace", serve_trace, "plant trace CSV path");

    // run
    std::vector<std::string> recipe_paths;
    bool self_host = false;
    std::uint16_t listen_port = coap::kDefaultPort;
    std::string run_out = ".", run_plant_config;
    double wait_timeout = 30;
    auto* run_cmd = app.add_subcommand("run", "orchestrate liqueur batches");
    run_cmd->add_option("--recipe", recipe_paths, "recipe file (repeatable)")->required();
    run_cmd->add_flag("--self-host", self_host, "run plant and server in-process");
    run_cmd->add_option("--listen", listen_port, "server UDP port (default 5683)");
    run_cmd->add_option("--plant", run_plant_config, "plant config (self-host mode)");
    run_cmd->add_option("--out", run_out, "output directory for the trace CSV");
    run_cmd->add_option("--wait-timeout", wait_timeout, "seconds to wait for registrations");

    // bench
    std::string bench_op = "execute", bench_mode = "both", bench_target = "localhost";
    std::string bench_path_text, bench_out = "bench-out";
    int bench_n = 1000, bench_warmup = 100;
    auto* bench_cmd = app.add_subcommand("bench", "round-trip latency benchmark");
    bench_cmd->add_option("--op", bench_op, "execute|read")
        ->check(CLI::IsMember({"execute", "read"}));
    bench_cmd->add_option("--n", bench_n, "operations per mode (default 1000)");
    bench_cmd->add_option("--warmup", bench_warmup, "warmup operations excluded from stats");
    bench_cmd->add_option("--mode", bench_mode, "static|dynamic|both")
        ->check(CLI::IsMember({"static", "dynamic", "both"}));
    bench_cmd->add_option("--target", bench_target, "inproc|localhost|HOST[:PORT]");
    bench_cmd->add_option("--path", bench_path_text, "resource path (default: bench probe)");
    bench_cmd->add_option("--out", bench_out, "report directory");

    // check
    std::string check_trace_path;
    auto* check_cmd = app.add_subcommand("check", "verify a batch trace CSV");
    check_cmd->add_option("--trace", check_trace_path, "trace CSV file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_cmd->parsed()) return cmd_gen(cid_path, gen_mode, gen_out);
        if (serve_cmd->parsed()) {
            return cmd_serve(plant_config_path, server_address, lifetime, rate, serve_trace);
        }
        if (run_cmd->parsed()) {
            return cmd_run(recipe_paths, self_host, listen_port, run_plant_config, run_out,
                           wait_timeout);
        }
        if (bench_cmd->parsed()) {
            return cmd_bench(bench_op, bench_n, bench_warmup, bench_mode, bench_target,
                             bench_path_text, bench_out);
        }
        if (check_cmd->parsed()) return cmd_check(check_trace_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
