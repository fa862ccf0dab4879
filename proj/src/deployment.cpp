#include "iat/deployment.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "iat/cid.hpp"

namespace iat::deploy {

namespace fs = std::filesystem;

const char* to_string(TableMode mode) { return mode == TableMode::Static ? "static" : "dynamic"; }

namespace {

class ClockTimeSource final : public lwm2m::TimeSource {
public:
    explicit ClockTimeSource(std::shared_ptr<plant::Clock> clock) : clock_(std::move(clock)) {}
    double now() const override { return clock_->now(); }

private:
    std::shared_ptr<plant::Clock> clock_;
};

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path fresh_temp_dir() {
    static std::atomic<unsigned> counter{0};
    auto dir = fs::temp_directory_path() /
               ("iat-gen-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::create_directories(dir);
    return dir;
}

std::unique_ptr<net::DatagramSocket> make_socket(TransportKind kind) {
    if (kind == TransportKind::InProc) return net::InProcNetwork::instance().create_socket();
    return net::make_udp_socket("127.0.0.1", 0);
}

}  // namespace

std::shared_ptr<lwm2m::TimeSource> clock_time_source(std::shared_ptr<plant::Clock> clock) {
    return std::make_shared<ClockTimeSource>(std::move(clock));
}

std::vector<model::ObjectTypeDescriptor> plant_descriptors(TableMode mode,
                                                           const gen::HandlerRegistry& registry) {
    if (mode == TableMode::Dynamic) {
        return cid::lower_to_descriptors(cid::parse_cid(plant::plant_cid()));
    }
    // Static: emit the ahead-of-time artifacts and bind from them.
    auto out_dir = fresh_temp_dir();
    auto result = gen::generate(gen::GenMode::AheadOfTime, plant::plant_cid(), registry, {},
                                out_dir);
    fs::path objects_path, manifest_path;
    for (const auto& file : result.files) {
        if (file.extension() == ".json") objects_path = file;
        if (file.extension() == ".manifest") manifest_path = file;
    }
    auto descriptors = gen::parse_descriptor_json(read_file(objects_path));
    // Manifest-driven binding check: every row must match a registered handler.
    for (const auto& row : gen::parse_binding_manifest(read_file(manifest_path))) {
        if (row.kind == "instance") continue;
        const auto* bound = registry.find(row.type_name, row.entry_name);
        if (!bound) {
            throw BuildError("manifest row " + row.type_name + "." + row.entry_name +
                             " has no registered handler");
        }
        if (gen::to_string(bound->first) != row.kind) {
            throw BuildError("manifest row " + row.type_name + "." + row.entry_name +
                             " kind mismatch");
        }
    }
    return descriptors;
}

Deployment::Deployment(DeploymentConfig config) : config_(std::move(config)) {
    clock_ = config_.clock ? config_.clock : plant::Clock::make_virtual();
    plant_ = std::make_shared<plant::Plant>(config_.plant_config, clock_);

    auto wiring = plant::wire_wrappers(plant_);
    descriptors_ = plant_descriptors(config_.mode, wiring.registry);

    server_ = std::make_unique<lwm2m::Lwm2mServer>(make_socket(config_.transport),
                                                   config_.exchange);
    std::map<std::uint16_t, model::ObjectTypeDescriptor> types;
    for (const auto& d : descriptors_) types[d.id] = d;
    server_->set_registry(std::move(types));

    auto time = clock_time_source(clock_);
    for (auto& component : wiring.components) {
        auto table = gen::build_dispatch(descriptors_, wiring.registry, component.instances);
        tables_.emplace(component.endpoint_name, table);
        auto client = std::make_unique<lwm2m::Lwm2mClient>(
            make_socket(config_.transport), descriptors_, std::move(table), time,
            config_.exchange);
        if (config_.register_clients) {
            lwm2m::ClientConfig client_config;
            client_config.endpoint_name = component.endpoint_name;
            client_config.lifetime_s = config_.lifetime_s;
            if (!client->register_with(server_->local_address(), client_config)) {
                throw Error("registration failed for " + component.endpoint_name);
            }
        }
        names_.push_back(component.endpoint_name);
        clients_.emplace(component.endpoint_name, std::move(client));
    }

    plant_->add_step_listener([this] {
        for (auto& [name, client] : clients_) client->notify_state_changed();
    });
    if (config_.start_driver) {
        driver_ = std::make_unique<plant::PlantDriver>(plant_, config_.driver_dt_s,
                                                       config_.driver_pace_us);
    }
}

Deployment::~Deployment() { stop(); }

void Deployment::stop() {
    if (stopped_) return;
    stopped_ = true;
    if (driver_) driver_->stop();
    for (auto& [name, client] : clients_) client->stop();
    if (server_) server_->stop();
}

orch::ServerHandle Deployment::handle(orch::OrchestratorConfig config) {
    orch::ServerHandle handle;
    handle.server = server_.get();
    handle.clock = clock_;
    handle.config = config;
    handle.config.ambient_temp = config_.plant_config.silos[0].ambient_temp;
    return handle;
}

std::vector<std::string> Deployment::component_names() const { return names_; }

lwm2m::Lwm2mClient& Deployment::client(const std::string& endpoint_name) {
    auto it = clients_.find(endpoint_name);
    if (it == clients_.end()) throw Error("no component " + endpoint_name);
    return *it->second;
}

const gen::DispatchTable& Deployment::table(const std::string& endpoint_name) const {
    auto it = tables_.find(endpoint_name);
    if (it == tables_.end()) throw Error("no component " + endpoint_name);
    return it->second;
}

std::string Deployment::component_for_object(std::uint16_t object_id) const {
    for (const auto& name : names_) {
        if (tables_.at(name).has_instance(object_id, 0)) return name;
    }
    throw Error("no component serves object " + std::to_string(object_id));
}

}  // namespace iat::deploy
