#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "iat/lwm2m.hpp"
#include "iat/orchestrator.hpp"
#include "iat/plant.hpp"

namespace iat::deploy {

// How each component's dispatch table is produced: Static reads back the
// ahead-of-time artifacts (descriptor JSON + binding manifest), Dynamic parses
// the CID at startup.
enum class TableMode { Static, Dynamic };

enum class TransportKind { InProc, Udp };

const char* to_string(TableMode mode);

struct DeploymentConfig {
    TableMode mode = TableMode::Dynamic;
    TransportKind transport = TransportKind::InProc;
    plant::PlantConfig plant_config = plant::PlantConfig::defaults();
    std::shared_ptr<plant::Clock> clock;  // default: virtual clock
    coap::ExchangeConfig exchange;
    double lifetime_s = 60.0;
    bool register_clients = true;
    bool start_driver = true;
    double driver_dt_s = 0.05;
    double driver_pace_us = 100;
};

// Adapts the plant clock to the LWM2M notification time base.
std::shared_ptr<lwm2m::TimeSource> clock_time_source(std::shared_ptr<plant::Clock> clock);

// Descriptors for the given mode. Static emits the AOT artifacts into a fresh
// temp directory, verifies the manifest rows against the registry, and parses
// the descriptor JSON back; Dynamic lowers the CID directly.
std::vector<model::ObjectTypeDescriptor> plant_descriptors(TableMode mode,
                                                           const gen::HandlerRegistry& registry);

// One full in-process deployment: the LWM2M server plus one client per
// mechatronic component (4 silos, the pipe, the bench probe), registered and
// driven by a background stepper.
class Deployment {
public:
    explicit Deployment(DeploymentConfig config = {});
    ~Deployment();

    Deployment(const Deployment&) = delete;
    Deployment& operator=(const Deployment&) = delete;

    lwm2m::Lwm2mServer& server() { return *server_; }
    std::shared_ptr<plant::Plant> plant() { return plant_; }
    std::shared_ptr<plant::Clock> clock() { return clock_; }
    const std::vector<model::ObjectTypeDescriptor>& descriptors() const { return descriptors_; }

    orch::ServerHandle handle(orch::OrchestratorConfig config = {});

    std::vector<std::string> component_names() const;
    lwm2m::Lwm2mClient& client(const std::string& endpoint_name);
    const gen::DispatchTable& table(const std::string& endpoint_name) const;

    // The component whose table holds (object_id, 0); first in wiring order.
    std::string component_for_object(std::uint16_t object_id) const;

    void stop();

private:
    DeploymentConfig config_;
    std::shared_ptr<plant::Clock> clock_;
    std::shared_ptr<plant::Plant> plant_;
    std::vector<model::ObjectTypeDescriptor> descriptors_;
    std::unique_ptr<lwm2m::Lwm2mServer> server_;
    std::vector<std::string> names_;
    std::map<std::string, std::unique_ptr<lwm2m::Lwm2mClient>> clients_;
    std::map<std::string, gen::DispatchTable> tables_;
    std::unique_ptr<plant::PlantDriver> driver_;
    bool stopped_ = false;
};

}  // namespace iat::deploy
