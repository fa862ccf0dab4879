#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "iat/wrapper_gen.hpp"

namespace iat::plant {

// Simulation time source. Virtual mode advances only via explicit step();
// real mode tracks wall time scaled by a configurable factor.
class Clock {
public:
    static std::shared_ptr<Clock> make_virtual();
    static std::shared_ptr<Clock> make_real(double scale = 1.0);

    double now() const;
    void advance(double dt);  // virtual mode only
    bool is_virtual() const { return virtual_; }

private:
    explicit Clock(bool is_virtual, double scale);

    bool virtual_;
    double scale_ = 1.0;
    mutable std::mutex mutex_;
    double virtual_now_ = 0;
    std::chrono::steady_clock::time_point real_start_;
};

struct SiloConfig {
    int index = 1;  // 1..4
    bool has_heater = false;
    bool has_mixer = false;
    bool has_external_feed = false;  // silos 1 and 2 draw from an unlimited feed
    double fill_rate = 0.1;          // level fraction per second
    double drain_rate = 0.1;
    double heat_rate = 1.0;     // degC per second
    double cooling_rate = 0.05; // degC per second toward ambient
    double low_threshold = 0.05;
    double high_threshold = 0.95;
    double ambient_temp = 20.0;
};

struct PlantConfig {
    std::array<SiloConfig, 4> silos;

    static PlantConfig defaults();
    // key=value lines, e.g. "fill_rate=0.1", "silo2.heat_rate=2"; '#' comments.
    static PlantConfig from_text(std::string_view text);
    static PlantConfig from_file(const std::string& path);
};

struct SiloState {
    bool in_valve = false;
    bool out_valve = false;
    double level = 0;
    bool low_sensor = true;    // E_i: level <= low_threshold
    bool high_sensor = false;  // F_i: level >= high_threshold
    bool heater_on = false;
    double temperature = 20.0;
    bool mixer_on = false;
    double mix_elapsed = 0;
    double heat_target = 0;
    bool filling = false;  // derived: in valve open and level < 1
};

struct PipeState {
    std::optional<std::string> holder;  // batch id
    int source = 0;
    int dest = 0;
    bool transferring = false;
    // write-staged transfer parameters for the LWM2M surface
    int staged_source = 0;
    int staged_dest = 0;
    std::string staged_batch;
};

enum class CommandKind { Fill, Empty, Stop, HeaterOn, HeaterOff, Heat2Temp, MixerOn, MixerOff };

enum class CommandResult { Ok, UnsupportedDevice, Denied };

struct Command {
    int silo = 1;
    CommandKind kind = CommandKind::Stop;
    double target = 0;  // Heat2Temp target temperature
};

struct TraceRecord {
    double time_s = 0;
    std::string component;
    std::string event;
    std::string value;
};

enum class PipeResult { Granted, Busy };

// Deterministic simulation of the four smart silos plus the smart pipe.
// All access is serialized; step callbacks fire outside the plant lock.
class Plant {
public:
    Plant(PlantConfig config, std::shared_ptr<Clock> clock);
    ~Plant();

    const PlantConfig& config() const { return config_; }
    std::shared_ptr<Clock> clock() const { return clock_; }
    double now() const;

    void step(double dt);

    CommandResult command(int silo, CommandKind kind, double target = 0);
    // Same-timestamp batch; processed in silo-index order (deterministic tie-break).
    std::vector<CommandResult> apply_commands(std::vector<Command> commands);

    PipeResult pipe_acquire(const std::string& batch_id, int source, int dest);
    void pipe_release(const std::string& batch_id);

    // LWM2M staging surface for the pipe transfer parameters. Acquire consumes
    // the staged route atomically; release frees whatever batch holds the pipe
    // (the staged id may have been overwritten by a waiting batch meanwhile).
    void pipe_stage_source(int source);
    void pipe_stage_dest(int dest);
    void pipe_stage_batch(const std::string& batch_id);
    PipeResult pipe_acquire_staged();
    void pipe_release_any();

    // manual valve access (Valve object executors)
    void set_in_valve(int silo, bool open);
    void set_out_valve(int silo, bool open);

    // heat target setter (Heater.targetTemp write); does not switch the heater
    void set_heat_target(int silo, double target);

    SiloState silo(int index) const;
    PipeState pipe() const;

    void add_step_listener(std::function<void()> fn);
    void set_trace_sink(std::function<void(const TraceRecord&)> sink);
    std::vector<TraceRecord> trace() const;

private:
    struct SiloInternal {
        SiloState state;
        // active fill/empty command: auto-close the valve at the threshold
        bool auto_close_in = false;
        bool auto_close_out = false;
    };

    void emit(std::vector<TraceRecord>& out, const std::string& component,
              const std::string& event, const std::string& value);
    void flush(std::vector<TraceRecord>&& records);
    SiloInternal& silo_ref(int index);
    CommandResult command_locked(std::vector<TraceRecord>& events, int silo, CommandKind kind,
                                 double target);
    PipeResult pipe_acquire_locked(std::vector<TraceRecord>& events, const std::string& batch_id,
                                   int source, int dest);
    void pipe_release_locked(std::vector<TraceRecord>& events, const std::string& batch_id);
    void set_valve_locked(std::vector<TraceRecord>& events, int silo, bool input, bool open);
    void refresh_sensors_locked(std::vector<TraceRecord>& events, int index);

    PlantConfig config_;
    std::shared_ptr<Clock> clock_;

    mutable std::mutex mutex_;
    std::array<SiloInternal, 4> silos_;
    PipeState pipe_;
    std::vector<TraceRecord> trace_;
    std::function<void(const TraceRecord&)> sink_;
    std::vector<std::function<void()>> step_listeners_;
};

// ---------------------------------------------------------------------------
// IoT wrapper wiring: per-component handler registry and instance specs so
// that build_dispatch succeeds with zero unbound resources.

struct ComponentSpec {
    std::string endpoint_name;
    std::vector<gen::InstanceSpec> instances;
};

struct PlantWiring {
    gen::HandlerRegistry registry;
    std::vector<ComponentSpec> components;
};

// The CID of the plant's component types (SmartSilo, Valve, Heater, Mixer,
// Temperature, SmartPipe) and the benchmark probe object.
const std::string& plant_cid();

PlantWiring wire_wrappers(const std::shared_ptr<Plant>& plant);

// Advances a real- or virtual-clock plant on a background thread. In virtual
// mode each tick advances dt_s of simulated time (as fast as the pace allows);
// in real mode measured wall time (scaled by the clock) drives step().
class PlantDriver {
public:
    PlantDriver(std::shared_ptr<Plant> plant, double dt_s, double real_pace_us = 200);
    ~PlantDriver();
    void stop();

private:
    std::shared_ptr<Plant> plant_;
    std::atomic<bool> running_{true};
    std::thread thread_;
};

}  // namespace iat::plant
