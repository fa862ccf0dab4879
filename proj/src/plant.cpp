#include "iat/plant.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "iat/errors.hpp"

namespace iat::plant {

using model::ResourceValue;

// ---------------------------------------------------------------------------
// Clock

Clock::Clock(bool is_virtual, double scale)
    : virtual_(is_virtual), scale_(scale), real_start_(std::chrono::steady_clock::now()) {}

std::shared_ptr<Clock> Clock::make_virtual() {
    return std::shared_ptr<Clock>(new Clock(true, 1.0));
}

std::shared_ptr<Clock> Clock::make_real(double scale) {
    return std::shared_ptr<Clock>(new Clock(false, scale));
}

double Clock::now() const {
    std::lock_guard lock(mutex_);
    if (virtual_) return virtual_now_;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - real_start_).count() *
           scale_;
}

void Clock::advance(double dt) {
    std::lock_guard lock(mutex_);
    if (virtual_) virtual_now_ += dt;
}

// ---------------------------------------------------------------------------
// Config

PlantConfig PlantConfig::defaults() {
    PlantConfig config;
    for (int i = 0; i < 4; ++i) {
        config.silos[i].index = i + 1;
        config.silos[i].has_heater = (i + 1 == 2 || i + 1 == 4);
        config.silos[i].has_mixer = (i + 1 == 3 || i + 1 == 4);
        config.silos[i].has_external_feed = (i + 1 == 1 || i + 1 == 2);
    }
    return config;
}

namespace {

void apply_key(SiloConfig& silo, const std::string& key, double value, std::size_t line) {
    if (key == "fill_rate") {
        silo.fill_rate = value;
    } else if (key == "drain_rate") {
        silo.drain_rate = value;
    } else if (key == "heat_rate") {
        silo.heat_rate = value;
    } else if (key == "cooling_rate") {
        silo.cooling_rate = value;
    } else if (key == "low_threshold") {
        silo.low_threshold = value;
    } else if (key == "high_threshold") {
        silo.high_threshold = value;
    } else if (key == "ambient_temp") {
        silo.ambient_temp = value;
    } else {
        throw ParseError(line, "unknown plant config key \"" + key + "\"");
    }
}

}  // namespace

PlantConfig PlantConfig::from_text(std::string_view text) {
    PlantConfig config = defaults();
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) {
            line.pop_back();
        }
        std::size_t start = 0;
        while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start]))) {
            ++start;
        }
        line = line.substr(start);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(line_no, "expected key=value");
        std::string key = line.substr(0, eq);
        std::string value_text = line.substr(eq + 1);
        double value = 0;
        auto [ptr, ec] =
            std::from_chars(value_text.data(), value_text.data() + value_text.size(), value);
        if (ec != std::errc() || ptr != value_text.data() + value_text.size()) {
            throw ParseError(line_no, "bad numeric value \"" + value_text + "\"");
        }
        if (key.rfind("silo", 0) == 0 && key.size() > 5 && key[5] == '.') {
            int idx = key[4] - '0';
            if (idx < 1 || idx > 4) throw ParseError(line_no, "silo index out of range");
            apply_key(config.silos[idx - 1], key.substr(6), value, line_no);
        } else {
            for (auto& silo : config.silos) apply_key(silo, key, value, line_no);
        }
    }
    for (const auto& silo : config.silos) {
        if (!(silo.low_threshold > 0 && silo.low_threshold < silo.high_threshold &&
              silo.high_threshold < 1)) {
            throw BuildError("thresholds must satisfy 0 < low < high < 1");
        }
        if (silo.fill_rate <= 0 || silo.drain_rate <= 0 || silo.heat_rate <= 0 ||
            silo.cooling_rate <= 0) {
            throw BuildError("rates must be positive");
        }
    }
    return config;
}

PlantConfig PlantConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open plant config " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

// ---------------------------------------------------------------------------
// Plant

Plant::Plant(PlantConfig config, std::shared_ptr<Clock> clock)
    : config_(config), clock_(std::move(clock)) {
    for (int i = 0; i < 4; ++i) {
        auto& silo = silos_[i];
        silo.state.temperature = config_.silos[i].ambient_temp;
        silo.state.level = 0;
        silo.state.low_sensor = true;
        silo.state.high_sensor = false;
    }
}

Plant::~Plant() = default;

double Plant::now() const { return clock_->now(); }

Plant::SiloInternal& Plant::silo_ref(int index) {
    if (index < 1 || index > 4) throw Error("silo index out of range: " + std::to_string(index));
    return silos_[index - 1];
}

void Plant::emit(std::vector<TraceRecord>& out, const std::string& component,
                 const std::string& event, const std::string& value) {
    out.push_back(TraceRecord{clock_->now(), component, event, value});
}

void Plant::flush(std::vector<TraceRecord>&& records) {
    if (records.empty()) return;
    std::function<void(const TraceRecord&)> sink;
    {
        std::lock_guard lock(mutex_);
        trace_.insert(trace_.end(), records.begin(), records.end());
        sink = sink_;
    }
    if (sink) {
        for (const auto& record : records) sink(record);
    }
}

void Plant::refresh_sensors_locked(std::vector<TraceRecord>& events, int index) {
    auto& silo = silos_[index - 1];
    const auto& cfg = config_.silos[index - 1];
    bool low = silo.state.level <= cfg.low_threshold;
    bool high = silo.state.level >= cfg.high_threshold;
    std::string name = "silo" + std::to_string(index);
    if (low != silo.state.low_sensor) {
        silo.state.low_sensor = low;
        emit(events, name, "low_sensor", low ? "true" : "false");
    }
    if (high != silo.state.high_sensor) {
        silo.state.high_sensor = high;
        emit(events, name, "high_sensor", high ? "true" : "false");
    }
    silo.state.filling = silo.state.in_valve && silo.state.level < 1.0;
}

void Plant::step(double dt) {
    if (dt <= 0) return;
    std::vector<TraceRecord> events;
    std::vector<std::function<void()>> listeners;
    {
        std::lock_guard lock(mutex_);

        // valve-driven level integration
        for (int i = 1; i <= 4; ++i) {
            auto& silo = silos_[i - 1];
            const auto& cfg = config_.silos[i - 1];
            if (silo.state.in_valve && cfg.has_external_feed) {
                silo.state.level = std::min(1.0, silo.state.level + cfg.fill_rate * dt);
            }
            if (silo.state.out_valve) {
                silo.state.level = std::max(0.0, silo.state.level - cfg.drain_rate * dt);
            }
        }

        // exclusive pipe transfer: conserves liquid between source and destination
        if (pipe_.transferring) {
            auto& src = silos_[pipe_.source - 1];
            auto& dst = silos_[pipe_.dest - 1];
            const auto& src_cfg = config_.silos[pipe_.source - 1];
            const auto& dst_cfg = config_.silos[pipe_.dest - 1];
            double delta = std::min({src_cfg.drain_rate * dt, src.state.level,
                                     1.0 - dst.state.level});
            src.state.level -= delta;
            dst.state.level += delta;
            if (src.state.level <= src_cfg.low_threshold ||
                dst.state.level >= dst_cfg.high_threshold) {
                pipe_.transferring = false;
                emit(events, "pipe", "transfer_stop", pipe_.holder.value_or(""));
            }
        }

        // temperature: heat while on, otherwise relax toward ambient
        for (int i = 1; i <= 4; ++i) {
            auto& silo = silos_[i - 1];
            const auto& cfg = config_.silos[i - 1];
            if (silo.state.heater_on) {
                silo.state.temperature += cfg.heat_rate * dt;
            } else if (silo.state.temperature > cfg.ambient_temp) {
                silo.state.temperature =
                    std::max(cfg.ambient_temp, silo.state.temperature - cfg.cooling_rate * dt);
            }
        }

        // mixers accumulate on-time
        for (int i = 1; i <= 4; ++i) {
            if (silos_[i - 1].state.mixer_on) silos_[i - 1].state.mix_elapsed += dt;
        }

        // command completion: threshold auto-close and heater auto-off
        for (int i = 1; i <= 4; ++i) {
            auto& silo = silos_[i - 1];
            const auto& cfg = config_.silos[i - 1];
            std::string name = "silo" + std::to_string(i);
            if (silo.auto_close_in && silo.state.level >= cfg.high_threshold) {
                silo.auto_close_in = false;
                if (silo.state.in_valve) {
                    silo.state.in_valve = false;
                    emit(events, name, "in_valve", "closed");
                }
            }
            if (silo.auto_close_out && silo.state.level <= cfg.low_threshold) {
                silo.auto_close_out = false;
                if (silo.state.out_valve) {
                    silo.state.out_valve = false;
                    emit(events, name, "out_valve", "closed");
                }
            }
            if (silo.state.heater_on && silo.state.temperature >= silo.state.heat_target) {
                silo.state.heater_on = false;
                emit(events, name, "heater", "off");
            }
        }

        for (int i = 1; i <= 4; ++i) refresh_sensors_locked(events, i);

        if (clock_->is_virtual()) clock_->advance(dt);
        listeners = step_listeners_;
    }
    flush(std::move(events));
    // listeners run outside the plant lock (they may re-enter via handlers)
    for (const auto& fn : listeners) fn();
}

void Plant::set_valve_locked(std::vector<TraceRecord>& events, int silo, bool input, bool open) {
    auto& s = silo_ref(silo);
    bool& valve = input ? s.state.in_valve : s.state.out_valve;
    if (valve == open) return;
    valve = open;
    s.state.filling = s.state.in_valve && s.state.level < 1.0;
    emit(events, "silo" + std::to_string(silo), input ? "in_valve" : "out_valve",
         open ? "open" : "closed");
}

CommandResult Plant::command_locked(std::vector<TraceRecord>& events, int silo, CommandKind kind,
                                    double target) {
    auto& s = silo_ref(silo);
    const auto& cfg = config_.silos[silo - 1];
    std::string name = "silo" + std::to_string(silo);
    switch (kind) {
        case CommandKind::Fill:
            set_valve_locked(events, silo, true, true);
            set_valve_locked(events, silo, false, false);
            s.auto_close_in = true;
            s.auto_close_out = false;
            return CommandResult::Ok;
        case CommandKind::Empty:
            set_valve_locked(events, silo, false, true);
            s.auto_close_out = true;
            s.auto_close_in = false;
            return CommandResult::Ok;
        case CommandKind::Stop:
            set_valve_locked(events, silo, true, false);
            set_valve_locked(events, silo, false, false);
            s.auto_close_in = s.auto_close_out = false;
            return CommandResult::Ok;
        case CommandKind::HeaterOn:
        case CommandKind::Heat2Temp:
            if (!cfg.has_heater) return CommandResult::UnsupportedDevice;
            if (kind == CommandKind::Heat2Temp) s.state.heat_target = target;
            if (!s.state.heater_on) {
                s.state.heater_on = true;
                emit(events, name, "heater", "on");
            }
            return CommandResult::Ok;
        case CommandKind::HeaterOff:
            if (!cfg.has_heater) return CommandResult::UnsupportedDevice;
            if (s.state.heater_on) {
                s.state.heater_on = false;
                emit(events, name, "heater", "off");
            }
            return CommandResult::Ok;
        case CommandKind::MixerOn: {
            if (!cfg.has_mixer) return CommandResult::UnsupportedDevice;
            // power gate: mixers 3 and 4 must never run together
            int other = silo == 3 ? 4 : 3;
            if (silos_[other - 1].state.mixer_on) {
                emit(events, name, "mixer", "denied");
                return CommandResult::Denied;
            }
            if (!s.state.mixer_on) {
                s.state.mixer_on = true;
                s.state.mix_elapsed = 0;
                emit(events, name, "mixer", "on");
            }
            return CommandResult::Ok;
        }
        case CommandKind::MixerOff:
            if (!cfg.has_mixer) return CommandResult::UnsupportedDevice;
            if (s.state.mixer_on) {
                s.state.mixer_on = false;
                emit(events, name, "mixer", "off");
            }
            return CommandResult::Ok;
    }
    return CommandResult::Ok;
}

CommandResult Plant::command(int silo, CommandKind kind, double target) {
    std::vector<TraceRecord> events;
    CommandResult result;
    {
        std::lock_guard lock(mutex_);
        result = command_locked(events, silo, kind, target);
    }
    flush(std::move(events));
    return result;
}

std::vector<CommandResult> Plant::apply_commands(std::vector<Command> commands) {
    std::stable_sort(commands.begin(), commands.end(),
                     [](const Command& a, const Command& b) { return a.silo < b.silo; });
    std::vector<TraceRecord> events;
    std::vector<CommandResult> results;
    {
        std::lock_guard lock(mutex_);
        for (const auto& command : commands) {
            results.push_back(command_locked(events, command.silo, command.kind, command.target));
        }
    }
    flush(std::move(events));
    return results;
}

PipeResult Plant::pipe_acquire_locked(std::vector<TraceRecord>& events,
                                      const std::string& batch_id, int source, int dest) {
    if (source == dest || source < 1 || source > 4 || dest < 1 || dest > 4) {
        throw Error("bad pipe route " + std::to_string(source) + "->" + std::to_string(dest));
    }
    if (pipe_.holder) return PipeResult::Busy;
    pipe_.holder = batch_id;
    pipe_.source = source;
    pipe_.dest = dest;
    pipe_.transferring = true;
    emit(events, "pipe", "acquired",
         batch_id + ":" + std::to_string(source) + "->" + std::to_string(dest));
    return PipeResult::Granted;
}

void Plant::pipe_release_locked(std::vector<TraceRecord>& events, const std::string& batch_id) {
    if (!pipe_.holder || *pipe_.holder != batch_id) return;
    if (pipe_.transferring) {
        pipe_.transferring = false;
        emit(events, "pipe", "transfer_stop", batch_id);
    }
    pipe_.holder.reset();
    emit(events, "pipe", "released", batch_id);
}

PipeResult Plant::pipe_acquire(const std::string& batch_id, int source, int dest) {
    std::vector<TraceRecord> events;
    PipeResult result;
    {
        std::lock_guard lock(mutex_);
        result = pipe_acquire_locked(events, batch_id, source, dest);
    }
    flush(std::move(events));
    return result;
}

void Plant::pipe_release(const std::string& batch_id) {
    std::vector<TraceRecord> events;
    {
        std::lock_guard lock(mutex_);
        pipe_release_locked(events, batch_id);
    }
    flush(std::move(events));
}

void Plant::pipe_stage_source(int source) {
    std::lock_guard lock(mutex_);
    pipe_.staged_source = source;
}

void Plant::pipe_stage_dest(int dest) {
    std::lock_guard lock(mutex_);
    pipe_.staged_dest = dest;
}

void Plant::pipe_stage_batch(const std::string& batch_id) {
    std::lock_guard lock(mutex_);
    pipe_.staged_batch = batch_id;
}

PipeResult Plant::pipe_acquire_staged() {
    std::vector<TraceRecord> events;
    PipeResult result;
    {
        std::lock_guard lock(mutex_);
        result = pipe_acquire_locked(events, pipe_.staged_batch, pipe_.staged_source,
                                     pipe_.staged_dest);
    }
    flush(std::move(events));
    return result;
}

void Plant::pipe_release_any() {
    std::vector<TraceRecord> events;
    {
        std::lock_guard lock(mutex_);
        if (pipe_.holder) pipe_release_locked(events, *pipe_.holder);
    }
    flush(std::move(events));
}

void Plant::set_in_valve(int silo, bool open) {
    std::vector<TraceRecord> events;
    {
        std::lock_guard lock(mutex_);
        set_valve_locked(events, silo, true, open);
    }
    flush(std::move(events));
}

void Plant::set_out_valve(int silo, bool open) {
    std::vector<TraceRecord> events;
    {
        std::lock_guard lock(mutex_);
        set_valve_locked(events, silo, false, open);
    }
    flush(std::move(events));
}

void Plant::set_heat_target(int silo, double target) {
    std::lock_guard lock(mutex_);
    silo_ref(silo).state.heat_target = target;
}

SiloState Plant::silo(int index) const {
    std::lock_guard lock(mutex_);
    if (index < 1 || index > 4) throw Error("silo index out of range");
    return silos_[index - 1].state;
}

PipeState Plant::pipe() const {
    std::lock_guard lock(mutex_);
    return pipe_;
}

void Plant::add_step_listener(std::function<void()> fn) {
    std::lock_guard lock(mutex_);
    step_listeners_.push_back(std::move(fn));
}

void Plant::set_trace_sink(std::function<void(const TraceRecord&)> sink) {
    std::lock_guard lock(mutex_);
    sink_ = std::move(sink);
}

std::vector<TraceRecord> Plant::trace() const {
    std::lock_guard lock(mutex_);
    return trace_;
}

// ---------------------------------------------------------------------------
// Wiring

namespace {

struct SiloRef {
    std::shared_ptr<Plant> plant;
    int index;
};
struct ValveRef {
    std::shared_ptr<Plant> plant;
    int index;
    bool input;
};
struct HeaterRef {
    std::shared_ptr<Plant> plant;
    int index;
};
struct MixerRef {
    std::shared_ptr<Plant> plant;
    int index;
};
struct TempRef {
    std::shared_ptr<Plant> plant;
    int index;
};
struct PipeRef {
    std::shared_ptr<Plant> plant;
};
struct ProbeRef {
    std::shared_ptr<std::atomic<bool>> state;
};

void check(CommandResult result, const char* what) {
    if (result == CommandResult::UnsupportedDevice) {
        throw HandlerError(std::string(what) + ": unsupported device");
    }
    if (result == CommandResult::Denied) {
        throw HandlerError(std::string(what) + ": denied");
    }
}

}  // namespace

const std::string& plant_cid() {
    static const std::string text = R"(# myLiqueur plant component types
component myLiqueurPlant root=SmartSilo;

object-type SmartSilo id=16663 description="smart silo mechatronic component" {
  resource filling id=0 ops=[read] type=boolean observable;
  resource fill id=2 ops=[execute];
  resource empty id=3 ops=[execute];
  resource stop id=4 ops=[execute];
  resource level id=5 ops=[read] type=float observable;
  resource lowLevel id=6 ops=[read] type=boolean observable;
  resource highLevel id=7 ops=[read] type=boolean observable;
  instance inValve id=1 type=16664;
  instance outValve id=2 type=16664;
}

object-type Valve id=16664 {
  resource state id=0 ops=[read] type=boolean observable;
  resource open id=1 ops=[execute];
  resource close id=2 ops=[execute];
}

object-type Heater id=16668 {
  resource on id=0 ops=[read] type=boolean observable;
  resource targetTemp id=1 ops=[read,write] type=float units="Cel";
  resource heat id=2 ops=[execute];
  resource off id=3 ops=[execute];
}

object-type Mixer id=16665 {
  resource on id=0 ops=[read] type=boolean observable;
  resource mix id=1 ops=[execute];
  resource stop id=2 ops=[execute];
  resource elapsed id=3 ops=[read] type=float units="s";
}

object-type Temperature id=3303 {
  resource sensorValue id=5700 ops=[read] type=float units="Cel" observable;
}

object-type SmartPipe id=16667 {
  resource busy id=0 ops=[read] type=boolean observable;
  resource transferring id=1 ops=[read] type=boolean observable;
  resource source id=2 ops=[read,write] type=integer;
  resource dest id=3 ops=[read,write] type=integer;
  resource batchId id=4 ops=[read,write] type=string;
  resource acquire id=5 ops=[execute];
  resource release id=6 ops=[execute];
}

object-type BenchProbe id=16700 {
  resource state id=0 ops=[read] type=boolean;
  resource toggle id=1 ops=[execute];
}
)";
    return text;
}

PlantWiring wire_wrappers(const std::shared_ptr<Plant>& plant) {
    PlantWiring wiring;
    auto& reg = wiring.registry;
    using gen::HandlerKind;
    using gen::Handlers;

    // SmartSilo
    reg.add("SmartSilo", "filling", HandlerKind::Reader, [](const std::any& h) {
        auto ref = std::any_cast<SiloRef>(h);
        Handlers hs;
        hs.read = [ref] { return ResourceValue{ref.plant->silo(ref.index).filling}; };
        return hs;
    });
    reg.add("SmartSilo", "level", HandlerKind::Reader, [](const std::any& h) {
        auto ref = std::any_cast<SiloRef>(h);
        Handlers hs;
        hs.read = [ref] { return ResourceValue{ref.plant->silo(ref.index).level}; };
        return hs;
    });
    reg.add("SmartSilo", "lowLevel", HandlerKind::Reader, [](const std::any& h) {
        auto ref = std::any_cast<SiloRef>(h);
        Handlers hs;
        hs.read = [ref] { return ResourceValue{ref.plant->silo(ref.index).low_sensor}; };
        return hs;
    });
    reg.add("SmartSilo", "highLevel", HandlerKind::Reader, [](const std::any& h) {
        auto ref = std::any_cast<SiloRef>(h);
        Handlers hs;
        hs.read = [ref] { return ResourceValue{ref.plant->silo(ref.index).high_sensor}; };
        return hs;
    });
    reg.add("SmartSilo", "fill", HandlerKind::Executor, [](const std::any& h) {
        auto ref = std::any_cast<SiloRef>(h);
        Handlers hs;
        hs.execute = [ref](std::string_view) {
            check(ref.plant->command(ref.index, CommandKind::Fill), "fill");
        };
        return hs;
    });
    reg.add("SmartSilo", "empty", HandlerKind::Executor, [](const std::any& h) {
        auto ref = std::any_cast<SiloRef>(h);
        Handlers hs;
        hs.execute = [ref](std::string_view) {
            check(ref.plant->command(ref.index, CommandKind::Empty), "empty");
        };
        return hs;
    });
    reg.add("SmartSilo", "stop", HandlerKind::Executor, [](const std::any& h) {
        auto ref = std::any_cast<SiloRef>(h);
        Handlers hs;
        hs.execute = [ref](std::string_view) {
            check(ref.plant->command(ref.index, CommandKind::Stop), "stop");
        };
        return hs;
    });

    // Valve
    reg.add("Valve", "state", HandlerKind::Reader, [](const std::any& h) {
        auto ref = std::any_cast<ValveRef>(h);
        Handlers hs;
        hs.read = [ref] {
            auto state = ref.plant->silo(ref.index);
            return ResourceValue{ref.input ? state.in_valve : state.out_valve};
        };
        return hs;
    });
    reg.add("Valve", "open", HandlerKind::Executor, [](const std::any& h) {
        auto ref = std::any_cast<ValveRef>(h);
        Handlers hs;
        hs.execute = [ref](std::string_view) {
            ref.input ? ref.plant->set_in_valve(ref.index, true)
                      : ref.plant->set_out_valve(ref.index, true);
        };
        return hs;
    });
    reg.add("Valve", "close", HandlerKind::Executor, [](const std::any& h) {
        auto ref = std::any_cast<ValveRef>(h);
        Handlers hs;
        hs.execute = [ref](std::string_view) {
            ref.input ? ref.plant->set_in_valve(ref.index, false)
                      : ref.plant->set_out_valve(ref.index, false);
        };
        return hs;
    });

    // Heater
    reg.add("Heater", "on", HandlerKind::Reader, [](const std::any& h) {
        auto ref = std::any_cast<HeaterRef>(h);
        Handlers hs;
        hs.read = [ref] { return ResourceValue{ref.plant->silo(ref.index).heater_on}; };
        return hs;
    });
    reg.add("Heater", "targetTemp", HandlerKind::ReaderWriter, [](const std::any& h) {
        auto ref = std::any_cast<HeaterRef>(h);
        Handlers hs;
        hs.read = [ref] { return ResourceValue{ref.plant->silo(ref.index).heat_target}; };
        hs.write = [ref](const ResourceValue& value) {
            ref.plant->set_heat_target(ref.index, std::get<double>(value));
        };
        return hs;
    });
    reg.add("Heater", "heat", HandlerKind::Executor, [](const std::any& h) {
        auto ref = std::any_cast<HeaterRef>(h);
        Handlers hs;
        hs.execute = [ref](std::string_view) {
            check(ref.plant->command(ref.index, CommandKind::HeaterOn), "heat");
        };
        return hs;
    });
    reg.add("Heater", "off", HandlerKind::Executor, [](const std::any& h) {
        auto ref = std::any_cast<HeaterRef>(h);
        Handlers hs;
        hs.execute = [ref](std::string_view) {
            check(ref.plant->command(ref.index, CommandKind::HeaterOff), "heater off");
        };
        return hs;
    });

    // Mixer
    reg.add("Mixer", "on", HandlerKind::Reader, [](const std::any& h) {
        auto ref = std::any_cast<MixerRef>(h);
        Handlers hs;
        hs.read = [ref] { return ResourceValue{ref.plant->silo(ref.index).mixer_on}; };
        return hs;
    });
    reg.add("Mixer", "elapsed", HandlerKind::Reader, [](const std::any& h) {
        auto ref = std::any_cast<MixerRef>(h);
        Handlers hs;
        hs.read = [ref] { return ResourceValue{ref.plant->silo(ref.index).mix_elapsed}; };
        return hs;
    });
    reg.add("Mixer", "mix", HandlerKind::Executor, [](const std::any& h) {
        auto ref = std::any_cast<MixerRef>(h);
        Handlers hs;
        hs.execute = [ref](std::string_view) {
            check(ref.plant->command(ref.index, CommandKind::MixerOn), "mix");
        };
        return hs;
    });
    reg.add("Mixer", "stop", HandlerKind::Executor, [](const std::any& h) {
        auto ref = std::any_cast<MixerRef>(h);
        Handlers hs;
        hs.execute = [ref](std::string_view) {
            check(ref.plant->command(ref.index, CommandKind::MixerOff), "mixer stop");
        };
        return hs;
    });

    // Temperature
    reg.add("Temperature", "sensorValue", HandlerKind::Reader, [](const std::any& h) {
        auto ref = std::any_cast<TempRef>(h);
        Handlers hs;
        hs.read = [ref] { return ResourceValue{ref.plant->silo(ref.index).temperature}; };
        return hs;
    });

    // SmartPipe
    reg.add("SmartPipe", "busy", HandlerKind::Reader, [](const std::any& h) {
        auto ref = std::any_cast<PipeRef>(h);
        Handlers hs;
        hs.read = [ref] { return ResourceValue{ref.plant->pipe().holder.has_value()}; };
        return hs;
    });
    reg.add("SmartPipe", "transferring", HandlerKind::Reader, [](const std::any& h) {
        auto ref = std::any_cast<PipeRef>(h);
        Handlers hs;
        hs.read = [ref] { return ResourceValue{ref.plant->pipe().transferring}; };
        return hs;
    });
    reg.add("SmartPipe", "source", HandlerKind::ReaderWriter, [](const std::any& h) {
        auto ref = std::any_cast<PipeRef>(h);
        Handlers hs;
        hs.read = [ref] {
            return ResourceValue{static_cast<std::int64_t>(ref.plant->pipe().staged_source)};
        };
        hs.write = [ref](const ResourceValue& value) {
            ref.plant->pipe_stage_source(static_cast<int>(std::get<std::int64_t>(value)));
        };
        return hs;
    });
    reg.add("SmartPipe", "dest", HandlerKind::ReaderWriter, [](const std::any& h) {
        auto ref = std::any_cast<PipeRef>(h);
        Handlers hs;
        hs.read = [ref] {
            return ResourceValue{static_cast<std::int64_t>(ref.plant->pipe().staged_dest)};
        };
        hs.write = [ref](const ResourceValue& value) {
            ref.plant->pipe_stage_dest(static_cast<int>(std::get<std::int64_t>(value)));
        };
        return hs;
    });
    reg.add("SmartPipe", "batchId", HandlerKind::ReaderWriter, [](const std::any& h) {
        auto ref = std::any_cast<PipeRef>(h);
        Handlers hs;
        hs.read = [ref] { return ResourceValue{ref.plant->pipe().staged_batch}; };
        hs.write = [ref](const ResourceValue& value) {
            ref.plant->pipe_stage_batch(std::get<std::string>(value));
        };
        return hs;
    });
    reg.add("SmartPipe", "acquire", HandlerKind::Executor, [](const std::any& h) {
        auto ref = std::any_cast<PipeRef>(h);
        Handlers hs;
        hs.execute = [ref](std::string_view) {
            if (ref.plant->pipe_acquire_staged() == PipeResult::Busy) {
                throw HandlerError("pipe busy");
            }
        };
        return hs;
    });
    reg.add("SmartPipe", "release", HandlerKind::Executor, [](const std::any& h) {
        auto ref = std::any_cast<PipeRef>(h);
        Handlers hs;
        hs.execute = [ref](std::string_view) { ref.plant->pipe_release_any(); };
        return hs;
    });

    // BenchProbe: constant-time no-op state toggle
    reg.add("BenchProbe", "state", HandlerKind::Reader, [](const std::any& h) {
        auto ref = std::any_cast<ProbeRef>(h);
        Handlers hs;
        hs.read = [ref] { return ResourceValue{ref.state->load()}; };
        return hs;
    });
    reg.add("BenchProbe", "toggle", HandlerKind::Executor, [](const std::any& h) {
        auto ref = std::any_cast<ProbeRef>(h);
        Handlers hs;
        hs.execute = [ref](std::string_view) { ref.state->store(!ref.state->load()); };
        return hs;
    });

    // component instances: one LWM2M client per mechatronic component
    for (int i = 1; i <= 4; ++i) {
        ComponentSpec component;
        component.endpoint_name = "smartSilo" + std::to_string(i);
        gen::InstanceSpec silo;
        silo.object_id = 16663;
        silo.instance_id = 0;
        silo.binding.handle = SiloRef{plant, i};
        silo.binding.children["inValve"] = gen::ComponentBinding{ValveRef{plant, i, true}, {}};
        silo.binding.children["outValve"] = gen::ComponentBinding{ValveRef{plant, i, false}, {}};
        component.instances.push_back(std::move(silo));

        if (plant->config().silos[i - 1].has_heater) {
            gen::InstanceSpec heater;
            heater.object_id = 16668;
            heater.instance_id = 0;
            heater.binding.handle = HeaterRef{plant, i};
            component.instances.push_back(std::move(heater));

            gen::InstanceSpec temp;
            temp.object_id = 3303;
            temp.instance_id = 0;
            temp.binding.handle = TempRef{plant, i};
            component.instances.push_back(std::move(temp));
        }
        if (plant->config().silos[i - 1].has_mixer) {
            gen::InstanceSpec mixer;
            mixer.object_id = 16665;
            mixer.instance_id = 0;
            mixer.binding.handle = MixerRef{plant, i};
            component.instances.push_back(std::move(mixer));
        }
        wiring.components.push_back(std::move(component));
    }

    ComponentSpec pipe;
    pipe.endpoint_name = "smartPipe";
    gen::InstanceSpec pipe_instance;
    pipe_instance.object_id = 16667;
    pipe_instance.instance_id = 0;
    pipe_instance.binding.handle = PipeRef{plant};
    pipe.instances.push_back(std::move(pipe_instance));
    wiring.components.push_back(std::move(pipe));

    ComponentSpec probe;
    probe.endpoint_name = "benchProbe";
    gen::InstanceSpec probe_instance;
    probe_instance.object_id = 16700;
    probe_instance.instance_id = 0;
    probe_instance.binding.handle = ProbeRef{std::make_shared<std::atomic<bool>>(false)};
    probe.instances.push_back(std::move(probe_instance));
    wiring.components.push_back(std::move(probe));

    return wiring;
}

// ---------------------------------------------------------------------------
// Driver

PlantDriver::PlantDriver(std::shared_ptr<Plant> plant, double dt_s, double real_pace_us)
    : plant_(std::move(plant)) {
    thread_ = std::thread([this, dt_s, real_pace_us] {
        auto pace = std::chrono::microseconds(static_cast<long>(real_pace_us));
        if (plant_->clock()->is_virtual()) {
            while (running_.load()) {
                plant_->step(dt_s);
                std::this_thread::sleep_for(pace);
            }
        } else {
            double last = plant_->clock()->now();
            while (running_.load()) {
                std::this_thread::sleep_for(pace);
                double now = plant_->clock()->now();
                if (now > last) {
                    plant_->step(now - last);
                    last = now;
                }
            }
        }
    });
}

PlantDriver::~PlantDriver() { stop(); }

void PlantDriver::stop() {
    if (!running_.exchange(false)) return;
    if (thread_.joinable()) thread_.join();
}

}  // namespace iat::plant
