#include "iat/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace iat::orch {

using model::ResourcePath;
using model::ResourceValue;

// ---------------------------------------------------------------------------
// Recipe

Recipe Recipe::from_text(std::string_view text) {
    Recipe recipe;
    bool saw_kind = false;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::erase_if(line, [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(line_no, "expected key=value");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        auto number = [&]() -> double {
            double v = 0;
            auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
            if (ec != std::errc() || ptr != value.data() + value.size()) {
                throw ParseError(line_no, "bad numeric value \"" + value + "\"");
            }
            return v;
        };
        if (key == "kind") {
            if (value == "A") {
                recipe.kind = Kind::A;
            } else if (value == "B") {
                recipe.kind = Kind::B;
            } else {
                throw ParseError(line_no, "kind must be A or B");
            }
            saw_kind = true;
        } else if (key == "target_temp") {
            recipe.target_temp = number();
        } else if (key == "mix_time") {
            recipe.mix_time_s = number();
        } else if (key == "basic_process_time") {
            recipe.basic_process_time_s = number();
        } else if (key == "batch_id") {
            recipe.batch_id = value;
        } else {
            throw ParseError(line_no, "unknown recipe key \"" + key + "\"");
        }
    }
    if (!saw_kind) throw ParseError(0, "recipe missing kind");
    if (recipe.mix_time_s <= 0) throw ParseError(0, "mix_time must be positive");
    if (recipe.batch_id.empty()) {
        recipe.batch_id = recipe.kind == Kind::A ? "batchA" : "batchB";
    }
    return recipe;
}

Recipe Recipe::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open recipe " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

// ---------------------------------------------------------------------------
// Trace

struct BatchTrace::State {
    std::mutex mutex;
    std::vector<TraceEvent> events;
};

BatchTrace::BatchTrace(std::shared_ptr<plant::Clock> clock)
    : clock_(std::move(clock)), state_(std::make_shared<State>()) {}

void BatchTrace::append(const std::string& batch_id, const std::string& event) {
    std::lock_guard lock(state_->mutex);
    state_->events.push_back(TraceEvent{clock_->now(), batch_id, event});
}

std::vector<TraceEvent> BatchTrace::events() const {
    std::lock_guard lock(state_->mutex);
    return state_->events;
}

std::string BatchTrace::to_csv() const {
    std::string out = "time_s,batch_id,event\n";
    for (const auto& e : events()) {
        out += model::render_value(ResourceValue{e.time_s}) + "," + e.batch_id + "," + e.event +
               "\n";
    }
    return out;
}

std::vector<TraceEvent> BatchTrace::parse_csv(std::string_view text) {
    std::vector<TraceEvent> events;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no == 1 && line.rfind("time_s", 0) == 0) continue;
        auto c1 = line.find(',');
        auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c2 == std::string::npos) throw ParseError(line_no, "expected time_s,batch_id,event");
        TraceEvent event;
        std::string time_text = line.substr(0, c1);
        auto [ptr, ec] = std::from_chars(time_text.data(), time_text.data() + time_text.size(),
                                         event.time_s);
        if (ec != std::errc() || ptr != time_text.data() + time_text.size()) {
            throw ParseError(line_no, "bad timestamp \"" + time_text + "\"");
        }
        event.batch_id = line.substr(c1 + 1, c2 - c1 - 1);
        event.event = line.substr(c2 + 1);
        events.push_back(std::move(event));
    }
    return events;
}

// ---------------------------------------------------------------------------
// Trace checking

namespace {

const std::vector<std::string>& phases_for(Recipe::Kind kind) {
    static const std::vector<std::string> a = {"fill1",  "basic_process", "transfer_1_to_4",
                                               "heat4",  "mix4",          "empty4",
                                               "done"};
    static const std::vector<std::string> b = {"fill2", "heat2",  "transfer_2_to_3",
                                               "mix3",  "empty3", "done"};
    return kind == Recipe::Kind::A ? a : b;
}

bool is_phase_name(const std::string& event) {
    for (auto kind : {Recipe::Kind::A, Recipe::Kind::B}) {
        const auto& phases = phases_for(kind);
        if (std::find(phases.begin(), phases.end(), event) != phases.end()) return true;
    }
    return false;
}

struct Interval {
    double start = 0;
    double end = 0;
    std::string batch;
};

bool overlaps(const Interval& a, const Interval& b) { return a.start < b.end && b.start < a.end; }

}  // namespace

CheckResult check_trace(const std::vector<TraceEvent>& events) {
    CheckResult result;

    double last_time = -std::numeric_limits<double>::infinity();
    for (const auto& e : events) {
        if (e.time_s < last_time) {
            result.violations.push_back("timestamps decrease at " + e.event);
        }
        last_time = e.time_s;
    }

    // per-batch phase order
    std::map<std::string, std::vector<std::string>> phases;
    std::map<std::string, bool> aborted;
    for (const auto& e : events) {
        if (is_phase_name(e.event)) phases[e.batch_id].push_back(e.event);
        if (e.event.rfind("aborted", 0) == 0) aborted[e.batch_id] = true;
    }
    for (const auto& [batch, seen] : phases) {
        Recipe::Kind kind;
        if (seen.front() == "fill1") {
            kind = Recipe::Kind::A;
        } else if (seen.front() == "fill2") {
            kind = Recipe::Kind::B;
        } else {
            result.violations.push_back(batch + ": unknown first phase " + seen.front());
            continue;
        }
        const auto& expected = phases_for(kind);
        bool order_ok = seen.size() <= expected.size() &&
                        std::equal(seen.begin(), seen.end(), expected.begin());
        if (!order_ok) {
            result.violations.push_back(batch + ": phase order violated");
        } else if (!aborted[batch] && seen.size() != expected.size()) {
            result.violations.push_back(batch + ": batch incomplete without abort");
        }
    }

    // pipe exclusivity
    std::vector<Interval> pipe_intervals;
    std::map<std::string, double> pipe_open;
    for (const auto& e : events) {
        if (e.event == "pipe_acquired") {
            if (pipe_open.count(e.batch_id)) {
                result.violations.push_back(e.batch_id + ": nested pipe acquire");
            }
            pipe_open[e.batch_id] = e.time_s;
        } else if (e.event == "pipe_released") {
            auto it = pipe_open.find(e.batch_id);
            if (it == pipe_open.end()) {
                result.violations.push_back(e.batch_id + ": pipe release without acquire");
                continue;
            }
            pipe_intervals.push_back({it->second, e.time_s, e.batch_id});
            pipe_open.erase(it);
        }
    }
    for (const auto& [batch, start] : pipe_open) {
        result.violations.push_back(batch + ": pipe interval unmatched");
    }
    for (std::size_t i = 0; i < pipe_intervals.size(); ++i) {
        for (std::size_t j = i + 1; j < pipe_intervals.size(); ++j) {
            if (overlaps(pipe_intervals[i], pipe_intervals[j])) {
                result.violations.push_back("pipe overlap between " + pipe_intervals[i].batch +
                                            " and " + pipe_intervals[j].batch);
            }
        }
    }

    // mixer power exclusion (silo 3 vs silo 4 on-intervals)
    std::map<int, std::vector<Interval>> mixer_intervals;
    std::map<int, std::optional<std::pair<double, std::string>>> mixer_open;
    for (const auto& e : events) {
        int silo = 0;
        if (e.event.rfind("mixer_on silo=", 0) == 0) {
            silo = std::stoi(e.event.substr(14));
            if (mixer_open[silo]) {
                result.violations.push_back(e.batch_id + ": nested mixer_on silo=" +
                                            std::to_string(silo));
            }
            mixer_open[silo] = std::make_pair(e.time_s, e.batch_id);
        } else if (e.event.rfind("mixer_off silo=", 0) == 0) {
            silo = std::stoi(e.event.substr(15));
            auto& open = mixer_open[silo];
            if (!open) {
                result.violations.push_back(e.batch_id + ": mixer_off without mixer_on");
                continue;
            }
            mixer_intervals[silo].push_back({open->first, e.time_s, open->second});
            open.reset();
        }
    }
    for (const auto& [silo, open] : mixer_open) {
        if (open) result.violations.push_back(open->second + ": mixer interval unmatched");
    }
    for (const auto& a : mixer_intervals[3]) {
        for (const auto& b : mixer_intervals[4]) {
            if (overlaps(a, b)) {
                result.violations.push_back("mixer power violation between " + a.batch + " and " +
                                            b.batch);
            }
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Batch runner

namespace {

struct Abort : Error {
    using Error::Error;
};

class BatchRunner {
public:
    BatchRunner(const Recipe& recipe, ServerHandle& handle, BatchTrace& trace)
        : recipe_(recipe), handle_(handle), trace_(trace) {}

    void run() {
        try {
            if (recipe_.target_temp <= handle_.config.ambient_temp &&
                recipe_.kind == Recipe::Kind::B) {
                throw Abort("target_temp not above ambient");
            }
            if (recipe_.kind == Recipe::Kind::A) {
                run_kind_a();
            } else {
                run_kind_b();
            }
            trace_.append(recipe_.batch_id, "done");
        } catch (const Abort& abort) {
            cleanup();
            trace_.append(recipe_.batch_id, std::string("aborted ") + abort.what());
        }
    }

private:
    void run_kind_a() {
        phase("fill1");
        fill(1);
        phase("basic_process");
        wait_sim(recipe_.basic_process_time_s);
        phase("transfer_1_to_4");
        transfer(1, 4);
        phase("heat4");
        heat(4);
        phase("mix4");
        mix(4);
        phase("empty4");
        empty(4);
    }

    void run_kind_b() {
        phase("fill2");
        fill(2);
        phase("heat2");
        heat(2);
        phase("transfer_2_to_3");
        transfer(2, 3);
        phase("mix3");
        mix(3);
        phase("empty3");
        empty(3);
    }

    void phase(const std::string& name) { trace_.append(recipe_.batch_id, name); }

    lwm2m::RegistrationEntry entry(const std::string& endpoint) {
        auto reg = handle_.server->find_registration(endpoint);
        if (!reg) throw Abort("unreachable " + endpoint);
        return *reg;
    }

    lwm2m::Response must_ok(lwm2m::Response response, const std::string& what) {
        if (response.status != coap::RequestStatus::Ok) throw Abort("unreachable " + what);
        if (!response.ok()) {
            throw Abort("error " + response.code_text() + " on " + what);
        }
        return response;
    }

    // Grant-style execute: 2.04 means granted, 5.00 means wait and retry.
    void execute_until_granted(const std::string& endpoint, const ResourcePath& path,
                               const std::string& what) {
        double start = handle_.clock->now();
        auto real_deadline = std::chrono::steady_clock::now() +
                             std::chrono::milliseconds(
                                 static_cast<long>(handle_.config.real_deadline_s * 1000));
        while (true) {
            auto response = handle_.server->execute(entry(endpoint), path);
            if (response.status != coap::RequestStatus::Ok) throw Abort("unreachable " + what);
            if (response.ok()) return;
            if (coap::code_class(response.code) != 5) {
                throw Abort("error " + response.code_text() + " on " + what);
            }
            if (handle_.clock->now() - start > handle_.config.acquire_deadline_s ||
                std::chrono::steady_clock::now() > real_deadline) {
                throw Abort(what + " starvation");
            }
            wait_sim(handle_.config.poll_period_s);
        }
    }

    void wait_sim(double seconds) {
        double start = handle_.clock->now();
        auto real_deadline = std::chrono::steady_clock::now() +
                             std::chrono::milliseconds(
                                 static_cast<long>(handle_.config.real_deadline_s * 1000));
        while (handle_.clock->now() - start < seconds) {
            if (std::chrono::steady_clock::now() > real_deadline) {
                throw Abort("simulated clock stalled");
            }
            std::this_thread::sleep_for(std::chrono::microseconds(200));
        }
    }

    void wait_until(const std::function<bool()>& pred, const std::string& what) {
        double start = handle_.clock->now();
        double last_poll = -std::numeric_limits<double>::infinity();
        auto real_deadline = std::chrono::steady_clock::now() +
                             std::chrono::milliseconds(
                                 static_cast<long>(handle_.config.real_deadline_s * 1000));
        while (true) {
            double now = handle_.clock->now();
            if (now - last_poll >= handle_.config.poll_period_s) {
                last_poll = now;
                if (pred()) return;
            }
            if (now - start > handle_.config.phase_deadline_s ||
                std::chrono::steady_clock::now() > real_deadline) {
                throw Abort("deadline waiting for " + what);
            }
            std::this_thread::sleep_for(std::chrono::microseconds(200));
        }
    }

    bool read_bool(const std::string& endpoint, const ResourcePath& path) {
        auto response = must_ok(handle_.server->read(entry(endpoint), path), path.render());
        return response.payload_text() == "true";
    }

    double read_double(const std::string& endpoint, const ResourcePath& path) {
        auto response = must_ok(handle_.server->read(entry(endpoint), path), path.render());
        auto value = model::parse_value(model::ValueType::Float, response.payload_text());
        if (!value) throw Abort("unparsable value at " + path.render());
        return std::get<double>(*value);
    }

    void fill(int silo) {
        std::string endpoint = "smartSilo" + std::to_string(silo);
        must_ok(handle_.server->execute(entry(endpoint), ResourcePath::resource(16663, 0, 2)),
                endpoint + " fill");
        wait_until([&] { return read_bool(endpoint, ResourcePath::resource(16663, 0, 7)); },
                   endpoint + " high level");
    }

    void empty(int silo) {
        std::string endpoint = "smartSilo" + std::to_string(silo);
        must_ok(handle_.server->execute(entry(endpoint), ResourcePath::resource(16663, 0, 3)),
                endpoint + " empty");
        wait_until([&] { return read_bool(endpoint, ResourcePath::resource(16663, 0, 6)); },
                   endpoint + " low level");
    }

    void heat(int silo) {
        std::string endpoint = "smartSilo" + std::to_string(silo);
        auto reg = entry(endpoint);
        must_ok(handle_.server->write(reg, ResourcePath::resource(16668, 0, 1),
                                      ResourceValue{recipe_.target_temp}),
                endpoint + " target temp");
        must_ok(handle_.server->execute(reg, ResourcePath::resource(16668, 0, 2)),
                endpoint + " heat");

        auto temp_path = ResourcePath::resource(3303, 0, 5700);
        if (handle_.config.use_observe) {
            auto reached = std::make_shared<std::atomic<bool>>(false);
            double target = recipe_.target_temp;
            lwm2m::Lwm2mServer::ObserveHandle handle;
            auto response = handle_.server->observe(
                reg, temp_path,
                [reached, target](std::uint32_t, const std::string& payload) {
                    auto value = model::parse_value(model::ValueType::Float, payload);
                    if (value && std::get<double>(*value) >= target) reached->store(true);
                },
                handle);
            if (response.ok()) {
                auto initial =
                    model::parse_value(model::ValueType::Float, response.payload_text());
                if (initial && std::get<double>(*initial) >= target) reached->store(true);
                try {
                    wait_until([&] { return reached->load(); }, endpoint + " temperature");
                } catch (...) {
                    handle_.server->cancel_observe(reg, handle);
                    throw;
                }
                handle_.server->cancel_observe(reg, handle);
                return;
            }
            // fall through to polling when observe is unavailable
        }
        wait_until([&] { return read_double(endpoint, temp_path) >= recipe_.target_temp; },
                   endpoint + " temperature");
    }

    void transfer(int source, int dest) {
        {
            // the staged route is a shared write surface; one stage+acquire at a time
            std::lock_guard stage_lock(*handle_.transfer_mutex);
            auto pipe = entry("smartPipe");
            must_ok(handle_.server->write(pipe, ResourcePath::resource(16667, 0, 2),
                                          ResourceValue{static_cast<std::int64_t>(source)}),
                    "pipe source");
            must_ok(handle_.server->write(pipe, ResourcePath::resource(16667, 0, 3),
                                          ResourceValue{static_cast<std::int64_t>(dest)}),
                    "pipe dest");
            must_ok(handle_.server->write(pipe, ResourcePath::resource(16667, 0, 4),
                                          ResourceValue{recipe_.batch_id}),
                    "pipe batch id");
            execute_until_granted("smartPipe", ResourcePath::resource(16667, 0, 5),
                                  "pipe acquire");
        }
        pipe_held_ = true;
        trace_.append(recipe_.batch_id, "pipe_acquired");
        wait_until([&] { return !read_bool("smartPipe", ResourcePath::resource(16667, 0, 1)); },
                   "pipe transfer");
        // recorded before the release is issued so the logged interval is a
        // subset of the actual held interval
        trace_.append(recipe_.batch_id, "pipe_released");
        pipe_held_ = false;
        must_ok(handle_.server->execute(entry("smartPipe"), ResourcePath::resource(16667, 0, 6)),
                "pipe release");
    }

    void mix(int silo) {
        std::string endpoint = "smartSilo" + std::to_string(silo);
        execute_until_granted(endpoint, ResourcePath::resource(16665, 0, 1), "mixer grant");
        mixer_on_ = silo;
        trace_.append(recipe_.batch_id, "mixer_on silo=" + std::to_string(silo));
        wait_until(
            [&] {
                return read_double(endpoint, ResourcePath::resource(16665, 0, 3)) >=
                       recipe_.mix_time_s;
            },
            endpoint + " mix time");
        trace_.append(recipe_.batch_id, "mixer_off silo=" + std::to_string(silo));
        mixer_on_ = 0;
        must_ok(handle_.server->execute(entry(endpoint), ResourcePath::resource(16665, 0, 2)),
                endpoint + " mixer stop");
    }

    // Abort path: release held tokens and close the trace intervals.
    void cleanup() {
        try {
            if (pipe_held_) {
                trace_.append(recipe_.batch_id, "pipe_released");
                handle_.server->execute(entry("smartPipe"), ResourcePath::resource(16667, 0, 6));
                pipe_held_ = false;
            }
            if (mixer_on_) {
                trace_.append(recipe_.batch_id, "mixer_off silo=" + std::to_string(mixer_on_));
                std::string endpoint = "smartSilo" + std::to_string(mixer_on_);
                handle_.server->execute(entry(endpoint), ResourcePath::resource(16665, 0, 2));
                mixer_on_ = 0;
            }
        } catch (const Abort&) {
            // endpoint vanished; nothing further to release
        }
    }

    const Recipe& recipe_;
    ServerHandle& handle_;
    BatchTrace& trace_;
    bool pipe_held_ = false;
    int mixer_on_ = 0;
};

}  // namespace

void run_batch_into(const Recipe& recipe, ServerHandle& handle, BatchTrace& trace) {
    BatchRunner(recipe, handle, trace).run();
}

BatchTrace run_batch(const Recipe& recipe, ServerHandle& handle) {
    BatchTrace trace(handle.clock);
    run_batch_into(recipe, handle, trace);
    return trace;
}

BatchTrace run_parallel(const std::vector<Recipe>& recipes, ServerHandle& handle) {
    std::set<Recipe::Kind> kinds;
    for (const auto& recipe : recipes) {
        if (!kinds.insert(recipe.kind).second) {
            throw Error("two recipes target the same silo couple");
        }
    }
    BatchTrace trace(handle.clock);
    std::vector<std::thread> threads;
    threads.reserve(recipes.size());
    for (const auto& recipe : recipes) {
        threads.emplace_back(
            [&handle, &trace, recipe] { run_batch_into(recipe, handle, trace); });
    }
    for (auto& t : threads) t.join();
    return trace;
}

}  // namespace iat::orch
