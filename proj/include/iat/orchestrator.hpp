#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "iat/lwm2m.hpp"
#include "iat/plant.hpp"

namespace iat::orch {

// Production parameters for one batch. Kind A runs on silo couple (1,4),
// kind B on couple (2,3).
struct Recipe {
    enum class Kind { A, B };

    Kind kind = Kind::B;
    double basic_process_time_s = 5.0;  // kind A only
    double target_temp = 35.0;
    double mix_time_s = 10.0;
    std::string batch_id;

    // key=value lines: kind=B, target_temp=35, mix_time=10, basic_process_time=5,
    // batch_id=B1; '#' comments.
    static Recipe from_text(std::string_view text);
    static Recipe from_file(const std::string& path);
};

struct TraceEvent {
    double time_s = 0;
    std::string batch_id;
    std::string event;

    friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

// Time-ordered evidence stream shared by concurrently running batches.
// Copies share the underlying stream (handle semantics).
class BatchTrace {
public:
    explicit BatchTrace(std::shared_ptr<plant::Clock> clock);

    void append(const std::string& batch_id, const std::string& event);
    std::vector<TraceEvent> events() const;

    std::string to_csv() const;
    static std::vector<TraceEvent> parse_csv(std::string_view text);

private:
    struct State;
    std::shared_ptr<plant::Clock> clock_;
    std::shared_ptr<State> state_;
};

struct CheckResult {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

// Verifies pipe exclusivity, mixer power exclusion and per-batch phase order.
CheckResult check_trace(const std::vector<TraceEvent>& events);

struct OrchestratorConfig {
    double poll_period_s = 0.5;        // simulated seconds between polls
    double phase_deadline_s = 900;     // simulated seconds before a wait aborts
    double acquire_deadline_s = 600;   // starvation deadline for pipe/mixer grants
    double real_deadline_s = 60;       // wall-clock safety cap per wait
    double ambient_temp = 20.0;
    bool use_observe = true;           // observe temperature, fall back to polling
};

// The orchestrator's view of one deployment: the LWM2M server the components
// registered with, plus the shared time base. transfer_mutex serializes the
// pipe stage+acquire window across this orchestrator's batch threads (the
// staged route resources are a shared write surface on the pipe).
struct ServerHandle {
    lwm2m::Lwm2mServer* server = nullptr;
    std::shared_ptr<plant::Clock> clock;
    OrchestratorConfig config;
    std::shared_ptr<std::mutex> transfer_mutex = std::make_shared<std::mutex>();
};

// Drives one batch through its phases issuing only LWM2M operations.
// The returned trace ends with "done" or an "aborted ..." event.
BatchTrace run_batch(const Recipe& recipe, ServerHandle& handle);
void run_batch_into(const Recipe& recipe, ServerHandle& handle, BatchTrace& trace);

// Runs up to one batch per couple concurrently; throws Error if two recipes
// target the same couple. The merged trace shares one time axis.
BatchTrace run_parallel(const std::vector<Recipe>& recipes, ServerHandle& handle);

}  // namespace iat::orch
