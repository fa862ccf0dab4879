#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "iat/bench.hpp"
#include "iat/cid.hpp"
#include "iat/deployment.hpp"
#include "iat/orchestrator.hpp"

namespace py = pybind11;
using namespace iat;

namespace {

py::object value_to_py(const model::ResourceValue& value) {
    switch (value.index()) {
        case 0: return py::bool_(std::get<bool>(value));
        case 1: return py::int_(std::get<std::int64_t>(value));
        case 2: return py::float_(std::get<double>(value));
        case 3: return py::str(std::get<std::string>(value));
        case 4: return py::int_(std::get<model::TimeValue>(value).seconds);
        default: {
            const auto& bytes = std::get<model::OpaqueValue>(value);
            return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        }
    }
}

py::dict coap_message_to_dict(const coap::CoapMessage& msg) {
    py::dict out;
    static const char* kTypes[] = {"CON", "NON", "ACK", "RST"};
    out["type"] = kTypes[static_cast<unsigned>(msg.type)];
    out["code"] = py::make_tuple(coap::code_class(msg.code), coap::code_detail(msg.code));
    out["message_id"] = msg.message_id;
    out["token"] = py::bytes(reinterpret_cast<const char*>(msg.token.data()), msg.token.size());
    py::list options;
    for (const auto& opt : msg.options) {
        options.append(py::make_tuple(
            opt.number,
            py::bytes(reinterpret_cast<const char*>(opt.value.data()), opt.value.size())));
    }
    out["options"] = options;
    out["payload"] =
        py::bytes(reinterpret_cast<const char*>(msg.payload.data()), msg.payload.size());
    return out;
}

coap::CoapMessage coap_message_from_dict(const py::dict& in) {
    coap::CoapMessage msg;
    std::string type = in.contains("type") ? in["type"].cast<std::string>() : "CON";
    if (type == "CON") msg.type = coap::MsgType::Con;
    else if (type == "NON") msg.type = coap::MsgType::Non;
    else if (type == "ACK") msg.type = coap::MsgType::Ack;
    else if (type == "RST") msg.type = coap::MsgType::Rst;
    else throw Error("unknown message type " + type);
    if (in.contains("code")) {
        auto code = in["code"].cast<std::pair<unsigned, unsigned>>();
        msg.code = coap::make_code(code.first, code.second);
    }
    if (in.contains("message_id")) msg.message_id = in["message_id"].cast<std::uint16_t>();
    if (in.contains("token")) {
        auto token = in["token"].cast<std::string>();
        msg.token.assign(token.begin(), token.end());
    }
    if (in.contains("uri_path")) msg.set_uri_path(in["uri_path"].cast<std::string>());
    if (in.contains("options")) {
        for (auto item : in["options"].cast<py::list>()) {
            auto pair = item.cast<std::pair<std::uint16_t, std::string>>();
            msg.add_option(pair.first, std::string_view(pair.second));
        }
    }
    if (in.contains("payload")) {
        auto payload = in["payload"].cast<std::string>();
        msg.payload.assign(payload.begin(), payload.end());
    }
    return msg;
}

py::dict silo_to_dict(const plant::SiloState& s) {
    py::dict out;
    out["in_valve"] = s.in_valve;
    out["out_valve"] = s.out_valve;
    out["level"] = s.level;
    out["low_sensor"] = s.low_sensor;
    out["high_sensor"] = s.high_sensor;
    out["heater_on"] = s.heater_on;
    out["temperature"] = s.temperature;
    out["mixer_on"] = s.mixer_on;
    out["mix_elapsed"] = s.mix_elapsed;
    out["heat_target"] = s.heat_target;
    out["filling"] = s.filling;
    return out;
}

plant::CommandKind command_from_string(const std::string& name) {
    if (name == "fill") return plant::CommandKind::Fill;
    if (name == "empty") return plant::CommandKind::Empty;
    if (name == "stop") return plant::CommandKind::Stop;
    if (name == "heater_on") return plant::CommandKind::HeaterOn;
    if (name == "heater_off") return plant::CommandKind::HeaterOff;
    if (name == "heat2temp") return plant::CommandKind::Heat2Temp;
    if (name == "mixer_on") return plant::CommandKind::MixerOn;
    if (name == "mixer_off") return plant::CommandKind::MixerOff;
    throw Error("unknown command " + name);
}

const char* command_result_name(plant::CommandResult result) {
    switch (result) {
        case plant::CommandResult::Ok: return "ok";
        case plant::CommandResult::UnsupportedDevice: return "unsupported-device";
        case plant::CommandResult::Denied: return "denied";
    }
    return "?";
}

// Python-facing plant handle with a virtual clock.
class PyPlant {
public:
    PyPlant() : plant_(std::make_shared<plant::Plant>(plant::PlantConfig::defaults(),
                                                      plant::Clock::make_virtual())) {}

    void step(double dt) { plant_->step(dt); }
    std::string command(int silo, const std::string& name, double target) {
        return command_result_name(plant_->command(silo, command_from_string(name), target));
    }
    py::dict silo(int index) { return silo_to_dict(plant_->silo(index)); }
    std::string pipe_acquire(const std::string& batch, int source, int dest) {
        return plant_->pipe_acquire(batch, source, dest) == plant::PipeResult::Granted ? "granted"
                                                                                       : "busy";
    }
    void pipe_release(const std::string& batch) { plant_->pipe_release(batch); }
    double now() const { return plant_->now(); }
    py::list trace() const {
        py::list out;
        for (const auto& r : plant_->trace()) {
            out.append(py::make_tuple(r.time_s, r.component, r.event, r.value));
        }
        return out;
    }

private:
    std::shared_ptr<plant::Plant> plant_;
};

orch::Recipe recipe_from_dict(const py::dict& in) {
    orch::Recipe recipe;
    std::string kind = in.contains("kind") ? in["kind"].cast<std::string>() : "B";
    recipe.kind = kind == "A" ? orch::Recipe::Kind::A : orch::Recipe::Kind::B;
    if (in.contains("target_temp")) recipe.target_temp = in["target_temp"].cast<double>();
    if (in.contains("mix_time")) recipe.mix_time_s = in["mix_time"].cast<double>();
    if (in.contains("basic_process_time")) {
        recipe.basic_process_time_s = in["basic_process_time"].cast<double>();
    }
    if (in.contains("batch_id")) recipe.batch_id = in["batch_id"].cast<std::string>();
    if (recipe.batch_id.empty()) {
        recipe.batch_id = recipe.kind == orch::Recipe::Kind::A ? "batchA" : "batchB";
    }
    return recipe;
}

py::dict run_batches(const std::vector<py::dict>& recipe_dicts) {
    std::vector<orch::Recipe> recipes;
    recipes.reserve(recipe_dicts.size());
    for (const auto& d : recipe_dicts) recipes.push_back(recipe_from_dict(d));

    deploy::DeploymentConfig config;
    config.transport = deploy::TransportKind::InProc;
    config.driver_dt_s = 0.1;
    config.driver_pace_us = 50;
    config.exchange.ack_timeout_s = 0.25;
    config.exchange.max_retransmit = 3;

    py::gil_scoped_release release;
    deploy::Deployment deployment(std::move(config));
    orch::OrchestratorConfig oc;
    oc.poll_period_s = 0.4;
    oc.real_deadline_s = 60;
    auto handle = deployment.handle(oc);
    auto trace = recipes.size() == 1 ? orch::run_batch(recipes[0], handle)
                                     : orch::run_parallel(recipes, handle);
    auto events = trace.events();
    auto check = orch::check_trace(events);
    py::gil_scoped_acquire acquire;

    py::dict out;
    py::list rows;
    for (const auto& e : events) rows.append(py::make_tuple(e.time_s, e.batch_id, e.event));
    out["trace"] = rows;
    out["ok"] = check.ok();
    out["violations"] = check.violations;
    out["csv"] = trace.to_csv();
    return out;
}

py::dict bench_inproc(const std::string& op, int n, int warmup) {
    bench::BenchSpec spec;
    spec.op = op == "read" ? bench::BenchOp::Read : bench::BenchOp::Execute;
    spec.n = n;
    spec.warmup = warmup;
    spec.target = bench::TargetKind::InProcess;
    spec.exchange.ack_timeout_s = 0.5;
    py::gil_scoped_release release;
    auto stats = bench::run_bench(spec);
    py::gil_scoped_acquire acquire;
    py::dict out;
    out["min_ms"] = stats.min_ms;
    out["max_ms"] = stats.max_ms;
    out["avg_ms"] = stats.avg_ms;
    out["stddev_ms"] = stats.stddev_ms;
    out["samples"] = stats.samples_ms;
    out["warmup"] = stats.warmup_ms;
    return out;
}

py::object legality(const std::string& op_name, const std::string& path_text,
                    const std::string& cid_text,
                    const std::vector<std::pair<std::uint16_t, std::uint16_t>>& instances) {
    static const std::map<std::string, model::Lwm2mOp> kOps = {
        {"read", model::Lwm2mOp::Read},
        {"write", model::Lwm2mOp::Write},
        {"execute", model::Lwm2mOp::Execute},
        {"discover", model::Lwm2mOp::Discover},
        {"write_attributes", model::Lwm2mOp::WriteAttributes},
        {"create", model::Lwm2mOp::Create},
        {"delete", model::Lwm2mOp::Delete},
        {"observe", model::Lwm2mOp::Observe},
    };
    auto op = kOps.find(op_name);
    if (op == kOps.end()) throw Error("unknown operation " + op_name);
    auto registry =
        model::ObjectRegistry::build(cid::lower_to_descriptors(cid::parse_cid(cid_text)));
    for (auto [object_id, instance_id] : instances) {
        registry.add_instance(object_id, instance_id);
    }
    auto result = model::legality_check(op->second, model::parse_path(path_text), registry);
    if (result.ok()) return py::none();
    return py::str(std::string(model::to_string(result.violation->kind)) + ": " +
                   result.violation->detail);
}

}  // namespace

PYBIND11_MODULE(_iat, m) {
    m.doc() = "industrial automation things toolkit: CID parsing, IoT wrapper "
              "generation, CoAP/LWM2M codec access, the simulated liqueur plant "
              "and the batch orchestrator";

    py::register_exception<Error>(m, "IatError");

    // CID and descriptor pipeline
    m.def("lower_cid", [](const std::string& text) {
        return gen::emit_descriptor_json(cid::lower_to_descriptors(cid::parse_cid(text)));
    }, py::arg("cid_text"), "Parse a CID and emit the descriptor JSON artifact.");
    m.def("canonical_cid", [](const std::string& text) {
        return cid::render_cid(cid::parse_cid(text));
    }, py::arg("cid_text"), "Parse a CID and render its canonical text form.");
    m.def("classify_exposure", [](const std::string& text) {
        return std::string(cid::to_string(cid::classify_exposure(cid::parse_cid(text))));
    }, py::arg("cid_text"));
    m.def("binding_manifest", [](const std::string& text) {
        return gen::emit_binding_manifest(cid::lower_to_descriptors(cid::parse_cid(text)));
    }, py::arg("cid_text"));
    m.def("descriptor_json_roundtrip", [](const std::string& json_text) {
        return gen::emit_descriptor_json(gen::parse_descriptor_json(json_text));
    }, py::arg("json_text"));
    m.def("plant_cid", [] { return plant::plant_cid(); },
          "The CID of the simulated plant's component types.");

    // resource paths and legality
    m.def("parse_path", [](const std::string& text) {
        return model::parse_path(text).render();
    }, py::arg("text"), "Parse a resource path and return its canonical form.");
    m.def("legality_check", &legality, py::arg("op"), py::arg("path"), py::arg("cid_text"),
          py::arg("instances"),
          "None when the operation is legal, otherwise the violation reason.");

    // CoAP codec
    m.def("coap_encode", [](const py::dict& message) {
        auto bytes = coap::encode(coap_message_from_dict(message));
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    }, py::arg("message"));
    m.def("coap_decode", [](const py::bytes& data) {
        std::string buffer = data;
        auto msg = coap::decode(std::span<const std::uint8_t>(
            reinterpret_cast<const std::uint8_t*>(buffer.data()), buffer.size()));
        return coap_message_to_dict(msg);
    }, py::arg("data"));

    // plant simulation
    py::class_<PyPlant>(m, "Plant")
        .def(py::init<>())
        .def("step", &PyPlant::step, py::arg("dt"))
        .def("command", &PyPlant::command, py::arg("silo"), py::arg("command"),
             py::arg("target") = 0.0)
        .def("silo", &PyPlant::silo, py::arg("index"))
        .def("pipe_acquire", &PyPlant::pipe_acquire, py::arg("batch_id"), py::arg("source"),
             py::arg("dest"))
        .def("pipe_release", &PyPlant::pipe_release, py::arg("batch_id"))
        .def("now", &PyPlant::now)
        .def("trace", &PyPlant::trace);

    // orchestration and trace checking
    m.def("run_batches", &run_batches, py::arg("recipes"),
          "Run one or two recipes on an in-process deployment; returns the "
          "merged trace, the constraint-check verdict and the CSV rendering.");
    m.def("check_trace_csv", [](const std::string& csv) {
        auto result = orch::check_trace(orch::BatchTrace::parse_csv(csv));
        return result.violations;
    }, py::arg("csv"));

    // latency benchmark
    m.def("bench", &bench_inproc, py::arg("op") = "execute", py::arg("n") = 100,
          py::arg("warmup") = 10, "In-process round-trip latency run.");

    m.attr("__all__") = py::make_tuple(
        "lower_cid", "canonical_cid", "classify_exposure", "binding_manifest",
        "descriptor_json_roundtrip", "plant_cid", "parse_path", "legality_check", "coap_encode",
        "coap_decode", "Plant", "run_batches", "check_trace_csv", "bench");
}
