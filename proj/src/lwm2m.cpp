#include "iat/lwm2m.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <condition_variable>
#include <mutex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "iat/link_format.hpp"

namespace iat::lwm2m {

using json = nlohmann::ordered_json;
using model::Lwm2mOp;
using model::ResourcePath;
using model::ResourceValue;
using model::ViolationKind;

namespace {

class SteadyTimeSource final : public TimeSource {
public:
    double now() const override {
        return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
            .count();
    }
};

json value_to_json(const ResourceValue& value) {
    switch (value.index()) {
        case 0: return std::get<bool>(value);
        case 1: return std::get<std::int64_t>(value);
        case 2: return std::get<double>(value);
        case 3: return std::get<std::string>(value);
        case 4: return std::get<model::TimeValue>(value).seconds;
        default: return model::render_value(value);  // opaque as hex text
    }
}

std::optional<ResourceValue> json_to_value(model::ValueType type, const json& j) {
    switch (type) {
        case model::ValueType::Boolean:
            if (j.is_boolean()) return ResourceValue{j.get<bool>()};
            return std::nullopt;
        case model::ValueType::Integer:
            if (j.is_number_integer()) return ResourceValue{j.get<std::int64_t>()};
            return std::nullopt;
        case model::ValueType::Float:
            if (j.is_number()) return ResourceValue{j.get<double>()};
            return std::nullopt;
        case model::ValueType::String:
            if (j.is_string()) return ResourceValue{j.get<std::string>()};
            return std::nullopt;
        case model::ValueType::Time:
            if (j.is_number_integer()) return ResourceValue{model::TimeValue{j.get<std::int64_t>()}};
            return std::nullopt;
        case model::ValueType::Opaque:
            if (j.is_string()) return model::parse_value(type, j.get<std::string>());
            return std::nullopt;
    }
    return std::nullopt;
}

std::string ops_letters_concat(const model::ResourceOps& ops) {
    std::string out;
    for (const auto& l : ops.letters()) out += l;
    return out;
}

double parse_double_or(const std::string& text, double fallback) {
    double v = fallback;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) return fallback;
    return v;
}

}  // namespace

std::shared_ptr<TimeSource> steady_time_source() { return std::make_shared<SteadyTimeSource>(); }

// ---------------------------------------------------------------------------
// Client

namespace {

struct ObserveRelation {
    std::vector<std::uint8_t> token;
    net::Address peer;
    ResourcePath path;
    std::uint32_t next_sequence = 0;  // 24-bit counter
    std::optional<ResourceValue> last_sent_value;
    double last_sent_time = 0;
    bool pending = false;
};

}  // namespace

struct Lwm2mClient::Impl {
    coap::CoapEndpoint endpoint;
    std::shared_ptr<TimeSource> time;

    mutable std::mutex mutex;
    std::vector<model::ObjectTypeDescriptor> descriptors;
    gen::DispatchTable table;
    model::ObjectRegistry registry;
    std::map<std::string, ObserveRelation> relations;      // key: token hex + peer
    std::map<std::string, NotifyAttributes> attributes;    // key: canonical path
    std::map<std::uint16_t, InstanceFactory> factories;

    // registration state
    std::optional<std::string> reg_location;
    net::Address server_address;
    ClientConfig reg_config;
    bool registration_dirty = false;
    std::thread updater;
    std::condition_variable updater_cv;
    std::atomic<bool> running{true};
    std::chrono::steady_clock::time_point last_reg_update{};

    std::thread notifier;
    std::mutex notifier_mutex;
    std::condition_variable notifier_cv;

    Impl(std::unique_ptr<net::DatagramSocket> socket, coap::ExchangeConfig config,
         std::shared_ptr<TimeSource> time_source)
        : endpoint(std::move(socket), config), time(std::move(time_source)) {}

    void rebuild_registry_locked() {
        std::vector<model::ObjectTypeDescriptor> copy = descriptors;
        registry = model::ObjectRegistry::build(std::move(copy));
        for (const auto& [key, inst] : table.instances()) {
            registry.add_instance(inst.object_id, inst.instance_id);
        }
    }

    static std::string relation_key(const net::Address& peer,
                                    const std::vector<std::uint8_t>& token) {
        std::string key = peer.to_string() + "#";
        for (auto b : token) {
            key += "0123456789abcdef"[b >> 4];
            key += "0123456789abcdef"[b & 0xf];
        }
        return key;
    }

    // ---- request handling ----

    coap::CoapMessage respond(std::uint8_t code) {
        coap::CoapMessage msg;
        msg.code = code;
        return msg;
    }

    coap::CoapMessage respond_text(std::uint8_t code, std::string_view text) {
        coap::CoapMessage msg;
        msg.code = code;
        msg.set_payload_text(text);
        return msg;
    }

    coap::CoapMessage handle(const coap::CoapMessage& request, const net::Address& from) {
        ResourcePath path;
        try {
            path = model::parse_path(request.uri_path());
        } catch (const ParseError&) {
            return respond(coap::codes::kNotFound);
        }

        auto observe_opt = request.uint_option(coap::options::kObserve);
        auto accept = request.uint_option(coap::options::kAccept);

        Lwm2mOp op;
        bool cancel_observe = false;
        switch (request.code) {
            case coap::codes::kGet:
                if (accept && *accept == coap::kContentFormatLinkFormat) {
                    op = Lwm2mOp::Discover;
                } else if (observe_opt && *observe_opt == 0) {
                    op = Lwm2mOp::Observe;
                } else if (observe_opt && *observe_opt == 1) {
                    op = Lwm2mOp::Read;
                    cancel_observe = true;
                } else {
                    op = Lwm2mOp::Read;
                }
                break;
            case coap::codes::kPut:
                if (request.payload.empty() &&
                    (request.uri_query("pmin") || request.uri_query("pmax"))) {
                    op = Lwm2mOp::WriteAttributes;
                } else {
                    op = Lwm2mOp::Write;
                }
                break;
            case coap::codes::kPost:
                op = path.depth() == ResourcePath::Depth::Object ? Lwm2mOp::Create
                                                                 : Lwm2mOp::Execute;
                break;
            case coap::codes::kDelete:
                op = Lwm2mOp::Delete;
                break;
            default:
                return respond(coap::codes::kMethodNotAllowed);
        }

        std::lock_guard lock(mutex);
        auto legality = model::legality_check(op, path, registry);
        if (!legality.ok()) {
            // The endpoint never invents capability beyond the descriptors.
            return respond_text(legality.violation->kind == ViolationKind::UnknownPath
                                    ? coap::codes::kNotFound
                                    : coap::codes::kMethodNotAllowed,
                                legality.violation->detail);
        }

        switch (op) {
            case Lwm2mOp::Read: {
                if (cancel_observe) relations.erase(relation_key(from, request.token));
                return do_read(path);
            }
            case Lwm2mOp::Write:
                return do_write(path, request.payload_text());
            case Lwm2mOp::Execute:
                return do_execute(path, request.payload_text());
            case Lwm2mOp::Discover:
                return do_discover(path);
            case Lwm2mOp::Observe:
                return do_observe(path, request, from);
            case Lwm2mOp::WriteAttributes:
                return do_write_attributes(path, request);
            case Lwm2mOp::Create:
                return do_create(path, request.payload_text());
            case Lwm2mOp::Delete:
                return do_delete(path);
        }
        return respond(coap::codes::kInternalError);
    }

    std::optional<ResourceValue> read_resource_locked(std::uint16_t object_id,
                                                      std::uint16_t instance_id,
                                                      std::uint16_t resource_id) {
        const auto* entry = table.find(object_id, instance_id, resource_id);
        if (!entry || !entry->handlers.read) return std::nullopt;
        ResourceValue value = entry->handlers.read();
        if (model::value_type_of(value) != entry->descriptor.value_type) {
            throw HandlerError(entry->descriptor.name + ": handler returned wrong value tag");
        }
        return value;
    }

    coap::CoapMessage do_read(const ResourcePath& path) {
        try {
            if (path.depth() == ResourcePath::Depth::Resource) {
                const auto* entry =
                    table.find(path.object_id, *path.instance_id, *path.resource_id);
                if (entry && entry->descriptor.instance_kind == model::InstanceKind::Multiple &&
                    entry->handlers.read_instances) {
                    // multiple-instance resources read as an id -> value map
                    json out = json::object();
                    for (const auto& [rid, value] : entry->handlers.read_instances()) {
                        out[std::to_string(rid)] = value_to_json(value);
                    }
                    return respond_text(coap::codes::kContent, out.dump());
                }
                auto value = read_resource_locked(path.object_id, *path.instance_id,
                                                  *path.resource_id);
                if (!value) return respond(coap::codes::kInternalError);
                return respond_text(coap::codes::kContent, model::render_value(*value));
            }
            if (path.depth() == ResourcePath::Depth::ObjectInstance) {
                return respond_text(coap::codes::kContent,
                                    composite_read_locked(path.object_id, *path.instance_id).dump());
            }
            if (path.depth() == ResourcePath::Depth::Object) {
                json out = json::object();
                for (const auto& [key, inst] : table.instances()) {
                    if (inst.object_id != path.object_id) continue;
                    out[std::to_string(inst.instance_id)] =
                        composite_read_locked(inst.object_id, inst.instance_id);
                }
                return respond_text(coap::codes::kContent, out.dump());
            }
            // Resource instance reads address multiple-instance resources.
            const auto* entry =
                table.find(path.object_id, *path.instance_id, *path.resource_id);
            if (entry && entry->descriptor.instance_kind == model::InstanceKind::Multiple &&
                entry->handlers.read_instances) {
                auto values = entry->handlers.read_instances();
                auto it = values.find(*path.resource_instance_id);
                if (it != values.end()) {
                    return respond_text(coap::codes::kContent, model::render_value(it->second));
                }
            }
            return respond(coap::codes::kNotFound);
        } catch (const std::exception&) {
            return respond(coap::codes::kInternalError);
        }
    }

    json composite_read_locked(std::uint16_t object_id, std::uint16_t instance_id) {
        json out = json::object();
        const auto* type = registry.find_type(object_id);
        if (!type) return out;
        for (const auto& resource : type->resources) {
            if (!resource.operations.read) continue;
            auto value = read_resource_locked(object_id, instance_id, resource.id);
            if (value) out[std::to_string(resource.id)] = value_to_json(*value);
        }
        return out;
    }

    coap::CoapMessage do_write(const ResourcePath& path, const std::string& text) {
        if (path.depth() == ResourcePath::Depth::Resource) {
            const auto* entry = table.find(path.object_id, *path.instance_id, *path.resource_id);
            if (!entry) return respond(coap::codes::kNotFound);
            auto value = model::parse_value(entry->descriptor.value_type, text);
            if (!value) {
                return respond_text(coap::codes::kBadRequest, "value tag mismatch");
            }
            if (!entry->handlers.write) return respond(coap::codes::kInternalError);
            try {
                entry->handlers.write(*value);
            } catch (const std::exception&) {
                return respond(coap::codes::kInternalError);
            }
            return respond(coap::codes::kChanged);
        }
        if (path.depth() == ResourcePath::Depth::ObjectInstance) {
            return apply_value_map(path.object_id, *path.instance_id, text);
        }
        return respond_text(coap::codes::kBadRequest, "write needs a resource or instance path");
    }

    coap::CoapMessage apply_value_map(std::uint16_t object_id, std::uint16_t instance_id,
                                      const std::string& text) {
        json doc = json::parse(text, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) {
            return respond_text(coap::codes::kBadRequest, "expected a resource-id/value map");
        }
        for (const auto& [key, jvalue] : doc.items()) {
            std::uint32_t rid = 0;
            auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), rid);
            if (ec != std::errc() || ptr != key.data() + key.size() || rid > 65535) {
                return respond_text(coap::codes::kBadRequest, "bad resource id \"" + key + "\"");
            }
            const auto* entry = table.find(object_id, instance_id, static_cast<std::uint16_t>(rid));
            if (!entry) return respond(coap::codes::kNotFound);
            if (!entry->descriptor.operations.write) {
                return respond_text(coap::codes::kMethodNotAllowed,
                                    entry->descriptor.name + " does not declare WRITE");
            }
            auto value = json_to_value(entry->descriptor.value_type, jvalue);
            if (!value) return respond_text(coap::codes::kBadRequest, "value tag mismatch");
            if (!entry->handlers.write) return respond(coap::codes::kInternalError);
            try {
                entry->handlers.write(*value);
            } catch (const std::exception&) {
                return respond(coap::codes::kInternalError);
            }
        }
        return respond(coap::codes::kChanged);
    }

    coap::CoapMessage do_execute(const ResourcePath& path, const std::string& argument) {
        const auto* entry = table.find(path.object_id, *path.instance_id, *path.resource_id);
        if (!entry) return respond(coap::codes::kNotFound);
        if (!entry->handlers.execute) return respond(coap::codes::kInternalError);
        try {
            entry->handlers.execute(argument);
        } catch (const std::exception& e) {
            return respond_text(coap::codes::kInternalError, e.what());
        }
        return respond(coap::codes::kChanged);
    }

    coap::CoapMessage do_discover(const ResourcePath& path) {
        std::vector<linkfmt::Link> links;
        auto add_resource = [&](std::uint16_t object_id, std::uint16_t instance_id,
                                const model::ResourceDescriptor& r) {
            linkfmt::Link link;
            link.target = ResourcePath::resource(object_id, instance_id, r.id).render();
            link.attrs["ops"] = ops_letters_concat(r.operations);
            if (r.observable) link.attrs["obs"] = "";
            auto attr_it = attributes.find(link.target);
            if (attr_it != attributes.end()) {
                if (attr_it->second.pmin_s) {
                    link.attrs["pmin"] = model::render_value(ResourceValue{*attr_it->second.pmin_s});
                }
                if (attr_it->second.pmax_s) {
                    link.attrs["pmax"] = model::render_value(ResourceValue{*attr_it->second.pmax_s});
                }
            }
            links.push_back(std::move(link));
        };

        const auto* type = registry.find_type(path.object_id);
        if (!type) return respond(coap::codes::kNotFound);
        if (path.depth() == ResourcePath::Depth::Object) {
            for (const auto& [key, inst] : table.instances()) {
                if (inst.object_id != path.object_id) continue;
                links.push_back(
                    {ResourcePath::instance(inst.object_id, inst.instance_id).render(), {}});
                for (const auto& r : type->resources) {
                    add_resource(inst.object_id, inst.instance_id, r);
                }
            }
        } else if (path.depth() == ResourcePath::Depth::ObjectInstance) {
            for (const auto& r : type->resources) add_resource(path.object_id, *path.instance_id, r);
        } else {
            const auto* r = type->find_resource(*path.resource_id);
            if (!r) return respond(coap::codes::kNotFound);
            add_resource(path.object_id, *path.instance_id, *r);
        }
        auto msg = respond_text(coap::codes::kContent, linkfmt::render(links));
        msg.add_uint_option(coap::options::kContentFormat, coap::kContentFormatLinkFormat);
        return msg;
    }

    coap::CoapMessage do_observe(const ResourcePath& path, const coap::CoapMessage& request,
                                 const net::Address& from) {
        const auto* entry = table.find(path.object_id, *path.instance_id, *path.resource_id);
        if (path.depth() != ResourcePath::Depth::Resource || !entry ||
            !entry->descriptor.observable) {
            return respond_text(coap::codes::kMethodNotAllowed, "resource not observable");
        }
        std::optional<ResourceValue> value;
        try {
            value = read_resource_locked(path.object_id, *path.instance_id, *path.resource_id);
        } catch (const std::exception&) {
            return respond(coap::codes::kInternalError);
        }
        if (!value) return respond(coap::codes::kInternalError);

        ObserveRelation relation;
        relation.token = request.token;
        relation.peer = from;
        relation.path = path;
        relation.next_sequence = 1;
        relation.last_sent_value = *value;
        relation.last_sent_time = time->now();
        relations[relation_key(from, request.token)] = relation;

        auto msg = respond_text(coap::codes::kContent, model::render_value(*value));
        msg.add_uint_option(coap::options::kObserve, 0);
        return msg;
    }

    coap::CoapMessage do_write_attributes(const ResourcePath& path,
                                          const coap::CoapMessage& request) {
        NotifyAttributes attrs = attributes[path.render()];
        if (auto pmin = request.uri_query("pmin")) attrs.pmin_s = parse_double_or(*pmin, 0);
        if (auto pmax = request.uri_query("pmax")) attrs.pmax_s = parse_double_or(*pmax, 0);
        if (attrs.pmin_s && attrs.pmax_s && *attrs.pmin_s > *attrs.pmax_s) {
            return respond_text(coap::codes::kBadRequest, "pmin > pmax");
        }
        attributes[path.render()] = attrs;
        return respond(coap::codes::kChanged);
    }

    coap::CoapMessage do_create(const ResourcePath& path, const std::string& payload) {
        const auto* type = registry.find_type(path.object_id);
        if (!type) return respond(coap::codes::kNotFound);
        bool has_instance = false;
        for (const auto& [key, inst] : table.instances()) {
            if (inst.object_id == path.object_id) has_instance = true;
        }
        if (type->instance_kind == model::InstanceKind::Single && has_instance) {
            return respond_text(coap::codes::kMethodNotAllowed,
                                type->name + " is single-instance and already instantiated");
        }
        auto factory = factories.find(path.object_id);
        if (factory == factories.end()) {
            return respond_text(coap::codes::kMethodNotAllowed,
                                type->name + " does not support dynamic instances");
        }
        std::uint16_t new_id = 0;
        while (table.has_instance(path.object_id, new_id)) ++new_id;

        auto handler_map = factory->second(new_id);
        std::vector<gen::DispatchEntry> entries;
        for (const auto& r : type->resources) {
            gen::DispatchEntry entry;
            entry.descriptor = r;
            auto it = handler_map.find(r.id);
            if (it != handler_map.end()) entry.handlers = it->second;
            entries.push_back(std::move(entry));
        }
        table.insert_instance(gen::DispatchInstance{path.object_id, new_id, type->name},
                              std::move(entries));
        rebuild_registry_locked();

        if (!payload.empty()) {
            auto result = apply_value_map(path.object_id, new_id, payload);
            if (coap::code_class(result.code) != 2) {
                table.erase_instance(path.object_id, new_id);
                rebuild_registry_locked();
                return result;
            }
        }
        mark_registration_dirty_locked();
        auto msg = respond(coap::codes::kCreated);
        msg.add_option(coap::options::kLocationPath, std::to_string(path.object_id));
        msg.add_option(coap::options::kLocationPath, std::to_string(new_id));
        return msg;
    }

    coap::CoapMessage do_delete(const ResourcePath& path) {
        const auto* type = registry.find_type(path.object_id);
        if (!type) return respond(coap::codes::kNotFound);
        if (type->instance_kind == model::InstanceKind::Single) {
            return respond_text(coap::codes::kMethodNotAllowed,
                                type->name + " is single-instance");
        }
        table.erase_instance(path.object_id, *path.instance_id);
        for (auto it = relations.begin(); it != relations.end();) {
            bool under = it->second.path.object_id == path.object_id &&
                         it->second.path.instance_id == path.instance_id;
            it = under ? relations.erase(it) : std::next(it);
        }
        rebuild_registry_locked();
        mark_registration_dirty_locked();
        return respond(coap::codes::kDeleted);
    }

    // ---- information reporting ----

    void notify_pass() {
        struct Outgoing {
            net::Address peer;
            coap::CoapMessage msg;
        };
        std::vector<Outgoing> outgoing;
        {
            std::lock_guard lock(mutex);
            double now = time->now();
            for (auto it = relations.begin(); it != relations.end();) {
                auto& rel = it->second;
                const auto* entry = table.find(rel.path.object_id, *rel.path.instance_id,
                                               *rel.path.resource_id);
                if (!entry || !entry->handlers.read) {
                    it = relations.erase(it);
                    continue;
                }
                ResourceValue value;
                try {
                    value = entry->handlers.read();
                } catch (const std::exception&) {
                    ++it;
                    continue;
                }
                NotifyAttributes attrs;
                if (auto a = attributes.find(rel.path.render()); a != attributes.end()) {
                    attrs = a->second;
                }
                double pmin = attrs.pmin_s.value_or(0);
                double since = now - rel.last_sent_time;
                bool changed = !rel.last_sent_value || !(*rel.last_sent_value == value);
                if (changed) rel.pending = true;
                bool due = rel.pending && since >= pmin;
                if (!due && attrs.pmax_s && since >= *attrs.pmax_s) due = true;
                if (due) {
                    coap::CoapMessage msg;
                    msg.type = coap::MsgType::Non;
                    msg.code = coap::codes::kContent;
                    msg.token = rel.token;
                    msg.add_uint_option(coap::options::kObserve, rel.next_sequence & 0xffffff);
                    msg.set_payload_text(model::render_value(value));
                    rel.next_sequence = (rel.next_sequence + 1) & 0xffffff;
                    rel.last_sent_value = value;
                    rel.last_sent_time = now;
                    rel.pending = false;
                    outgoing.push_back({rel.peer, std::move(msg)});
                }
                ++it;
            }
        }
        for (auto& out : outgoing) endpoint.send_notification(out.peer, out.msg);
    }

    // ---- registration ----

    std::vector<std::pair<std::uint16_t, std::uint16_t>> links_locked() const {
        std::vector<std::pair<std::uint16_t, std::uint16_t>> links;
        for (const auto& [key, inst] : table.instances()) {
            links.emplace_back(inst.object_id, inst.instance_id);
        }
        return links;
    }

    std::string links_payload_locked() const {
        std::vector<linkfmt::Link> links;
        for (const auto& [object_id, instance_id] : links_locked()) {
            links.push_back({ResourcePath::instance(object_id, instance_id).render(), {}});
        }
        return linkfmt::render(links);
    }

    void mark_registration_dirty_locked() {
        if (reg_location) {
            registration_dirty = true;
            updater_cv.notify_all();
        }
    }

    void updater_loop() {
        std::unique_lock lock(mutex);
        while (running.load()) {
            if (!reg_location || (!reg_config.auto_update && !registration_dirty)) {
                updater_cv.wait_for(lock, std::chrono::milliseconds(50));
                continue;
            }
            auto period =
                std::chrono::milliseconds(static_cast<long>(reg_config.lifetime_s * 500));
            auto next = last_reg_update + period;
            updater_cv.wait_until(lock, next, [&] {
                return !running.load() || registration_dirty ||
                       std::chrono::steady_clock::now() >= next;
            });
            if (!running.load()) break;
            if (!reg_location) continue;
            bool due = registration_dirty ||
                       (reg_config.auto_update && std::chrono::steady_clock::now() >= next);
            if (!due) continue;
            registration_dirty = false;
            std::string location = *reg_location;
            std::string payload = links_payload_locked();
            net::Address server = server_address;
            lock.unlock();
            coap::CoapMessage msg;
            msg.code = coap::codes::kPost;
            msg.set_uri_path(location);
            msg.add_uint_option(coap::options::kContentFormat, coap::kContentFormatLinkFormat);
            msg.set_payload_text(payload);
            auto outcome = endpoint.request(server, msg);
            lock.lock();
            last_reg_update = std::chrono::steady_clock::now();
            if (outcome.ok() && outcome.response.code == coap::codes::kNotFound) {
                // Server lost the registration; re-register from scratch.
                lock.unlock();
                register_inner(server, reg_config);
                lock.lock();
            }
        }
    }

    bool register_inner(const net::Address& server, const ClientConfig& config) {
        std::string payload;
        {
            std::lock_guard lock(mutex);
            payload = links_payload_locked();
        }
        coap::CoapMessage msg;
        msg.code = coap::codes::kPost;
        msg.set_uri_path("/rd");
        msg.add_option(coap::options::kUriQuery, "ep=" + config.endpoint_name);
        msg.add_option(coap::options::kUriQuery,
                       "lt=" + model::render_value(model::ResourceValue{config.lifetime_s}));
        msg.add_uint_option(coap::options::kContentFormat, coap::kContentFormatLinkFormat);
        msg.set_payload_text(payload);
        auto outcome = endpoint.request(server, msg);
        if (!outcome.ok() || coap::code_class(outcome.response.code) != 2) return false;
        std::lock_guard lock(mutex);
        reg_location = outcome.response.location_path();
        server_address = server;
        reg_config = config;
        last_reg_update = std::chrono::steady_clock::now();
        registration_dirty = false;
        updater_cv.notify_all();
        return true;
    }
};

Lwm2mClient::Lwm2mClient(std::unique_ptr<net::DatagramSocket> socket,
                         std::vector<model::ObjectTypeDescriptor> descriptors,
                         gen::DispatchTable table, std::shared_ptr<TimeSource> time,
                         coap::ExchangeConfig config)
    : impl_(std::make_unique<Impl>(std::move(socket), config, std::move(time))) {
    impl_->descriptors = std::move(descriptors);
    impl_->table = std::move(table);
    impl_->rebuild_registry_locked();
    impl_->endpoint.set_handler(
        [this](const coap::CoapMessage& request, const net::Address& from) {
            return impl_->handle(request, from);
        });
    impl_->updater = std::thread([this] { impl_->updater_loop(); });
    impl_->notifier = std::thread([this] {
        std::unique_lock lock(impl_->notifier_mutex);
        while (impl_->running.load()) {
            impl_->notifier_cv.wait_for(lock, std::chrono::milliseconds(50));
            if (!impl_->running.load()) break;
            lock.unlock();
            impl_->notify_pass();
            lock.lock();
        }
    });
}

Lwm2mClient::~Lwm2mClient() { stop(); }

void Lwm2mClient::stop() {
    if (!impl_->running.exchange(false)) return;
    // Stopping the endpoint first unblocks any in-flight request() in the
    // updater thread; sends after close are harmless no-ops.
    impl_->endpoint.stop();
    impl_->updater_cv.notify_all();
    impl_->notifier_cv.notify_all();
    if (impl_->updater.joinable()) impl_->updater.join();
    if (impl_->notifier.joinable()) impl_->notifier.join();
}

net::Address Lwm2mClient::local_address() const { return impl_->endpoint.local_address(); }

std::vector<std::pair<std::uint16_t, std::uint16_t>> Lwm2mClient::object_links() const {
    std::lock_guard lock(impl_->mutex);
    return impl_->links_locked();
}

std::string Lwm2mClient::registration_payload() const {
    std::lock_guard lock(impl_->mutex);
    return impl_->links_payload_locked();
}

bool Lwm2mClient::register_with(const net::Address& server, ClientConfig config) {
    return impl_->register_inner(server, config);
}

void Lwm2mClient::deregister() {
    std::string location;
    net::Address server;
    {
        std::lock_guard lock(impl_->mutex);
        if (!impl_->reg_location) return;
        location = *impl_->reg_location;
        server = impl_->server_address;
        impl_->reg_location.reset();
    }
    coap::CoapMessage msg;
    msg.code = coap::codes::kDelete;
    msg.set_uri_path(location);
    impl_->endpoint.request(server, msg);
}

std::optional<std::string> Lwm2mClient::location() const {
    std::lock_guard lock(impl_->mutex);
    return impl_->reg_location;
}

void Lwm2mClient::notify_state_changed() { impl_->notify_pass(); }

void Lwm2mClient::set_instance_factory(std::uint16_t type_id, InstanceFactory factory) {
    std::lock_guard lock(impl_->mutex);
    impl_->factories[type_id] = std::move(factory);
}

std::size_t Lwm2mClient::observe_relation_count() const {
    std::lock_guard lock(impl_->mutex);
    return impl_->relations.size();
}

// ---------------------------------------------------------------------------
// Server

namespace {

struct StoredRegistration {
    RegistrationEntry entry;
    std::chrono::steady_clock::time_point last_update;
};

}  // namespace

struct Lwm2mServer::Impl {
    coap::CoapEndpoint endpoint;

    mutable std::mutex mutex;
    std::map<std::string, StoredRegistration> by_location;  // "/rd/<n>"
    std::map<std::uint16_t, model::ObjectTypeDescriptor> types;
    std::uint32_t next_location = 0;

    explicit Impl(std::unique_ptr<net::DatagramSocket> socket, coap::ExchangeConfig config)
        : endpoint(std::move(socket), config) {}

    static std::vector<std::pair<std::uint16_t, std::uint16_t>> parse_links(
        const std::string& payload) {
        std::vector<std::pair<std::uint16_t, std::uint16_t>> out;
        for (const auto& link : linkfmt::parse(payload)) {
            try {
                auto path = model::parse_path(link.target);
                if (path.instance_id && !path.resource_id) {
                    out.emplace_back(path.object_id, *path.instance_id);
                }
            } catch (const ParseError&) {
                // skip non-instance targets
            }
        }
        return out;
    }

    void prune_locked() {
        auto now = std::chrono::steady_clock::now();
        for (auto it = by_location.begin(); it != by_location.end();) {
            auto deadline = it->second.last_update +
                            std::chrono::milliseconds(
                                static_cast<long>(it->second.entry.lifetime_s * 1000));
            it = deadline <= now ? by_location.erase(it) : std::next(it);
        }
    }

    coap::CoapMessage handle(const coap::CoapMessage& request, const net::Address& from) {
        auto segments = request.option_strings(coap::options::kUriPath);
        coap::CoapMessage response;
        if (segments.empty() || segments[0] != "rd") {
            response.code = coap::codes::kNotFound;
            return response;
        }
        std::lock_guard lock(mutex);
        prune_locked();
        if (request.code == coap::codes::kPost && segments.size() == 1) {
            auto ep = request.uri_query("ep");
            if (!ep || ep->empty()) {
                response.code = coap::codes::kBadRequest;
                response.set_payload_text("missing ep");
                return response;
            }
            double lifetime = 86400;
            if (auto lt = request.uri_query("lt")) lifetime = parse_double_or(*lt, lifetime);

            // Idempotent re-registration: same endpoint name keeps its location.
            StoredRegistration* existing = nullptr;
            for (auto& [loc, reg] : by_location) {
                if (reg.entry.endpoint_name == *ep) existing = &reg;
            }
            std::string location;
            if (existing) {
                location = existing->entry.location;
            } else {
                location = "/rd/" + std::to_string(next_location++);
            }
            StoredRegistration reg;
            reg.entry.endpoint_name = *ep;
            reg.entry.peer = from;
            reg.entry.lifetime_s = lifetime;
            reg.entry.location = location;
            reg.entry.object_links = parse_links(request.payload_text());
            reg.last_update = std::chrono::steady_clock::now();
            by_location[location] = std::move(reg);

            response.code = coap::codes::kCreated;
            response.add_option(coap::options::kLocationPath, "rd");
            response.add_option(coap::options::kLocationPath, location.substr(4));
            return response;
        }
        if (segments.size() == 2) {
            std::string location = "/rd/" + segments[1];
            auto it = by_location.find(location);
            if (it == by_location.end()) {
                response.code = coap::codes::kNotFound;
                return response;
            }
            if (request.code == coap::codes::kPost) {
                it->second.last_update = std::chrono::steady_clock::now();
                it->second.entry.peer = from;
                if (auto lt = request.uri_query("lt")) {
                    it->second.entry.lifetime_s = parse_double_or(*lt, it->second.entry.lifetime_s);
                }
                if (!request.payload.empty()) {
                    it->second.entry.object_links = parse_links(request.payload_text());
                }
                response.code = coap::codes::kChanged;
                return response;
            }
            if (request.code == coap::codes::kDelete) {
                by_location.erase(it);
                response.code = coap::codes::kDeleted;
                return response;
            }
        }
        response.code = coap::codes::kMethodNotAllowed;
        return response;
    }

    Response perform(const net::Address& peer, coap::CoapMessage msg) {
        auto outcome = endpoint.request(peer, std::move(msg));
        Response response;
        response.status = outcome.status;
        if (outcome.status == coap::RequestStatus::Ok) {
            response.code = outcome.response.code;
            response.payload = outcome.response.payload;
            response.location = outcome.response.location_path();
        }
        return response;
    }
};

Lwm2mServer::Lwm2mServer(std::unique_ptr<net::DatagramSocket> socket, coap::ExchangeConfig config)
    : impl_(std::make_unique<Impl>(std::move(socket), config)) {
    impl_->endpoint.set_handler(
        [this](const coap::CoapMessage& request, const net::Address& from) {
            return impl_->handle(request, from);
        });
}

Lwm2mServer::~Lwm2mServer() { stop(); }

void Lwm2mServer::stop() { impl_->endpoint.stop(); }

net::Address Lwm2mServer::local_address() const { return impl_->endpoint.local_address(); }

void Lwm2mServer::set_registry(std::map<std::uint16_t, model::ObjectTypeDescriptor> types) {
    std::lock_guard lock(impl_->mutex);
    impl_->types = std::move(types);
}

std::vector<RegistrationEntry> Lwm2mServer::registrations() const {
    std::lock_guard lock(impl_->mutex);
    impl_->prune_locked();
    std::vector<RegistrationEntry> out;
    for (const auto& [loc, reg] : impl_->by_location) out.push_back(reg.entry);
    return out;
}

std::optional<RegistrationEntry> Lwm2mServer::find_registration(
    std::string_view endpoint_name) const {
    std::lock_guard lock(impl_->mutex);
    impl_->prune_locked();
    for (const auto& [loc, reg] : impl_->by_location) {
        if (reg.entry.endpoint_name == endpoint_name) return reg.entry;
    }
    return std::nullopt;
}

Response Lwm2mServer::read(const RegistrationEntry& entry, const model::ResourcePath& path) {
    coap::CoapMessage msg;
    msg.code = coap::codes::kGet;
    msg.set_uri_path(path.render());
    return impl_->perform(entry.peer, std::move(msg));
}

Response Lwm2mServer::write_text(const RegistrationEntry& entry, const model::ResourcePath& path,
                                 std::string_view text) {
    coap::CoapMessage msg;
    msg.code = coap::codes::kPut;
    msg.set_uri_path(path.render());
    msg.set_payload_text(text);
    return impl_->perform(entry.peer, std::move(msg));
}

Response Lwm2mServer::write(const RegistrationEntry& entry, const model::ResourcePath& path,
                            const model::ResourceValue& value) {
    return write_text(entry, path, model::render_value(value));
}

Response Lwm2mServer::execute(const RegistrationEntry& entry, const model::ResourcePath& path,
                              std::string_view argument) {
    coap::CoapMessage msg;
    msg.code = coap::codes::kPost;
    msg.set_uri_path(path.render());
    if (!argument.empty()) msg.set_payload_text(argument);
    return impl_->perform(entry.peer, std::move(msg));
}

Response Lwm2mServer::discover(const RegistrationEntry& entry, const model::ResourcePath& path) {
    coap::CoapMessage msg;
    msg.code = coap::codes::kGet;
    msg.set_uri_path(path.render());
    msg.add_uint_option(coap::options::kAccept, coap::kContentFormatLinkFormat);
    return impl_->perform(entry.peer, std::move(msg));
}

Response Lwm2mServer::write_attributes(const RegistrationEntry& entry,
                                       const model::ResourcePath& path,
                                       const NotifyAttributes& attrs) {
    coap::CoapMessage msg;
    msg.code = coap::codes::kPut;
    msg.set_uri_path(path.render());
    if (attrs.pmin_s) {
        msg.add_option(coap::options::kUriQuery,
                       "pmin=" + model::render_value(model::ResourceValue{*attrs.pmin_s}));
    }
    if (attrs.pmax_s) {
        msg.add_option(coap::options::kUriQuery,
                       "pmax=" + model::render_value(model::ResourceValue{*attrs.pmax_s}));
    }
    return impl_->perform(entry.peer, std::move(msg));
}

Response Lwm2mServer::create(const RegistrationEntry& entry, std::uint16_t object_id,
                             std::string_view payload) {
    coap::CoapMessage msg;
    msg.code = coap::codes::kPost;
    msg.set_uri_path(model::ResourcePath::object(object_id).render());
    if (!payload.empty()) msg.set_payload_text(payload);
    return impl_->perform(entry.peer, std::move(msg));
}

Response Lwm2mServer::remove(const RegistrationEntry& entry, const model::ResourcePath& path) {
    coap::CoapMessage msg;
    msg.code = coap::codes::kDelete;
    msg.set_uri_path(path.render());
    return impl_->perform(entry.peer, std::move(msg));
}

std::optional<model::ResourceValue> Lwm2mServer::read_value(const RegistrationEntry& entry,
                                                            const model::ResourcePath& path) {
    auto response = read(entry, path);
    if (!response.ok() || !path.resource_id) return std::nullopt;
    std::lock_guard lock(impl_->mutex);
    auto type = impl_->types.find(path.object_id);
    if (type == impl_->types.end()) return std::nullopt;
    const auto* resource = type->second.find_resource(*path.resource_id);
    if (!resource) return std::nullopt;
    return model::parse_value(resource->value_type, response.payload_text());
}

Response Lwm2mServer::observe(const RegistrationEntry& entry, const model::ResourcePath& path,
                              NotificationFn fn, ObserveHandle& handle) {
    coap::CoapMessage msg;
    msg.code = coap::codes::kGet;
    msg.token = impl_->endpoint.next_token();
    msg.add_uint_option(coap::options::kObserve, 0);
    msg.set_uri_path(path.render());
    handle.token = msg.token;
    handle.path = path;
    auto outcome = impl_->endpoint.observe_request(
        entry.peer, msg, [fn = std::move(fn)](const coap::CoapMessage& notification) {
            auto seq = notification.uint_option(coap::options::kObserve);
            fn(seq.value_or(0), notification.payload_text());
        });
    Response response;
    response.status = outcome.status;
    if (outcome.status == coap::RequestStatus::Ok) {
        response.code = outcome.response.code;
        response.payload = outcome.response.payload;
    }
    if (!response.ok()) impl_->endpoint.cancel_observe_token(handle.token);
    return response;
}

Response Lwm2mServer::cancel_observe(const RegistrationEntry& entry, const ObserveHandle& handle) {
    coap::CoapMessage msg;
    msg.code = coap::codes::kGet;
    msg.token = handle.token;
    msg.add_uint_option(coap::options::kObserve, 1);
    msg.set_uri_path(handle.path.render());
    auto response = impl_->perform(entry.peer, std::move(msg));
    impl_->endpoint.cancel_observe_token(handle.token);
    return response;
}

}  // namespace iat::lwm2m
