#include "iat/object_model.hpp"

#include <algorithm>
#include <charconv>
#include <set>

namespace iat::model {

const char* to_string(Lwm2mOp op) {
    switch (op) {
        case Lwm2mOp::Read: return "READ";
        case Lwm2mOp::Write: return "WRITE";
        case Lwm2mOp::Execute: return "EXECUTE";
        case Lwm2mOp::Discover: return "DISCOVER";
        case Lwm2mOp::WriteAttributes: return "WRITE_ATTRIBUTES";
        case Lwm2mOp::Create: return "CREATE";
        case Lwm2mOp::Delete: return "DELETE";
        case Lwm2mOp::Observe: return "OBSERVE";
    }
    return "?";
}

const char* to_string(InstanceKind k) {
    return k == InstanceKind::Single ? "single" : "multiple";
}

const char* to_string(ValueType t) {
    switch (t) {
        case ValueType::Boolean: return "boolean";
        case ValueType::Integer: return "integer";
        case ValueType::Float: return "float";
        case ValueType::String: return "string";
        case ValueType::Time: return "time";
        case ValueType::Opaque: return "opaque";
    }
    return "?";
}

const char* to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::WrongConstruct: return "wrong-construct";
        case ViolationKind::WrongDeclaredOps: return "wrong-declared-ops";
        case ViolationKind::UnknownPath: return "unknown-path";
    }
    return "?";
}

std::vector<std::string> ResourceOps::letters() const {
    std::vector<std::string> out;
    if (read) out.emplace_back("R");
    if (write) out.emplace_back("W");
    if (execute) out.emplace_back("E");
    return out;
}

ResourceOps ResourceOps::from_letters(const std::vector<std::string>& letters) {
    ResourceOps ops;
    for (const auto& l : letters) {
        if (l == "R") {
            ops.read = true;
        } else if (l == "W") {
            ops.write = true;
        } else if (l == "E") {
            ops.execute = true;
        } else {
            throw SchemaError("unknown operation letter \"" + l + "\"");
        }
    }
    return ops;
}

const ResourceDescriptor* ObjectTypeDescriptor::find_resource(std::uint16_t resource_id) const {
    for (const auto& r : resources) {
        if (r.id == resource_id) return &r;
    }
    return nullptr;
}

void validate(const ObjectTypeDescriptor& descriptor) {
    std::set<std::uint16_t> resource_ids;
    for (const auto& r : descriptor.resources) {
        if (!resource_ids.insert(r.id).second) {
            throw BuildError(descriptor.name + ": duplicate resource id " + std::to_string(r.id));
        }
        if (r.operations.empty()) {
            throw BuildError(descriptor.name + "." + r.name + ": empty operations set");
        }
        if (r.observable && r.operations.execute) {
            throw BuildError(descriptor.name + "." + r.name +
                             ": an execute resource cannot be observable");
        }
    }
    std::set<std::uint16_t> ref_ids;
    for (const auto& ref : descriptor.instance_refs) {
        if (!ref_ids.insert(ref.id).second) {
            throw BuildError(descriptor.name + ": duplicate instance ref id " +
                             std::to_string(ref.id));
        }
    }
}

ResourcePath::Depth ResourcePath::depth() const {
    if (resource_instance_id) return Depth::ResourceInstance;
    if (resource_id) return Depth::Resource;
    if (instance_id) return Depth::ObjectInstance;
    return Depth::Object;
}

std::string ResourcePath::render() const {
    std::string out = "/" + std::to_string(object_id);
    if (instance_id) out += "/" + std::to_string(*instance_id);
    if (resource_id) out += "/" + std::to_string(*resource_id);
    if (resource_instance_id) out += "/" + std::to_string(*resource_instance_id);
    return out;
}

ResourcePath ResourcePath::object(std::uint16_t o) { return {o, {}, {}, {}}; }
ResourcePath ResourcePath::instance(std::uint16_t o, std::uint16_t i) { return {o, i, {}, {}}; }
ResourcePath ResourcePath::resource(std::uint16_t o, std::uint16_t i, std::uint16_t r) {
    return {o, i, r, {}};
}
ResourcePath ResourcePath::resource_instance(std::uint16_t o, std::uint16_t i, std::uint16_t r,
                                             std::uint16_t ri) {
    return {o, i, r, ri};
}

ResourcePath parse_path(std::string_view text) {
    if (!text.empty() && text.front() == '/') text.remove_prefix(1);
    if (text.empty()) throw ParseError(0, "empty resource path");

    std::vector<std::uint16_t> components;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t slash = text.find('/', pos);
        std::string_view part =
            text.substr(pos, slash == std::string_view::npos ? std::string_view::npos : slash - pos);
        if (part.empty()) throw ParseError(0, "empty path component in \"" + std::string(text) + "\"");
        std::uint32_t value = 0;
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
        if (ec != std::errc() || ptr != part.data() + part.size()) {
            throw ParseError(0, "non-decimal path component \"" + std::string(part) + "\"");
        }
        if (value > 65535) {
            throw ParseError(0, "path component " + std::to_string(value) + " exceeds 65535");
        }
        components.push_back(static_cast<std::uint16_t>(value));
        if (components.size() > 4) throw ParseError(0, "resource path deeper than 4 components");
        if (slash == std::string_view::npos) break;
        pos = slash + 1;
        if (pos == text.size()) throw ParseError(0, "trailing slash in resource path");
    }

    ResourcePath path;
    path.object_id = components[0];
    if (components.size() > 1) path.instance_id = components[1];
    if (components.size() > 2) path.resource_id = components[2];
    if (components.size() > 3) path.resource_instance_id = components[3];
    return path;
}

ValueType value_type_of(const ResourceValue& value) {
    switch (value.index()) {
        case 0: return ValueType::Boolean;
        case 1: return ValueType::Integer;
        case 2: return ValueType::Float;
        case 3: return ValueType::String;
        case 4: return ValueType::Time;
        default: return ValueType::Opaque;
    }
}

namespace {

std::string double_to_text(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string hex_encode(const OpaqueValue& bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

std::optional<OpaqueValue> hex_decode(std::string_view text) {
    if (text.size() % 2 != 0) return std::nullopt;
    OpaqueValue out;
    out.reserve(text.size() / 2);
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    for (std::size_t i = 0; i < text.size(); i += 2) {
        int hi = nibble(text[i]);
        int lo = nibble(text[i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
    }
    return out;
}

}  // namespace

std::string render_value(const ResourceValue& value) {
    switch (value.index()) {
        case 0: return std::get<bool>(value) ? "true" : "false";
        case 1: return std::to_string(std::get<std::int64_t>(value));
        case 2: return double_to_text(std::get<double>(value));
        case 3: return std::get<std::string>(value);
        case 4: return std::to_string(std::get<TimeValue>(value).seconds);
        default: return hex_encode(std::get<OpaqueValue>(value));
    }
}

std::optional<ResourceValue> parse_value(ValueType type, std::string_view text) {
    switch (type) {
        case ValueType::Boolean:
            if (text == "true") return ResourceValue{true};
            if (text == "false") return ResourceValue{false};
            return std::nullopt;
        case ValueType::Integer:
        case ValueType::Time: {
            std::int64_t v = 0;
            auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
            if (type == ValueType::Time) return ResourceValue{TimeValue{v}};
            return ResourceValue{v};
        }
        case ValueType::Float: {
            double v = 0;
            auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
            return ResourceValue{v};
        }
        case ValueType::String:
            return ResourceValue{std::string(text)};
        case ValueType::Opaque: {
            auto bytes = hex_decode(text);
            if (!bytes) return std::nullopt;
            return ResourceValue{std::move(*bytes)};
        }
    }
    return std::nullopt;
}

ObjectRegistry ObjectRegistry::build(std::vector<ObjectTypeDescriptor> descriptors) {
    ObjectRegistry registry;
    for (auto& d : descriptors) {
        validate(d);
        auto [it, inserted] = registry.types_.emplace(d.id, std::move(d));
        if (!inserted) {
            throw BuildError("duplicate object id " + std::to_string(it->first));
        }
    }
    std::vector<std::string> dangling;
    for (const auto& [id, type] : registry.types_) {
        for (const auto& ref : type.instance_refs) {
            if (!registry.types_.count(ref.object_type_id)) {
                dangling.push_back(type.name + "." + ref.name + " -> " +
                                   std::to_string(ref.object_type_id));
            }
        }
    }
    if (!dangling.empty()) {
        std::string msg = "dangling instance refs:";
        for (const auto& d : dangling) msg += " " + d;
        throw BuildError(msg);
    }
    return registry;
}

const ObjectTypeDescriptor* ObjectRegistry::find_type(std::uint16_t object_id) const {
    auto it = types_.find(object_id);
    return it == types_.end() ? nullptr : &it->second;
}

const ResourceDescriptor* ObjectRegistry::find_resource(std::uint16_t object_id,
                                                        std::uint16_t resource_id) const {
    const auto* type = find_type(object_id);
    return type ? type->find_resource(resource_id) : nullptr;
}

void ObjectRegistry::add_instance(std::uint16_t object_id, std::uint16_t instance_id) {
    if (!types_.count(object_id)) {
        throw BuildError("instance of unregistered object type " + std::to_string(object_id));
    }
    auto key = std::make_pair(object_id, instance_id);
    if (!instances_.emplace(key, InstanceRecord{object_id, instance_id}).second) {
        throw BuildError("duplicate instance /" + std::to_string(object_id) + "/" +
                         std::to_string(instance_id));
    }
}

bool ObjectRegistry::has_instance(std::uint16_t object_id, std::uint16_t instance_id) const {
    return instances_.count(std::make_pair(object_id, instance_id)) != 0;
}

std::vector<InstanceRecord> ObjectRegistry::instances() const {
    std::vector<InstanceRecord> out;
    out.reserve(instances_.size());
    for (const auto& [key, record] : instances_) out.push_back(record);
    return out;
}

bool construct_admits(Lwm2mOp op, ResourcePath::Depth depth) {
    using D = ResourcePath::Depth;
    switch (op) {
        case Lwm2mOp::Read:
        case Lwm2mOp::Write:
        case Lwm2mOp::Discover:
        case Lwm2mOp::WriteAttributes:
            return true;  // all four constructs
        case Lwm2mOp::Execute:
            return depth == D::Resource;
        case Lwm2mOp::Create:
            return depth == D::Object;
        case Lwm2mOp::Delete:
            return depth == D::ObjectInstance;
        case Lwm2mOp::Observe:
            return depth == D::ObjectInstance || depth == D::Resource;
    }
    return false;
}

LegalityResult legality_check(Lwm2mOp op, const ResourcePath& path,
                              const ObjectRegistry& registry) {
    const auto* type = registry.find_type(path.object_id);
    if (!type) {
        return LegalityResult::fail(ViolationKind::UnknownPath,
                                    "unknown object " + std::to_string(path.object_id));
    }
    // Create targets the object itself; an instance need not (and must not) exist yet.
    if (path.instance_id && op != Lwm2mOp::Create) {
        if (!registry.has_instance(path.object_id, *path.instance_id)) {
            return LegalityResult::fail(ViolationKind::UnknownPath,
                                        "unknown instance /" + std::to_string(path.object_id) +
                                            "/" + std::to_string(*path.instance_id));
        }
    }
    const ResourceDescriptor* resource = nullptr;
    if (path.resource_id) {
        resource = type->find_resource(*path.resource_id);
        if (!resource) {
            return LegalityResult::fail(ViolationKind::UnknownPath,
                                        "unknown resource " + path.render());
        }
    }
    if (!construct_admits(op, path.depth())) {
        return LegalityResult::fail(ViolationKind::WrongConstruct,
                                    std::string(to_string(op)) + " not applicable to construct at " +
                                        path.render());
    }
    if (resource && (op == Lwm2mOp::Read || op == Lwm2mOp::Write || op == Lwm2mOp::Execute)) {
        if (!resource->operations.admits(op)) {
            return LegalityResult::fail(ViolationKind::WrongDeclaredOps,
                                        type->name + "." + resource->name + " does not declare " +
                                            to_string(op));
        }
    }
    return LegalityResult::pass();
}

}  // namespace iat::model
