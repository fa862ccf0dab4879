#include "iat/wrapper_gen.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iat/cid.hpp"

namespace iat::gen {

using json = nlohmann::ordered_json;
using model::ObjectTypeDescriptor;
using model::ResourceDescriptor;

const char* to_string(HandlerKind kind) {
    switch (kind) {
        case HandlerKind::Reader: return "reader";
        case HandlerKind::Writer: return "writer";
        case HandlerKind::ReaderWriter: return "reader+writer";
        case HandlerKind::Executor: return "executor";
    }
    return "?";
}

std::optional<HandlerKind> handler_kind_from_string(std::string_view text) {
    if (text == "reader") return HandlerKind::Reader;
    if (text == "writer") return HandlerKind::Writer;
    if (text == "reader+writer") return HandlerKind::ReaderWriter;
    if (text == "executor") return HandlerKind::Executor;
    return std::nullopt;
}

HandlerKind required_kind(const ResourceDescriptor& resource) {
    if (resource.operations.execute) return HandlerKind::Executor;
    if (resource.operations.read && resource.operations.write) return HandlerKind::ReaderWriter;
    if (resource.operations.write) return HandlerKind::Writer;
    return HandlerKind::Reader;
}

void HandlerRegistry::add(std::string type_name, std::string resource_name, HandlerKind kind,
                          Factory factory) {
    auto key = std::make_pair(std::move(type_name), std::move(resource_name));
    if (!entries_.emplace(std::move(key), std::make_pair(kind, std::move(factory))).second) {
        throw BuildError("duplicate handler registration");
    }
}

const std::pair<HandlerKind, HandlerRegistry::Factory>* HandlerRegistry::find(
    const std::string& type_name, const std::string& resource_name) const {
    auto it = entries_.find(std::make_pair(type_name, resource_name));
    return it == entries_.end() ? nullptr : &it->second;
}

const DispatchEntry* DispatchTable::find(std::uint16_t object_id, std::uint16_t instance_id,
                                         std::uint16_t resource_id) const {
    auto it = entries_.find(Key{object_id, instance_id, resource_id});
    return it == entries_.end() ? nullptr : &it->second;
}

bool DispatchTable::has_instance(std::uint16_t object_id, std::uint16_t instance_id) const {
    return instances_.count({object_id, instance_id}) != 0;
}

std::vector<DispatchTable::Key> DispatchTable::key_set() const {
    std::vector<Key> keys;
    keys.reserve(entries_.size());
    for (const auto& [key, entry] : entries_) keys.push_back(key);
    return keys;
}

void DispatchTable::insert_instance(const DispatchInstance& instance,
                                    std::vector<DispatchEntry> entries) {
    auto ikey = std::make_pair(instance.object_id, instance.instance_id);
    if (instances_.count(ikey)) {
        throw BuildError("duplicate instance /" + std::to_string(instance.object_id) + "/" +
                         std::to_string(instance.instance_id));
    }
    instances_.emplace(ikey, instance);
    for (auto& entry : entries) {
        Key key{instance.object_id, instance.instance_id, entry.descriptor.id};
        entries_.emplace(key, std::move(entry));
    }
}

void DispatchTable::erase_instance(std::uint16_t object_id, std::uint16_t instance_id) {
    instances_.erase({object_id, instance_id});
    auto it = entries_.lower_bound(Key{object_id, instance_id, 0});
    while (it != entries_.end() && std::get<0>(it->first) == object_id &&
           std::get<1>(it->first) == instance_id) {
        it = entries_.erase(it);
    }
}

namespace {

struct DispatchBuilder {
    const std::map<std::uint16_t, const ObjectTypeDescriptor*>& types;
    const HandlerRegistry& registry;
    DispatchTable& table;
    std::vector<std::string>& missing;

    void add_instance(const ObjectTypeDescriptor& type, std::uint16_t instance_id,
                      const ComponentBinding& binding,
                      const std::map<std::string, std::uint16_t>& child_ids) {
        std::vector<DispatchEntry> entries;
        for (const auto& resource : type.resources) {
            DispatchEntry entry;
            entry.descriptor = resource;
            const auto* bound = registry.find(type.name, resource.name);
            if (!bound) {
                if (resource.mandatory) missing.push_back(type.name + "." + resource.name + " unbound");
                entries.push_back(std::move(entry));
                continue;
            }
            HandlerKind need = required_kind(resource);
            if (bound->first != need) {
                throw BuildError(type.name + "." + resource.name + ": handler kind " +
                                 to_string(bound->first) + " does not match declared operations (" +
                                 to_string(need) + " required)");
            }
            entry.handlers = bound->second(binding.handle);
            entries.push_back(std::move(entry));
        }
        table.insert_instance(DispatchInstance{type.id, instance_id, type.name},
                              std::move(entries));

        for (const auto& ref : type.instance_refs) {
            auto child_binding = binding.children.find(ref.name);
            if (child_binding == binding.children.end()) {
                missing.push_back(type.name + "." + ref.name + " unbound (instance ref)");
                continue;
            }
            auto type_it = types.find(ref.object_type_id);
            if (type_it == types.end()) {
                throw BuildError(type.name + "." + ref.name + ": unknown object type " +
                                 std::to_string(ref.object_type_id));
            }
            std::uint16_t child_id = ref.id;
            if (auto ov = child_ids.find(ref.name); ov != child_ids.end()) child_id = ov->second;
            add_instance(*type_it->second, child_id, child_binding->second, {});
        }
    }
};

}  // namespace

DispatchTable build_dispatch(const std::vector<ObjectTypeDescriptor>& descriptors,
                             const HandlerRegistry& registry,
                             const std::vector<InstanceSpec>& instances) {
    std::map<std::uint16_t, const ObjectTypeDescriptor*> types;
    for (const auto& d : descriptors) {
        model::validate(d);
        if (!types.emplace(d.id, &d).second) {
            throw BuildError("duplicate object id " + std::to_string(d.id));
        }
    }

    DispatchTable table;
    std::vector<std::string> missing;
    DispatchBuilder builder{types, registry, table, missing};
    for (const auto& spec : instances) {
        auto it = types.find(spec.object_id);
        if (it == types.end()) {
            throw BuildError("instance of unknown object type " + std::to_string(spec.object_id));
        }
        builder.add_instance(*it->second, spec.instance_id, spec.binding, spec.child_instance_ids);
    }
    if (!missing.empty()) {
        std::string msg = "incomplete bindings:";
        for (const auto& m : missing) msg += " " + m + ";";
        throw BuildError(msg);
    }
    return table;
}

namespace {

json resource_to_json(const ResourceDescriptor& r) {
    json j;
    j["id"] = r.id;
    j["name"] = r.name;
    j["operations"] = r.operations.letters();
    j["instancetype"] = model::to_string(r.instance_kind);
    j["mandatory"] = r.mandatory;
    j["type"] = model::to_string(r.value_type);
    j["range"] = r.range;
    j["units"] = r.units;
    j["description"] = r.description;
    j["observable"] = r.observable;
    return j;
}

std::uint16_t take_id16(const json& j, const std::string& where) {
    if (!j.is_number_unsigned() || j.get<std::uint64_t>() > 65535) {
        throw SchemaError(where + ": id out of range (0..65535)");
    }
    return j.get<std::uint16_t>();
}

model::InstanceKind take_instance_kind(const json& j, const std::string& where) {
    if (j == "single") return model::InstanceKind::Single;
    if (j == "multiple") return model::InstanceKind::Multiple;
    throw SchemaError(where + ": instancetype must be \"single\" or \"multiple\"");
}

model::ValueType take_value_type(const json& j, const std::string& where) {
    static const std::map<std::string, model::ValueType> kTypes = {
        {"boolean", model::ValueType::Boolean}, {"integer", model::ValueType::Integer},
        {"float", model::ValueType::Float},     {"string", model::ValueType::String},
        {"time", model::ValueType::Time},       {"opaque", model::ValueType::Opaque},
    };
    if (j.is_string()) {
        auto it = kTypes.find(j.get<std::string>());
        if (it != kTypes.end()) return it->second;
    }
    throw SchemaError(where + ": unknown value type");
}

const json& require(const json& j, const char* field, const std::string& where) {
    auto it = j.find(field);
    if (it == j.end()) throw SchemaError(where + ": missing field \"" + field + "\"");
    return *it;
}

std::string take_string(const json& j, const std::string& where) {
    if (!j.is_string()) throw SchemaError(where + ": expected string");
    return j.get<std::string>();
}

bool take_bool(const json& j, const std::string& where) {
    if (!j.is_boolean()) throw SchemaError(where + ": expected boolean");
    return j.get<bool>();
}

}  // namespace

std::string emit_descriptor_json(const std::vector<ObjectTypeDescriptor>& descriptors) {
    json doc;
    doc["objects"] = json::array();
    for (const auto& d : descriptors) {
        json obj;
        obj["name"] = d.name;
        obj["id"] = d.id;
        obj["instancetype"] = model::to_string(d.instance_kind);
        obj["mandatory"] = d.mandatory;
        obj["description"] = d.description;
        obj["resourcedefs"] = json::array();
        for (const auto& r : d.resources) obj["resourcedefs"].push_back(resource_to_json(r));
        obj["instancerefs"] = json::array();
        for (const auto& ref : d.instance_refs) {
            json j;
            j["id"] = ref.id;
            j["name"] = ref.name;
            j["objecttypeid"] = ref.object_type_id;
            obj["instancerefs"].push_back(std::move(j));
        }
        doc["objects"].push_back(std::move(obj));
    }
    return doc.dump();
}

std::vector<ObjectTypeDescriptor> parse_descriptor_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw SchemaError("top level: expected object");
    const json& objects = require(doc, "objects", "top level");
    if (!objects.is_array()) throw SchemaError("objects: expected array");

    std::vector<ObjectTypeDescriptor> out;
    std::size_t oi = 0;
    for (const auto& obj : objects) {
        std::string where = "objects[" + std::to_string(oi++) + "]";
        if (!obj.is_object()) throw SchemaError(where + ": expected object");
        ObjectTypeDescriptor d;
        d.name = take_string(require(obj, "name", where), where + ".name");
        d.id = take_id16(require(obj, "id", where), where + ".id");
        d.instance_kind =
            take_instance_kind(require(obj, "instancetype", where), where + ".instancetype");
        d.mandatory = take_bool(require(obj, "mandatory", where), where + ".mandatory");
        d.description = take_string(require(obj, "description", where), where + ".description");

        const json& resources = require(obj, "resourcedefs", where);
        if (!resources.is_array()) throw SchemaError(where + ".resourcedefs: expected array");
        std::size_t ri = 0;
        for (const auto& rj : resources) {
            std::string rwhere = where + ".resourcedefs[" + std::to_string(ri++) + "]";
            if (!rj.is_object()) throw SchemaError(rwhere + ": expected object");
            ResourceDescriptor r;
            r.id = take_id16(require(rj, "id", rwhere), rwhere + ".id");
            r.name = take_string(require(rj, "name", rwhere), rwhere + ".name");
            const json& ops = require(rj, "operations", rwhere);
            if (!ops.is_array()) throw SchemaError(rwhere + ".operations: expected array");
            std::vector<std::string> letters;
            for (const auto& op : ops) letters.push_back(take_string(op, rwhere + ".operations"));
            try {
                r.operations = model::ResourceOps::from_letters(letters);
            } catch (const SchemaError& e) {
                throw SchemaError(rwhere + ".operations: " + e.what());
            }
            r.instance_kind =
                take_instance_kind(require(rj, "instancetype", rwhere), rwhere + ".instancetype");
            r.mandatory = take_bool(require(rj, "mandatory", rwhere), rwhere + ".mandatory");
            r.value_type = take_value_type(require(rj, "type", rwhere), rwhere + ".type");
            r.range = take_string(require(rj, "range", rwhere), rwhere + ".range");
            r.units = take_string(require(rj, "units", rwhere), rwhere + ".units");
            r.description = take_string(require(rj, "description", rwhere), rwhere + ".description");
            r.observable = take_bool(require(rj, "observable", rwhere), rwhere + ".observable");
            d.resources.push_back(std::move(r));
        }

        const json& refs = require(obj, "instancerefs", where);
        if (!refs.is_array()) throw SchemaError(where + ".instancerefs: expected array");
        std::size_t fi = 0;
        for (const auto& fj : refs) {
            std::string fwhere = where + ".instancerefs[" + std::to_string(fi++) + "]";
            if (!fj.is_object()) throw SchemaError(fwhere + ": expected object");
            model::InstanceRefDescriptor ref;
            ref.id = take_id16(require(fj, "id", fwhere), fwhere + ".id");
            ref.name = take_string(require(fj, "name", fwhere), fwhere + ".name");
            ref.object_type_id =
                take_id16(require(fj, "objecttypeid", fwhere), fwhere + ".objecttypeid");
            d.instance_refs.push_back(std::move(ref));
        }
        model::validate(d);
        out.push_back(std::move(d));
    }
    return out;
}

std::string emit_binding_manifest(const std::vector<ObjectTypeDescriptor>& descriptors) {
    std::string out = "# binding manifest: handler requirements per (type, resource)\n";
    for (const auto& d : descriptors) {
        for (const auto& r : d.resources) {
            out += d.name + "." + r.name + " kind=" + to_string(required_kind(r)) + "\n";
        }
        for (const auto& ref : d.instance_refs) {
            out += d.name + "." + ref.name + " kind=instance type=" +
                   std::to_string(ref.object_type_id) + " id=" + std::to_string(ref.id) + "\n";
        }
    }
    return out;
}

std::vector<ManifestRow> parse_binding_manifest(std::string_view text) {
    std::vector<ManifestRow> rows;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        std::string head, kind_field;
        fields >> head >> kind_field;
        auto dot = head.find('.');
        if (dot == std::string::npos || kind_field.rfind("kind=", 0) != 0) {
            throw ParseError(line_no, "bad manifest row: " + line);
        }
        ManifestRow row;
        row.type_name = head.substr(0, dot);
        row.entry_name = head.substr(dot + 1);
        row.kind = kind_field.substr(5);
        if (row.kind == "instance") {
            std::string type_field, id_field;
            fields >> type_field >> id_field;
            if (type_field.rfind("type=", 0) != 0 || id_field.rfind("id=", 0) != 0) {
                throw ParseError(line_no, "bad instance row: " + line);
            }
            row.ref_type_id = static_cast<std::uint16_t>(std::stoul(type_field.substr(5)));
            row.ref_id = static_cast<std::uint16_t>(std::stoul(id_field.substr(3)));
        } else if (!handler_kind_from_string(row.kind)) {
            throw ParseError(line_no, "unknown handler kind \"" + row.kind + "\"");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

GenerateResult generate(GenMode mode, std::string_view cid_text, const HandlerRegistry& registry,
                        const std::vector<InstanceSpec>& instances,
                        const std::filesystem::path& out_dir) {
    auto doc = cid::parse_cid(cid_text);
    auto descriptors = cid::lower_to_descriptors(doc);
    // Registry closure check applies in both modes.
    model::ObjectRegistry::build(descriptors);

    GenerateResult result;
    result.descriptors = descriptors;
    if (mode == GenMode::AheadOfTime) {
        std::filesystem::create_directories(out_dir);
        std::string stem = doc.component_name;
        for (auto& c : stem) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        auto objects_path = out_dir / (stem + ".objects.json");
        auto manifest_path = out_dir / (stem + ".bindings.manifest");
        std::ofstream(objects_path, std::ios::binary) << emit_descriptor_json(descriptors);
        std::ofstream(manifest_path, std::ios::binary) << emit_binding_manifest(descriptors);
        result.files = {objects_path, manifest_path};
    } else {
        result.table = build_dispatch(descriptors, registry, instances);
    }
    return result;
}

}  // namespace iat::gen
