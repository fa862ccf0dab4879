#pragma once

#include <any>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iat/object_model.hpp"

namespace iat::gen {

enum class HandlerKind { Reader, Writer, ReaderWriter, Executor };

const char* to_string(HandlerKind kind);
std::optional<HandlerKind> handler_kind_from_string(std::string_view text);

// The callables bound to one resource of one component instance. Only the
// members matching the declared operations are set.
struct Handlers {
    std::function<model::ResourceValue()> read;
    std::function<void(const model::ResourceValue&)> write;
    // Execute argument is opaque and may be empty.
    std::function<void(std::string_view)> execute;
    // Multiple-instance resources only: the id -> value map behind the resource.
    std::function<std::map<std::uint16_t, model::ResourceValue>()> read_instances;
};

// Binds an instance of a component to the handler factories. `handle` is the
// component-specific state the factories close over; `children` supplies the
// bindings for the declared instance refs, keyed by ref name.
struct ComponentBinding {
    std::any handle;
    std::map<std::string, ComponentBinding> children;
};

// Maps (object type name, resource name) to a handler kind plus the factory
// that binds the handlers to a concrete component instance.
class HandlerRegistry {
public:
    using Factory = std::function<Handlers(const std::any& handle)>;

    void add(std::string type_name, std::string resource_name, HandlerKind kind, Factory factory);
    const std::pair<HandlerKind, Factory>* find(const std::string& type_name,
                                                const std::string& resource_name) const;
    bool empty() const { return entries_.empty(); }

private:
    std::map<std::pair<std::string, std::string>, std::pair<HandlerKind, Factory>> entries_;
};

struct DispatchEntry {
    model::ResourceDescriptor descriptor;
    Handlers handlers;
};

struct DispatchInstance {
    std::uint16_t object_id = 0;
    std::uint16_t instance_id = 0;
    std::string type_name;
};

// The generated IoT-wrapper core: resolved (object, instance, resource) ->
// handler bindings. Immutable once built; copy + rebuild to add instances.
class DispatchTable {
public:
    using Key = std::tuple<std::uint16_t, std::uint16_t, std::uint16_t>;

    const DispatchEntry* find(std::uint16_t object_id, std::uint16_t instance_id,
                              std::uint16_t resource_id) const;
    const std::map<Key, DispatchEntry>& entries() const { return entries_; }
    const std::map<std::pair<std::uint16_t, std::uint16_t>, DispatchInstance>& instances() const {
        return instances_;
    }
    bool has_instance(std::uint16_t object_id, std::uint16_t instance_id) const;
    std::vector<Key> key_set() const;

    void insert_instance(const DispatchInstance& instance, std::vector<DispatchEntry> entries);
    void erase_instance(std::uint16_t object_id, std::uint16_t instance_id);

private:
    std::map<Key, DispatchEntry> entries_;
    std::map<std::pair<std::uint16_t, std::uint16_t>, DispatchInstance> instances_;
};

// One top-level component instance to expose. Child instances come from the
// descriptor's instance refs; their ids default to the declared ref ids and
// may be overridden per ref name (multi-instance deployments need distinct ids).
struct InstanceSpec {
    std::uint16_t object_id = 0;
    std::uint16_t instance_id = 0;
    ComponentBinding binding;
    std::map<std::string, std::uint16_t> child_instance_ids;
};

// Builds the dispatch table. Throws BuildError listing every unbound mandatory
// resource, on handler-kind mismatches, and on (object, instance) collisions.
DispatchTable build_dispatch(const std::vector<model::ObjectTypeDescriptor>& descriptors,
                             const HandlerRegistry& registry,
                             const std::vector<InstanceSpec>& instances);

// Deterministic descriptor JSON: {"objects":[...]} with fixed key order.
// parse_descriptor_json inverts it exactly.
std::string emit_descriptor_json(const std::vector<model::ObjectTypeDescriptor>& descriptors);
std::vector<model::ObjectTypeDescriptor> parse_descriptor_json(std::string_view text);

// Plain-text binding manifest; one row per resource or instance ref:
//   TYPE.RESOURCE kind=<reader|writer|reader+writer|executor>
//   TYPE.REF kind=instance type=<object_type_id> id=<ref_id>
std::string emit_binding_manifest(const std::vector<model::ObjectTypeDescriptor>& descriptors);

struct ManifestRow {
    std::string type_name;
    std::string entry_name;
    std::string kind;  // reader | writer | reader+writer | executor | instance
    std::optional<std::uint16_t> ref_type_id;
    std::optional<std::uint16_t> ref_id;

    friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

std::vector<ManifestRow> parse_binding_manifest(std::string_view text);

// The required handler kind for a resource, derived from its declared operations.
HandlerKind required_kind(const model::ResourceDescriptor& resource);

enum class GenMode { AheadOfTime, Startup };

struct GenerateResult {
    std::vector<std::filesystem::path> files;     // ahead-of-time artifacts
    std::optional<DispatchTable> table;           // startup mode result
    std::vector<model::ObjectTypeDescriptor> descriptors;
};

// Ahead-of-time: writes <component>.objects.json and <component>.bindings.manifest
// under out_dir, no table. Startup: returns a live table, writes nothing.
GenerateResult generate(GenMode mode, std::string_view cid_text, const HandlerRegistry& registry,
                        const std::vector<InstanceSpec>& instances,
                        const std::filesystem::path& out_dir);

}  // namespace iat::gen
