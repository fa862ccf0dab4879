#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "iat/errors.hpp"

namespace iat::model {

// The eight LWM2M operations of the device-management/service-enablement and
// information-reporting interfaces.
enum class Lwm2mOp {
    Read,
    Write,
    Execute,
    Discover,
    WriteAttributes,
    Create,
    Delete,
    Observe,
};

const char* to_string(Lwm2mOp op);

enum class InstanceKind { Single, Multiple };

enum class ValueType { Boolean, Integer, Float, String, Time, Opaque };

const char* to_string(InstanceKind k);
const char* to_string(ValueType t);

// Set of service-enablement operations a resource declares.
struct ResourceOps {
    bool read = false;
    bool write = false;
    bool execute = false;

    bool empty() const { return !read && !write && !execute; }
    bool admits(Lwm2mOp op) const {
        return (op == Lwm2mOp::Read && read) || (op == Lwm2mOp::Write && write) ||
               (op == Lwm2mOp::Execute && execute);
    }
    // Letter form used by the descriptor JSON ("R", "W", "E"), fixed R,W,E order.
    std::vector<std::string> letters() const;
    static ResourceOps from_letters(const std::vector<std::string>& letters);

    friend bool operator==(const ResourceOps&, const ResourceOps&) = default;
};

inline ResourceOps ops_read() { return {true, false, false}; }
inline ResourceOps ops_write() { return {false, true, false}; }
inline ResourceOps ops_read_write() { return {true, true, false}; }
inline ResourceOps ops_execute() { return {false, false, true}; }

struct ResourceDescriptor {
    std::uint16_t id = 0;
    std::string name;
    ResourceOps operations;
    InstanceKind instance_kind = InstanceKind::Single;
    bool mandatory = true;
    ValueType value_type = ValueType::Boolean;
    std::string range;
    std::string units;
    std::string description;
    bool observable = false;

    friend bool operator==(const ResourceDescriptor&, const ResourceDescriptor&) = default;
};

// Declares a nested object instance (the reference style of interface exposure).
struct InstanceRefDescriptor {
    std::uint16_t id = 0;
    std::string name;
    std::uint16_t object_type_id = 0;

    friend bool operator==(const InstanceRefDescriptor&, const InstanceRefDescriptor&) = default;
};

struct ObjectTypeDescriptor {
    std::string name;
    std::uint16_t id = 0;
    InstanceKind instance_kind = InstanceKind::Single;
    bool mandatory = true;
    std::string description;
    std::vector<ResourceDescriptor> resources;
    std::vector<InstanceRefDescriptor> instance_refs;

    const ResourceDescriptor* find_resource(std::uint16_t resource_id) const;

    friend bool operator==(const ObjectTypeDescriptor&, const ObjectTypeDescriptor&) = default;
};

// Checks per-descriptor invariants: unique resource ids, unique instance-ref ids,
// non-empty operation sets, and no observable execute resources.
// Throws BuildError naming the first violation.
void validate(const ObjectTypeDescriptor& descriptor);

// Address of a construct in the Object -> Object Instance -> Resource ->
// Resource Instance hierarchy. Depth 1..4 corresponds to how many ids are set.
struct ResourcePath {
    std::uint16_t object_id = 0;
    std::optional<std::uint16_t> instance_id;
    std::optional<std::uint16_t> resource_id;
    std::optional<std::uint16_t> resource_instance_id;

    enum class Depth { Object = 1, ObjectInstance = 2, Resource = 3, ResourceInstance = 4 };

    Depth depth() const;
    std::string render() const;  // canonical "/a/b/c" form

    static ResourcePath object(std::uint16_t o);
    static ResourcePath instance(std::uint16_t o, std::uint16_t i);
    static ResourcePath resource(std::uint16_t o, std::uint16_t i, std::uint16_t r);
    static ResourcePath resource_instance(std::uint16_t o, std::uint16_t i, std::uint16_t r,
                                          std::uint16_t ri);

    friend bool operator==(const ResourcePath&, const ResourcePath&) = default;
    friend auto operator<=>(const ResourcePath&, const ResourcePath&) = default;
};

// Parses "/16663/0/2" (leading slash optional, 1-4 decimal components, each <= 65535).
// Throws ParseError otherwise.
ResourcePath parse_path(std::string_view text);

// Time is seconds since the epoch; kept distinct from Integer so the value tag
// matches the declared type exactly.
struct TimeValue {
    std::int64_t seconds = 0;
    friend bool operator==(const TimeValue&, const TimeValue&) = default;
};

using OpaqueValue = std::vector<std::uint8_t>;

using ResourceValue =
    std::variant<bool, std::int64_t, double, std::string, TimeValue, OpaqueValue>;

ValueType value_type_of(const ResourceValue& value);

// Plain-text wire form: "true"/"false", decimal integers, shortest round-trip
// decimals for floats, raw strings, decimal epoch seconds, lowercase hex for opaque.
std::string render_value(const ResourceValue& value);

// Inverse of render_value for a declared type; nullopt on tag mismatch / bad text.
std::optional<ResourceValue> parse_value(ValueType type, std::string_view text);

struct InstanceRecord {
    std::uint16_t object_id = 0;
    std::uint16_t instance_id = 0;
};

// Immutable after build; shared by concurrent request handlers.
class ObjectRegistry {
public:
    ObjectRegistry() = default;

    // Validates every descriptor, rejects duplicate object ids and dangling
    // instance_ref targets (the error lists every dangling reference).
    static ObjectRegistry build(std::vector<ObjectTypeDescriptor> descriptors);

    const ObjectTypeDescriptor* find_type(std::uint16_t object_id) const;
    const ResourceDescriptor* find_resource(std::uint16_t object_id,
                                            std::uint16_t resource_id) const;

    void add_instance(std::uint16_t object_id, std::uint16_t instance_id);
    bool has_instance(std::uint16_t object_id, std::uint16_t instance_id) const;
    std::vector<InstanceRecord> instances() const;

    std::size_t type_count() const { return types_.size(); }
    const std::map<std::uint16_t, ObjectTypeDescriptor>& types() const { return types_; }

private:
    std::map<std::uint16_t, ObjectTypeDescriptor> types_;
    std::map<std::pair<std::uint16_t, std::uint16_t>, InstanceRecord> instances_;
};

enum class ViolationKind { WrongConstruct, WrongDeclaredOps, UnknownPath };

const char* to_string(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    std::string detail;
};

struct LegalityResult {
    std::optional<Violation> violation;

    bool ok() const { return !violation.has_value(); }
    static LegalityResult pass() { return {}; }
    static LegalityResult fail(ViolationKind kind, std::string detail) {
        return {Violation{kind, std::move(detail)}};
    }
};

// Which LWM2M operations apply to which construct, per the OMA object model:
// Execute only on a Resource; Read/Discover/Write/WriteAttributes on all four
// constructs; Create on Object; Delete on Object Instance; Observe on Object
// Instance and Resource. Read/Write/Execute on a (known) resource additionally
// require the declared operation set to admit them.
LegalityResult legality_check(Lwm2mOp op, const ResourcePath& path, const ObjectRegistry& registry);

// Construct-level half of legality_check: ignores the registry, so it is the
// pure function of (op, depth) used for the exhaustive matrix test.
bool construct_admits(Lwm2mOp op, ResourcePath::Depth depth);

}  // namespace iat::model
